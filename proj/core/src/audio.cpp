#include "cabcnn/audio.hpp"

#include <algorithm>
#include <cmath>
#include <cstring>
#include <fstream>

#include "cabcnn/rng.hpp"

namespace cabcnn {

namespace {

constexpr double kTwoPi = 6.283185307179586476925287;

std::uint32_t read_u32(const std::vector<unsigned char>& b, std::size_t off) {
    return static_cast<std::uint32_t>(b[off]) | (static_cast<std::uint32_t>(b[off + 1]) << 8) |
           (static_cast<std::uint32_t>(b[off + 2]) << 16) |
           (static_cast<std::uint32_t>(b[off + 3]) << 24);
}

std::uint16_t read_u16(const std::vector<unsigned char>& b, std::size_t off) {
    return static_cast<std::uint16_t>(static_cast<std::uint16_t>(b[off]) |
                                      (static_cast<std::uint16_t>(b[off + 1]) << 8));
}

void push_u32(std::vector<unsigned char>& b, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) {
        b.push_back(static_cast<unsigned char>((v >> (8 * i)) & 0xff));
    }
}

void push_u16(std::vector<unsigned char>& b, std::uint16_t v) {
    b.push_back(static_cast<unsigned char>(v & 0xff));
    b.push_back(static_cast<unsigned char>((v >> 8) & 0xff));
}

void push_tag(std::vector<unsigned char>& b, const char* tag) {
    b.insert(b.end(), tag, tag + 4);
}

}  // namespace

AudioClip load_wav(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) {
        throw IoError("cannot open WAV file: " + path);
    }
    std::vector<unsigned char> bytes((std::istreambuf_iterator<char>(is)),
                                     std::istreambuf_iterator<char>());
    if (bytes.size() < 12 || std::memcmp(bytes.data(), "RIFF", 4) != 0 ||
        std::memcmp(bytes.data() + 8, "WAVE", 4) != 0) {
        throw DataError("not a RIFF/WAVE file: " + path);
    }

    bool have_fmt = false;
    std::uint16_t format = 0;
    std::uint16_t channels = 0;
    std::uint32_t sample_rate = 0;
    std::uint16_t bits = 0;
    std::size_t data_off = 0;
    std::size_t data_len = 0;
    bool have_data = false;

    std::size_t off = 12;
    while (off + 8 <= bytes.size()) {
        const std::size_t chunk_size = read_u32(bytes, off + 4);
        const unsigned char* id = bytes.data() + off;
        const std::size_t payload = off + 8;
        if (std::memcmp(id, "fmt ", 4) == 0) {
            if (chunk_size < 16 || payload + 16 > bytes.size()) {
                throw DataError("malformed fmt chunk in " + path);
            }
            format = read_u16(bytes, payload);
            channels = read_u16(bytes, payload + 2);
            sample_rate = read_u32(bytes, payload + 4);
            bits = read_u16(bytes, payload + 14);
            have_fmt = true;
        } else if (std::memcmp(id, "data", 4) == 0) {
            data_off = payload;
            data_len = chunk_size;
            have_data = true;
            if (payload + chunk_size > bytes.size()) {
                throw DataError("truncated data chunk in " + path + ": expected " +
                                std::to_string(chunk_size) + " bytes, got " +
                                std::to_string(bytes.size() - payload));
            }
        }
        // Chunks are word-aligned; odd sizes carry one pad byte.
        off = payload + chunk_size + (chunk_size & 1);
    }
    if (!have_fmt || !have_data) {
        throw DataError("WAV file missing fmt or data chunk: " + path);
    }
    if (channels < 1 || channels > 2) {
        throw DataError("unsupported WAV channel count " + std::to_string(channels) + " in " +
                        path + " (mono or stereo only)");
    }
    if (sample_rate == 0) {
        throw DataError("WAV sample rate is zero in " + path);
    }
    const bool pcm16 = (format == 1 && bits == 16);
    const bool float32 = (format == 3 && bits == 32);
    if (!pcm16 && !float32) {
        throw DataError("unsupported WAV codec in " + path + ": format " +
                        std::to_string(format) + ", " + std::to_string(bits) +
                        "-bit (PCM 16-bit or float 32-bit only)");
    }

    const std::size_t bytes_per_sample = pcm16 ? 2 : 4;
    const std::size_t frame_size = bytes_per_sample * channels;
    if (data_len % frame_size != 0) {
        throw DataError("WAV data size " + std::to_string(data_len) +
                        " is not a whole number of frames in " + path);
    }
    const std::size_t frames = data_len / frame_size;
    if (frames == 0) {
        throw DataError("WAV file has no samples: " + path);
    }

    AudioClip clip;
    clip.sample_rate = static_cast<std::int64_t>(sample_rate);
    clip.samples.resize(frames);
    for (std::size_t f = 0; f < frames; ++f) {
        double acc = 0.0;
        for (std::uint16_t c = 0; c < channels; ++c) {
            const std::size_t p = data_off + (f * channels + c) * bytes_per_sample;
            if (pcm16) {
                const std::int16_t raw =
                    static_cast<std::int16_t>(static_cast<std::uint16_t>(bytes[p]) |
                                              (static_cast<std::uint16_t>(bytes[p + 1]) << 8));
                acc += static_cast<double>(raw) / 32768.0;
            } else {
                std::uint32_t u = read_u32(bytes, p);
                float v;
                std::memcpy(&v, &u, 4);
                acc += static_cast<double>(v);
            }
        }
        clip.samples[f] = acc / channels;
    }
    return clip;
}

void save_wav(const std::string& path, const AudioClip& clip) {
    if (clip.samples.empty() || clip.sample_rate <= 0) {
        throw DataError("cannot write empty clip: " + path);
    }
    const std::uint32_t n = static_cast<std::uint32_t>(clip.samples.size());
    const std::uint32_t data_size = n * 2;
    std::vector<unsigned char> out;
    out.reserve(44 + data_size);
    push_tag(out, "RIFF");
    push_u32(out, 36 + data_size);
    push_tag(out, "WAVE");
    push_tag(out, "fmt ");
    push_u32(out, 16);
    push_u16(out, 1);  // PCM
    push_u16(out, 1);  // mono
    push_u32(out, static_cast<std::uint32_t>(clip.sample_rate));
    push_u32(out, static_cast<std::uint32_t>(clip.sample_rate) * 2);
    push_u16(out, 2);
    push_u16(out, 16);
    push_tag(out, "data");
    push_u32(out, data_size);
    for (double v : clip.samples) {
        const double clamped = std::clamp(v, -1.0, 1.0);
        const auto s = static_cast<std::int16_t>(std::llround(clamped * 32767.0));
        push_u16(out, static_cast<std::uint16_t>(s));
    }
    std::ofstream os(path, std::ios::binary);
    if (!os) {
        throw IoError("cannot open WAV for writing: " + path);
    }
    os.write(reinterpret_cast<const char*>(out.data()), static_cast<std::streamsize>(out.size()));
    if (!os) {
        throw IoError("failed writing WAV: " + path);
    }
}

AudioClip normalize(const AudioClip& clip) {
    const std::size_t n = clip.samples.size();
    if (n < 2) {
        throw DataError("normalize needs at least 2 samples, got " + std::to_string(n));
    }
    double mean = 0.0;
    for (double v : clip.samples) {
        mean += v;
    }
    mean /= static_cast<double>(n);
    double var = 0.0;
    for (double v : clip.samples) {
        var += (v - mean) * (v - mean);
    }
    var /= static_cast<double>(n);
    const double std_dev = std::sqrt(var);
    if (std_dev < 1e-12) {
        throw DataError("degenerate signal: standard deviation is zero (constant input)");
    }
    AudioClip out = clip;
    for (double& v : out.samples) {
        v = (v - mean) / std_dev;
    }
    return out;
}

Tensor max_downsample(const AudioClip& clip) {
    if (clip.sample_rate < 4000) {
        throw DataError("sample rate " + std::to_string(clip.sample_rate) +
                        " is below 4000; cannot form 4000 non-empty buckets per second");
    }
    if (clip.samples.empty()) {
        throw DataError("max_downsample on empty clip");
    }
    const std::int64_t n = static_cast<std::int64_t>(clip.samples.size());
    const std::int64_t sr = clip.sample_rate;
    std::vector<double> out;
    out.reserve(static_cast<std::size_t>(4000 * ((n + sr - 1) / sr)));
    for (std::int64_t start = 0; start < n; start += sr) {
        const std::int64_t q = std::min(sr, n - start);
        for (std::int64_t b = 0; b < 4000; ++b) {
            const std::int64_t lo = b * q / 4000;
            const std::int64_t hi = (b + 1) * q / 4000;
            if (hi <= lo) {
                continue;  // empty bucket in a partial trailing second
            }
            double best = clip.samples[static_cast<std::size_t>(start + lo)];
            for (std::int64_t i = lo + 1; i < hi; ++i) {
                best = std::max(best, clip.samples[static_cast<std::size_t>(start + i)]);
            }
            out.push_back(best);
        }
    }
    Tensor t({1, static_cast<std::int64_t>(out.size())});
    t.data = std::move(out);
    return t;
}

Tensor truncate(const Tensor& array, std::int64_t t_seconds) {
    if (array.rank() != 2 || array.shape[0] != 1) {
        throw ShapeError("truncate expects [1,L], got " + shape_str(array.shape));
    }
    if (t_seconds <= 0) {
        throw ConfigError("t_seconds must be positive, got " + std::to_string(t_seconds));
    }
    const std::int64_t cap = 4000 * t_seconds;
    if (array.shape[1] <= cap) {
        return array;
    }
    Tensor out({1, cap});
    std::copy(array.data.begin(), array.data.begin() + cap, out.data.begin());
    return out;
}

Tensor preprocess(const AudioClip& clip, std::int64_t t_seconds) {
    return truncate(max_downsample(normalize(clip)), t_seconds);
}

double synth_tone_hz(std::int64_t klass, std::int64_t n_classes) {
    const std::int64_t denom = std::max<std::int64_t>(1, n_classes - 1);
    return 400.0 + 1200.0 * static_cast<double>(klass) / static_cast<double>(denom);
}

std::vector<AudioClip> synth_corpus(std::int64_t n_per_class, std::int64_t n_classes,
                                    std::uint64_t seed) {
    if (n_per_class < 1) {
        throw ConfigError("synth_corpus needs n_per_class >= 1");
    }
    if (n_classes < 2) {
        throw ConfigError("synth_corpus needs n_classes >= 2");
    }
    const std::int64_t denom = std::max<std::int64_t>(1, n_classes - 1);
    std::vector<AudioClip> corpus;
    corpus.reserve(static_cast<std::size_t>(n_per_class * n_classes));
    for (std::int64_t k = 0; k < n_classes; ++k) {
        const double tone_hz = synth_tone_hz(k, n_classes);
        const double duty = 0.15 + 0.5 * static_cast<double>(k) / static_cast<double>(denom);
        const std::int64_t period = std::llround(static_cast<double>(kSynthBurstLen) / duty);
        for (std::int64_t i = 0; i < n_per_class; ++i) {
            Rng rng(mix_seed(mix_seed(seed, static_cast<std::uint64_t>(k)),
                             static_cast<std::uint64_t>(i)));
            const double dur = rng.uniform(2.0, 5.0);
            const std::int64_t len = std::llround(dur * static_cast<double>(kSynthSampleRate));
            const double sigma = rng.uniform(0.05, 0.08);
            const double amp = rng.uniform(0.35, 0.40);

            AudioClip clip;
            clip.sample_rate = kSynthSampleRate;
            clip.label = static_cast<int>(k);
            clip.samples.resize(static_cast<std::size_t>(len));
            for (double& v : clip.samples) {
                v = sigma * rng.normal();
            }
            std::int64_t pos =
                static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(period)));
            while (pos < len) {
                const double phase = rng.uniform(0.0, kTwoPi);
                for (std::int64_t j = 0; j < kSynthBurstLen && pos + j < len; ++j) {
                    clip.samples[static_cast<std::size_t>(pos + j)] +=
                        amp * std::sin(kTwoPi * tone_hz * static_cast<double>(j) /
                                           static_cast<double>(kSynthSampleRate) +
                                       phase);
                }
                pos += period;
            }
            corpus.push_back(std::move(clip));
        }
    }
    return corpus;
}

}  // namespace cabcnn
