#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cabcnn/tensor.hpp"

namespace cabcnn {

struct AudioClip {
    std::vector<double> samples;
    std::int64_t sample_rate = 0;
    int label = -1;  // -1 when unknown
};

// RIFF/WAVE reader: PCM 16-bit or IEEE float 32-bit, mono or stereo
// (stereo is averaged to mono). Samples come out in [-1, 1].
AudioClip load_wav(const std::string& path);

// Writes mono 16-bit PCM; samples are clamped to [-1, 1].
void save_wav(const std::string& path, const AudioClip& clip);

// Z-score: subtract mean, divide by population standard deviation.
AudioClip normalize(const AudioClip& clip);

// Per-second max-downsampling to 4000 values: within each second, bucket b
// covers sample indices [floor(b*q/4000), floor((b+1)*q/4000)) where q is
// that second's sample count; each bucket contributes its maximum. The
// trailing partial second is bucketed the same way over its actual samples
// with empty buckets dropped. Output is [1, N].
Tensor max_downsample(const AudioClip& clip);

// Keep the first t_seconds worth of downsampled values (4000 per second);
// shorter arrays pass through unchanged.
Tensor truncate(const Tensor& array, std::int64_t t_seconds);

// normalize -> max_downsample -> truncate.
Tensor preprocess(const AudioClip& clip, std::int64_t t_seconds);

// Desk-scale synthetic corpus: 8 kHz clips of 2-5 s, white noise plus
// class-specific tone bursts (distinct frequency and duty cycle per
// class). Deterministic given the seed; labels are 0..n_classes-1.
std::vector<AudioClip> synth_corpus(std::int64_t n_per_class, std::int64_t n_classes,
                                    std::uint64_t seed);

// Burst parameters used by synth_corpus, exposed so tests can build an
// independent detector on the same frequencies.
double synth_tone_hz(std::int64_t klass, std::int64_t n_classes);
constexpr std::int64_t kSynthSampleRate = 8000;
constexpr std::int64_t kSynthBurstLen = 480;  // 60 ms

}  // namespace cabcnn
