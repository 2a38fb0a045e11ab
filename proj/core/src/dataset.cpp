#include "cabcnn/dataset.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <fstream>

#include <nlohmann/json.hpp>

#include "cabcnn/rng.hpp"

namespace cabcnn {

namespace {

using nlohmann::json;

// The stem is used inside filenames; keep it filesystem-safe.
std::string sanitize_stem(const std::string& id) {
    std::string out;
    out.reserve(id.size());
    for (char c : id) {
        const bool ok = (c >= 'a' && c <= 'z') || (c >= 'A' && c <= 'Z') ||
                        (c >= '0' && c <= '9') || c == '-' || c == '_' || c == '.';
        out.push_back(ok ? c : '_');
    }
    return out;
}

}  // namespace

std::vector<ManifestEntry> read_manifest(const std::string& path) {
    std::ifstream is(path);
    if (!is) {
        throw IoError("manifest not found: " + path);
    }
    std::vector<ManifestEntry> rows;
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(is, line)) {
        ++lineno;
        if (!line.empty() && line.back() == '\r') {
            line.pop_back();
        }
        if (line.empty()) {
            continue;
        }
        if (lineno == 1 && line == "path,label") {
            continue;
        }
        const std::size_t comma = line.rfind(',');
        if (comma == std::string::npos || comma == 0 || comma + 1 >= line.size()) {
            throw DataError("malformed manifest line " + std::to_string(lineno) + " in " + path +
                            ": expected 'path,label'");
        }
        rows.push_back({line.substr(0, comma), line.substr(comma + 1)});
    }
    if (rows.empty()) {
        throw DataError("manifest has no entries: " + path);
    }
    return rows;
}

void write_manifest(const std::string& path, const std::vector<ManifestEntry>& rows) {
    std::ofstream os(path);
    if (!os) {
        throw IoError("cannot write manifest: " + path);
    }
    os << "path,label\n";
    for (const ManifestEntry& r : rows) {
        os << r.path << "," << r.label << "\n";
    }
    if (!os) {
        throw IoError("failed writing manifest: " + path);
    }
}

std::vector<std::string> label_names(const std::vector<ManifestEntry>& rows) {
    std::vector<std::string> names;
    for (const ManifestEntry& r : rows) {
        names.push_back(r.label);
    }
    std::sort(names.begin(), names.end());
    names.erase(std::unique(names.begin(), names.end()), names.end());
    return names;
}

int label_index(const std::vector<std::string>& names, const std::string& label) {
    const auto it = std::lower_bound(names.begin(), names.end(), label);
    if (it == names.end() || *it != label) {
        throw DataError("unknown label '" + label + "'");
    }
    return static_cast<int>(it - names.begin());
}

DatasetSplit split_dataset(const std::vector<int>& labels, int n_classes, std::uint64_t seed) {
    if (n_classes < 2) {
        throw ConfigError("split needs at least 2 classes");
    }
    std::vector<std::vector<std::int64_t>> by_class(static_cast<std::size_t>(n_classes));
    for (std::size_t i = 0; i < labels.size(); ++i) {
        const int l = labels[i];
        if (l < 0 || l >= n_classes) {
            throw DataError("label " + std::to_string(l) + " out of range for " +
                            std::to_string(n_classes) + " classes");
        }
        by_class[static_cast<std::size_t>(l)].push_back(static_cast<std::int64_t>(i));
    }
    DatasetSplit split;
    for (int c = 0; c < n_classes; ++c) {
        std::vector<std::int64_t>& idx = by_class[static_cast<std::size_t>(c)];
        const std::int64_t n = static_cast<std::int64_t>(idx.size());
        if (n < 10) {
            throw DataError("class " + std::to_string(c) + " has " + std::to_string(n) +
                            " samples; the 60/10/30 split needs at least 10");
        }
        Rng rng(mix_seed(seed, 0x5A00 + static_cast<std::uint64_t>(c)));
        rng.shuffle(idx);
        const std::int64_t n_train = std::llround(0.6 * static_cast<double>(n));
        const std::int64_t n_val = std::llround(0.1 * static_cast<double>(n));
        for (std::int64_t i = 0; i < n; ++i) {
            const SplitEntry e{idx[static_cast<std::size_t>(i)], c};
            if (i < n_train) {
                split.train.push_back(e);
            } else if (i < n_train + n_val) {
                split.validation.push_back(e);
            } else {
                split.test.push_back(e);
            }
        }
    }
    return split;
}

void save_features(const std::string& dir, const Sample& sample) {
    if (sample.array.rank() != 2 || sample.array.shape[0] != 1) {
        throw ShapeError("save_features expects [1,L], got " + shape_str(sample.array.shape));
    }
    const std::string stem = dir + "/" + sanitize_stem(sample.id);
    std::ofstream os(stem + ".f64", std::ios::binary);
    if (!os) {
        throw IoError("cannot write features: " + stem + ".f64");
    }
    for (double v : sample.array.data) {
        const std::uint64_t u = std::bit_cast<std::uint64_t>(v);
        char b[8];
        for (int i = 0; i < 8; ++i) {
            b[i] = static_cast<char>((u >> (8 * i)) & 0xff);
        }
        os.write(b, 8);
    }
    const json side = {{"clip_id", sample.id},
                       {"label", sample.label},
                       {"length", sample.array.shape[1]}};
    std::ofstream js(stem + ".json");
    if (!js || !(js << side.dump() << "\n")) {
        throw IoError("cannot write feature sidecar: " + stem + ".json");
    }
}

Sample load_features(const std::string& dir, const std::string& id) {
    const std::string stem = dir + "/" + sanitize_stem(id);
    std::ifstream js(stem + ".json");
    if (!js) {
        throw IoError("feature sidecar not found: " + stem + ".json");
    }
    json side;
    try {
        js >> side;
    } catch (const json::exception& e) {
        throw DataError("bad feature sidecar " + stem + ".json: " + e.what());
    }
    Sample sample;
    try {
        sample.id = side.at("clip_id").get<std::string>();
        sample.label = side.at("label").get<int>();
        const std::int64_t length = side.at("length").get<std::int64_t>();
        sample.array = Tensor({1, length});
    } catch (const json::exception& e) {
        throw DataError("feature sidecar missing field in " + stem + ".json: " + e.what());
    }
    std::ifstream is(stem + ".f64", std::ios::binary);
    if (!is) {
        throw IoError("feature block not found: " + stem + ".f64");
    }
    for (double& v : sample.array.data) {
        unsigned char b[8];
        is.read(reinterpret_cast<char*>(b), 8);
        if (!is) {
            throw DataError("feature block " + stem + ".f64 shorter than sidecar length " +
                            std::to_string(sample.array.shape[1]));
        }
        std::uint64_t u = 0;
        for (int i = 0; i < 8; ++i) {
            u |= static_cast<std::uint64_t>(b[i]) << (8 * i);
        }
        v = std::bit_cast<double>(u);
    }
    is.peek();
    if (!is.eof()) {
        throw DataError("feature block " + stem + ".f64 longer than sidecar length " +
                        std::to_string(sample.array.shape[1]));
    }
    return sample;
}

}  // namespace cabcnn
