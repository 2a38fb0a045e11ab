#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cabcnn/tensor.hpp"

namespace cabcnn {

// One manifest row: an audio file path and its class label string.
struct ManifestEntry {
    std::string path;
    std::string label;
};

// CSV with a "path,label" header. Paths are stored as written; callers
// resolve relative paths against the manifest's directory.
std::vector<ManifestEntry> read_manifest(const std::string& path);
void write_manifest(const std::string& path, const std::vector<ManifestEntry>& rows);

// Label strings sorted and deduplicated; class index = position.
std::vector<std::string> label_names(const std::vector<ManifestEntry>& rows);
int label_index(const std::vector<std::string>& names, const std::string& label);

struct SplitEntry {
    std::int64_t index = 0;  // position in the corpus
    int label = 0;
};

struct DatasetSplit {
    std::vector<SplitEntry> train;
    std::vector<SplitEntry> validation;
    std::vector<SplitEntry> test;
};

// Stratified 60/10/30 split: per class, train = round(0.6 n),
// validation = round(0.1 n), test = rest, after a seeded shuffle.
// Requires at least 10 samples per class.
DatasetSplit split_dataset(const std::vector<int>& labels, int n_classes, std::uint64_t seed);

// A preprocessed clip ready for the model: array is [1, L].
struct Sample {
    Tensor array;
    int label = 0;
    std::string id;
};

// Preprocessed arrays persisted as raw little-endian float64 blocks with a
// JSON sidecar ({clip_id, label, length}). `id` becomes the file stem.
void save_features(const std::string& dir, const Sample& sample);
Sample load_features(const std::string& dir, const std::string& id);

}  // namespace cabcnn
