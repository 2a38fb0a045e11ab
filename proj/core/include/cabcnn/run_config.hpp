#pragma once

#include <cstdint>
#include <string>

#include "cabcnn/model.hpp"
#include "cabcnn/training.hpp"

namespace cabcnn {

// Everything a training run needs, read from one JSON file. Fields the
// file omits take the documented defaults; the fully resolved form is
// echoed into the output directory so a run can be audited and repeated.
struct RunConfig {
    std::string manifest;
    std::string out_dir;
    std::uint64_t seed = 0;
    std::int64_t t_seconds = 30;
    ModelConfig model;
    TrainConfig train;

    // Parses the file, applies defaults, and derives sub-seeds: unless the
    // file pins them explicitly, model.seed and train.seed are mixed from
    // the top-level seed, and train.t_seconds mirrors t_seconds.
    static RunConfig from_json(const std::string& text);
    static RunConfig from_json_file(const std::string& path);

    // Every field explicit; from_json(to_json()) is the identity.
    std::string to_json() const;
};

}  // namespace cabcnn
