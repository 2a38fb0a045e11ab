#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "cabcnn/acb.hpp"
#include "cabcnn/layers.hpp"
#include "cabcnn/tensor.hpp"

namespace cabcnn {

// One conv/pool stage row. A dropout rate of 0 means no dropout.
struct ConvStage {
    std::int64_t filters = 0;
    std::int64_t kernel = 0;
    std::int64_t pool_size = 0;
    std::int64_t pool_stride = 0;
    double dropout = 0.0;
};

struct ModelConfig {
    std::vector<ConvStage> conv_stages;
    std::int64_t feature_dim = 128;
    std::int64_t n_classifiers = 40;
    std::int64_t n_classes = 3;
    double bn_momentum = 0.99;
    double bn_epsilon = 1e-5;
    std::uint64_t seed = 0;

    // The reference architecture: four conv/pool stages ending in 128
    // feature channels, 40 classifiers, 3 classes.
    static ModelConfig defaults();

    void validate() const;
    std::string to_json() const;
    static ModelConfig from_json(const std::string& text);
    // FNV-1a over the canonical JSON form; stored in checkpoints.
    std::uint64_t hash() const;
};

struct NamedParam {
    std::string name;
    Tensor* tensor;
};

// Full network: conv/pool distillation stack, batch normalization, ACB,
// temporal average.
class Model {
  public:
    ModelConfig config;
    std::vector<Conv1D> convs;
    std::vector<MaxPool1D> pools;
    BatchNorm1D bn;
    ACB acb;

    // Minimum input length: one timestep must survive the 100x total
    // downsampling of the pooling stack.
    static constexpr std::int64_t kMinInputLen = 100;

    static Model build(const ModelConfig& cfg);

    // Timesteps remaining after the pooling stack for an input of length l.
    std::int64_t out_timesteps(std::int64_t l) const;

    struct DistillCtx {
        struct Stage {
            Conv1D::Ctx conv;
            Tensor conv_out;  // pre-ReLU
            MaxPool1D::Ctx pool;
            std::vector<unsigned char> drop_keep;
        };
        std::vector<Stage> stages;
    };

    // Conv/pool stack only: [1, L] -> [feature_dim, p]. Dropout masks are
    // derived from drop_seed, so a second call with the same arguments
    // replays them exactly (used to recompute caches during backward).
    Tensor distill(const Tensor& x, bool training, std::uint64_t drop_seed,
                   DistillCtx* ctx) const;
    // Accumulates conv parameter grads, returns grad w.r.t. the input.
    Tensor distill_backward(const DistillCtx& ctx, const Tensor& g_features);

    // Whole network on one sample: [1, L] -> probability vector [m].
    // Train mode runs dropout (seeded) and batch statistics; infer mode is
    // deterministic.
    Tensor forward(const Tensor& x, bool training = false, std::uint64_t drop_seed = 0);

    // Trainable parameters in declaration order.
    std::vector<NamedParam> parameters();
    // Parameters plus batchnorm running statistics; everything a
    // checkpoint or a best-epoch snapshot must capture.
    std::vector<NamedParam> state_tensors();

    std::int64_t count_parameters();

    // Self-describing binary checkpoint: magic, JSON header (config, hash,
    // tensor table, caller metadata), then little-endian float64 blocks.
    void save(const std::string& path, const std::string& meta_json = "{}");
    static Model load(const std::string& path, std::string* meta_json = nullptr);
};

// Transpose helpers between the conv layout [C, p] and the ACB sequence
// layout [p, C].
Tensor features_to_sequence(const Tensor& features);
Tensor sequence_to_features(const Tensor& seq);

}  // namespace cabcnn
