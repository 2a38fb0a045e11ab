#pragma once

#include <cstdint>
#include <vector>

#include "cabcnn/rng.hpp"
#include "cabcnn/tensor.hpp"

namespace cabcnn {

// 1-D convolution over [C_in, L] -> [C_out, L]. Stride is fixed at 1 and
// padding is "same": pad_left = floor((k-1)/2), pad_right = ceil((k-1)/2),
// zeros outside the signal.
struct Conv1D {
    std::int64_t in_channels = 0;
    std::int64_t out_channels = 0;
    std::int64_t kernel = 0;
    Tensor weight;  // [out, in, kernel]
    Tensor bias;    // [out]

    Conv1D() = default;
    Conv1D(std::int64_t in_ch, std::int64_t out_ch, std::int64_t k);

    void init(Rng& rng);

    struct Ctx {
        Tensor input;
    };

    Tensor forward(const Tensor& x, Ctx* ctx) const;
    // Accumulates into weight.grad / bias.grad, returns grad w.r.t. input.
    Tensor backward(const Ctx& ctx, const Tensor& gy);
};

// Max pooling over [C, L] -> [C, ceil(L/stride)] with "same" padding:
// window s starts at s*stride - pad_left where total_pad =
// max(0, (out-1)*stride + size - L) and pad_left = floor(total_pad/2).
// Padding positions hold -inf; argmax ties go to the earliest index.
struct MaxPool1D {
    std::int64_t size = 0;
    std::int64_t stride = 0;

    static std::int64_t out_len(std::int64_t in_len, std::int64_t stride);

    struct Ctx {
        std::vector<std::int64_t> argmax;  // input position per output cell, -1 if none
        std::int64_t channels = 0;
        std::int64_t in_len = 0;
    };

    Tensor forward(const Tensor& x, Ctx* ctx) const;
    Tensor backward(const Ctx& ctx, const Tensor& gy) const;
};

// Batch normalization over [B, C, L], statistics per channel across the
// batch and time axes. Running stats use exponential momentum:
// running = momentum * running + (1 - momentum) * batch_stat. Population
// variance throughout.
struct BatchNorm1D {
    std::int64_t channels = 0;
    double momentum = 0.99;
    double epsilon = 1e-5;
    Tensor gamma;         // [C], init 1
    Tensor beta;          // [C], init 0
    Tensor running_mean;  // [C], init 0
    Tensor running_var;   // [C], init 1

    BatchNorm1D() = default;
    explicit BatchNorm1D(std::int64_t c, double mom = 0.99, double eps = 1e-5);

    struct Ctx {
        Tensor xhat;                  // normalized input, [B, C, L]
        std::vector<double> inv_std;  // per channel
        bool training = false;
    };

    // Train mode computes batch statistics and updates running stats;
    // infer mode normalizes with the stored running stats.
    Tensor forward(const Tensor& x, Ctx* ctx, bool training);
    Tensor backward(const Ctx& ctx, const Tensor& gy);
};

// Fully connected layer on rank-1 vectors: y = W x + b.
struct Dense {
    std::int64_t in_dim = 0;
    std::int64_t out_dim = 0;
    Tensor weight;  // [out, in]
    Tensor bias;    // [out]

    Dense() = default;
    Dense(std::int64_t in, std::int64_t out);

    void init(Rng& rng);

    struct Ctx {
        Tensor input;
    };

    Tensor forward(const Tensor& x, Ctx* ctx) const;
    Tensor backward(const Ctx& ctx, const Tensor& gy);
};

// Elementwise max(0, x). Gradient takes 0 at x == 0.
Tensor relu(const Tensor& x);
Tensor relu_backward(const Tensor& x, const Tensor& gy);

// Inverted dropout, deterministic given the seed: each element is zeroed
// with probability `rate`, survivors are scaled by 1/(1-rate). Infer mode
// is the identity. `keep_out`, when given, receives the mask for backward.
Tensor dropout_forward(const Tensor& x, double rate, bool training, std::uint64_t seed,
                       std::vector<unsigned char>* keep_out = nullptr);
Tensor dropout_backward(const std::vector<unsigned char>& keep, double rate, const Tensor& gy);

}  // namespace cabcnn
