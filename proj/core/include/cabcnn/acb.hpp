#pragma once

#include <cstdint>
#include <vector>

#include "cabcnn/layers.hpp"
#include "cabcnn/tensor.hpp"

namespace cabcnn {

// Three dense layers with ReLU between them and a softmax head. Both unit
// types in the ACB share this shape; only the widths differ.
struct SoftmaxMlp {
    Dense d1;
    Dense d2;
    Dense head;

    SoftmaxMlp() = default;
    SoftmaxMlp(std::int64_t in, std::int64_t h1, std::int64_t h2, std::int64_t out);

    void init(Rng& rng);

    struct Ctx {
        Dense::Ctx c1, c2, c3;
        Tensor z1, z2;  // pre-activations feeding the ReLUs
        Tensor out;     // softmax output
    };

    // Returns a probability vector of length head.out_dim.
    Tensor forward(const Tensor& x, Ctx* ctx) const;
    Tensor backward(const Ctx& ctx, const Tensor& gy);
};

// Classifier unit: feature_dim -> 8 -> 4 -> m.
SoftmaxMlp make_classifier_unit(std::int64_t feature_dim, std::int64_t m);
// Attention unit: feature_dim -> 160 -> 80 -> n.
SoftmaxMlp make_attention_unit(std::int64_t feature_dim, std::int64_t n);

// c_t = sum_i alpha[i] * cls_out[i,:]. alpha is [n], cls_out is [n,m].
Tensor acb_combine(const Tensor& alpha, const Tensor& cls_out);

// Mean of p probability vectors; errors on an empty list.
Tensor temporal_average(const std::vector<Tensor>& contexts);

// Attention-based classifier block: n classifier units whose outputs are
// mixed by one attention unit, applied with shared weights at every
// timestep.
struct ACB {
    std::int64_t n = 0;
    std::int64_t m = 0;
    std::int64_t feature_dim = 0;
    std::vector<SoftmaxMlp> classifiers;
    SoftmaxMlp attention;

    ACB() = default;
    ACB(std::int64_t feature_dim, std::int64_t n, std::int64_t m);

    void init(Rng& rng);

    struct StepCtx {
        std::vector<SoftmaxMlp::Ctx> cls;
        SoftmaxMlp::Ctx attn;
        Tensor alpha;    // [n]
        Tensor cls_out;  // [n, m]
    };

    // One timestep: a_t [feature_dim] -> c_t [m].
    Tensor forward(const Tensor& a_t, StepCtx* ctx) const;
    // Accumulates unit parameter grads, returns grad w.r.t. a_t.
    Tensor backward(const StepCtx& ctx, const Tensor& gy);

    // Whole sequence a [p, feature_dim] -> temporal average [m].
    Tensor forward_sequence(const Tensor& a, std::vector<StepCtx>* ctxs) const;
    // Backward of the sequence + average; returns grad w.r.t. a [p, feature_dim].
    Tensor backward_sequence(const std::vector<StepCtx>& ctxs, const Tensor& g_avg);
};

}  // namespace cabcnn
