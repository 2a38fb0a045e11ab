#include "cabcnn/acb.hpp"

#include <string>

namespace cabcnn {

SoftmaxMlp::SoftmaxMlp(std::int64_t in, std::int64_t h1, std::int64_t h2, std::int64_t out)
    : d1(in, h1), d2(h1, h2), head(h2, out) {}

void SoftmaxMlp::init(Rng& rng) {
    d1.init(rng);
    d2.init(rng);
    head.init(rng);
}

Tensor SoftmaxMlp::forward(const Tensor& x, Ctx* ctx) const {
    Ctx local;
    Ctx* c = ctx ? ctx : &local;
    c->z1 = d1.forward(x, &c->c1);
    const Tensor h1 = relu(c->z1);
    c->z2 = d2.forward(h1, &c->c2);
    const Tensor h2 = relu(c->z2);
    const Tensor logits = head.forward(h2, &c->c3);
    Tensor y({head.out_dim});
    y.data = softmax(logits.data);
    c->out = y;
    return y;
}

Tensor SoftmaxMlp::backward(const Ctx& ctx, const Tensor& gy) {
    check_shape(gy, {head.out_dim}, "SoftmaxMlp backward grad");
    Tensor g_logits({head.out_dim});
    g_logits.data = softmax_backward(ctx.out.data, gy.data);
    const Tensor g_h2 = head.backward(ctx.c3, g_logits);
    const Tensor g_z2 = relu_backward(ctx.z2, g_h2);
    const Tensor g_h1 = d2.backward(ctx.c2, g_z2);
    const Tensor g_z1 = relu_backward(ctx.z1, g_h1);
    return d1.backward(ctx.c1, g_z1);
}

SoftmaxMlp make_classifier_unit(std::int64_t feature_dim, std::int64_t m) {
    return SoftmaxMlp(feature_dim, 8, 4, m);
}

SoftmaxMlp make_attention_unit(std::int64_t feature_dim, std::int64_t n) {
    return SoftmaxMlp(feature_dim, 160, 80, n);
}

Tensor acb_combine(const Tensor& alpha, const Tensor& cls_out) {
    if (cls_out.rank() != 2 || alpha.rank() != 1 || alpha.shape[0] != cls_out.shape[0]) {
        throw ShapeError("acb_combine: alpha " + shape_str(alpha.shape) + " vs outputs " +
                         shape_str(cls_out.shape));
    }
    const std::int64_t n = cls_out.shape[0];
    const std::int64_t m = cls_out.shape[1];
    Tensor c({m});
    for (std::int64_t i = 0; i < n; ++i) {
        const double a = alpha.at(i);
        for (std::int64_t j = 0; j < m; ++j) {
            c.at(j) += a * cls_out.at(i, j);
        }
    }
    return c;
}

Tensor temporal_average(const std::vector<Tensor>& contexts) {
    if (contexts.empty()) {
        throw ShapeError("temporal_average: no timesteps");
    }
    Tensor avg(contexts[0].shape);
    for (const Tensor& c : contexts) {
        check_shape(c, avg.shape, "temporal_average context");
        for (std::int64_t j = 0; j < avg.size(); ++j) {
            avg.at(j) += c.at(j);
        }
    }
    const double inv = 1.0 / static_cast<double>(contexts.size());
    for (double& v : avg.data) {
        v *= inv;
    }
    return avg;
}

ACB::ACB(std::int64_t feature_dim_, std::int64_t n_, std::int64_t m_)
    : n(n_), m(m_), feature_dim(feature_dim_), attention(make_attention_unit(feature_dim_, n_)) {
    if (n < 1 || m < 2) {
        throw ConfigError("ACB needs n >= 1 and m >= 2, got n=" + std::to_string(n) +
                          " m=" + std::to_string(m));
    }
    classifiers.reserve(static_cast<std::size_t>(n));
    for (std::int64_t i = 0; i < n; ++i) {
        classifiers.push_back(make_classifier_unit(feature_dim, m));
    }
}

void ACB::init(Rng& rng) {
    for (SoftmaxMlp& c : classifiers) {
        c.init(rng);
    }
    attention.init(rng);
}

Tensor ACB::forward(const Tensor& a_t, StepCtx* ctx) const {
    check_shape(a_t, {feature_dim}, "ACB input");
    StepCtx local;
    StepCtx* c = ctx ? ctx : &local;
    c->cls.resize(classifiers.size());
    c->cls_out = Tensor({n, m});
    for (std::int64_t i = 0; i < n; ++i) {
        const Tensor ci =
            classifiers[static_cast<std::size_t>(i)].forward(a_t, &c->cls[static_cast<std::size_t>(i)]);
        for (std::int64_t j = 0; j < m; ++j) {
            c->cls_out.at(i, j) = ci.at(j);
        }
    }
    c->alpha = attention.forward(a_t, &c->attn);
    return acb_combine(c->alpha, c->cls_out);
}

Tensor ACB::backward(const StepCtx& ctx, const Tensor& gy) {
    check_shape(gy, {m}, "ACB backward grad");
    // c_t = sum_i alpha_i * c_i: split the incoming grad between the
    // attention path and each classifier path.
    Tensor g_alpha({n});
    Tensor ga({feature_dim});
    for (std::int64_t i = 0; i < n; ++i) {
        double dot = 0.0;
        for (std::int64_t j = 0; j < m; ++j) {
            dot += gy.at(j) * ctx.cls_out.at(i, j);
        }
        g_alpha.at(i) = dot;
        Tensor g_ci({m});
        for (std::int64_t j = 0; j < m; ++j) {
            g_ci.at(j) = ctx.alpha.at(i) * gy.at(j);
        }
        const Tensor gi = classifiers[static_cast<std::size_t>(i)].backward(
            ctx.cls[static_cast<std::size_t>(i)], g_ci);
        for (std::int64_t d = 0; d < feature_dim; ++d) {
            ga.at(d) += gi.at(d);
        }
    }
    const Tensor g_attn = attention.backward(ctx.attn, g_alpha);
    for (std::int64_t d = 0; d < feature_dim; ++d) {
        ga.at(d) += g_attn.at(d);
    }
    return ga;
}

Tensor ACB::forward_sequence(const Tensor& a, std::vector<StepCtx>* ctxs) const {
    if (a.rank() != 2 || a.shape[1] != feature_dim) {
        throw ShapeError("ACB sequence: expected [p," + std::to_string(feature_dim) + "], got " +
                         shape_str(a.shape));
    }
    const std::int64_t p = a.shape[0];
    if (ctxs) {
        ctxs->resize(static_cast<std::size_t>(p));
    }
    Tensor avg({m});
    Tensor a_t({feature_dim});
    for (std::int64_t t = 0; t < p; ++t) {
        for (std::int64_t d = 0; d < feature_dim; ++d) {
            a_t.at(d) = a.at(t, d);
        }
        const Tensor c_t = forward(a_t, ctxs ? &(*ctxs)[static_cast<std::size_t>(t)] : nullptr);
        for (std::int64_t j = 0; j < m; ++j) {
            avg.at(j) += c_t.at(j);
        }
    }
    for (double& v : avg.data) {
        v /= static_cast<double>(p);
    }
    return avg;
}

Tensor ACB::backward_sequence(const std::vector<StepCtx>& ctxs, const Tensor& g_avg) {
    check_shape(g_avg, {m}, "ACB sequence backward grad");
    const std::int64_t p = static_cast<std::int64_t>(ctxs.size());
    Tensor g_step({m});
    for (std::int64_t j = 0; j < m; ++j) {
        g_step.at(j) = g_avg.at(j) / static_cast<double>(p);
    }
    Tensor ga({p, feature_dim});
    for (std::int64_t t = 0; t < p; ++t) {
        const Tensor gt = backward(ctxs[static_cast<std::size_t>(t)], g_step);
        for (std::int64_t d = 0; d < feature_dim; ++d) {
            ga.at(t, d) = gt.at(d);
        }
    }
    return ga;
}

}  // namespace cabcnn
