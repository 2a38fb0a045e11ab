#include "cabcnn/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <set>

#include "cabcnn/acb.hpp"
#include "cabcnn/layers.hpp"
#include "cabcnn/model.hpp"
#include "cabcnn/rng.hpp"
#include "cabcnn/tensor.hpp"
#include "cabcnn/training.hpp"

namespace cabcnn {

namespace {

constexpr double kEps = 1e-5;

void fill_uniform(Tensor& t, Rng& rng, double lo, double hi) {
    for (double& v : t.data) {
        v = rng.uniform(lo, hi);
    }
}

// Uniform draw with |v| >= margin, keeping ReLU-style kinks out of the
// finite-difference stencil.
void fill_away_from_zero(Tensor& t, Rng& rng, double margin) {
    for (double& v : t.data) {
        do {
            v = rng.uniform(-1.0, 1.0);
        } while (std::abs(v) < margin);
    }
}

double weighted_loss(const Tensor& y, const Tensor& w) {
    double s = 0.0;
    for (std::size_t i = 0; i < y.data.size(); ++i) {
        s += y.data[i] * w.data[i];
    }
    return s;
}

std::vector<double> concat_grads(const std::vector<Tensor*>& ts) {
    std::vector<double> out;
    for (const Tensor* t : ts) {
        out.insert(out.end(), t->grad.begin(), t->grad.end());
    }
    return out;
}

std::vector<double> concat_fd(const std::vector<Tensor*>& ts, const std::function<double()>& f) {
    std::vector<double> out;
    for (Tensor* t : ts) {
        const std::vector<double> g = finite_difference_grad(*t, f, kEps);
        out.insert(out.end(), g.begin(), g.end());
    }
    return out;
}

double check_conv(std::uint64_t s, GradientFault fault) {
    Rng rng(s);
    Conv1D conv(2, 3, 4);
    conv.init(rng);
    conv.weight.require_grad();
    conv.bias.require_grad();
    Tensor x({2, 7});
    fill_uniform(x, rng, -1.0, 1.0);
    x.require_grad();
    Tensor w({3, 7});
    fill_uniform(w, rng, -1.0, 1.0);

    const auto loss = [&] { return weighted_loss(conv.forward(x, nullptr), w); };
    Conv1D::Ctx ctx;
    conv.forward(x, &ctx);
    x.grad = conv.backward(ctx, w).data;
    if (fault == GradientFault::conv_backward) {
        for (double& g : conv.weight.grad) {
            g *= 1.01;
        }
    }
    const std::vector<Tensor*> wrt{&x, &conv.weight, &conv.bias};
    return gradient_relative_error(concat_grads(wrt), concat_fd(wrt, loss));
}

double check_maxpool(std::uint64_t s) {
    Rng rng(s);
    const MaxPool1D pool{4, 2};
    Tensor x({2, 11});
    // Keep the top two values in every window separated, so perturbing by
    // eps cannot move the argmax.
    for (int attempt = 0;; ++attempt) {
        fill_uniform(x, rng, -1.0, 1.0);
        const std::int64_t out = MaxPool1D::out_len(x.shape[1], pool.stride);
        const std::int64_t total_pad =
            std::max<std::int64_t>(0, (out - 1) * pool.stride + pool.size - x.shape[1]);
        const std::int64_t pad_left = total_pad / 2;
        bool ok = true;
        for (std::int64_t c = 0; c < x.shape[0] && ok; ++c) {
            for (std::int64_t o = 0; o < out && ok; ++o) {
                double best = -1e300;
                double second = -1e300;
                for (std::int64_t k = 0; k < pool.size; ++k) {
                    const std::int64_t pos = o * pool.stride - pad_left + k;
                    if (pos < 0 || pos >= x.shape[1]) {
                        continue;
                    }
                    const double v = x.at(c, pos);
                    if (v > best) {
                        second = best;
                        best = v;
                    } else if (v > second) {
                        second = v;
                    }
                }
                if (second > -1e300 && best - second < 1e-3) {
                    ok = false;
                }
            }
        }
        if (ok || attempt > 200) {
            break;
        }
    }
    x.require_grad();
    Tensor w({2, 6});
    fill_uniform(w, rng, -1.0, 1.0);

    const auto loss = [&] { return weighted_loss(pool.forward(x, nullptr), w); };
    MaxPool1D::Ctx ctx;
    pool.forward(x, &ctx);
    x.grad = pool.backward(ctx, w).data;
    const std::vector<Tensor*> wrt{&x};
    return gradient_relative_error(concat_grads(wrt), concat_fd(wrt, loss));
}

double check_batchnorm(std::uint64_t s) {
    Rng rng(s);
    BatchNorm1D bn(3);
    fill_uniform(bn.gamma, rng, 0.5, 1.5);
    fill_uniform(bn.beta, rng, -0.5, 0.5);
    bn.gamma.require_grad();
    bn.beta.require_grad();
    Tensor x({2, 3, 4});
    fill_uniform(x, rng, -1.0, 1.0);
    x.require_grad();
    Tensor w({2, 3, 4});
    fill_uniform(w, rng, -1.0, 1.0);

    const auto loss = [&] {
        const std::vector<double> rm = bn.running_mean.data;
        const std::vector<double> rv = bn.running_var.data;
        const Tensor y = bn.forward(x, nullptr, true);
        bn.running_mean.data = rm;
        bn.running_var.data = rv;
        return weighted_loss(y, w);
    };
    BatchNorm1D::Ctx ctx;
    const std::vector<double> rm = bn.running_mean.data;
    const std::vector<double> rv = bn.running_var.data;
    bn.forward(x, &ctx, true);
    bn.running_mean.data = rm;
    bn.running_var.data = rv;
    x.grad = bn.backward(ctx, w).data;
    const std::vector<Tensor*> wrt{&x, &bn.gamma, &bn.beta};
    return gradient_relative_error(concat_grads(wrt), concat_fd(wrt, loss));
}

double check_dense(std::uint64_t s) {
    Rng rng(s);
    Dense dense(5, 4);
    dense.init(rng);
    fill_uniform(dense.bias, rng, -0.5, 0.5);
    dense.weight.require_grad();
    dense.bias.require_grad();
    Tensor x({5});
    fill_uniform(x, rng, -1.0, 1.0);
    x.require_grad();
    Tensor w({4});
    fill_uniform(w, rng, -1.0, 1.0);

    const auto loss = [&] { return weighted_loss(dense.forward(x, nullptr), w); };
    Dense::Ctx ctx;
    dense.forward(x, &ctx);
    x.grad = dense.backward(ctx, w).data;
    const std::vector<Tensor*> wrt{&x, &dense.weight, &dense.bias};
    return gradient_relative_error(concat_grads(wrt), concat_fd(wrt, loss));
}

double check_relu(std::uint64_t s) {
    Rng rng(s);
    Tensor x({12});
    fill_away_from_zero(x, rng, 1e-3);
    x.require_grad();
    Tensor w({12});
    fill_uniform(w, rng, -1.0, 1.0);

    const auto loss = [&] { return weighted_loss(relu(x), w); };
    x.grad = relu_backward(x, w).data;
    const std::vector<Tensor*> wrt{&x};
    return gradient_relative_error(concat_grads(wrt), concat_fd(wrt, loss));
}

double check_softmax(std::uint64_t s) {
    Rng rng(s);
    Tensor z({7});
    fill_uniform(z, rng, -2.0, 2.0);
    z.require_grad();
    Tensor w({7});
    fill_uniform(w, rng, -1.0, 1.0);

    const auto loss = [&] {
        Tensor y({7});
        y.data = softmax(z.data);
        return weighted_loss(y, w);
    };
    z.grad = softmax_backward(softmax(z.data), w.data);
    const std::vector<Tensor*> wrt{&z};
    return gradient_relative_error(concat_grads(wrt), concat_fd(wrt, loss));
}

double check_cross_entropy(std::uint64_t s) {
    Rng rng(s);
    Tensor z({5});
    fill_uniform(z, rng, -2.0, 2.0);
    z.require_grad();
    const int label = static_cast<int>(rng.uniform_index(5));

    const auto loss = [&] {
        Tensor p({5});
        p.data = softmax(z.data);
        return cross_entropy(p, label);
    };
    Tensor p({5});
    p.data = softmax(z.data);
    const Tensor gy = cross_entropy_backward(p, label);
    z.grad = softmax_backward(p.data, gy.data);
    const std::vector<Tensor*> wrt{&z};
    return gradient_relative_error(concat_grads(wrt), concat_fd(wrt, loss));
}

std::vector<Tensor*> mlp_params(SoftmaxMlp& mlp) {
    return {&mlp.d1.weight, &mlp.d1.bias,   &mlp.d2.weight,
            &mlp.d2.bias,   &mlp.head.weight, &mlp.head.bias};
}

double check_acb(std::uint64_t s) {
    Rng rng(s);
    ACB acb(10, 4, 3);
    acb.init(rng);
    std::vector<Tensor*> wrt;
    for (SoftmaxMlp& c : acb.classifiers) {
        for (Tensor* t : mlp_params(c)) {
            wrt.push_back(t);
        }
    }
    for (Tensor* t : mlp_params(acb.attention)) {
        wrt.push_back(t);
    }
    for (Tensor* t : wrt) {
        t->require_grad();
    }

    Tensor a({10});
    // Keep every unit's pre-ReLU activations off zero: a perturbation of
    // eps shifts them by at most ~3e-5 here.
    for (int attempt = 0;; ++attempt) {
        fill_uniform(a, rng, -1.0, 1.0);
        ACB::StepCtx probe;
        acb.forward(a, &probe);
        bool ok = true;
        const auto margins_ok = [](const SoftmaxMlp::Ctx& c) {
            for (double v : c.z1.data) {
                if (std::abs(v) < 1e-4) {
                    return false;
                }
            }
            for (double v : c.z2.data) {
                if (std::abs(v) < 1e-4) {
                    return false;
                }
            }
            return true;
        };
        for (const SoftmaxMlp::Ctx& c : probe.cls) {
            ok = ok && margins_ok(c);
        }
        ok = ok && margins_ok(probe.attn);
        if (ok || attempt > 200) {
            break;
        }
    }
    a.require_grad();
    wrt.insert(wrt.begin(), &a);
    Tensor w({3});
    fill_uniform(w, rng, -1.0, 1.0);

    const auto loss = [&] { return weighted_loss(acb.forward(a, nullptr), w); };
    for (Tensor* t : wrt) {
        t->zero_grad();
    }
    ACB::StepCtx ctx;
    acb.forward(a, &ctx);
    a.grad = acb.backward(ctx, w).data;
    return gradient_relative_error(concat_grads(wrt), concat_fd(wrt, loss));
}

// End-to-end check on a scaled-down architecture: full FD over the input
// plus a random subset of parameters, restricted to coordinates whose
// activation pattern is stable across the +/-eps stencil.
double check_end_to_end(std::uint64_t s) {
    Rng rng(s);
    ModelConfig cfg;
    cfg.conv_stages = {{4, 4, 4, 2, 0.15}, {6, 4, 4, 2, 0.15}, {8, 10, 10, 5, 0.10},
                       {12, 10, 10, 5, 0.0}};
    cfg.feature_dim = 12;
    cfg.n_classifiers = 3;
    cfg.n_classes = 3;
    cfg.seed = mix_seed(s, 77);
    Model model = Model::build(cfg);

    const std::int64_t len = 120;
    const std::uint64_t dseed = mix_seed(s, 99);
    const int label = static_cast<int>(rng.uniform_index(3));
    Tensor x({1, len});
    fill_uniform(x, rng, -1.0, 1.0);
    x.require_grad();

    const std::int64_t c = cfg.feature_dim;
    const std::int64_t p = model.out_timesteps(len);

    const auto loss = [&] {
        const std::vector<double> rm = model.bn.running_mean.data;
        const std::vector<double> rv = model.bn.running_var.data;
        const Tensor feat = model.distill(x, true, dseed, nullptr);
        Tensor batched({1, c, p});
        batched.data = feat.data;
        const Tensor normed = model.bn.forward(batched, nullptr, true);
        model.bn.running_mean.data = rm;
        model.bn.running_var.data = rv;
        Tensor flat({c, p});
        flat.data = normed.data;
        const Tensor probs = model.acb.forward_sequence(features_to_sequence(flat), nullptr);
        return cross_entropy(probs, label);
    };

    // Hash of every branch decision: ReLU signs, pool argmaxes, ACB unit
    // pre-activation signs. Equal hashes at x+eps and x-eps mean the loss
    // is smooth across the stencil.
    const auto signature = [&]() -> std::uint64_t {
        const std::vector<double> rm = model.bn.running_mean.data;
        const std::vector<double> rv = model.bn.running_var.data;
        std::uint64_t h = 0xcbf29ce484222325ULL;
        const auto fold = [&h](std::uint64_t v) {
            h ^= v;
            h *= 0x100000001b3ULL;
        };
        Model::DistillCtx dctx;
        const Tensor feat = model.distill(x, true, dseed, &dctx);
        for (const Model::DistillCtx::Stage& st : dctx.stages) {
            for (double v : st.conv_out.data) {
                fold(v > 0.0 ? 1 : 0);
            }
            for (std::int64_t idx : st.pool.argmax) {
                fold(static_cast<std::uint64_t>(idx + 1));
            }
        }
        Tensor batched({1, c, p});
        batched.data = feat.data;
        const Tensor normed = model.bn.forward(batched, nullptr, true);
        model.bn.running_mean.data = rm;
        model.bn.running_var.data = rv;
        Tensor flat({c, p});
        flat.data = normed.data;
        std::vector<ACB::StepCtx> actxs;
        model.acb.forward_sequence(features_to_sequence(flat), &actxs);
        for (const ACB::StepCtx& step : actxs) {
            const auto fold_mlp = [&fold](const SoftmaxMlp::Ctx& u) {
                for (double v : u.z1.data) {
                    fold(v > 0.0 ? 1 : 0);
                }
                for (double v : u.z2.data) {
                    fold(v > 0.0 ? 1 : 0);
                }
            };
            for (const SoftmaxMlp::Ctx& u : step.cls) {
                fold_mlp(u);
            }
            fold_mlp(step.attn);
        }
        return h;
    };

    // Analytic gradients for everything, once.
    for (NamedParam& np : model.parameters()) {
        np.tensor->zero_grad();
    }
    {
        const std::vector<double> rm = model.bn.running_mean.data;
        const std::vector<double> rv = model.bn.running_var.data;
        Model::DistillCtx dctx;
        const Tensor feat = model.distill(x, true, dseed, &dctx);
        Tensor batched({1, c, p});
        batched.data = feat.data;
        BatchNorm1D::Ctx bctx;
        const Tensor normed = model.bn.forward(batched, &bctx, true);
        model.bn.running_mean.data = rm;
        model.bn.running_var.data = rv;
        Tensor flat({c, p});
        flat.data = normed.data;
        std::vector<ACB::StepCtx> actxs;
        const Tensor probs = model.acb.forward_sequence(features_to_sequence(flat), &actxs);
        const Tensor g_avg = cross_entropy_backward(probs, label);
        const Tensor g_feat = sequence_to_features(model.acb.backward_sequence(actxs, g_avg));
        Tensor g_batched({1, c, p});
        g_batched.data = g_feat.data;
        const Tensor g_normed_in = model.bn.backward(bctx, g_batched);
        Tensor g_flat({c, p});
        g_flat.data = g_normed_in.data;
        x.grad = model.distill_backward(dctx, g_flat).data;
    }

    struct Coord {
        Tensor* t;
        std::size_t i;
    };
    std::vector<NamedParam> params = model.parameters();
    std::int64_t total_params = 0;
    for (const NamedParam& np : params) {
        total_params += np.tensor->size();
    }

    const std::uint64_t base_sig = signature();
    const auto smooth_at = [&](Tensor* t, std::size_t i) {
        const double saved = t->data[i];
        t->data[i] = saved + kEps;
        const bool up = signature() == base_sig;
        t->data[i] = saved - kEps;
        const bool down = signature() == base_sig;
        t->data[i] = saved;
        return up && down;
    };

    std::vector<Coord> coords;
    for (std::size_t i = 0; i < x.data.size(); ++i) {
        if (smooth_at(&x, i)) {
            coords.push_back({&x, i});
        }
    }
    std::set<std::int64_t> used;
    std::int64_t picked = 0;
    for (int attempt = 0; picked < 60 && attempt < 2000; ++attempt) {
        const std::int64_t flat_idx =
            static_cast<std::int64_t>(rng.uniform_index(static_cast<std::uint64_t>(total_params)));
        if (!used.insert(flat_idx).second) {
            continue;
        }
        std::int64_t off = flat_idx;
        Tensor* t = nullptr;
        for (const NamedParam& np : params) {
            if (off < np.tensor->size()) {
                t = np.tensor;
                break;
            }
            off -= np.tensor->size();
        }
        if (smooth_at(t, static_cast<std::size_t>(off))) {
            coords.push_back({t, static_cast<std::size_t>(off)});
            ++picked;
        }
    }

    std::vector<double> analytic;
    std::vector<double> fd;
    for (const Coord& cd : coords) {
        analytic.push_back(cd.t->grad[cd.i]);
        const double saved = cd.t->data[cd.i];
        cd.t->data[cd.i] = saved + kEps;
        const double fp = loss();
        cd.t->data[cd.i] = saved - kEps;
        const double fm = loss();
        cd.t->data[cd.i] = saved;
        fd.push_back((fp - fm) / (2.0 * kEps));
    }
    return gradient_relative_error(analytic, fd);
}

}  // namespace

std::vector<GradCheckRow> run_gradient_suite(std::uint64_t seed, std::int64_t n_seeds,
                                             GradientFault fault) {
    struct RowDef {
        const char* name;
        double threshold;
        std::function<double(std::uint64_t)> fn;
    };
    const std::vector<RowDef> defs = {
        {"Conv1D", 1e-4, [fault](std::uint64_t s) { return check_conv(s, fault); }},
        {"MaxPool1D", 1e-4, check_maxpool},
        {"BatchNorm", 1e-4, check_batchnorm},
        {"Dense", 1e-4, check_dense},
        {"ReLU", 1e-4, check_relu},
        {"softmax", 1e-4, check_softmax},
        {"cross-entropy", 1e-4, check_cross_entropy},
        {"ACB", 1e-4, check_acb},
        {"end-to-end", 1e-3, check_end_to_end},
    };
    std::vector<GradCheckRow> rows;
    for (std::size_t r = 0; r < defs.size(); ++r) {
        const RowDef& def = defs[r];
        GradCheckRow row;
        row.name = def.name;
        row.threshold = def.threshold;
        for (std::int64_t i = 0; i < n_seeds; ++i) {
            const double err = def.fn(
                mix_seed(seed, 0x6C00 + 1000 * static_cast<std::uint64_t>(r) +
                                   static_cast<std::uint64_t>(i)));
            row.max_rel_err = std::max(row.max_rel_err, err);
        }
        row.pass = row.max_rel_err < row.threshold;
        rows.push_back(row);
    }
    return rows;
}

}  // namespace cabcnn
