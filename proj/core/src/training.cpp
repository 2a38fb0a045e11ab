#include "cabcnn/training.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <limits>

#include "cabcnn/rng.hpp"

namespace cabcnn {

namespace {

constexpr double kProbFloor = 1e-12;

int argmax(const Tensor& v) {
    int best = 0;
    for (std::int64_t i = 1; i < v.size(); ++i) {
        if (v.at(i) > v.at(best)) {
            best = static_cast<int>(i);
        }
    }
    return best;
}

// Forward the ACB side of one batch member and push gradients back to the
// normalized feature map. Returns the sample's cross-entropy.
double acb_pass(Model& model, const Tensor& normed, std::int64_t b, int label, double grad_scale,
                Tensor* g_feat) {
    const std::int64_t c = normed.shape[1];
    const std::int64_t p = normed.shape[2];
    Tensor seq({p, c});
    for (std::int64_t t = 0; t < p; ++t) {
        for (std::int64_t i = 0; i < c; ++i) {
            seq.at(t, i) = normed.at(b, i, t);
        }
    }
    std::vector<ACB::StepCtx> ctxs;
    const Tensor probs = model.acb.forward_sequence(seq, g_feat ? &ctxs : nullptr);
    const double loss = cross_entropy(probs, label);
    if (g_feat) {
        Tensor g_avg = cross_entropy_backward(probs, label);
        for (double& g : g_avg.data) {
            g *= grad_scale;
        }
        const Tensor g_seq = model.acb.backward_sequence(ctxs, g_avg);
        for (std::int64_t t = 0; t < p; ++t) {
            for (std::int64_t i = 0; i < c; ++i) {
                g_feat->at(b, i, t) = g_seq.at(t, i);
            }
        }
    }
    return loss;
}

double run_batch(Model& model, const Batch& batch, const std::vector<std::uint64_t>& drop_seeds,
                 bool compute_grads) {
    const std::int64_t bsz = static_cast<std::int64_t>(batch.inputs.size());
    if (drop_seeds.size() != batch.inputs.size()) {
        throw ConfigError("need one dropout seed per batch member");
    }
    const std::int64_t c = model.config.feature_dim;
    const std::int64_t p = model.out_timesteps(batch.length);

    // Pass 1: distill every member without caches (which would hold the
    // whole activation history of the batch), keeping only the features.
    Tensor features({bsz, c, p});
    for (std::int64_t b = 0; b < bsz; ++b) {
        const Tensor f = model.distill(batch.inputs[static_cast<std::size_t>(b)], true,
                                       drop_seeds[static_cast<std::size_t>(b)], nullptr);
        check_shape(f, {c, p}, "distilled features");
        for (std::int64_t i = 0; i < c; ++i) {
            for (std::int64_t t = 0; t < p; ++t) {
                features.at(b, i, t) = f.at(i, t);
            }
        }
    }

    BatchNorm1D::Ctx bn_ctx;
    const Tensor normed = model.bn.forward(features, compute_grads ? &bn_ctx : nullptr, true);

    double loss_sum = 0.0;
    Tensor g_feat;
    if (compute_grads) {
        g_feat = Tensor({bsz, c, p});
    }
    for (std::int64_t b = 0; b < bsz; ++b) {
        loss_sum += acb_pass(model, normed, b, batch.labels[static_cast<std::size_t>(b)],
                             1.0 / static_cast<double>(bsz), compute_grads ? &g_feat : nullptr);
    }

    if (compute_grads) {
        const Tensor g_batch = model.bn.backward(bn_ctx, g_feat);
        // Pass 2: recompute each member's conv stack with caches (dropout
        // masks replay from the same seeds) and push gradients through.
        for (std::int64_t b = 0; b < bsz; ++b) {
            Model::DistillCtx ctx;
            model.distill(batch.inputs[static_cast<std::size_t>(b)], true,
                          drop_seeds[static_cast<std::size_t>(b)], &ctx);
            Tensor g_f({c, p});
            for (std::int64_t i = 0; i < c; ++i) {
                for (std::int64_t t = 0; t < p; ++t) {
                    g_f.at(i, t) = g_batch.at(b, i, t);
                }
            }
            model.distill_backward(ctx, g_f);
        }
    }
    return loss_sum / static_cast<double>(bsz);
}

}  // namespace

void TrainConfig::validate() const {
    if (batch_size < 1) {
        throw ConfigError("batch_size must be >= 1");
    }
    if (patience < 1) {
        throw ConfigError("patience must be >= 1");
    }
    if (max_epochs < 1) {
        throw ConfigError("max_epochs must be >= 1");
    }
    if (lr <= 0.0 || epsilon <= 0.0) {
        throw ConfigError("lr and epsilon must be positive");
    }
    if (beta1 < 0.0 || beta1 >= 1.0 || beta2 < 0.0 || beta2 >= 1.0) {
        throw ConfigError("beta1 and beta2 must be in [0,1)");
    }
    if (t_seconds < 1) {
        throw ConfigError("t_seconds must be >= 1");
    }
}

double cross_entropy(const Tensor& pred, int label) {
    if (pred.rank() != 1) {
        throw ShapeError("cross_entropy expects a probability vector, got " +
                         shape_str(pred.shape));
    }
    if (label < 0 || label >= pred.size()) {
        throw DataError("label " + std::to_string(label) + " out of range for " +
                        std::to_string(pred.size()) + " classes");
    }
    return -std::log(std::max(pred.at(label), kProbFloor));
}

Tensor cross_entropy_backward(const Tensor& pred, int label) {
    if (label < 0 || label >= pred.size()) {
        throw DataError("label " + std::to_string(label) + " out of range for " +
                        std::to_string(pred.size()) + " classes");
    }
    Tensor g({pred.size()});
    const double p = pred.at(label);
    if (p > kProbFloor) {
        g.at(label) = -1.0 / p;
    }
    return g;
}

Adam::Adam(std::vector<NamedParam> params, double lr, double beta1, double beta2, double epsilon)
    : params_(std::move(params)), lr_(lr), beta1_(beta1), beta2_(beta2), epsilon_(epsilon) {
    m_.reserve(params_.size());
    v_.reserve(params_.size());
    for (const NamedParam& p : params_) {
        if (!p.tensor->has_grad()) {
            throw ConfigError("parameter '" + p.name + "' has no gradient buffer");
        }
        m_.emplace_back(p.tensor->data.size(), 0.0);
        v_.emplace_back(p.tensor->data.size(), 0.0);
    }
}

void Adam::step() {
    ++t_;
    const double bc1 = 1.0 - std::pow(beta1_, static_cast<double>(t_));
    const double bc2 = 1.0 - std::pow(beta2_, static_cast<double>(t_));
    for (std::size_t p = 0; p < params_.size(); ++p) {
        Tensor& t = *params_[p].tensor;
        std::vector<double>& m = m_[p];
        std::vector<double>& v = v_[p];
        for (std::size_t i = 0; i < t.data.size(); ++i) {
            const double g = t.grad[i];
            if (!std::isfinite(g)) {
                throw NumericError("non-finite gradient in parameter '" + params_[p].name + "'");
            }
            m[i] = beta1_ * m[i] + (1.0 - beta1_) * g;
            v[i] = beta2_ * v[i] + (1.0 - beta2_) * g * g;
            const double mhat = m[i] / bc1;
            const double vhat = v[i] / bc2;
            t.data[i] -= lr_ * mhat / (std::sqrt(vhat) + epsilon_);
        }
    }
}

std::vector<Batch> make_batches(const std::vector<Sample>& samples, std::int64_t batch_size,
                                std::uint64_t seed) {
    if (samples.empty()) {
        throw DataError("make_batches on an empty sample list");
    }
    if (batch_size < 1) {
        throw ConfigError("batch_size must be >= 1");
    }
    std::vector<std::size_t> order(samples.size());
    for (std::size_t i = 0; i < order.size(); ++i) {
        order[i] = i;
    }
    Rng rng(seed);
    rng.shuffle(order);

    std::vector<Batch> batches;
    for (std::size_t start = 0; start < order.size();
         start += static_cast<std::size_t>(batch_size)) {
        const std::size_t end =
            std::min(order.size(), start + static_cast<std::size_t>(batch_size));
        Batch b;
        b.length = std::numeric_limits<std::int64_t>::max();
        for (std::size_t i = start; i < end; ++i) {
            b.length = std::min(b.length, samples[order[i]].array.shape[1]);
        }
        for (std::size_t i = start; i < end; ++i) {
            const Tensor& full = samples[order[i]].array;
            Tensor trimmed({1, b.length});
            std::copy(full.data.begin(), full.data.begin() + b.length, trimmed.data.begin());
            b.inputs.push_back(std::move(trimmed));
            b.labels.push_back(samples[order[i]].label);
        }
        batches.push_back(std::move(b));
    }
    return batches;
}

EarlyStopping::EarlyStopping(std::int64_t patience)
    : patience_(patience), best_loss_(std::numeric_limits<double>::infinity()) {
    if (patience < 1) {
        throw ConfigError("patience must be >= 1");
    }
}

bool EarlyStopping::observe(double val_loss) {
    const std::int64_t epoch = count_++;
    if (val_loss < best_loss_) {
        best_loss_ = val_loss;
        best_epoch_ = epoch;
        since_best_ = 0;
        return true;
    }
    ++since_best_;
    return false;
}

double train_step(Model& model, const Batch& batch, Adam& adam,
                  const std::vector<std::uint64_t>& drop_seeds) {
    for (NamedParam& p : model.parameters()) {
        p.tensor->zero_grad();
    }
    const double loss = run_batch(model, batch, drop_seeds, true);
    adam.step();
    return loss;
}

double batch_loss(Model& model, const Batch& batch, const std::vector<std::uint64_t>& drop_seeds) {
    const std::vector<double> saved_mean = model.bn.running_mean.data;
    const std::vector<double> saved_var = model.bn.running_var.data;
    const double loss = run_batch(model, batch, drop_seeds, false);
    model.bn.running_mean.data = saved_mean;
    model.bn.running_var.data = saved_var;
    return loss;
}

EvalResult evaluate(Model& model, const std::vector<Sample>& samples) {
    if (samples.empty()) {
        throw DataError("evaluate on an empty sample list");
    }
    EvalResult r;
    std::int64_t correct = 0;
    for (const Sample& s : samples) {
        const Tensor probs = model.forward(s.array, false);
        r.loss += cross_entropy(probs, s.label);
        if (argmax(probs) == s.label) {
            ++correct;
        }
    }
    r.loss /= static_cast<double>(samples.size());
    r.accuracy = static_cast<double>(correct) / static_cast<double>(samples.size());
    return r;
}

TrainResult train(Model& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch) {
    cfg.validate();
    if (train_set.empty()) {
        throw DataError("training set is empty");
    }
    if (val_set.empty()) {
        throw DataError("validation set is empty");
    }

    Adam adam(model.parameters(), cfg.lr, cfg.beta1, cfg.beta2, cfg.epsilon);
    EarlyStopping stopper(cfg.patience);
    Rng drop_rng(mix_seed(cfg.seed, 0xD80));

    TrainResult result;
    std::vector<std::vector<double>> best_state;
    for (std::int64_t epoch = 1; epoch <= cfg.max_epochs; ++epoch) {
        const auto t0 = std::chrono::steady_clock::now();
        const std::vector<Batch> batches =
            make_batches(train_set, cfg.batch_size, mix_seed(cfg.seed, 0xE40 + static_cast<std::uint64_t>(epoch)));

        double loss_sum = 0.0;
        std::int64_t seen = 0;
        for (const Batch& batch : batches) {
            std::vector<std::uint64_t> seeds(batch.inputs.size());
            for (std::uint64_t& s : seeds) {
                s = drop_rng.next_u64();
            }
            const double mean_loss = train_step(model, batch, adam, seeds);
            loss_sum += mean_loss * static_cast<double>(batch.inputs.size());
            seen += static_cast<std::int64_t>(batch.inputs.size());
        }

        const EvalResult val = evaluate(model, val_set);
        const auto t1 = std::chrono::steady_clock::now();

        EpochRecord rec;
        rec.epoch = epoch;
        rec.train_loss = loss_sum / static_cast<double>(seen);
        rec.val_loss = val.loss;
        rec.val_acc = val.accuracy;
        rec.seconds = std::chrono::duration<double>(t1 - t0).count();
        result.history.push_back(rec);
        if (on_epoch) {
            on_epoch(rec);
        }

        if (stopper.observe(val.loss)) {
            best_state.clear();
            for (const NamedParam& p : model.state_tensors()) {
                best_state.push_back(p.tensor->data);
            }
        }
        if (stopper.should_stop()) {
            break;
        }
    }

    // Restore the best epoch's weights and running statistics.
    std::vector<NamedParam> state = model.state_tensors();
    for (std::size_t i = 0; i < state.size(); ++i) {
        state[i].tensor->data = best_state[i];
    }
    result.best_epoch = stopper.best_epoch() + 1;
    result.best_val_loss = stopper.best_loss();
    return result;
}

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history) {
    std::ofstream os(path);
    if (!os) {
        throw IoError("cannot write history CSV: " + path);
    }
    os << "epoch,train_loss,val_loss,val_acc,seconds\n";
    char buf[256];
    for (const EpochRecord& r : history) {
        std::snprintf(buf, sizeof(buf), "%lld,%.17g,%.17g,%.17g,%.3f\n",
                      static_cast<long long>(r.epoch), r.train_loss, r.val_loss, r.val_acc,
                      r.seconds);
        os << buf;
    }
    if (!os) {
        throw IoError("failed writing history CSV: " + path);
    }
}

}  // namespace cabcnn
