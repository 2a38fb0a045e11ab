#pragma once

#include <cstdint>
#include <functional>
#include <string>
#include <vector>

#include "cabcnn/dataset.hpp"
#include "cabcnn/model.hpp"
#include "cabcnn/tensor.hpp"

namespace cabcnn {

struct TrainConfig {
    std::int64_t batch_size = 128;
    std::int64_t max_epochs = 200;
    std::int64_t patience = 15;
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double epsilon = 1e-8;
    std::uint64_t seed = 0;
    std::int64_t t_seconds = 30;

    void validate() const;
};

struct EpochRecord {
    std::int64_t epoch = 0;  // 1-based
    double train_loss = 0.0;
    double val_loss = 0.0;
    double val_acc = 0.0;
    double seconds = 0.0;
};

// -log(max(pred[label], 1e-12)) for a probability vector pred.
double cross_entropy(const Tensor& pred, int label);
// dLoss/dpred; zero where the clamp is active.
Tensor cross_entropy_backward(const Tensor& pred, int label);

// Adam with bias correction over a fixed parameter list. Reads each
// parameter's grad buffer; callers zero grads between steps.
class Adam {
  public:
    Adam(std::vector<NamedParam> params, double lr, double beta1, double beta2, double epsilon);

    void step();
    std::int64_t steps_taken() const { return t_; }

  private:
    std::vector<NamedParam> params_;
    std::vector<std::vector<double>> m_;
    std::vector<std::vector<double>> v_;
    double lr_, beta1_, beta2_, epsilon_;
    std::int64_t t_ = 0;
};

// One training batch: member arrays already truncated to the batch's
// shortest length.
struct Batch {
    std::vector<Tensor> inputs;  // each [1, length]
    std::vector<int> labels;
    std::int64_t length = 0;
};

// Shuffle by seed, group into batches of <= batch_size (final partial
// batch kept), truncate every member to the batch minimum length.
std::vector<Batch> make_batches(const std::vector<Sample>& samples, std::int64_t batch_size,
                                std::uint64_t seed);

// Stop when the monitored loss has not improved (strictly) for `patience`
// consecutive observations. Epoch indices are 0-based observation counts.
class EarlyStopping {
  public:
    explicit EarlyStopping(std::int64_t patience);

    // Returns true when this observation is a new best.
    bool observe(double val_loss);
    bool should_stop() const { return since_best_ >= patience_; }
    std::int64_t best_epoch() const { return best_epoch_; }
    double best_loss() const { return best_loss_; }

  private:
    std::int64_t patience_;
    double best_loss_;
    std::int64_t best_epoch_ = -1;
    std::int64_t since_best_ = 0;
    std::int64_t count_ = 0;
};

// Forward + backward + Adam update on one batch. `drop_seeds` holds one
// dropout seed per batch member. Returns the mean cross-entropy over the
// batch (evaluated at the pre-update parameters).
double train_step(Model& model, const Batch& batch, Adam& adam,
                  const std::vector<std::uint64_t>& drop_seeds);

// Train-mode batch loss without gradients or side effects (running
// statistics are restored); used to verify that a step decreases loss.
double batch_loss(Model& model, const Batch& batch, const std::vector<std::uint64_t>& drop_seeds);

// Mean infer-mode loss and accuracy over a sample set.
struct EvalResult {
    double loss = 0.0;
    double accuracy = 0.0;
};
EvalResult evaluate(Model& model, const std::vector<Sample>& samples);

struct TrainResult {
    std::vector<EpochRecord> history;
    std::int64_t best_epoch = 0;  // 1-based
    double best_val_loss = 0.0;
};

// Full protocol: per-epoch shuffled truncate-to-shortest batches, Adam,
// infer-mode validation after each epoch, early stopping on validation
// loss, best-epoch weights (including running statistics) restored into
// `model` before returning. `on_epoch`, when set, is called after each
// epoch's record is complete.
TrainResult train(Model& model, const std::vector<Sample>& train_set,
                  const std::vector<Sample>& val_set, const TrainConfig& cfg,
                  const std::function<void(const EpochRecord&)>& on_epoch = {});

void write_history_csv(const std::string& path, const std::vector<EpochRecord>& history);

}  // namespace cabcnn
