#pragma once

#include <cstdint>
#include <filesystem>
#include <limits>
#include <map>
#include <string>
#include <vector>

#include "banknet/augment.hpp"
#include "banknet/dataset.hpp"
#include "banknet/model.hpp"

namespace bnk {

/// Training hyperparameters. The defaults are the recipe this engine ships
/// with: Adam at 1e-4, batch 32, 50 epochs, learning rate times 0.8 after 2
/// stagnant epochs, best checkpoint on lowest validation loss.
struct TrainConfig {
  double learning_rate = 1e-4;
  int batch_size = 32;
  int max_epochs = 50;
  int plateau_patience = 2;
  double plateau_factor = 0.8;
  double min_lr = 1e-7;
  int early_stop_patience = 10;
  double min_delta = 0.0;  // improvement must beat best by more than this
  std::string checkpoint_path = "checkpoint.bnkw";
  std::uint64_t seed = 0;
  bool freeze_backbone = false;
  bool augment_online = true;

  void validate() const;
};

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-7;
};

/// First/second moment tensors per parameter plus the shared step count.
class AdamState {
 public:
  AdamState() = default;
  explicit AdamState(const ParamStore& params);

  std::int64_t step_count() const { return t_; }
  const Tensor& first_moment(const std::string& name) const { return m_.at(name); }
  const Tensor& second_moment(const std::string& name) const { return v_.at(name); }

  friend void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads,
                        AdamState& state, double lr, const AdamConfig& cfg);

 private:
  std::map<std::string, Tensor> m_;
  std::map<std::string, Tensor> v_;
  std::int64_t t_ = 0;
};

/// One bias-corrected Adam update. Parameters without a gradient entry and
/// frozen parameters are untouched, moments included.
void adam_step(ParamStore& params, const std::map<std::string, Tensor>& grads, AdamState& state,
               double lr, const AdamConfig& cfg = {});

struct EpochStats {
  int epoch = 0;  // 1-based
  double lr = 0.0;
  double train_loss = 0.0;
  double train_acc = 0.0;
  double val_loss = 0.0;
  double val_acc = 0.0;
};

/// Scheduler counters, checkpoint bookkeeping and the per-epoch history.
/// The plateau, early-stop and checkpoint trackers each monitor validation
/// loss independently so the three operations stay separately testable.
struct TrainState {
  double lr = 0.0;

  double plateau_best = std::numeric_limits<double>::infinity();
  int plateau_counter = 0;

  double stop_best = std::numeric_limits<double>::infinity();
  int epochs_since_best = 0;

  double best_val_loss = std::numeric_limits<double>::infinity();
  int best_epoch = -1;

  std::vector<EpochStats> history;
};

/// Strict improvement resets the plateau counter; otherwise it increments,
/// and on reaching `patience` the learning rate is multiplied by `factor`
/// (floored at min_lr) and the counter resets.
void plateau_update(TrainState& state, double val_loss, double factor, int patience,
                    double min_lr, double min_delta = 0.0);

/// Tracks epochs since the last strict improvement.
void early_stop_observe(TrainState& state, double val_loss, double min_delta = 0.0);
bool early_stop_check(const TrainState& state, int patience);

/// Persists `params` when val_loss strictly improves on the best so far, so
/// the file on disk always holds the weights of the lowest validation loss.
/// Returns whether a save happened.
bool checkpoint_if_best(TrainState& state, double val_loss, int epoch, const ParamStore& params,
                        const std::filesystem::path& path, double min_delta = 0.0);

/// Mean cross-entropy and accuracy of the model over the given items.
struct EvalStats {
  double loss = 0.0;
  double accuracy = 0.0;
};
EvalStats evaluate_split(const ModelSpec& model, const ParamStore& params,
                         const std::vector<LabeledImage>& items, const std::vector<int>& indices);

struct FitResult {
  ParamStore best_params;
  TrainState state;
};

/// The full epoch loop: seeded shuffle, augmented batches, forward/backward
/// with the fused softmax cross-entropy gradient, Adam updates, un-augmented
/// validation, plateau/early-stop/checkpoint bookkeeping. Returns the
/// reloaded best checkpoint. Throws NumericError naming the batch index if a
/// batch loss goes non-finite.
FitResult fit(const ModelSpec& model, ParamStore params, const Dataset& data,
              const AugmentConfig& augment, const TrainConfig& cfg);

/// Plain-text history table (TSV): epoch, lr, train_loss, train_acc,
/// val_loss, val_acc.
std::string history_table(const std::vector<EpochStats>& history);

}  // namespace bnk
