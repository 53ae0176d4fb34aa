#pragma once

#include <functional>
#include <string>
#include <vector>

#include "cefnet/data/pipeline.hpp"
#include "cefnet/exp/metrics.hpp"
#include "cefnet/model/fusion.hpp"
#include "cefnet/nn/module.hpp"

namespace cefnet::exp {

using ad::Tensor;
using Batch = std::vector<const data::TrialSample*>;
using ForwardFn = std::function<Tensor(const Batch&)>;
using LogFn = std::function<void(const std::string&)>;

struct TrainConfig {
  std::size_t batch_size = 8;
  std::size_t max_epochs = 100;
  double lr = 1e-5;
  double dropout = 0.5;
  std::size_t patience = 10;
  std::uint64_t seed = 42;
  std::size_t folds = 10;
  std::size_t image_size = 224;
  std::size_t participants_per_class = 25;
  std::size_t jobs = 0;  // parallel folds; 0 = hardware concurrency

  void validate() const;
  /// Small images, few participants, larger step and shorter budget.
  static TrainConfig desk_scale();
};

/// Narrow DCNN channel plan used at desk scale.
void apply_desk_scale(model::FusionConfig& config);

/// Patience counts epochs without a strict validation-accuracy improvement.
/// Among epochs tied at the best accuracy the lowest validation loss wins the
/// checkpoint, without resetting patience.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}
  /// Returns true when this epoch's weights should become the checkpoint.
  bool update(double val_accuracy, double val_loss);
  bool should_stop() const { return since_best_ >= patience_; }
  std::size_t best_epoch() const { return best_epoch_; }  // 1-based
  std::size_t epochs() const { return epoch_; }
  double best_accuracy() const { return best_acc_; }
  double best_loss() const { return best_loss_; }

 private:
  std::size_t patience_;
  std::size_t epoch_ = 0;
  std::size_t since_best_ = 0;
  std::size_t best_epoch_ = 0;
  double best_acc_ = -1.0;
  double best_loss_ = 0.0;
};

struct EpochLog {
  std::size_t epoch = 0;
  double train_loss = 0.0;
  double val_loss = 0.0;
  double val_accuracy = 0.0;
};

struct TrainResult {
  std::vector<EpochLog> history;
  std::size_t best_epoch = 0;
  double best_val_accuracy = 0.0;
  double best_val_loss = 0.0;
  bool stopped_early = false;
};

struct Prediction {
  std::string participant;
  int trial = 0;
  int difficulty = 1;
  int label = 0;
  int predicted = 0;
  double p_ad = 0.0;
  std::size_t fold = 0;
};

/// Mini-batch Adam on mean cross-entropy with early stopping on validation
/// accuracy; leaves the best-validation weights in `module`.
TrainResult train_loop(nn::Module& module, const ForwardFn& forward, const Batch& train, const Batch& val,
                       const TrainConfig& config, nn::Rng& rng, const LogFn& log = {});

/// Eval-mode predictions; the module's train/eval flag is restored afterwards.
std::vector<Prediction> predict(nn::Module& module, const ForwardFn& forward, const Batch& samples,
                                std::size_t batch_size);
Metrics metrics_of(const std::vector<Prediction>& predictions);

/// [B, 50, 3, H, W] with pixels scaled to [0, 1].
Tensor face_batch(const Batch& batch);
/// [B, 50, 6] standardised with training statistics.
Tensor eye_batch(const Batch& batch, const data::ChannelStats& stats);
ForwardFn network_forward(model::FusionNetwork& net, const data::ChannelStats& stats);

struct FoldSplit {
  std::size_t fold = 0;
  Batch train, val, test;
  std::vector<std::string> val_participants;
  data::ChannelStats stats;  // fitted on `train` only
};

/// Test = fold `fold`; one participant per class is carved from the rest as
/// validation (seeded); statistics come from the remaining training trials.
FoldSplit split_fold(const std::vector<data::TrialSample>& samples, const data::FoldPlan& plan, std::size_t fold,
                     std::uint64_t seed);
/// Throws std::logic_error if any participant appears in two of train/val/test.
void assert_no_leakage(const FoldSplit& split);

struct FoldResult {
  std::size_t fold = 0;
  TrainResult training;
  Metrics metrics;
  std::vector<Prediction> predictions;
  nn::Snapshot checkpoint;
};

struct CvResult {
  std::vector<FoldResult> folds;
  MetricsSummary summary;
  std::vector<Prediction> all_predictions() const;
};

FoldResult run_fold(const std::vector<data::TrialSample>& samples, const data::FoldPlan& plan, std::size_t fold,
                    const model::FusionConfig& model_config, const TrainConfig& config, const LogFn& log = {});
CvResult cross_validate(const std::vector<data::TrialSample>& samples, const data::FoldPlan& plan,
                        const model::FusionConfig& model_config, const TrainConfig& config, const LogFn& log = {});

/// Per-difficulty metrics; rejects levels outside {1, 2, 3}.
std::vector<std::pair<int, Metrics>> difficulty_breakdown(const std::vector<Prediction>& predictions);

}  // namespace cefnet::exp
