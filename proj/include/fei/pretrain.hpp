#pragma once

// Dual-branch embedding-inference training: loss, gradients, optimizer step,
// learning-rate schedule and early stopping.

#include <array>
#include <cstddef>
#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fei/data.hpp"
#include "fei/model.hpp"
#include "fei/optim.hpp"

namespace fei {

struct AblationFlags {
  bool no_emb_infer = false;
  bool no_mask_prompt = false;
  bool no_momentum = false;
  bool no_subspace = false;
  bool no_mask_infer = false;
  bool no_detach = false;

  static constexpr std::array<std::string_view, 6> names = {"no_emb_infer", "no_mask_prompt", "no_momentum",
                                                            "no_subspace",  "no_mask_infer",  "no_detach"};

  bool& flag(std::string_view name);
  bool flag(std::string_view name) const;
  std::vector<std::string> enabled() const;
  static AblationFlags only(std::string_view name);

  bool operator==(const AblationFlags&) const = default;
};

struct TrainConfig {
  double alpha = 0.995;
  double beta1 = 0.0;
  double beta2 = 0.7;
  double lr = 2e-4;
  std::size_t batch = 512;
  std::size_t max_epochs = 100;
  std::size_t patience = 5;
  double lr_decay = 0.9;
  std::array<double, 2> betas = {0.9, 0.999};
  double weight_decay = 0.01;
  /// Global gradient-norm clip; 0 disables it.
  double grad_clip = 5.0;
  std::uint64_t seed = 0;
  /// Seed of the fixed masks used for the validation objective.
  std::uint64_t validation_seed = 1234;
  MaskingStrategy masking_strategy = MaskingStrategy::dfm;
  AblationFlags ablation;

  MaskRatioRange mask_range() const { return {beta1, beta2}; }
  /// Learning rate for 0-based epoch e: lr * lr_decay^e.
  double lr_at_epoch(std::size_t epoch) const;
  void validate() const;
};

/// Which terms of the objective are built, after applying ablation flags.
struct ComputationGraph {
  bool target_branch = true;   // infer u' from u and the mask prompt
  bool mask_branch = true;     // infer m from u - u'
  bool mask_prompt = true;     // add m to u in the target branch
  bool momentum_target = true; // u' from the EMA encoder (else the online one, gradient-blocked)
  bool subspace = true;        // projector on; h = d / 2
  bool detach_prompt = true;   // no gradient from the target branch into the mask table
  bool detach_anchor = true;   // no gradient from the mask branch into u

  std::string describe() const;
};

ComputationGraph apply_ablation(const AblationFlags& flags);
/// The model shape an ablation needs (no_subspace sets h = d).
ModelConfig apply_ablation(ModelConfig model, const AblationFlags& flags);

struct StepRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // global optimizer step, 1-based
  double loss_total = 0.0;
  double loss_target_branch = 0.0;
  double loss_mask_branch = 0.0;
  double lr_current = 0.0;
};

struct BranchLosses {
  double target = 0.0;
  double mask = 0.0;
  double total() const { return target + mask; }
};

/// Restricts gradient computation to one branch (for inspecting the partition).
enum class BranchSelection { both, target_only, mask_only };

/// Forward-only batch objective: mean over samples of the squared L2 errors.
/// The online encoder normalizes with batch statistics, as in training.
BranchLosses fei_loss(const FeiModel& model, const FeiParams& params, std::span<const TimeSeries> originals,
                      std::span<const TimeSeries> targets, std::span<const std::vector<std::uint8_t>> masks,
                      const ComputationGraph& graph);

/// Objective and gradients for a batch with given masks and target series.
/// `grads` is overwritten. Batch statistics are blended into `stats_update` when
/// it is non-empty.
BranchLosses fei_gradients(const FeiModel& model, const FeiParams& params, std::span<const TimeSeries> originals,
                           std::span<const TimeSeries> targets, std::span<const std::vector<std::uint8_t>> masks,
                           const ComputationGraph& graph, FeiGradients& grads,
                           BranchSelection which = BranchSelection::both, std::span<double> stats_update = {});

/// Masks and target series for a batch. Sample i of optimizer step s draws its
/// mask from a generator seeded by (seed, stream, s, i).
struct MaskedBatch {
  std::vector<std::vector<std::uint8_t>> masks;
  std::vector<TimeSeries> targets;
};

MaskedBatch make_masked_batch(std::span<const TimeSeries> originals, MaskingStrategy strategy,
                              const MaskRatioRange& range, std::uint64_t seed, std::uint64_t stream,
                              std::uint64_t counter);

/// Owns the parameters and optimizer state for one training run.
class FeiTrainer {
 public:
  FeiTrainer(const FeiModel& model, FeiParams params, TrainConfig cfg);

  /// One optimizer step on the batch followed by the momentum update.
  StepRecord step(std::span<const TimeSeries> batch, std::size_t epoch);
  /// Same with caller-supplied masks (and their target series).
  StepRecord step(std::span<const TimeSeries> batch, const MaskedBatch& masked, std::size_t epoch);

  const FeiParams& params() const { return params_; }
  const TrainConfig& config() const { return cfg_; }
  const ComputationGraph& graph() const { return graph_; }
  std::size_t global_step() const { return step_; }
  double lr() const { return lr_; }
  void set_lr(double lr) { lr_ = lr; }
  /// Gradients of the most recent step, before clipping.
  const FeiGradients& last_gradients() const { return grads_; }

 private:
  const FeiModel* model_;
  FeiParams params_;
  TrainConfig cfg_;
  ComputationGraph graph_;
  FeiGradients grads_;
  AdamW opt_encoder_, opt_projector_, opt_mask_table_, opt_target_, opt_mask_;
  double lr_;
  std::size_t step_ = 0;
};

/// Objective on held-out data with masks fixed by cfg.validation_seed.
double validation_loss(const FeiModel& model, const FeiParams& params, const Dataset& data, const TrainConfig& cfg);

/// Stops after `patience` consecutive epochs without a strictly lower loss.
class EarlyStopping {
 public:
  explicit EarlyStopping(std::size_t patience) : patience_(patience) {}

  /// Records an epoch loss; returns true when it is a new best.
  bool update(double loss);
  bool should_stop() const { return patience_ > 0 && bad_epochs_ >= patience_; }
  std::optional<double> best() const {
    return seen_ ? std::optional<double>(best_) : std::nullopt;
  }
  std::size_t bad_epochs() const { return bad_epochs_; }

 private:
  std::size_t patience_;
  bool seen_ = false;
  double best_ = 0.0;
  std::size_t bad_epochs_ = 0;
};

struct EpochSummary {
  std::size_t epoch = 0;
  double train_loss = 0.0;  // mean of step losses
  std::optional<double> val_loss;
  double lr = 0.0;
};

struct PretrainHooks {
  std::function<void(const StepRecord&)> on_step;
  std::function<void(const EpochSummary&)> on_epoch;
  /// Replaces the validation objective when set.
  std::function<double(std::size_t epoch, const FeiParams&)> validation_loss;
};

struct PretrainResult {
  FeiParams best;
  FeiParams last;
  std::size_t best_epoch = 0;
  std::vector<StepRecord> steps;
  std::vector<EpochSummary> epochs;
  bool stopped_early = false;
};

/// Full training loop. Without validation data (and no override hook) the last
/// parameters are returned as best and early stopping is off.
PretrainResult pretrain(const FeiModel& model, FeiParams init, const Dataset& train, const Dataset* val,
                        const TrainConfig& cfg, const PretrainHooks& hooks = {});

}  // namespace fei
