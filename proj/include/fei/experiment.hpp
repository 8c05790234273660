#pragma once

// Multi-run studies built from pretrain + linear evaluation: the ablation table
// and the masking-strategy comparison.

#include <functional>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "fei/config.hpp"
#include "fei/data.hpp"
#include "fei/eval.hpp"
#include "fei/pretrain.hpp"

namespace fei {

/// Copies the series shape of `ds` into the encoder config.
ModelConfig fit_model_to_data(ModelConfig model, const Dataset& ds);

struct TrainedModel {
  ModelConfig model_config;
  TrainConfig train_config;
  PretrainResult result;
};

/// Pretrains the model described by `cfg` (with ablation and masking applied)
/// on split.train, validating on split.val.
TrainedModel pretrain_configured(const RunConfig& cfg, const DatasetSplit& split, const PretrainHooks& hooks = {});

struct AblationRow {
  std::string model;  // "FEI" or the ablation flag name
  std::optional<MetricsReport> metrics;
  /// Accuracy (classification) or MSE (regression) minus the FEI row's value.
  std::optional<double> delta;
  std::string error;  // empty when the row completed
};

/// FEI plus one row per ablation flag. A failing row records its error and the
/// remaining rows still run.
std::vector<AblationRow> run_ablation_study(const RunConfig& cfg, const DatasetSplit& split,
                                            const std::function<void(const AblationRow&)>& on_row = {});

/// Comma-delimited: model, metric columns, delta, status.
void write_ablation_table(const std::vector<AblationRow>& rows, TaskKind task, std::ostream& out);

struct StrategyRow {
  MaskingStrategy strategy = MaskingStrategy::dfm;
  double accuracy = 0.0;          // linear eval on the original test split
  double shifted_accuracy = 0.0;  // linear eval on the shifted dataset, same encoder
  std::string error;

  double drop() const { return accuracy - shifted_accuracy; }
};

/// Pretrains once per masking strategy and evaluates each encoder on both the
/// original split and a shifted split (the linear head is fit per split).
std::vector<StrategyRow> run_strategy_study(const RunConfig& cfg, const DatasetSplit& split,
                                            const DatasetSplit& shifted,
                                            const std::function<void(const StrategyRow&)>& on_row = {});

void write_strategy_table(const std::vector<StrategyRow>& rows, std::ostream& out);

}  // namespace fei
