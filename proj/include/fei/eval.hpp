#pragma once

// Downstream evaluation: linear probe, fine-tuning, metrics and embedding export.

#include <array>
#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "fei/data.hpp"
#include "fei/model.hpp"
#include "fei/pretrain.hpp"

#include <json.hpp>

namespace fei {

enum class EvalMode { linear, finetune };
/// Unit of EvalConfig::max_iters.
enum class IterationUnit { epoch, step };

EvalMode parse_eval_mode(std::string_view name);
std::string_view to_string(EvalMode m);
IterationUnit parse_iteration_unit(std::string_view name);
std::string_view to_string(IterationUnit u);

struct EvalConfig {
  EvalMode mode = EvalMode::linear;
  std::size_t max_iters = 300;
  double lr = 1e-4;
  std::size_t batch = 64;
  std::uint64_t seed = 0;
  /// Select the iterate with the lowest validation loss.
  bool early_stop_on_val = true;
  /// Stop after this many validation checks without improvement; 0 runs to max_iters.
  std::size_t patience = 0;
  IterationUnit iter_unit = IterationUnit::epoch;
  /// Validation interval in optimizer steps when iter_unit is step.
  std::size_t eval_every = 10;
  double weight_decay = 0.0;

  static EvalConfig linear_defaults();
  static EvalConfig finetune_defaults();
  static EvalConfig defaults_for(EvalMode mode);
  void validate() const;
};

struct MetricsReport {
  TaskKind task = TaskKind::classification;
  std::size_t num_samples = 0;
  std::size_t num_classes = 0;
  double accuracy = 0.0;
  double precision = 0.0;  // macro
  double recall = 0.0;     // macro
  double f1 = 0.0;         // mean of per-class F1
  double mse = 0.0;
  double mae = 0.0;
  // How the evaluated head was selected.
  std::string mode;
  std::optional<double> best_val_loss;
  std::size_t selected_iteration = 0;
  std::size_t optimizer_steps = 0;
};

nlohmann::json to_json(const MetricsReport& r);

/// Accuracy and macro precision/recall/F1; 0/0 counts as 0.
MetricsReport compute_classification_metrics(std::span<const std::size_t> preds, std::span<const std::size_t> labels,
                                             std::size_t num_classes);
MetricsReport compute_regression_metrics(std::span<const double> preds, std::span<const double> targets);

/// Index of the first minimum; the selection rule for validation traces.
std::size_t select_lowest(std::span<const double> losses);

/// Affine head d -> outputs (classes, or 1 for regression).
struct LinearHead {
  nn::Dense layer;
  std::vector<double> params;

  LinearHead() = default;
  LinearHead(std::size_t in, std::size_t out, Rng& rng);
  std::vector<double> forward(std::span<const double> features) const;
};

struct HeadFit {
  LinearHead head;
  std::vector<double> val_trace;  // one entry per validation check
  std::size_t selected_iteration = 0;
  std::size_t optimizer_steps = 0;
};

/// Trains a linear head on fixed features with cross-entropy or MSE.
HeadFit fit_linear_head(const std::vector<std::vector<double>>& train_x, const Dataset& train,
                        const std::vector<std::vector<double>>& val_x, const Dataset& val, const EvalConfig& cfg);

/// Encoder outputs e for every sample.
std::vector<std::vector<double>> encode_dataset(const FeiModel& model, const FeiParams& params, const Dataset& ds);

MetricsReport evaluate_head(const LinearHead& head, const std::vector<std::vector<double>>& x, const Dataset& ds);

struct LinearEvalResult {
  MetricsReport metrics;
  HeadFit fit;
};

/// Frozen encoder, linear head on e; reports test metrics of the head with the
/// lowest validation loss.
LinearEvalResult linear_probe(const FeiModel& model, const FeiParams& params, const Dataset& train,
                              const Dataset& val, const Dataset& test, const EvalConfig& cfg);
MetricsReport linear_eval(const FeiModel& model, const FeiParams& params, const Dataset& train, const Dataset& val,
                          const Dataset& test, const EvalConfig& cfg);

struct FineTuneResult {
  MetricsReport metrics;
  /// Input parameters with the selected fine-tuned encoder.
  FeiParams params;
  LinearHead head;
  std::vector<double> val_trace;
};

/// Linear probe for the head, then joint training of encoder and head.
FineTuneResult fine_tune(const FeiModel& model, const FeiParams& params, const Dataset& train, const Dataset& val,
                         const Dataset& test, const EvalConfig& cfg);

/// Average-rank Spearman correlation.
double spearman(std::span<const double> x, std::span<const double> y);

/// 2-D principal-component scores of the rows (descending variance).
std::vector<std::array<double, 2>> pca_2d(const std::vector<std::vector<double>>& rows);

enum class EmbeddingRole { u, u_target, u_inferred };
std::string_view to_string(EmbeddingRole r);

struct EmbeddingRow {
  std::size_t sample_id = 0;
  long mask_id = -1;  // -1 for the original embedding
  double mask_ratio = 0.0;
  EmbeddingRole role = EmbeddingRole::u;
  std::vector<double> values;
};

struct EmbeddingExport {
  std::vector<EmbeddingRow> rows;
  std::vector<EmbeddingRow> projection;  // same keys, 2 values each
  std::vector<std::vector<std::uint8_t>> masks;
};

/// Per sample: u, then for every mask the true target u' and the inferred one.
EmbeddingExport export_embeddings(const FeiModel& model, const FeiParams& params, const Dataset& ds,
                                  std::span<const std::vector<std::uint8_t>> masks,
                                  const ComputationGraph& graph = {});

void write_embeddings_csv(std::span<const EmbeddingRow> rows, const std::filesystem::path& path);
std::vector<EmbeddingRow> read_embeddings_csv(const std::filesystem::path& path);
void write_masks_csv(std::span<const std::vector<std::uint8_t>> masks, const std::filesystem::path& path);

/// Spearman correlation between mask ratio and |u - u'| over all (sample, mask) pairs.
double ratio_distance_spearman(std::span<const EmbeddingRow> rows);

/// Test accuracy of softmax regression on standardized one-sided amplitude spectra.
double spectral_logistic_ceiling(const Dataset& ds, std::uint64_t seed);

}  // namespace fei
