#pragma once

// Datasets, the UCR-style text format, normalization, splits and the
// synthetic frequency-labelled generator.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "fei/signal.hpp"

namespace fei {

enum class TaskKind { classification, regression };

struct Task {
  TaskKind kind = TaskKind::classification;
  std::size_t num_classes = 0;  // classification only

  static Task classification(std::size_t k) { return {TaskKind::classification, k}; }
  static Task regression() { return {TaskKind::regression, 0}; }
  bool is_classification() const { return kind == TaskKind::classification; }
};

struct Dataset {
  std::string name;
  Task task;
  std::vector<TimeSeries> samples;
  std::optional<double> sampling_rate_hz;

  std::size_t size() const { return samples.size(); }
  bool empty() const { return samples.empty(); }
  std::size_t length() const { return samples.empty() ? 0 : samples.front().length; }
  std::size_t channels() const { return samples.empty() ? 0 : samples.front().channels; }

  /// Class index of sample i; throws unless the task is classification.
  std::size_t class_of(std::size_t i) const;
  /// Subset in the given index order.
  Dataset subset(std::span<const std::size_t> indices) const;

  /// Uniform shape, finite values, labels consistent with the task.
  void validate() const;
};

struct UcrLoadOptions {
  TaskKind task = TaskKind::classification;
  /// When set, rows of any other length are rejected.
  std::optional<std::size_t> expected_length;
};

/// Reads "label, v1, ..., vL" rows separated by tabs or commas (detected from
/// the first data row). Classification labels are remapped to 0..K-1 in sorted
/// order of the raw label values.
Dataset load_ucr_tsv(const std::filesystem::path& path, const UcrLoadOptions& opts = {});
/// Same format parsed from memory; `name` labels the dataset and error messages.
Dataset parse_ucr(const std::string& text, const std::string& name, const UcrLoadOptions& opts = {});
/// Writes univariate samples with round-trip precision, tab-delimited.
void write_ucr_tsv(const Dataset& ds, const std::filesystem::path& path);

/// Per-sample, per-channel z-scoring; channels with std below 1e-8 become zeros.
Dataset normalize_per_sample(Dataset ds);
void normalize_in_place(TimeSeries& series);

struct SyntheticSpec {
  std::size_t num_classes = 4;
  std::size_t per_class = 500;
  std::size_t length = 128;
  double noise_std = 0.1;
  std::uint64_t seed = 0;
  /// Class frequencies are spread evenly over [min_bin, max_bin]; max_bin = 0
  /// selects floor(0.7 * L / 2).
  std::size_t min_bin = 2;
  std::size_t max_bin = 0;
  /// Bins added to every class frequency (frequency-shifted variants).
  std::size_t shift_bins = 0;

  std::size_t resolved_max_bin() const;
};

/// The two frequency bins that define each class, after shifting.
std::vector<std::pair<std::size_t, std::size_t>> class_frequencies(const SyntheticSpec& spec);

/// Two-tone series per class with random phases, amplitudes in [0.5, 1.5] and
/// Gaussian noise; samples are ordered class by class.
Dataset make_synthetic_freq_dataset(const SyntheticSpec& spec);

struct SplitSpec {
  double train = 0.6;
  double val = 0.2;
  double test = 0.2;
  std::uint64_t seed = 0;
  /// Per-class proportional split for classification datasets.
  bool stratify = true;
};

struct SplitIndices {
  std::vector<std::size_t> train;
  std::vector<std::size_t> val;
  std::vector<std::size_t> test;
};

struct DatasetSplit {
  Dataset train;
  Dataset val;
  Dataset test;
};

SplitIndices split_indices(const Dataset& ds, const SplitSpec& spec);
DatasetSplit split(const Dataset& ds, const SplitSpec& spec);

/// Label callback for window w starting at `start`.
using WindowLabeler = std::function<std::optional<double>(std::size_t window_index, std::size_t start)>;

/// Windows of `window_len` every `stride` steps over all channels of `series`.
Dataset sliding_windows(const TimeSeries& series, std::size_t window_len, std::size_t stride,
                        const WindowLabeler& labeler = {}, Task task = Task::regression());

}  // namespace fei
