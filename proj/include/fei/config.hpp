#pragma once

// Run configuration: YAML files with strict keys, and JSON forms used by the
// checkpoint header and the run manifest.

#include <cstddef>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <string>
#include <string_view>

#include <json.hpp>

#include "fei/data.hpp"
#include "fei/eval.hpp"
#include "fei/model.hpp"
#include "fei/pretrain.hpp"

namespace fei {

struct DataConfig {
  /// UCR-style file. When empty, a synthetic dataset is generated from RunConfig::synth.
  std::filesystem::path path;
  TaskKind task = TaskKind::classification;
  /// z-score every sample.
  bool normalize = true;
  SplitSpec split{0.6, 0.2, 0.2, 11, true};
};

struct RunConfig {
  DataConfig data;
  ModelConfig model;
  TrainConfig train;
  EvalConfig eval;
  SyntheticSpec synth;
  std::filesystem::path output_dir = "runs";

  /// Cross-section checks: encoder input shape, masking strategy, ablation shape.
  void validate() const;
};

/// Parses YAML text. Unknown keys are ConfigErrors that name the key and, when
/// one is close, suggest a known key. Omitted keys keep their defaults.
RunConfig parse_run_config(const std::string& yaml_text);
RunConfig load_run_config(const std::filesystem::path& path);

/// Closest candidate for a mistyped key, or nothing when none is plausible.
std::optional<std::string> suggest_key(std::string_view key, std::span<const std::string_view> candidates);

nlohmann::json to_json(const EncoderConfig& c);
nlohmann::json to_json(const ModelConfig& c);
nlohmann::json to_json(const TrainConfig& c);
nlohmann::json to_json(const EvalConfig& c);
nlohmann::json to_json(const SyntheticSpec& s);
nlohmann::json to_json(const DataConfig& d);
nlohmann::json to_json(const RunConfig& c);

ModelConfig model_config_from_json(const nlohmann::json& j);
TrainConfig train_config_from_json(const nlohmann::json& j);

/// Dataset described by the data section (loaded or synthesized), normalized if configured.
Dataset load_configured_dataset(const RunConfig& cfg);

}  // namespace fei
