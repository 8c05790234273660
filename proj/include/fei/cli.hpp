#pragma once

// The `fei` command line. Each command is also callable directly.

#include <cstdint>
#include <exception>
#include <filesystem>
#include <optional>
#include <ostream>
#include <string>

#include "fei/data.hpp"
#include "fei/eval.hpp"

namespace fei {

/// 0 ok, 1 configuration, 2 data (including parse and checksum failures), 3 numerical.
int exit_code_for(const std::exception& e);

/// FEI_SEED when set; a malformed value is a ConfigError.
std::optional<std::uint64_t> seed_from_env();
/// Explicit flag, then FEI_SEED, then the fallback.
std::uint64_t resolve_seed(std::optional<std::uint64_t> flag, std::uint64_t fallback);

struct PretrainOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  /// Root under which the run directory is created; defaults to the config's output dir.
  std::optional<std::filesystem::path> out;
};

struct EvalOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  EvalMode mode = EvalMode::linear;
  /// Optional config supplying the eval section, split and normalization.
  std::optional<std::filesystem::path> config;
  TaskKind task = TaskKind::classification;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "runs";
};

struct AblateOptions {
  std::filesystem::path config;
  std::optional<std::uint64_t> seed;
  std::optional<std::filesystem::path> out;
};

struct EmbedOptions {
  std::filesystem::path checkpoint;
  std::filesystem::path data;
  std::size_t num_masks = 5;
  /// Number of leading samples to export; 0 exports all.
  std::size_t limit = 0;
  TaskKind task = TaskKind::classification;
  std::optional<std::uint64_t> seed;
  std::filesystem::path out = "runs";
};

struct SynthOptions {
  std::filesystem::path config;
  std::filesystem::path out;
  std::optional<std::uint64_t> seed;
};

/// Each returns the run directory it created (synth returns the dataset path).
std::filesystem::path cmd_pretrain(const PretrainOptions& opts, std::ostream& log);
std::filesystem::path cmd_eval(const EvalOptions& opts, std::ostream& log);
std::filesystem::path cmd_ablate(const AblateOptions& opts, std::ostream& log);
std::filesystem::path cmd_embed(const EmbedOptions& opts, std::ostream& log);
std::filesystem::path cmd_synth(const SynthOptions& opts, std::ostream& log);

/// Parses arguments, dispatches, and maps errors to exit codes.
int run_cli(int argc, const char* const* argv, std::ostream& out, std::ostream& err);

}  // namespace fei
