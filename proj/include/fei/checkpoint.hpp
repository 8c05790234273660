#pragma once

// Single-file checkpoint: magic, JSON header, little-endian f64 blobs.
//
// Layout:
//   8 bytes   "FEICKPT1"
//   u64 LE    header length in bytes
//   header    UTF-8 JSON: format_version, model and train configs, d, h, n,
//             masking, ablation, metadata, and per blob {name, shape, count, crc32}
//   u32 LE    crc32 of the header bytes
//   blobs     concatenated in header order, each `count` f64 values

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include <json.hpp>

#include "fei/model.hpp"
#include "fei/pretrain.hpp"

namespace fei {

inline constexpr int kCheckpointFormatVersion = 1;

struct Checkpoint {
  ModelConfig model;
  TrainConfig train;
  FeiParams params;
  /// Additional named blobs, e.g. the linear head written by fine-tuning.
  std::map<std::string, std::vector<double>> extra;
  /// Free-form metadata (epoch, kind, source checkpoint hash, ...).
  nlohmann::json meta = nlohmann::json::object();
};

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path);
/// Throws ChecksumError on any checksum mismatch and InvalidInputError on a
/// malformed file or a header/blob shape disagreement.
Checkpoint load_checkpoint(const std::filesystem::path& path);

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt);
Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes);

}  // namespace fei
