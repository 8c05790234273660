#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <functional>
#include <fstream>

#include <zlib.h>

#include "fei/checkpoint.hpp"
#include "fei/errors.hpp"
#include "fei/pretrain.hpp"

using namespace fei;

namespace {

Checkpoint sample_checkpoint() {
  ModelConfig mc;
  mc.encoder.input_length = 32;
  mc.encoder.d = 8;
  mc.encoder.widths = {4};
  mc.encoder.kernels = {3, 3};
  mc.encoder.strides = {1, 2};
  const FeiModel model(mc);
  Checkpoint c;
  c.model = mc;
  c.train.seed = 9;
  c.train.ablation.no_detach = true;
  c.params = model.init(4);
  // Values that only survive a full-precision encoding.
  c.params.encoder[0] = 0.1 + 1e-17;
  c.params.encoder[1] = -0.0;
  c.params.encoder[2] = 5e-324;
  c.extra["head"] = {1.0 / 3.0, 2.0};
  c.meta = {{"kind", "best"}, {"epoch", 3}};
  return c;
}

// Position of the first byte of the blob payloads.
std::size_t payload_start(const std::vector<std::uint8_t>& bytes) {
  std::uint64_t len = 0;
  for (int i = 0; i < 8; ++i) len |= std::uint64_t(bytes[8 + i]) << (8 * i);
  return 16 + len + 4;
}

// Rewrites the header through `edit` and re-signs it, keeping the payloads.
std::vector<std::uint8_t> with_header(const std::vector<std::uint8_t>& bytes,
                                      const std::function<void(nlohmann::json&)>& edit) {
  const std::size_t start = payload_start(bytes);
  auto header = nlohmann::json::parse(bytes.begin() + 16, bytes.begin() + static_cast<long>(start - 4));
  edit(header);
  const std::string text = header.dump();
  std::vector<std::uint8_t> out(bytes.begin(), bytes.begin() + 8);
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(std::uint64_t(text.size()) >> (8 * i)));
  out.insert(out.end(), text.begin(), text.end());
  const auto crc = static_cast<std::uint32_t>(
      crc32(0L, reinterpret_cast<const Bytef*>(text.data()), static_cast<uInt>(text.size())));
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(crc >> (8 * i)));
  out.insert(out.end(), bytes.begin() + static_cast<long>(start), bytes.end());
  return out;
}

}  // namespace

TEST_CASE("checkpoint round trip is bitwise exact") {
  const auto c = sample_checkpoint();
  const auto bytes = serialize_checkpoint(c);
  const auto back = deserialize_checkpoint(bytes);
  CHECK(back.params == c.params);
  for (auto name : FeiParams::blob_names) {
    const auto& a = c.params.blob(name);
    const auto& b = back.params.blob(name);
    REQUIRE(a.size() == b.size());
    CHECK(std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0);
  }
  CHECK(std::signbit(back.params.encoder[1]));
  CHECK(back.extra == c.extra);
  CHECK(back.meta == c.meta);
  CHECK(back.train.ablation == c.train.ablation);
  CHECK(back.train.seed == 9);
  CHECK(back.model.encoder.widths == c.model.encoder.widths);
  CHECK(serialize_checkpoint(back) == bytes);
}

TEST_CASE("checkpoint files round trip") {
  const auto c = sample_checkpoint();
  const auto path = std::filesystem::temp_directory_path() / "fei_test.ckpt";
  save_checkpoint(c, path);
  CHECK(load_checkpoint(path).params == c.params);
  std::filesystem::remove(path);
  CHECK_THROWS_AS(load_checkpoint(path), InvalidInputError);
}

TEST_CASE("a corrupted blob is refused") {
  auto bytes = serialize_checkpoint(sample_checkpoint());
  bytes[payload_start(bytes) + 17] ^= 0x01;
  CHECK_THROWS_AS(deserialize_checkpoint(bytes), ChecksumError);
}

TEST_CASE("a corrupted header is refused") {
  auto bytes = serialize_checkpoint(sample_checkpoint());
  bytes[30] ^= 0x20;
  CHECK_THROWS_AS(deserialize_checkpoint(bytes), ChecksumError);
}

TEST_CASE("malformed files are refused") {
  const auto good = serialize_checkpoint(sample_checkpoint());
  auto bad_magic = good;
  bad_magic[0] = 'X';
  CHECK_THROWS_AS(deserialize_checkpoint(bad_magic), InvalidInputError);
  auto truncated = good;
  truncated.resize(truncated.size() - 8);
  CHECK_THROWS_AS(deserialize_checkpoint(truncated), InvalidInputError);
  auto trailing = good;
  trailing.push_back(0);
  CHECK_THROWS_AS(deserialize_checkpoint(trailing), InvalidInputError);
  CHECK_THROWS_AS(deserialize_checkpoint({}), InvalidInputError);
}

TEST_CASE("saving refuses parameters that do not fit the model") {
  auto c = sample_checkpoint();
  c.params.projector.push_back(0.0);
  CHECK_THROWS_AS(serialize_checkpoint(c), InvalidInputError);
}

TEST_CASE("header and blob shapes must agree") {
  const auto good = serialize_checkpoint(sample_checkpoint());
  CHECK(deserialize_checkpoint(with_header(good, [](nlohmann::json&) {})).params == sample_checkpoint().params);
  const auto wrong_d = with_header(good, [](nlohmann::json& h) { h["d"] = 16; });
  CHECK_THROWS_AS(deserialize_checkpoint(wrong_d), InvalidInputError);
  const auto wrong_shape = with_header(good, [](nlohmann::json& h) { h["blobs"][0]["shape"] = {3, 5}; });
  CHECK_THROWS_AS(deserialize_checkpoint(wrong_shape), InvalidInputError);
  const auto wrong_width = with_header(good, [](nlohmann::json& h) { h["model"]["encoder"]["d"] = 16; });
  CHECK_THROWS_AS(deserialize_checkpoint(wrong_width), InvalidInputError);
}
