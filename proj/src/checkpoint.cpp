#include "fei/checkpoint.hpp"

#include <bit>
#include <cstring>
#include <fstream>
#include <iterator>

#include <zlib.h>

#include "fei/config.hpp"
#include "fei/errors.hpp"

namespace fei {

namespace {

constexpr char kMagic[8] = {'F', 'E', 'I', 'C', 'K', 'P', 'T', '1'};

std::uint32_t crc_of(const std::uint8_t* data, std::size_t size) {
  uLong crc = crc32(0L, Z_NULL, 0);
  // zlib takes uInt lengths; feed large buffers in pieces.
  while (size > 0) {
    const uInt piece = static_cast<uInt>(std::min<std::size_t>(size, 1u << 30));
    crc = crc32(crc, data, piece);
    data += piece;
    size -= piece;
  }
  return static_cast<std::uint32_t>(crc);
}

void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

std::uint64_t get_u64(const std::uint8_t* p) {
  std::uint64_t v = 0;
  for (int i = 0; i < 8; ++i) v |= std::uint64_t(p[i]) << (8 * i);
  return v;
}

std::uint32_t get_u32(const std::uint8_t* p) {
  std::uint32_t v = 0;
  for (int i = 0; i < 4; ++i) v |= std::uint32_t(p[i]) << (8 * i);
  return v;
}

std::vector<std::uint8_t> encode_blob(const std::vector<double>& values) {
  std::vector<std::uint8_t> out;
  out.reserve(values.size() * 8);
  for (double v : values) put_u64(out, std::bit_cast<std::uint64_t>(v));
  return out;
}

struct BlobRef {
  std::string name;
  const std::vector<double>* values;
  std::vector<std::size_t> shape;
};

std::vector<BlobRef> blobs_of(const Checkpoint& c, std::size_t h) {
  std::vector<BlobRef> out;
  for (auto name : FeiParams::blob_names) {
    const auto& v = c.params.blob(name);
    std::vector<std::size_t> shape = {v.size()};
    if (name == "mask_table" && h > 0) shape = {v.size() / h, h};
    out.push_back({std::string(name), &v, shape});
  }
  for (const auto& [name, v] : c.extra) out.push_back({"extra:" + name, &v, {v.size()}});
  return out;
}

[[noreturn]] void malformed(const std::string& what) { throw InvalidInputError("malformed checkpoint: " + what); }

}  // namespace

std::vector<std::uint8_t> serialize_checkpoint(const Checkpoint& ckpt) {
  const FeiModel model(ckpt.model);
  model.check(ckpt.params);
  const auto blobs = blobs_of(ckpt, model.subspace_dim());

  std::vector<std::vector<std::uint8_t>> payloads;
  nlohmann::json list = nlohmann::json::array();
  for (const auto& b : blobs) {
    payloads.push_back(encode_blob(*b.values));
    list.push_back({{"name", b.name},
                    {"shape", b.shape},
                    {"count", b.values->size()},
                    {"crc32", crc_of(payloads.back().data(), payloads.back().size())}});
  }
  nlohmann::json header = {{"format_version", kCheckpointFormatVersion},
                           {"dtype", "f64-le"},
                           {"model", to_json(ckpt.model)},
                           {"train", to_json(ckpt.train)},
                           {"d", model.embedding_dim()},
                           {"h", model.subspace_dim()},
                           {"n", model.mask_positions()},
                           {"masking", to_string(ckpt.model.masking)},
                           {"ablation", ckpt.train.ablation.enabled()},
                           {"meta", ckpt.meta},
                           {"blobs", list}};
  const std::string text = header.dump(2);

  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u64(out, text.size());
  out.insert(out.end(), text.begin(), text.end());
  put_u32(out, crc_of(reinterpret_cast<const std::uint8_t*>(text.data()), text.size()));
  for (const auto& p : payloads) out.insert(out.end(), p.begin(), p.end());
  return out;
}

Checkpoint deserialize_checkpoint(const std::vector<std::uint8_t>& bytes) {
  if (bytes.size() < 20 || std::memcmp(bytes.data(), kMagic, 8) != 0) malformed("bad magic");
  const std::uint64_t header_len = get_u64(bytes.data() + 8);
  if (header_len > bytes.size() - 20) malformed("header length exceeds file size");
  const std::uint8_t* header_ptr = bytes.data() + 16;
  const std::uint32_t header_crc = get_u32(header_ptr + header_len);
  if (crc_of(header_ptr, header_len) != header_crc) throw ChecksumError("checkpoint header checksum mismatch");

  nlohmann::json header;
  try {
    header = nlohmann::json::parse(header_ptr, header_ptr + header_len);
  } catch (const nlohmann::json::exception& e) {
    malformed(std::string("header is not JSON: ") + e.what());
  }

  Checkpoint c;
  std::size_t offset = 16 + header_len + 4;
  try {
    if (header.at("format_version").get<int>() != kCheckpointFormatVersion) malformed("unsupported format version");
    if (header.at("dtype").get<std::string>() != "f64-le") malformed("unsupported dtype");
    c.model = model_config_from_json(header.at("model"));
    c.train = train_config_from_json(header.at("train"));
    c.meta = header.at("meta");
    const FeiModel model(c.model);
    if (header.at("d").get<std::size_t>() != model.embedding_dim() ||
        header.at("h").get<std::size_t>() != model.subspace_dim() ||
        header.at("n").get<std::size_t>() != model.mask_positions()) {
      malformed("d, h or n disagree with the model config");
    }
    for (const auto& b : header.at("blobs")) {
      const auto name = b.at("name").get<std::string>();
      const auto count = b.at("count").get<std::size_t>();
      const auto shape = b.at("shape").get<std::vector<std::size_t>>();
      std::size_t prod = 1;
      for (auto s : shape) prod *= s;
      if (prod != count) malformed("blob '" + name + "' shape does not match its count");
      if (count > (bytes.size() - offset) / 8) malformed("blob '" + name + "' runs past the end of the file");
      const std::uint8_t* p = bytes.data() + offset;
      if (crc_of(p, count * 8) != b.at("crc32").get<std::uint32_t>()) {
        throw ChecksumError("checksum mismatch in checkpoint blob '" + name + "'");
      }
      std::vector<double> values(count);
      for (std::size_t i = 0; i < count; ++i) values[i] = std::bit_cast<double>(get_u64(p + 8 * i));
      offset += count * 8;
      if (name.starts_with("extra:")) {
        c.extra[name.substr(6)] = std::move(values);
      } else {
        c.params.blob(name) = std::move(values);
      }
    }
    if (offset != bytes.size()) malformed("trailing bytes after the last blob");
    model.check(c.params);
  } catch (const nlohmann::json::exception& e) {
    malformed(std::string("header field: ") + e.what());
  } catch (const ConfigError& e) {
    malformed(std::string("header config: ") + e.what());
  }
  return c;
}

void save_checkpoint(const Checkpoint& ckpt, const std::filesystem::path& path) {
  const auto bytes = serialize_checkpoint(ckpt);
  // Write to a sibling temporary and rename, so a crash never leaves a torn file.
  const auto tmp = std::filesystem::path(path.string() + ".tmp");
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InvalidInputError("cannot write checkpoint " + tmp.string());
    out.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
    if (!out) throw InvalidInputError("failed writing checkpoint " + tmp.string());
  }
  std::filesystem::rename(tmp, path);
}

Checkpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot read checkpoint " + path.string());
  std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return deserialize_checkpoint(bytes);
}

}  // namespace fei
