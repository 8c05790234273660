#include "fei/run.hpp"

#include <cstdio>
#include <ctime>
#include <fstream>
#include <iterator>
#include <memory>

#include <openssl/evp.h>

#include "fei/errors.hpp"

namespace fei {

namespace {

std::string sha1_hex(std::string_view prefix, std::string_view content) {
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha1(), nullptr) != 1 ||
      EVP_DigestUpdate(ctx.get(), prefix.data(), prefix.size()) != 1 ||
      EVP_DigestUpdate(ctx.get(), content.data(), content.size()) != 1 ||
      EVP_DigestFinal_ex(ctx.get(), digest, &len) != 1) {
    throw Error("SHA-1 computation failed");
  }
  static constexpr char hex[] = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[digest[i] >> 4];
    out += hex[digest[i] & 15];
  }
  return out;
}

std::tm utc_tm(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  return tm;
}

}  // namespace

std::string git_blob_hash(std::string_view content) {
  std::string prefix = "blob " + std::to_string(content.size());
  prefix.push_back('\0');
  return sha1_hex(prefix, content);
}

std::string git_blob_hash_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InvalidInputError("cannot read " + path.string());
  const std::string bytes((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  return git_blob_hash(bytes);
}

std::string utc_stamp(std::chrono::system_clock::time_point t) {
  const std::tm tm = utc_tm(t);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y%m%dT%H%M%SZ", &tm);
  return buf;
}

std::string iso_utc(std::chrono::system_clock::time_point t) {
  const std::tm tm = utc_tm(t);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%S", &tm);
  const auto ms = std::chrono::duration_cast<std::chrono::milliseconds>(t.time_since_epoch()).count() % 1000;
  char out[48];
  std::snprintf(out, sizeof out, "%s.%03dZ", buf, static_cast<int>(ms));
  return out;
}

std::filesystem::path create_run_directory(const std::filesystem::path& root, std::string_view command,
                                           std::string_view config_hash) {
  std::filesystem::create_directories(root);
  const std::string base = std::string(command) + "-" + utc_stamp(std::chrono::system_clock::now()) + "-" +
                           std::string(config_hash.substr(0, 8));
  for (int attempt = 0; attempt < 1000; ++attempt) {
    const auto dir = root / (attempt == 0 ? base : base + "-" + std::to_string(attempt));
    // create_directory returns false when the directory already exists.
    if (std::filesystem::create_directory(dir)) return dir;
  }
  throw Error("could not create a fresh run directory under " + root.string());
}

std::string RunManifest::config_hash() const { return git_blob_hash(config.dump()); }

nlohmann::json RunManifest::to_json() const {
  nlohmann::json arts = nlohmann::json::object();
  for (const auto& [role, path] : artifacts) arts[role] = path;
  return {{"spec_version", kSpecVersion},
          {"command", command},
          {"status", status},
          {"seed", seed},
          {"started_at", iso_utc(started)},
          {"finished_at", iso_utc(finished)},
          {"config_hash", config_hash()},
          {"config", config},
          {"artifacts", arts},
          {"extra", extra}};
}

std::filesystem::path write_manifest(const RunManifest& m, const std::filesystem::path& dir) {
  const auto path = dir / "manifest.json";
  if (std::filesystem::exists(path)) throw InvalidInputError("manifest already exists in " + dir.string());
  std::ofstream out(path);
  if (!out) throw InvalidInputError("cannot write " + path.string());
  out << m.to_json().dump(2) << '\n';
  return path;
}

}  // namespace fei
