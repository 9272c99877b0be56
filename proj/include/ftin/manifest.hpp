#pragma once

#include "ftin/core.hpp"

#include <json.hpp>
#include <openssl/evp.h>

#include <chrono>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>

namespace ftin {

namespace fs = std::filesystem;

inline std::string sha1_hex(const std::string& bytes) {
  unsigned char md[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx || EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) != 1 || EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) != 1 ||
      EVP_DigestFinal_ex(ctx, md, &len) != 1) {
    EVP_MD_CTX_free(ctx);
    throw Error("sha1: digest failed");
  }
  EVP_MD_CTX_free(ctx);
  static const char* hex = "0123456789abcdef";
  std::string out;
  for (unsigned int i = 0; i < len; ++i) {
    out += hex[md[i] >> 4];
    out += hex[md[i] & 0xF];
  }
  return out;
}

// Same digest as `git hash-object <file>`.
inline std::string git_blob_hash(const std::string& content) {
  return sha1_hex("blob " + std::to_string(content.size()) + '\0' + content);
}

inline std::string git_blob_hash_file(const fs::path& p) {
  std::ifstream f(p, std::ios::binary);
  if (!f) throw ValidationError("cannot read " + p.string());
  std::ostringstream ss;
  ss << f.rdbuf();
  return git_blob_hash(ss.str());
}

inline std::string utc_timestamp() {
  const std::time_t now = std::chrono::system_clock::to_time_t(std::chrono::system_clock::now());
  std::tm tm{};
  gmtime_r(&now, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

// Record of one CLI invocation, written as manifest.json next to its outputs.
struct RunManifest {
  std::string command;
  nlohmann::json config = nlohmann::json::object();
  std::uint64_t seed = 0;
  std::vector<std::string> inputs;
  std::vector<std::string> outputs;
  std::string checkpoint_hash;  // git blob SHA-1, empty when no checkpoint
  std::string started;
  std::string finished;

  nlohmann::json to_json() const {
    nlohmann::json j = {{"command", command}, {"config", config}, {"seed", seed}, {"inputs", inputs},
                        {"outputs", outputs}, {"started", started}, {"finished", finished}};
    if (!checkpoint_hash.empty()) j["checkpoint_hash"] = checkpoint_hash;
    return j;
  }

  // Checks every listed output exists, then writes `dir/manifest.json`.
  void write(const fs::path& dir) {
    for (const auto& o : outputs) {
      if (!fs::exists(o)) throw Error("manifest: listed output missing: " + o);
    }
    finished = utc_timestamp();
    std::ofstream(dir / "manifest.json", std::ios::binary) << to_json().dump(2) << '\n';
  }
};

}  // namespace ftin
