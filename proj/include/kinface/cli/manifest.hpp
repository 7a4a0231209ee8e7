#pragma once

#include <chrono>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>
#include <openssl/evp.h>

#include "kinface/cli/config.hpp"
#include "kinface/data/checkpoint.hpp"

namespace kinface::cli {

namespace fs = std::filesystem;

/// SHA-1 of "blob <size>\0" followed by the content, as git computes it.
inline std::string git_blob_hash(std::span<const std::uint8_t> bytes) {
  const std::string header = "blob " + std::to_string(bytes.size()) + '\0';
  unsigned char digest[EVP_MAX_MD_SIZE];
  unsigned int len = 0;
  EVP_MD_CTX* ctx = EVP_MD_CTX_new();
  if (!ctx) throw std::runtime_error("cannot allocate hash context");
  const bool ok = EVP_DigestInit_ex(ctx, EVP_sha1(), nullptr) == 1 &&
                  EVP_DigestUpdate(ctx, header.data(), header.size()) == 1 &&
                  EVP_DigestUpdate(ctx, bytes.data(), bytes.size()) == 1 && EVP_DigestFinal_ex(ctx, digest, &len) == 1;
  EVP_MD_CTX_free(ctx);
  if (!ok) throw std::runtime_error("SHA-1 computation failed");
  std::string hex;
  char buf[3];
  for (unsigned int i = 0; i < len; ++i) {
    std::snprintf(buf, sizeof buf, "%02x", digest[i]);
    hex += buf;
  }
  return hex;
}

inline std::string git_blob_hash_file(const fs::path& path) { return git_blob_hash(data::read_file_bytes(path)); }

inline std::string utc_timestamp(std::chrono::system_clock::time_point t) {
  const std::time_t tt = std::chrono::system_clock::to_time_t(t);
  std::tm tm{};
  gmtime_r(&tt, &tm);
  char buf[32];
  std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

inline void write_text_file(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw std::runtime_error("cannot write " + path.string());
  out << text;
  if (!out) throw std::runtime_error("failed writing " + path.string());
}

/**
 * Record of one command run. Artifact paths are stored relative to the
 * output directory, inputs as given.
 */
class RunManifest {
 public:
  RunManifest(std::string command, const RunConfig& config, fs::path output_dir)
      : command_(std::move(command)), config_(cli::to_json(config)), dir_(std::move(output_dir)),
        started_(std::chrono::system_clock::now()) {}

  const fs::path& dir() const { return dir_; }

  void add_input(const std::string& role, const fs::path& path) {
    inputs_.push_back({{"role", role}, {"path", path.string()}, {"sha1", git_blob_hash_file(path)}});
  }

  void add_artifact(const fs::path& path) {
    const auto rel = fs::relative(path, dir_).generic_string();
    for (auto& a : artifacts_)
      if (a["path"] == rel) {
        a["sha1"] = git_blob_hash_file(path);
        return;
      }
    artifacts_.push_back({{"path", rel}, {"sha1", git_blob_hash_file(path)}});
  }

  void add_loss_row(nlohmann::json row) { losses_.push_back(std::move(row)); }
  void set(const std::string& key, nlohmann::json value) { extra_[key] = std::move(value); }

  nlohmann::json to_json() const {
    const auto now = std::chrono::system_clock::now();
    nlohmann::json j;
    j["command"] = command_;
    j["config"] = config_;
    j["inputs"] = inputs_;
    j["artifacts"] = artifacts_;
    j["loss_table"] = losses_;
    j["started_utc"] = utc_timestamp(started_);
    j["finished_utc"] = utc_timestamp(now);
    j["wall_seconds"] = std::chrono::duration<double>(now - started_).count();
    for (const auto& [k, v] : extra_.items()) j[k] = v;
    return j;
  }

  /// Writes the manifest; call after the last artifact is registered.
  void write() const { write_text_file(dir_ / "manifest.json", to_json().dump(2) + "\n"); }

 private:
  std::string command_;
  nlohmann::json config_;
  fs::path dir_;
  std::chrono::system_clock::time_point started_;
  nlohmann::json inputs_ = nlohmann::json::array();
  nlohmann::json artifacts_ = nlohmann::json::array();
  nlohmann::json losses_ = nlohmann::json::array();
  nlohmann::json extra_ = nlohmann::json::object();
};

/// Creates the output directory and writes the resolved config into it.
inline RunManifest open_run(const std::string& command, const RunConfig& config) {
  if (config.output_dir.empty()) throw ConfigError("config field 'output_dir': required");
  const fs::path dir = config.output_dir;
  std::error_code ec;
  fs::create_directories(dir, ec);
  if (ec || !fs::is_directory(dir)) throw std::runtime_error("cannot create output directory " + dir.string());
  write_text_file(dir / "config.json", to_json(config).dump(2) + "\n");
  RunManifest m(command, config, dir);
  m.add_artifact(dir / "config.json");
  return m;
}

}  // namespace kinface::cli
