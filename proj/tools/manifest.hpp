#pragma once

#include <chrono>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

namespace cfsg::cli {

inline constexpr const char* kToolVersion = "0.1.0";

/// Lowercase hex SHA-256 of a file's bytes.
std::string sha256_file(const std::string& path);

class RunManifest {
 public:
  RunManifest(std::string command, std::vector<std::string> argv);

  void set_config(nlohmann::json config) { config_ = std::move(config); }
  void add_input(const std::string& path) { inputs_.push_back(path); }
  void add_output(const std::string& path) { outputs_.push_back(path); }
  void set_threads(unsigned threads) { threads_ = threads; }

  /// Digests every listed file and writes the manifest atomically.
  void write(const std::string& path) const;

 private:
  std::string command_;
  std::vector<std::string> argv_;
  nlohmann::json config_ = nlohmann::json::object();
  std::vector<std::string> inputs_;
  std::vector<std::string> outputs_;
  unsigned threads_ = 1;
  std::chrono::system_clock::time_point started_;
  std::chrono::steady_clock::time_point clock_start_;
};

}  // namespace cfsg::cli
