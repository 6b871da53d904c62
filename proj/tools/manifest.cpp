#include "manifest.hpp"

#include <openssl/evp.h>

#include <array>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <memory>
#include <sstream>
#include <stdexcept>

#include "cfsg/io.hpp"

namespace cfsg::cli {

std::string sha256_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "' for hashing");
  std::unique_ptr<EVP_MD_CTX, decltype(&EVP_MD_CTX_free)> ctx(EVP_MD_CTX_new(), EVP_MD_CTX_free);
  if (!ctx || EVP_DigestInit_ex(ctx.get(), EVP_sha256(), nullptr) != 1) throw std::runtime_error("sha256 init failed");
  std::array<char, 1 << 16> buf{};
  while (in) {
    in.read(buf.data(), buf.size());
    if (in.gcount() > 0) EVP_DigestUpdate(ctx.get(), buf.data(), static_cast<std::size_t>(in.gcount()));
  }
  std::array<unsigned char, EVP_MAX_MD_SIZE> md{};
  unsigned int len = 0;
  EVP_DigestFinal_ex(ctx.get(), md.data(), &len);
  std::ostringstream hex;
  for (unsigned int i = 0; i < len; ++i) hex << std::hex << std::setw(2) << std::setfill('0') << static_cast<int>(md[i]);
  return hex.str();
}

RunManifest::RunManifest(std::string command, std::vector<std::string> argv)
    : command_(std::move(command)),
      argv_(std::move(argv)),
      started_(std::chrono::system_clock::now()),
      clock_start_(std::chrono::steady_clock::now()) {}

void RunManifest::write(const std::string& path) const {
  auto files = [](const std::vector<std::string>& paths) {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& p : paths) arr.push_back({{"path", p}, {"sha256", sha256_file(p)}});
    return arr;
  };
  const std::time_t t = std::chrono::system_clock::to_time_t(started_);
  std::tm utc{};
  gmtime_r(&t, &utc);
  std::ostringstream stamp;
  stamp << std::put_time(&utc, "%Y-%m-%dT%H:%M:%SZ");
  const double wall = std::chrono::duration<double>(std::chrono::steady_clock::now() - clock_start_).count();

  nlohmann::json j{{"tool", "cfsg"},
                   {"version", kToolVersion},
                   {"command", command_},
                   {"argv", argv_},
                   {"config", config_},
                   {"inputs", files(inputs_)},
                   {"outputs", files(outputs_)},
                   {"threads", threads_},
                   {"timings", {{"started_utc", stamp.str()}, {"wall_seconds", wall}}}};
  write_json(path, j);
}

}  // namespace cfsg::cli
