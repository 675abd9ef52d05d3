#pragma once

#include <filesystem>
#include <fstream>
#include <random>
#include <string>

#include "slmm/data.hpp"
#include "slmm/encoder.hpp"

namespace slmm::testing {

/// Fresh empty directory under the system temp dir, removed on destruction.
class TempDir {
 public:
  explicit TempDir(const std::string& tag) {
    std::random_device rd;
    path_ = std::filesystem::temp_directory_path() / ("slmm_" + tag + "_" + std::to_string(rd()));
    std::filesystem::create_directories(path_);
  }
  ~TempDir() {
    std::error_code ec;
    std::filesystem::remove_all(path_, ec);
  }
  const std::filesystem::path& path() const { return path_; }
  std::filesystem::path operator/(const std::string& name) const { return path_ / name; }

 private:
  std::filesystem::path path_;
};

inline EncoderConfig tiny_config(int vocab = 20, int known = 3) {
  EncoderConfig c;
  c.num_layers = 2;
  c.hidden = 8;
  c.intent_dim = 8;
  c.num_heads = 2;
  c.ffn_dim = 16;
  c.max_len = 10;
  c.vocab_size = vocab;
  c.num_known = known;
  c.init_std = 0.5;
  c.seed = 7;
  c.trainable = Trainability::all(2);
  return c;
}

inline void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  out << text;
}

}  // namespace slmm::testing
