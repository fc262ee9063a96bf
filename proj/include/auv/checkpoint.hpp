#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "auv/tensor.hpp"

namespace auv {

// Flat binary container shared by model checkpoints and preprocessed data.
//
//   "AUVN" | u32 version | u32 entry count | entries...
//   entry: u32 name length | name bytes | u32 kind | u32 rank | rank x u32 extents | payload
//
// kind 0 holds little-endian float32 values (product of extents), kind 1 holds
// UTF-8 text whose single extent is the byte length. All integers are
// little-endian. Entries keep insertion order.
class Checkpoint {
 public:
  static constexpr std::uint32_t kVersion = 1;

  void put(const std::string& name, Tensor<float> tensor);
  void put_text(const std::string& name, std::string text);

  bool has(const std::string& name) const;
  bool has_text(const std::string& name) const;
  const Tensor<float>& get(const std::string& name) const;
  // Returns the tensor after checking its shape.
  const Tensor<float>& get(const std::string& name, const Shape& expected) const;
  const std::string& text(const std::string& name) const;
  std::vector<std::string> names() const;

  std::vector<char> serialize() const;
  static Checkpoint deserialize(const std::vector<char>& bytes);

  // Atomic: writes a sibling temp file and renames it over `path`.
  void save(const std::filesystem::path& path) const;
  static Checkpoint load(const std::filesystem::path& path);

 private:
  struct Entry {
    std::string name;
    bool is_text = false;
    Tensor<float> tensor;
    std::string text;
  };
  const Entry* find(const std::string& name) const;

  std::vector<Entry> entries_;
};

// Write bytes to `path` through a temp file + rename.
void write_file_atomic(const std::filesystem::path& path, const std::vector<char>& bytes);
void write_text_atomic(const std::filesystem::path& path, const std::string& text);
std::vector<char> read_file(const std::filesystem::path& path);

}  // namespace auv
