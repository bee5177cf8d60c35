#pragma once

// File formats shared by the command-line tools: 8-bit RGB PNG, CSV rows,
// flat `key = value` configuration, SHA-256 digests.

#include <filesystem>
#include <map>
#include <string>
#include <string_view>
#include <vector>

#include "caminv/tensor.hpp"

namespace caminv::io {

// [1, 3, H, W] in [0, 1].
Tensor read_png(const std::filesystem::path& path);
// Values are clamped to [0, 1] and rounded to 8 bits.
void write_png(const std::filesystem::path& path, const Tensor& image);
// Round-trip through 8 bits without touching the disk.
Tensor quantize_8bit(const Tensor& image);

std::string sha256_hex(std::string_view bytes);
std::string sha256_file(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
void write_text(const std::filesystem::path& path, std::string_view text);

std::vector<std::string> split_csv_line(std::string_view line);

// Shortest decimal form that parses back to the same double.
std::string format_double(double v);

// Ordered key -> value map with `key = value` lines; '#' starts a comment.
class KeyValues {
 public:
  static KeyValues parse(std::string_view text, const std::string& origin = "config");
  static KeyValues load(const std::filesystem::path& path);

  void set(const std::string& key, const std::string& value) { values_[key] = value; }
  bool has(const std::string& key) const { return values_.count(key) != 0; }
  const std::map<std::string, std::string>& values() const { return values_; }

  std::string get(const std::string& key, const std::string& fallback) const;
  double get_double(const std::string& key, double fallback) const;
  long long get_int(const std::string& key, long long fallback) const;
  bool get_bool(const std::string& key, bool fallback) const;

  // Throws ConfigError naming the first key not in `allowed`.
  void require_known(const std::vector<std::string>& allowed) const;
  std::string str() const;

 private:
  std::map<std::string, std::string> values_;
};

}  // namespace caminv::io
