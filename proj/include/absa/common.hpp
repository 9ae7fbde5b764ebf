#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <string_view>

namespace absa {

// Thrown for unreadable/inconsistent input data (XML, split lists, vocab,
// checkpoints). The CLI maps this to exit code 2.
class DataError : public std::runtime_error {
 public:
  explicit DataError(const std::string& msg) : std::runtime_error(msg) {}
};

// Thrown when training or evaluation produces non-finite numbers.
// The CLI maps this to exit code 3.
class NumericalError : public std::runtime_error {
 public:
  explicit NumericalError(const std::string& msg) : std::runtime_error(msg) {}
};

// 64-bit FNV-1a. Non-cryptographic; used only to detect that two runs saw
// the same input bytes (vocab files, embedding files, datasets).
inline uint64_t fnv1a64(const void* bytes, size_t n, uint64_t h = 0xcbf29ce484222325ull) {
  const auto* p = static_cast<const unsigned char*>(bytes);
  for (size_t i = 0; i < n; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ull;
  }
  return h;
}

inline uint64_t fnv1a64(std::string_view s) { return fnv1a64(s.data(), s.size()); }

std::string read_file(const std::string& path);           // throws DataError
void write_file(const std::string& path, std::string_view content);
uint64_t hash_file(const std::string& path);               // fnv1a64 of the bytes
std::string hex64(uint64_t v);

inline constexpr const char* kToolVersion = "0.1.0";

}  // namespace absa
