#pragma once

#include <span>
#include <string>
#include <string_view>

namespace sfocc {

/// Incremental SHA-256, hex output.
class Sha256 {
 public:
  Sha256();
  ~Sha256();
  Sha256(const Sha256&) = delete;
  Sha256& operator=(const Sha256&) = delete;

  void update(const void* data, std::size_t size);
  void update(std::string_view s) { update(s.data(), s.size()); }
  template <typename T>
  void update_span(std::span<const T> s) {
    update(s.data(), s.size_bytes());
  }
  std::string hex();

 private:
  void* ctx_;
};

std::string sha256_hex(std::string_view bytes);
/// Digest of a file's bytes; throws std::runtime_error if unreadable.
std::string sha256_file(const std::string& path);

}  // namespace sfocc
