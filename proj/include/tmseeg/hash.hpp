#pragma once

#include "tmseeg/types.hpp"

#include <cstdint>
#include <string>
#include <string_view>

namespace tmseeg {

/// 64-bit FNV-1a, used for provenance and config fingerprints.
class Fnv1a {
 public:
  Fnv1a& update(const void* data, std::size_t n) {
    const auto* p = static_cast<const unsigned char*>(data);
    for (std::size_t i = 0; i < n; ++i) {
      state_ ^= p[i];
      state_ *= 0x100000001b3ULL;
    }
    return *this;
  }
  Fnv1a& update(std::string_view s) { return update(s.data(), s.size()); }
  Fnv1a& update(const MatrixXd& m) {
    const std::int64_t shape[2] = {m.rows(), m.cols()};
    update(shape, sizeof shape);
    return update(m.data(), sizeof(double) * static_cast<std::size_t>(m.size()));
  }
  std::uint64_t value() const { return state_; }
  std::string hex() const;

 private:
  std::uint64_t state_ = 0xcbf29ce484222325ULL;
};

inline std::string hash_hex(const MatrixXd& m) { return Fnv1a().update(m).hex(); }
inline std::string hash_hex(std::string_view s) { return Fnv1a().update(s).hex(); }

}  // namespace tmseeg
