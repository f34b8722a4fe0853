#pragma once

#include <cstdint>
#include <random>
#include <string_view>

#include "esure/image.hpp"

namespace esure {

/// Deterministic random stream identified by a derivation path
/// (global seed, purpose tag, index, step). Two streams with the same path
/// emit identical sequences; streams with different tags get unrelated
/// sub-seeds.
///
/// Generator: std::mt19937_64 (bit-exact across standard libraries).
/// Normals: Box-Muller on 53-bit uniforms, both outputs consumed in order.
/// Neither choice may change without bumping the data format version, since
/// every synthesized dataset depends on it.
class RngStream {
 public:
  RngStream(std::uint64_t global_seed, std::string_view purpose, std::uint64_t index = 0, std::uint64_t step = 0);

  /// Child stream whose path extends this one. Pure: does not consume
  /// state from the parent.
  [[nodiscard]] RngStream derive(std::string_view purpose, std::uint64_t index = 0, std::uint64_t step = 0) const;

  [[nodiscard]] std::uint64_t path_key() const noexcept { return key_; }

  std::uint64_t next_u64() { return engine_(); }
  /// Uniform in [0, 1).
  double uniform();
  /// Uniform in [lo, hi).
  double uniform(double lo, double hi) { return lo + (hi - lo) * uniform(); }
  /// Uniform integer in [0, n). Unbiased (rejection sampling).
  std::uint64_t below(std::uint64_t n);
  /// Standard normal.
  double normal();

 private:
  explicit RngStream(std::uint64_t key);

  std::uint64_t key_;
  std::mt19937_64 engine_;
  double spare_ = 0.0;
  bool has_spare_ = false;
};

std::uint64_t hash_tag(std::string_view tag) noexcept;
std::uint64_t mix64(std::uint64_t x) noexcept;

/// I.i.d. N(0, sigma^2) field. Throws std::invalid_argument for negative
/// sigma or an invalid shape. sigma == 0 yields exact zeros but still
/// advances the stream, so downstream draws do not depend on sigma.
Image gaussian_field(RngStream& stream, const Shape& shape, double sigma);

}  // namespace esure
