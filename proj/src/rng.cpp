#include "esure/rng.hpp"

#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>

namespace esure {

std::uint64_t mix64(std::uint64_t x) noexcept {
  // splitmix64 finalizer
  x += 0x9e3779b97f4a7c15ULL;
  x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
  x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
  return x ^ (x >> 31);
}

std::uint64_t hash_tag(std::string_view tag) noexcept {
  std::uint64_t h = 0xcbf29ce484222325ULL;  // FNV-1a
  for (unsigned char c : tag) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

namespace {

std::uint64_t extend_path(std::uint64_t parent, std::string_view purpose, std::uint64_t index, std::uint64_t step) {
  std::uint64_t k = mix64(parent ^ hash_tag(purpose));
  k = mix64(k ^ mix64(index + 0x632be59bd9b4e019ULL));
  k = mix64(k ^ mix64(step + 0x85157af5d1d39b1dULL));
  return k;
}

std::seed_seq::result_type lo32(std::uint64_t v) { return static_cast<std::seed_seq::result_type>(v & 0xffffffffu); }
std::seed_seq::result_type hi32(std::uint64_t v) { return static_cast<std::seed_seq::result_type>(v >> 32); }

}  // namespace

RngStream::RngStream(std::uint64_t key) : key_(key) {
  // seed_seq is fully specified by the standard, so the resulting state is
  // portable.
  std::seed_seq seq{lo32(key), hi32(key), lo32(mix64(key)), hi32(mix64(key))};
  engine_.seed(seq);
}

RngStream::RngStream(std::uint64_t global_seed, std::string_view purpose, std::uint64_t index, std::uint64_t step)
    : RngStream(extend_path(mix64(global_seed), purpose, index, step)) {}

RngStream RngStream::derive(std::string_view purpose, std::uint64_t index, std::uint64_t step) const {
  return RngStream(extend_path(key_, purpose, index, step));
}

double RngStream::uniform() { return static_cast<double>(engine_() >> 11) * 0x1.0p-53; }

std::uint64_t RngStream::below(std::uint64_t n) {
  if (n == 0) throw std::invalid_argument("RngStream::below: n must be positive");
  const std::uint64_t limit = std::numeric_limits<std::uint64_t>::max() - std::numeric_limits<std::uint64_t>::max() % n;
  std::uint64_t v;
  do {
    v = engine_();
  } while (v >= limit);
  return v % n;
}

double RngStream::normal() {
  if (has_spare_) {
    has_spare_ = false;
    return spare_;
  }
  double u1;
  do {
    u1 = uniform();
  } while (u1 <= 0.0);
  const double u2 = uniform();
  const double r = std::sqrt(-2.0 * std::log(u1));
  const double theta = 2.0 * std::numbers::pi * u2;
  spare_ = r * std::sin(theta);
  has_spare_ = true;
  return r * std::cos(theta);
}

Image gaussian_field(RngStream& stream, const Shape& shape, double sigma) {
  if (!(sigma >= 0.0)) throw std::invalid_argument("gaussian_field: sigma must be non-negative");
  Image out(shape);
  for (auto& v : out.data()) v = sigma * stream.normal();
  return out;
}

}  // namespace esure
