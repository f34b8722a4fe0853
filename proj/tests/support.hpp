#pragma once

#include <atomic>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "esure/image.hpp"

namespace test {

inline esure::Image row(std::vector<double> v) {
  const std::size_t n = v.size();
  return esure::Image(esure::Shape{1, n, 1}, std::move(v));
}

inline esure::Image constant(std::size_t h, std::size_t w, double v) { return esure::Image(esure::Shape{h, w, 1}, v); }

/// Fresh scratch directory under the system temp dir.
inline std::filesystem::path scratch(const std::string& name) {
  static std::atomic<int> counter{0};
  auto p = std::filesystem::temp_directory_path() /
           ("esure-test-" + std::to_string(::getpid()) + "-" + std::to_string(counter++) + "-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

inline double sample_mean(const esure::Image& a) {
  double s = 0;
  for (double v : a.data()) s += v;
  return s / static_cast<double>(a.size());
}

inline double sample_var(const esure::Image& a) {
  const double m = sample_mean(a);
  double s = 0;
  for (double v : a.data()) s += (v - m) * (v - m);
  return s / static_cast<double>(a.size() - 1);
}

inline double sample_cov(const esure::Image& a, const esure::Image& b) {
  const double ma = sample_mean(a), mb = sample_mean(b);
  double s = 0;
  for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - ma) * (b[i] - mb);
  return s / static_cast<double>(a.size() - 1);
}

}  // namespace test
