#pragma once

#include <cmath>
#include <concepts>
#include <cstddef>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

namespace esure {

/// Height x width x channels. Data is stored row-major with channels
/// innermost (H, W, C).
struct Shape {
  std::size_t height = 0;
  std::size_t width = 0;
  std::size_t channels = 1;

  [[nodiscard]] std::size_t size() const noexcept { return height * width * channels; }
  [[nodiscard]] bool valid() const noexcept { return height > 0 && width > 0 && channels > 0; }
  friend bool operator==(const Shape&, const Shape&) = default;
};

std::string to_string(const Shape& s);

class ShapeMismatch : public std::invalid_argument {
 public:
  ShapeMismatch(const Shape& a, const Shape& b, const std::string& where);
};

/// Dense real-valued image. All noise, signal and denoiser outputs are
/// instances of this type.
template <std::floating_point T>
class BasicImage {
 public:
  using value_type = T;

  BasicImage() = default;
  explicit BasicImage(Shape shape, T fill = T(0)) : shape_(shape), data_(shape.size(), fill) {
    if (!shape.valid()) throw std::invalid_argument("image shape must be positive: " + to_string(shape));
  }
  BasicImage(Shape shape, std::vector<T> data) : shape_(shape), data_(std::move(data)) {
    if (!shape.valid()) throw std::invalid_argument("image shape must be positive: " + to_string(shape));
    if (data_.size() != shape.size())
      throw std::invalid_argument("image data length " + std::to_string(data_.size()) +
                                  " does not match shape " + to_string(shape));
  }

  [[nodiscard]] const Shape& shape() const noexcept { return shape_; }
  [[nodiscard]] std::size_t height() const noexcept { return shape_.height; }
  [[nodiscard]] std::size_t width() const noexcept { return shape_.width; }
  [[nodiscard]] std::size_t channels() const noexcept { return shape_.channels; }
  [[nodiscard]] std::size_t size() const noexcept { return data_.size(); }
  [[nodiscard]] bool empty() const noexcept { return data_.empty(); }

  [[nodiscard]] std::span<T> data() noexcept { return data_; }
  [[nodiscard]] std::span<const T> data() const noexcept { return data_; }
  [[nodiscard]] const std::vector<T>& vec() const noexcept { return data_; }

  T& operator[](std::size_t i) noexcept { return data_[i]; }
  const T& operator[](std::size_t i) const noexcept { return data_[i]; }

  T& at(std::size_t row, std::size_t col, std::size_t ch = 0) {
    return data_[(row * shape_.width + col) * shape_.channels + ch];
  }
  const T& at(std::size_t row, std::size_t col, std::size_t ch = 0) const {
    return data_[(row * shape_.width + col) * shape_.channels + ch];
  }

  BasicImage& operator+=(const BasicImage& o) {
    require_same(o, "operator+=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] += o.data_[i];
    return *this;
  }
  BasicImage& operator-=(const BasicImage& o) {
    require_same(o, "operator-=");
    for (std::size_t i = 0; i < data_.size(); ++i) data_[i] -= o.data_[i];
    return *this;
  }
  BasicImage& operator*=(T s) noexcept {
    for (auto& v : data_) v *= s;
    return *this;
  }

  friend BasicImage operator+(BasicImage a, const BasicImage& b) { return a += b; }
  friend BasicImage operator-(BasicImage a, const BasicImage& b) { return a -= b; }
  friend BasicImage operator*(T s, BasicImage a) noexcept { return a *= s; }
  friend bool operator==(const BasicImage&, const BasicImage&) = default;

  void require_same(const BasicImage& o, const std::string& where) const {
    if (o.shape_ != shape_) throw ShapeMismatch(shape_, o.shape_, where);
  }

  [[nodiscard]] bool all_finite() const noexcept {
    for (T v : data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

 private:
  Shape shape_{};
  std::vector<T> data_;
};

using Image = BasicImage<double>;
using ImageF = BasicImage<float>;

template <std::floating_point To, std::floating_point From>
BasicImage<To> image_cast(const BasicImage<From>& src) {
  if constexpr (std::is_same_v<To, From>) {
    return src;
  } else {
    std::vector<To> out(src.size());
    for (std::size_t i = 0; i < src.size(); ++i) out[i] = static_cast<To>(src[i]);
    return BasicImage<To>(src.shape(), std::move(out));
  }
}

template <std::floating_point T>
T dot(const BasicImage<T>& a, const BasicImage<T>& b) {
  a.require_same(b, "dot");
  T acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
  return acc;
}

template <std::floating_point T>
T squared_norm(const BasicImage<T>& a) {
  T acc = 0;
  for (T v : a.data()) acc += v * v;
  return acc;
}

/// Mean of squared differences, accumulated in double.
template <std::floating_point T>
double mean_squared_difference(const BasicImage<T>& a, const BasicImage<T>& b) {
  a.require_same(b, "mean_squared_difference");
  double acc = 0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    acc += d * d;
  }
  return acc / static_cast<double>(a.size());
}

inline constexpr double kPsnrCapDb = 120.0;

/// Peak signal-to-noise ratio in dB. An exactly zero difference reports
/// `cap_db` so downstream CSVs stay numeric.
double psnr(const Image& reference, const Image& estimate, double peak = 1.0, double cap_db = kPsnrCapDb);

/// PSNR from an already computed mean squared error.
double psnr_from_mse(double mse, double peak = 1.0, double cap_db = kPsnrCapDb);

}  // namespace esure
