#pragma once

#include <concepts>
#include <cstddef>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

#include "esure/image.hpp"
#include "esure/rng.hpp"

namespace esure {

enum class DenoiserKind { identity, scaling, conv_filter, soft_threshold, small_cnn };

std::string_view to_string(DenoiserKind kind);
DenoiserKind denoiser_kind_from_string(std::string_view s);

/// Residual CNN: `layers` 3x3 convolutions, ReLU between them, output
/// y - f(y). No batch normalization.
struct CnnArchitecture {
  std::size_t layers = 7;
  std::size_t features = 16;
  std::size_t kernel = 3;
  std::size_t channels = 1;

  friend bool operator==(const CnnArchitecture&, const CnnArchitecture&) = default;
};

struct DenoiserConfig {
  DenoiserKind kind = DenoiserKind::identity;
  double scale = 1.0;            // scaling
  std::size_t kernel_size = 3;   // conv_filter, odd
  double threshold = 0.1;        // soft_threshold
  CnnArchitecture cnn{};         // small_cnn

  void validate() const;
};

/// Thrown when a quantity is not available for a denoiser kind (e.g. the
/// analytic divergence of the CNN).
class Unsupported : public std::logic_error {
 public:
  using std::logic_error::logic_error;
};

/// One contiguous named block of the parameter vector.
struct ParamBlock {
  std::string name;
  std::size_t offset = 0;
  std::size_t size = 0;
};

std::vector<ParamBlock> param_layout(const DenoiserConfig& config);
std::size_t param_count(const DenoiserConfig& config);

/// Intermediate values recorded by a forward pass, consumed by the VJP.
template <std::floating_point T>
struct ForwardTape {
  BasicImage<T> input;
  /// small_cnn only: post-ReLU activations of each hidden layer, planar
  /// (features x H*W), row-major.
  std::vector<std::vector<T>> activations;
};

/// Parametric differentiable denoiser h_theta. A plain value: copying it
/// copies the parameters.
template <std::floating_point T>
class Denoiser {
 public:
  Denoiser(DenoiserConfig config, std::vector<T> params);

  [[nodiscard]] DenoiserKind kind() const noexcept { return config_.kind; }
  [[nodiscard]] const DenoiserConfig& config() const noexcept { return config_; }
  [[nodiscard]] std::span<const T> params() const noexcept { return params_; }
  [[nodiscard]] std::span<T> params() noexcept { return params_; }
  [[nodiscard]] std::size_t num_params() const noexcept { return params_.size(); }

  /// Output has the input's shape. When `tape` is given, it receives what
  /// accumulate_vjp needs.
  BasicImage<T> forward(const BasicImage<T>& y, ForwardTape<T>* tape = nullptr) const;

  /// grad += u^T (d h(y) / d theta), with y taken from the tape.
  void accumulate_vjp(const ForwardTape<T>& tape, const BasicImage<T>& u, std::span<T> grad) const;

  /// u^T (d h(y) / d theta).
  std::vector<T> param_vjp(const BasicImage<T>& y, const BasicImage<T>& u) const;

  /// sum_i d h_i(y) / d y_i when closed-form; std::nullopt for small_cnn.
  [[nodiscard]] std::optional<T> analytic_divergence(const BasicImage<T>& y) const;

  /// grad += coeff * d(analytic_divergence(y)) / d theta. Throws Unsupported
  /// for small_cnn.
  void accumulate_divergence_gradient(const BasicImage<T>& y, T coeff, std::span<T> grad) const;

  template <std::floating_point U>
  Denoiser<U> cast() const {
    std::vector<U> p(params_.begin(), params_.end());
    return Denoiser<U>(config_, std::move(p));
  }

 private:
  void check_input(const BasicImage<T>& y) const;

  DenoiserConfig config_;
  std::vector<T> params_;
};

/// Builds a denoiser with its initial parameters:
///  scaling a = config.scale, conv_filter centered delta, soft_threshold
///  t = config.threshold, small_cnn He-normal weights, zero biases and a
///  zero last layer (the fresh network is the identity map).
template <std::floating_point T>
Denoiser<T> build_denoiser(const DenoiserConfig& config, RngStream& init_stream);

extern template class Denoiser<float>;
extern template class Denoiser<double>;
extern template Denoiser<float> build_denoiser<float>(const DenoiserConfig&, RngStream&);
extern template Denoiser<double> build_denoiser<double>(const DenoiserConfig&, RngStream&);

}  // namespace esure
