#include "esure/denoiser.hpp"

#include <cmath>

#include "small_cnn.hpp"

namespace esure {

std::string_view to_string(DenoiserKind kind) {
  switch (kind) {
    case DenoiserKind::identity: return "identity";
    case DenoiserKind::scaling: return "scaling";
    case DenoiserKind::conv_filter: return "conv_filter";
    case DenoiserKind::soft_threshold: return "soft_threshold";
    case DenoiserKind::small_cnn: return "small_cnn";
  }
  return "?";
}

DenoiserKind denoiser_kind_from_string(std::string_view s) {
  for (auto k : {DenoiserKind::identity, DenoiserKind::scaling, DenoiserKind::conv_filter, DenoiserKind::soft_threshold,
                 DenoiserKind::small_cnn})
    if (to_string(k) == s) return k;
  throw std::invalid_argument("unknown denoiser kind: " + std::string(s));
}

void DenoiserConfig::validate() const {
  switch (kind) {
    case DenoiserKind::identity: break;
    case DenoiserKind::scaling:
      if (!std::isfinite(scale)) throw std::invalid_argument("scaling: scale must be finite");
      break;
    case DenoiserKind::conv_filter:
      if (kernel_size == 0 || kernel_size % 2 == 0) throw std::invalid_argument("conv_filter: kernel size must be odd");
      break;
    case DenoiserKind::soft_threshold:
      if (!(threshold >= 0) || !std::isfinite(threshold))
        throw std::invalid_argument("soft_threshold: threshold must be finite and non-negative");
      break;
    case DenoiserKind::small_cnn:
      if (cnn.layers < 2) throw std::invalid_argument("small_cnn: need at least 2 layers");
      if (cnn.features == 0 || cnn.channels == 0) throw std::invalid_argument("small_cnn: empty feature dimension");
      if (cnn.kernel == 0 || cnn.kernel % 2 == 0) throw std::invalid_argument("small_cnn: kernel size must be odd");
      break;
  }
}

std::vector<ParamBlock> param_layout(const DenoiserConfig& config) {
  config.validate();
  switch (config.kind) {
    case DenoiserKind::identity: return {};
    case DenoiserKind::scaling: return {{"scale", 0, 1}};
    case DenoiserKind::conv_filter: return {{"kernel", 0, config.kernel_size * config.kernel_size}};
    case DenoiserKind::soft_threshold: return {{"threshold", 0, 1}};
    case DenoiserKind::small_cnn: {
      std::vector<ParamBlock> out;
      const auto& a = config.cnn;
      std::size_t offset = 0;
      for (std::size_t l = 0; l < a.layers; ++l) {
        const std::size_t fin = l == 0 ? a.channels : a.features;
        const std::size_t fout = l + 1 == a.layers ? a.channels : a.features;
        const std::size_t nw = fout * fin * a.kernel * a.kernel;
        out.push_back({"conv" + std::to_string(l) + ".weight", offset, nw});
        offset += nw;
        out.push_back({"conv" + std::to_string(l) + ".bias", offset, fout});
        offset += fout;
      }
      return out;
    }
  }
  return {};
}

std::size_t param_count(const DenoiserConfig& config) {
  std::size_t n = 0;
  for (const auto& b : param_layout(config)) n += b.size;
  return n;
}

template <std::floating_point T>
Denoiser<T>::Denoiser(DenoiserConfig config, std::vector<T> params) : config_(config), params_(std::move(params)) {
  if (params_.size() != param_count(config_))
    throw std::invalid_argument("denoiser " + std::string(to_string(config_.kind)) + ": expected " +
                                std::to_string(param_count(config_)) + " parameters, got " +
                                std::to_string(params_.size()));
}

template <std::floating_point T>
void Denoiser<T>::check_input(const BasicImage<T>& y) const {
  if (y.empty()) throw std::invalid_argument("denoiser: empty input");
  if (config_.kind == DenoiserKind::small_cnn && y.channels() != config_.cnn.channels)
    throw ShapeMismatch(y.shape(), Shape{y.height(), y.width(), config_.cnn.channels}, "small_cnn input channels");
}

namespace {

// Zero-padded same-size correlation of each channel with a k x k kernel.
template <typename T>
BasicImage<T> conv_same(const BasicImage<T>& y, std::span<const T> kernel, std::size_t k) {
  BasicImage<T> out(y.shape());
  const auto H = static_cast<std::ptrdiff_t>(y.height()), W = static_cast<std::ptrdiff_t>(y.width());
  const auto r = static_cast<std::ptrdiff_t>(k / 2);
  const std::size_t C = y.channels();
  for (std::ptrdiff_t i = 0; i < H; ++i)
    for (std::ptrdiff_t j = 0; j < W; ++j)
      for (std::size_t c = 0; c < C; ++c) {
        T acc = 0;
        for (std::ptrdiff_t di = -r; di <= r; ++di) {
          const std::ptrdiff_t si = i + di;
          if (si < 0 || si >= H) continue;
          for (std::ptrdiff_t dj = -r; dj <= r; ++dj) {
            const std::ptrdiff_t sj = j + dj;
            if (sj < 0 || sj >= W) continue;
            acc += kernel[static_cast<std::size_t>((di + r) * static_cast<std::ptrdiff_t>(k) + dj + r)] *
                   y.at(static_cast<std::size_t>(si), static_cast<std::size_t>(sj), c);
          }
        }
        out.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j), c) = acc;
      }
  return out;
}

}  // namespace

template <std::floating_point T>
BasicImage<T> Denoiser<T>::forward(const BasicImage<T>& y, ForwardTape<T>* tape) const {
  check_input(y);
  if (config_.kind == DenoiserKind::small_cnn) return detail::cnn_forward<T>(config_.cnn, params_, y, tape);
  if (tape) {
    tape->input = y;
    tape->activations.clear();
  }
  switch (config_.kind) {
    case DenoiserKind::identity: return y;
    case DenoiserKind::scaling: return params_[0] * y;
    case DenoiserKind::conv_filter: return conv_same<T>(y, params_, config_.kernel_size);
    case DenoiserKind::soft_threshold: {
      const T t = params_[0];
      BasicImage<T> out(y.shape());
      for (std::size_t i = 0; i < y.size(); ++i) {
        const T m = std::abs(y[i]) - t;
        out[i] = m > T(0) ? std::copysign(m, y[i]) : T(0);
      }
      return out;
    }
    case DenoiserKind::small_cnn: break;
  }
  throw std::logic_error("unreachable");
}

template <std::floating_point T>
void Denoiser<T>::accumulate_vjp(const ForwardTape<T>& tape, const BasicImage<T>& u, std::span<T> grad) const {
  const BasicImage<T>& y = tape.input;
  y.require_same(u, "param_vjp cotangent");
  if (grad.size() != params_.size()) throw std::invalid_argument("param_vjp: gradient length mismatch");
  switch (config_.kind) {
    case DenoiserKind::identity: return;
    case DenoiserKind::scaling: grad[0] += dot(u, y); return;
    case DenoiserKind::conv_filter: {
      const std::size_t k = config_.kernel_size;
      const auto r = static_cast<std::ptrdiff_t>(k / 2);
      const auto H = static_cast<std::ptrdiff_t>(y.height()), W = static_cast<std::ptrdiff_t>(y.width());
      for (std::ptrdiff_t di = -r; di <= r; ++di)
        for (std::ptrdiff_t dj = -r; dj <= r; ++dj) {
          T acc = 0;
          for (std::ptrdiff_t i = std::max<std::ptrdiff_t>(0, -di); i < std::min(H, H - di); ++i)
            for (std::ptrdiff_t j = std::max<std::ptrdiff_t>(0, -dj); j < std::min(W, W - dj); ++j)
              for (std::size_t c = 0; c < y.channels(); ++c)
                acc += u.at(static_cast<std::size_t>(i), static_cast<std::size_t>(j), c) *
                       y.at(static_cast<std::size_t>(i + di), static_cast<std::size_t>(j + dj), c);
          grad[static_cast<std::size_t>((di + r) * static_cast<std::ptrdiff_t>(k) + dj + r)] += acc;
        }
      return;
    }
    case DenoiserKind::soft_threshold: {
      const T t = params_[0];
      T acc = 0;
      for (std::size_t i = 0; i < y.size(); ++i)
        if (std::abs(y[i]) > t) acc -= y[i] > T(0) ? u[i] : -u[i];
      grad[0] += acc;
      return;
    }
    case DenoiserKind::small_cnn: detail::cnn_accumulate_vjp<T>(config_.cnn, params_, tape, u, grad); return;
  }
}

template <std::floating_point T>
std::vector<T> Denoiser<T>::param_vjp(const BasicImage<T>& y, const BasicImage<T>& u) const {
  y.require_same(u, "param_vjp");
  std::vector<T> grad(params_.size(), T(0));
  ForwardTape<T> tape;
  if (config_.kind == DenoiserKind::small_cnn)
    (void)forward(y, &tape);
  else
    tape.input = y;
  accumulate_vjp(tape, u, grad);
  return grad;
}

template <std::floating_point T>
std::optional<T> Denoiser<T>::analytic_divergence(const BasicImage<T>& y) const {
  check_input(y);
  const auto n = static_cast<T>(y.size());
  switch (config_.kind) {
    case DenoiserKind::identity: return n;
    case DenoiserKind::scaling: return params_[0] * n;
    case DenoiserKind::conv_filter: {
      const std::size_t k = config_.kernel_size;
      return n * params_[(k / 2) * k + k / 2];
    }
    case DenoiserKind::soft_threshold: {
      std::size_t count = 0;
      for (T v : y.data())
        if (std::abs(v) > params_[0]) ++count;
      return static_cast<T>(count);
    }
    case DenoiserKind::small_cnn: return std::nullopt;
  }
  return std::nullopt;
}

template <std::floating_point T>
void Denoiser<T>::accumulate_divergence_gradient(const BasicImage<T>& y, T coeff, std::span<T> grad) const {
  if (config_.kind == DenoiserKind::small_cnn) throw Unsupported("small_cnn has no analytic divergence");
  if (grad.size() != params_.size()) throw std::invalid_argument("divergence gradient: length mismatch");
  const auto n = static_cast<T>(y.size());
  switch (config_.kind) {
    case DenoiserKind::identity: return;
    case DenoiserKind::scaling: grad[0] += coeff * n; return;
    case DenoiserKind::conv_filter: {
      const std::size_t k = config_.kernel_size;
      grad[(k / 2) * k + k / 2] += coeff * n;
      return;
    }
    case DenoiserKind::soft_threshold: return;  // piecewise constant in t
    case DenoiserKind::small_cnn: throw Unsupported("small_cnn has no analytic divergence");
  }
}

template <std::floating_point T>
Denoiser<T> build_denoiser(const DenoiserConfig& config, RngStream& init_stream) {
  config.validate();
  std::vector<T> params(param_count(config), T(0));
  switch (config.kind) {
    case DenoiserKind::identity: break;
    case DenoiserKind::scaling: params[0] = static_cast<T>(config.scale); break;
    case DenoiserKind::conv_filter: {
      const std::size_t k = config.kernel_size;
      params[(k / 2) * k + k / 2] = T(1);
      break;
    }
    case DenoiserKind::soft_threshold: params[0] = static_cast<T>(config.threshold); break;
    case DenoiserKind::small_cnn: {
      const auto layout = param_layout(config);
      const auto& a = config.cnn;
      for (std::size_t l = 0; l + 1 < a.layers; ++l) {
        const ParamBlock& wb = layout[2 * l];
        const std::size_t fin = l == 0 ? a.channels : a.features;
        const double std = std::sqrt(2.0 / static_cast<double>(fin * a.kernel * a.kernel));
        auto s = init_stream.derive("cnn-init", l);
        for (std::size_t i = 0; i < wb.size; ++i) params[wb.offset + i] = static_cast<T>(std * s.normal());
      }
      break;
    }
  }
  return Denoiser<T>(config, std::move(params));
}

template class Denoiser<float>;
template class Denoiser<double>;
template Denoiser<float> build_denoiser<float>(const DenoiserConfig&, RngStream&);
template Denoiser<double> build_denoiser<double>(const DenoiserConfig&, RngStream&);

}  // namespace esure
