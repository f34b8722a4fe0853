#include "esure/risk.hpp"

#include <cctype>
#include <cmath>
#include <stdexcept>
#include <thread>

namespace esure {

std::string_view to_string(LossKind kind) {
  switch (kind) {
    case LossKind::mse: return "mse";
    case LossKind::sure: return "sure";
    case LossKind::esure: return "esure";
    case LossKind::n2n: return "n2n";
  }
  return "?";
}

LossKind loss_kind_from_string(std::string_view s) {
  std::string lower(s);
  for (auto& c : lower) c = static_cast<char>(std::tolower(static_cast<unsigned char>(c)));
  for (auto k : {LossKind::mse, LossKind::sure, LossKind::esure, LossKind::n2n})
    if (to_string(k) == lower) return k;
  throw std::invalid_argument("unknown loss kind: " + std::string(s));
}

std::string_view to_string(DivergenceMode mode) {
  return mode == DivergenceMode::analytic ? "analytic" : "monte_carlo";
}

DivergenceMode divergence_mode_from_string(std::string_view s) {
  if (s == "analytic") return DivergenceMode::analytic;
  if (s == "monte_carlo" || s == "mc") return DivergenceMode::monte_carlo;
  throw std::invalid_argument("unknown divergence mode: " + std::string(s));
}

void EstimatorConfig::validate() const {
  if (!(epsilon >= 0)) throw std::invalid_argument("epsilon must be non-negative");
  if (divergence == DivergenceMode::monte_carlo && !(epsilon > 0))
    throw std::invalid_argument("monte_carlo divergence requires epsilon > 0");
}

namespace {

// View a double sample image as T without copying when T is double.
template <std::floating_point T>
class AsT {
 public:
  explicit AsT(const Image& img) {
    if constexpr (std::is_same_v<T, double>)
      ref_ = &img;
    else
      owned_ = image_cast<T>(img);
  }
  const BasicImage<T>& get() const {
    if constexpr (std::is_same_v<T, double>)
      return *ref_;
    else
      return owned_;
  }

 private:
  const BasicImage<T>* ref_ = nullptr;
  BasicImage<T> owned_;
};

// Terms of every loss in the family:
//   (1/N)||fit - h(input)||^2 - constant + div_coeff * div h(input)
// with div_coeff already carrying the 1/N.
struct LossTerms {
  bool fit_is_input = false;
  double constant = 0.0;
  double div_sigma = 0.0;  // divergence coefficient is 2 div_sigma^2 / N
};

LossTerms terms_for(LossKind kind, const PairedSample& s) {
  require_compatible(kind, s.mode);
  switch (kind) {
    case LossKind::mse:
    case LossKind::n2n: return {false, 0.0, 0.0};
    case LossKind::sure: return {true, s.sigma_input * s.sigma_input, s.sigma_input};
    case LossKind::esure:
      if (s.mode == TargetMode::independent_target) return {false, s.sigma_target * s.sigma_target, 0.0};
      return {false, s.sigma_target * s.sigma_target, s.sigma_target};
  }
  return {};
}

template <std::floating_point T>
double fidelity(const BasicImage<T>& fit, const BasicImage<T>& out) {
  return mean_squared_difference(fit, out);
}

template <std::floating_point T>
void check_probe(const BasicImage<T>* probe, const Shape& shape) {
  if (!probe || probe->empty()) throw std::invalid_argument("monte_carlo divergence requires a probe");
  if (probe->shape() != shape) throw ShapeMismatch(probe->shape(), shape, "probe");
}

template <std::floating_point T>
EstimateValue make_value(double v, LossKind kind, const EstimatorConfig& cfg) {
  if (!std::isfinite(v)) throw std::runtime_error("non-finite " + std::string(to_string(kind)) + " estimate");
  return EstimateValue{v, kind, cfg.divergence, cfg.divergence == DivergenceMode::monte_carlo ? cfg.epsilon : 0.0,
                       std::nullopt};
}

template <std::floating_point T>
BasicImage<T> draw_probe(const Shape& shape, RngStream& stream) {
  return image_cast<T>(gaussian_field(stream, shape, 1.0));
}

// Shared by sample_loss and the public single-sample estimators.
template <std::floating_point T>
double evaluate(const LossTerms& terms, const BasicImage<T>& input, const BasicImage<T>& target,
                const Denoiser<T>& d, const EstimatorConfig& cfg, const BasicImage<T>* probe) {
  input.require_same(target, "loss");
  const BasicImage<T> out = d.forward(input);
  double v = fidelity(terms.fit_is_input ? input : target, out) - terms.constant;
  if (terms.div_sigma > 0) {
    const double n = static_cast<double>(input.size());
    const double coeff = 2.0 * terms.div_sigma * terms.div_sigma / n;
    if (cfg.divergence == DivergenceMode::analytic) {
      const auto div = d.analytic_divergence(input);
      if (!div) throw Unsupported(std::string(to_string(d.kind())) + " has no analytic divergence");
      v += coeff * static_cast<double>(*div);
    } else {
      cfg.validate();
      check_probe(probe, input.shape());
      const T eps = static_cast<T>(cfg.epsilon);
      BasicImage<T> shifted = input;
      for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += eps * (*probe)[i];
      const BasicImage<T> out_shifted = d.forward(shifted);
      double acc = 0;
      for (std::size_t i = 0; i < out.size(); ++i)
        acc += static_cast<double>((*probe)[i]) * (static_cast<double>(out_shifted[i]) - static_cast<double>(out[i]));
      v += coeff * acc / static_cast<double>(eps);
    }
  }
  return v;
}

}  // namespace

void require_compatible(LossKind kind, TargetMode mode) {
  switch (kind) {
    case LossKind::mse:
      if (mode != TargetMode::clean_target) throw std::invalid_argument("mse loss needs clean targets");
      return;
    case LossKind::n2n:
    case LossKind::esure:
      if (mode == TargetMode::clean_target)
        throw std::invalid_argument(std::string(to_string(kind)) + " loss needs noisy (independent or nested) targets");
      return;
    case LossKind::sure: return;
  }
}

bool needs_probe(LossKind kind, const PairedSample& sample, const EstimatorConfig& cfg) {
  return cfg.divergence == DivergenceMode::monte_carlo && terms_for(kind, sample).div_sigma > 0;
}

template <std::floating_point T>
T mc_divergence(const Denoiser<T>& d, const BasicImage<T>& y, T epsilon, const BasicImage<T>& probe) {
  if (!(epsilon > 0)) throw std::invalid_argument("mc_divergence: epsilon must be positive");
  y.require_same(probe, "mc_divergence");
  BasicImage<T> shifted = y;
  for (std::size_t i = 0; i < y.size(); ++i) shifted[i] += epsilon * probe[i];
  const BasicImage<T> a = d.forward(shifted);
  const BasicImage<T> b = d.forward(y);
  T acc = 0;
  for (std::size_t i = 0; i < y.size(); ++i) acc += probe[i] * (a[i] - b[i]);
  return acc / epsilon;
}

template <std::floating_point T>
EstimateValue mse_loss(const Denoiser<T>& d, const BasicImage<T>& input, const BasicImage<T>& clean) {
  input.require_same(clean, "mse_loss");
  return make_value<T>(fidelity(clean, d.forward(input)), LossKind::mse, {0.0, DivergenceMode::analytic});
}

template <std::floating_point T>
EstimateValue n2n_loss(const Denoiser<T>& d, const BasicImage<T>& input, const BasicImage<T>& target) {
  input.require_same(target, "n2n_loss");
  return make_value<T>(fidelity(target, d.forward(input)), LossKind::n2n, {0.0, DivergenceMode::analytic});
}

template <std::floating_point T>
EstimateValue sure_loss(const Denoiser<T>& d, const BasicImage<T>& y, double sigma, const EstimatorConfig& cfg,
                        const BasicImage<T>* probe) {
  if (!(sigma >= 0)) throw std::invalid_argument("sure_loss: sigma must be non-negative");
  const LossTerms terms{true, sigma * sigma, sigma};
  return make_value<T>(evaluate(terms, y, y, d, cfg, probe), LossKind::sure, cfg);
}

template <std::floating_point T>
EstimateValue sure_loss(const Denoiser<T>& d, const BasicImage<T>& y, double sigma, const EstimatorConfig& cfg,
                        RngStream& stream) {
  if (cfg.divergence == DivergenceMode::analytic) return sure_loss<T>(d, y, sigma, cfg, nullptr);
  const BasicImage<T> probe = draw_probe<T>(y.shape(), stream);
  auto v = sure_loss<T>(d, y, sigma, cfg, &probe);
  v.probe_key = stream.path_key();
  return v;
}

template <std::floating_point T>
EstimateValue esure_loss(const PairedSample& sample, const Denoiser<T>& d, const EstimatorConfig& cfg,
                         const BasicImage<T>* probe) {
  if (sample.mode == TargetMode::clean_target)
    throw std::invalid_argument("esure_loss: clean targets are not supported, use mse_loss");
  sample.validate();
  const LossTerms terms = terms_for(LossKind::esure, sample);
  const AsT<T> input(sample.input), target(sample.target);
  return make_value<T>(evaluate(terms, input.get(), target.get(), d, cfg, probe), LossKind::esure, cfg);
}

template <std::floating_point T>
EstimateValue esure_loss(const PairedSample& sample, const Denoiser<T>& d, const EstimatorConfig& cfg,
                         RngStream& stream) {
  if (!needs_probe(LossKind::esure, sample, cfg)) return esure_loss<T>(sample, d, cfg, nullptr);
  const BasicImage<T> probe = draw_probe<T>(sample.input.shape(), stream);
  auto v = esure_loss<T>(sample, d, cfg, &probe);
  v.probe_key = stream.path_key();
  return v;
}

template <std::floating_point T>
double sample_loss(LossKind kind, const PairedSample& sample, const Denoiser<T>& d, const EstimatorConfig& cfg,
                   const BasicImage<T>* probe) {
  const LossTerms terms = terms_for(kind, sample);
  const AsT<T> input(sample.input), target(sample.target);
  return evaluate(terms, input.get(), target.get(), d, cfg, probe);
}

template <std::floating_point T>
LossGradient<T> sample_loss_gradient(LossKind kind, const PairedSample& sample, const Denoiser<T>& d,
                                     const EstimatorConfig& cfg, const BasicImage<T>* probe) {
  const LossTerms terms = terms_for(kind, sample);
  const AsT<T> input_view(sample.input), target_view(sample.target);
  const BasicImage<T>& input = input_view.get();
  const BasicImage<T>& fit = terms.fit_is_input ? input : target_view.get();
  input.require_same(fit, "loss");

  const double n = static_cast<double>(input.size());
  LossGradient<T> out;
  out.gradient.assign(d.num_params(), T(0));

  ForwardTape<T> tape;
  const BasicImage<T> h = d.forward(input, &tape);
  out.loss = fidelity(fit, h) - terms.constant;

  // Fidelity cotangent: -(2/N) (fit - h).
  BasicImage<T> cot(input.shape());
  const T scale = static_cast<T>(-2.0 / n);
  for (std::size_t i = 0; i < cot.size(); ++i) cot[i] = scale * (fit[i] - h[i]);

  if (terms.div_sigma > 0) {
    const double coeff = 2.0 * terms.div_sigma * terms.div_sigma / n;
    if (cfg.divergence == DivergenceMode::analytic) {
      const auto div = d.analytic_divergence(input);
      if (!div) throw Unsupported(std::string(to_string(d.kind())) + " has no analytic divergence");
      out.loss += coeff * static_cast<double>(*div);
      d.accumulate_divergence_gradient(input, static_cast<T>(coeff), out.gradient);
    } else {
      cfg.validate();
      check_probe(probe, input.shape());
      const T eps = static_cast<T>(cfg.epsilon);
      BasicImage<T> shifted = input;
      for (std::size_t i = 0; i < shifted.size(); ++i) shifted[i] += eps * (*probe)[i];
      ForwardTape<T> shifted_tape;
      const BasicImage<T> hs = d.forward(shifted, &shifted_tape);
      double acc = 0;
      for (std::size_t i = 0; i < h.size(); ++i)
        acc += static_cast<double>((*probe)[i]) * (static_cast<double>(hs[i]) - static_cast<double>(h[i]));
      out.loss += coeff * acc / static_cast<double>(eps);

      // d/dtheta of (coeff/eps) probe^T (h(shifted) - h(input)).
      const T c = static_cast<T>(coeff / static_cast<double>(eps));
      BasicImage<T> probe_cot(input.shape());
      for (std::size_t i = 0; i < cot.size(); ++i) {
        probe_cot[i] = c * (*probe)[i];
        cot[i] -= probe_cot[i];
      }
      d.accumulate_vjp(shifted_tape, probe_cot, out.gradient);
    }
  }
  d.accumulate_vjp(tape, cot, out.gradient);
  return out;
}

template <std::floating_point T>
std::vector<BasicImage<T>> draw_probes(LossKind kind, const std::vector<PairedSample>& samples,
                                       const EstimatorConfig& cfg, const RngStream& stream) {
  std::vector<BasicImage<T>> probes(samples.size());
  for (std::size_t j = 0; j < samples.size(); ++j) {
    if (!needs_probe(kind, samples[j], cfg)) continue;
    auto s = stream.derive("probe", j);
    probes[j] = draw_probe<T>(samples[j].input.shape(), s);
  }
  return probes;
}

namespace {

template <typename Fn>
void for_each_index(std::size_t n, std::size_t threads, Fn&& fn) {
  threads = std::max<std::size_t>(1, std::min(threads, n));
  if (threads == 1) {
    for (std::size_t i = 0; i < n; ++i) fn(i);
    return;
  }
  std::vector<std::exception_ptr> errors(threads);
  {
    std::vector<std::jthread> pool;
    for (std::size_t t = 0; t < threads; ++t)
      pool.emplace_back([&, t] {
        try {
          for (std::size_t i = t; i < n; i += threads) fn(i);
        } catch (...) {
          errors[t] = std::current_exception();
        }
      });
  }
  for (auto& e : errors)
    if (e) std::rethrow_exception(e);
}

EstimatorConfig with_epsilon(const EstimatorConfig& cfg, const PairedSample& s, const EpsilonPolicy* eps) {
  EstimatorConfig c = cfg;
  if (eps) c.epsilon = eps->for_sigma(s.sigma_input);
  return c;
}

}  // namespace

template <std::floating_point T>
LossGradient<T> batch_loss_gradient(LossKind kind, const std::vector<PairedSample>& samples, const Denoiser<T>& d,
                                    const EstimatorConfig& cfg, const std::vector<BasicImage<T>>& probes,
                                    std::size_t threads, const EpsilonPolicy* epsilon) {
  if (samples.empty()) throw std::invalid_argument("loss_gradient: empty batch");
  if (probes.size() != samples.size()) throw std::invalid_argument("loss_gradient: one probe slot per sample required");
  for (const auto& s : samples) require_compatible(kind, s.mode);

  std::vector<LossGradient<T>> parts(samples.size());
  for_each_index(samples.size(), threads, [&](std::size_t j) {
    const BasicImage<T>* probe = probes[j].empty() ? nullptr : &probes[j];
    parts[j] = sample_loss_gradient<T>(kind, samples[j], d, with_epsilon(cfg, samples[j], epsilon), probe);
  });

  LossGradient<T> out;
  out.gradient.assign(d.num_params(), T(0));
  for (const auto& p : parts) {
    out.loss += p.loss;
    for (std::size_t k = 0; k < out.gradient.size(); ++k) out.gradient[k] += p.gradient[k];
  }
  const double inv = 1.0 / static_cast<double>(samples.size());
  out.loss *= inv;
  for (auto& g : out.gradient) g *= static_cast<T>(inv);
  return out;
}

template <std::floating_point T>
double batch_loss(LossKind kind, const std::vector<PairedSample>& samples, const Denoiser<T>& d,
                  const EstimatorConfig& cfg, const std::vector<BasicImage<T>>& probes, const EpsilonPolicy* epsilon) {
  if (samples.empty()) throw std::invalid_argument("batch_loss: empty batch");
  if (probes.size() != samples.size()) throw std::invalid_argument("batch_loss: one probe slot per sample required");
  double acc = 0;
  for (std::size_t j = 0; j < samples.size(); ++j) {
    const BasicImage<T>* probe = probes[j].empty() ? nullptr : &probes[j];
    acc += sample_loss<T>(kind, samples[j], d, with_epsilon(cfg, samples[j], epsilon), probe);
  }
  return acc / static_cast<double>(samples.size());
}

template <std::floating_point T>
ParamGradient<T> loss_gradient(LossKind kind, const PatchBatch& batch, const Denoiser<T>& d,
                               const EstimatorConfig& cfg, const std::vector<BasicImage<T>>& probes) {
  return batch_loss_gradient<T>(kind, batch.patches, d, cfg, probes).gradient;
}

#define ESURE_INSTANTIATE(T)                                                                                        \
  template T mc_divergence<T>(const Denoiser<T>&, const BasicImage<T>&, T, const BasicImage<T>&);                  \
  template EstimateValue mse_loss<T>(const Denoiser<T>&, const BasicImage<T>&, const BasicImage<T>&);              \
  template EstimateValue n2n_loss<T>(const Denoiser<T>&, const BasicImage<T>&, const BasicImage<T>&);              \
  template EstimateValue sure_loss<T>(const Denoiser<T>&, const BasicImage<T>&, double, const EstimatorConfig&,    \
                                      const BasicImage<T>*);                                                        \
  template EstimateValue sure_loss<T>(const Denoiser<T>&, const BasicImage<T>&, double, const EstimatorConfig&,    \
                                      RngStream&);                                                                  \
  template EstimateValue esure_loss<T>(const PairedSample&, const Denoiser<T>&, const EstimatorConfig&,            \
                                       const BasicImage<T>*);                                                       \
  template EstimateValue esure_loss<T>(const PairedSample&, const Denoiser<T>&, const EstimatorConfig&, RngStream&); \
  template double sample_loss<T>(LossKind, const PairedSample&, const Denoiser<T>&, const EstimatorConfig&,        \
                                 const BasicImage<T>*);                                                             \
  template LossGradient<T> sample_loss_gradient<T>(LossKind, const PairedSample&, const Denoiser<T>&,               \
                                                   const EstimatorConfig&, const BasicImage<T>*);                   \
  template std::vector<BasicImage<T>> draw_probes<T>(LossKind, const std::vector<PairedSample>&,                   \
                                                     const EstimatorConfig&, const RngStream&);                     \
  template LossGradient<T> batch_loss_gradient<T>(LossKind, const std::vector<PairedSample>&, const Denoiser<T>&,  \
                                                  const EstimatorConfig&, const std::vector<BasicImage<T>>&,       \
                                                  std::size_t, const EpsilonPolicy*);                               \
  template double batch_loss<T>(LossKind, const std::vector<PairedSample>&, const Denoiser<T>&,                    \
                                const EstimatorConfig&, const std::vector<BasicImage<T>>&, const EpsilonPolicy*);  \
  template ParamGradient<T> loss_gradient<T>(LossKind, const PatchBatch&, const Denoiser<T>&,                      \
                                             const EstimatorConfig&, const std::vector<BasicImage<T>>&);

ESURE_INSTANTIATE(float)
ESURE_INSTANTIATE(double)

#undef ESURE_INSTANTIATE

}  // namespace esure
