#pragma once

#include <concepts>
#include <cstddef>
#include <optional>
#include <string_view>
#include <vector>

#include "esure/denoiser.hpp"
#include "esure/image.hpp"
#include "esure/pairing.hpp"
#include "esure/rng.hpp"

namespace esure {

enum class LossKind { mse, sure, esure, n2n };
enum class DivergenceMode { analytic, monte_carlo };

std::string_view to_string(LossKind kind);
LossKind loss_kind_from_string(std::string_view s);
std::string_view to_string(DivergenceMode mode);
DivergenceMode divergence_mode_from_string(std::string_view s);

struct EstimatorConfig {
  /// Finite-difference step of the Monte-Carlo divergence, in working units.
  double epsilon = 0.0;
  DivergenceMode divergence = DivergenceMode::monte_carlo;

  void validate() const;
};

/// Per-pixel risk estimate (squared intensity units).
struct EstimateValue {
  double value = 0.0;
  LossKind kind = LossKind::mse;
  DivergenceMode divergence = DivergenceMode::analytic;
  double epsilon = 0.0;
  /// Path key of the stream the probe was drawn from, when one was drawn.
  std::optional<std::uint64_t> probe_key;
};

template <std::floating_point T>
using ParamGradient = std::vector<T>;

/// (1/eps) * probe^T (h(y + eps*probe) - h(y)). Not normalized by N.
template <std::floating_point T>
T mc_divergence(const Denoiser<T>& d, const BasicImage<T>& y, T epsilon, const BasicImage<T>& probe);

/// (1/N) ||clean - h(input)||^2.
template <std::floating_point T>
EstimateValue mse_loss(const Denoiser<T>& d, const BasicImage<T>& input, const BasicImage<T>& clean);

/// (1/N) ||target - h(input)||^2.
template <std::floating_point T>
EstimateValue n2n_loss(const Denoiser<T>& d, const BasicImage<T>& input, const BasicImage<T>& target);

/// SURE: (1/N)||y - h(y)||^2 - sigma^2 + (2 sigma^2 / N) div h(y). In
/// monte_carlo mode the divergence is estimated with `probe` (standard
/// normal, shape of y); in analytic mode `probe` is ignored and small_cnn
/// throws Unsupported.
template <std::floating_point T>
EstimateValue sure_loss(const Denoiser<T>& d, const BasicImage<T>& y, double sigma, const EstimatorConfig& cfg,
                        const BasicImage<T>* probe);

/// Same, drawing one fresh standard-normal probe from `stream`.
template <std::floating_point T>
EstimateValue sure_loss(const Denoiser<T>& d, const BasicImage<T>& y, double sigma, const EstimatorConfig& cfg,
                        RngStream& stream);

/// Extended SURE on a pair.
///  nested_target:      (1/N)||target - h(input)||^2 - s_t^2 + (2 s_t^2/N) div h(input)
///  independent_target: (1/N)||target - h(input)||^2 - s_t^2
/// with s_t = sample.sigma_target. clean_target throws std::invalid_argument.
template <std::floating_point T>
EstimateValue esure_loss(const PairedSample& sample, const Denoiser<T>& d, const EstimatorConfig& cfg,
                         const BasicImage<T>* probe);

template <std::floating_point T>
EstimateValue esure_loss(const PairedSample& sample, const Denoiser<T>& d, const EstimatorConfig& cfg,
                         RngStream& stream);

/// Scalar loss of one sample under `kind` plus its parameter gradient.
template <std::floating_point T>
struct LossGradient {
  double loss = 0.0;
  ParamGradient<T> gradient;
};

/// Checks that `kind` can be computed on samples of `mode`:
/// mse needs clean_target; n2n and esure need independent or nested
/// targets; sure reads only the input and accepts any mode.
void require_compatible(LossKind kind, TargetMode mode);

/// Whether a Monte-Carlo probe is consumed for this sample.
bool needs_probe(LossKind kind, const PairedSample& sample, const EstimatorConfig& cfg);

/// Epsilon for one sample: cfg.epsilon if positive, otherwise
/// `epsilon_per_sigma * sample.sigma_input`.
struct EpsilonPolicy {
  double fixed = 0.0;
  double per_sigma = 0.0;
  [[nodiscard]] double for_sigma(double sigma_input) const { return fixed > 0 ? fixed : per_sigma * sigma_input; }
};

/// Loss of one sample. `probe` must be non-null when needs_probe().
template <std::floating_point T>
double sample_loss(LossKind kind, const PairedSample& sample, const Denoiser<T>& d, const EstimatorConfig& cfg,
                   const BasicImage<T>* probe);

/// Loss and exact parameter gradient of one sample. The MC divergence term
/// is differentiated through both forward passes.
template <std::floating_point T>
LossGradient<T> sample_loss_gradient(LossKind kind, const PairedSample& sample, const Denoiser<T>& d,
                                     const EstimatorConfig& cfg, const BasicImage<T>* probe);

/// One standard-normal probe per sample: probe j comes from
/// stream.derive("probe", j). Entries are empty for samples that need none.
template <std::floating_point T>
std::vector<BasicImage<T>> draw_probes(LossKind kind, const std::vector<PairedSample>& samples,
                                       const EstimatorConfig& cfg, const RngStream& stream);

/// Minibatch mean loss and gradient. Per-sample work may run on `threads`
/// workers; the reduction is in sample order, so the result does not
/// depend on the thread count. `epsilon` overrides cfg.epsilon per sample
/// when set.
template <std::floating_point T>
LossGradient<T> batch_loss_gradient(LossKind kind, const std::vector<PairedSample>& samples, const Denoiser<T>& d,
                                    const EstimatorConfig& cfg, const std::vector<BasicImage<T>>& probes,
                                    std::size_t threads = 1, const EpsilonPolicy* epsilon = nullptr);

template <std::floating_point T>
double batch_loss(LossKind kind, const std::vector<PairedSample>& samples, const Denoiser<T>& d,
                  const EstimatorConfig& cfg, const std::vector<BasicImage<T>>& probes,
                  const EpsilonPolicy* epsilon = nullptr);

/// Gradient of the minibatch-mean loss over `batch`.
template <std::floating_point T>
ParamGradient<T> loss_gradient(LossKind kind, const PatchBatch& batch, const Denoiser<T>& d,
                               const EstimatorConfig& cfg, const std::vector<BasicImage<T>>& probes);

}  // namespace esure
