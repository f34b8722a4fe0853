#pragma once

#include <concepts>
#include <cstdint>
#include <filesystem>
#include <optional>
#include <span>
#include <stdexcept>
#include <string>
#include <vector>

#include "esure/denoiser.hpp"
#include "esure/pairing.hpp"
#include "esure/risk.hpp"

namespace esure {

enum class Precision { f32, f64 };

std::string_view to_string(Precision p);
Precision precision_from_string(std::string_view s);

struct TrainConfig {
  LossKind loss = LossKind::esure;
  std::size_t epochs = 50;
  std::size_t batch_size = 32;
  double lr_initial = 1e-3;
  double lr_drop_factor = 0.1;
  std::size_t lr_drop_epoch = 40;
  /// epsilon = kappa * sigma with sigma in 0-255 units, converted to
  /// working units.
  double epsilon_coefficient = 1.6e-4;
  /// When positive, used for every sample instead of the rule above.
  double epsilon_fixed = 0.0;
  DivergenceMode divergence = DivergenceMode::monte_carlo;
  std::uint64_t global_seed = 0;
  Precision precision = Precision::f64;
  std::size_t threads = 1;

  void validate() const;
  [[nodiscard]] double lr_for_epoch(std::size_t epoch) const;
};

/// MC step size for noise level `sigma_255` (0-255 units), in working units.
double epsilon_rule(double sigma_255, double kappa);

template <std::floating_point T>
struct OptimizerState {
  std::vector<T> first_moment;
  std::vector<T> second_moment;
  std::uint64_t step = 0;
  double beta1 = 0.9;
  double beta2 = 0.999;
  double stabilizer = 1e-8;

  explicit OptimizerState(std::size_t n = 0) : first_moment(n, T(0)), second_moment(n, T(0)) {}
};

/// Bias-corrected Adam update, in place. Increments state.step.
template <std::floating_point T>
void adam_step(std::span<T> params, std::span<const T> grad, OptimizerState<T>& state, double lr);

struct EpochRecord {
  std::size_t epoch = 0;
  std::size_t step = 0;  // optimizer steps completed at the end of the epoch
  double lr = 0.0;
  double mean_loss = 0.0;
  std::optional<double> val_psnr;
  double wall_ms = 0.0;
};

struct TrainingLog {
  std::vector<EpochRecord> epochs;
  std::string header_comment;  // optimizer hyperparameters and seed

  void write_csv(const std::filesystem::path& path) const;
};

class TrainingDiverged : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

struct TrainingData {
  PatchBatch train;
  /// Optional clean-target pairs (noisy input, clean target) for validation PSNR.
  std::vector<PairedSample> validation;
};

/// Checks the regime of every training sample against the loss before any
/// step is taken.
void check_regime(LossKind loss, const PatchBatch& batch);

/// Minibatch Adam training. Deterministic given config.global_seed: the
/// epoch shuffle comes from ("shuffle", epoch) and the MC probes from
/// ("probe", step). Zero epochs returns `d` unchanged.
template <std::floating_point T>
Denoiser<T> train(const TrainConfig& config, const TrainingData& data, Denoiser<T> d, TrainingLog* log = nullptr);

/// Mean PSNR of `d` over clean-target pairs.
template <std::floating_point T>
double mean_psnr(const Denoiser<T>& d, const std::vector<PairedSample>& pairs, double peak = 1.0);

/// Fisher-Yates permutation of [0, n).
std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream& stream);

}  // namespace esure
