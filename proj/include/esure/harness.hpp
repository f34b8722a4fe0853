#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include <json.hpp>

#include "esure/dataset.hpp"
#include "esure/denoiser.hpp"
#include "esure/risk.hpp"
#include "esure/trainer.hpp"

namespace esure {

/// Schema-versioned CSV. The first line is "# schema: <schema>", the second
/// the column header. Appending to an existing file checks both lines and
/// never rewrites them.
struct CsvSchema {
  std::string schema;
  std::vector<std::string> columns;
};

class CsvSchemaMismatch : public std::runtime_error {
 public:
  using std::runtime_error::runtime_error;
};

void write_csv(const std::filesystem::path& path, const CsvSchema& schema,
               const std::vector<std::vector<std::string>>& rows, bool append = false);

/// Compact decimal form used in every CSV cell (round-trips doubles).
std::string csv_number(double v);

// ---------------------------------------------------------------------------
// Unbiasedness

struct UnbiasednessSetup {
  LossKind estimator = LossKind::sure;
  /// sure: only the input is used. esure: independent_target or
  /// nested_target. n2n: the raw pair loss read as an MSE estimate.
  TargetMode mode = TargetMode::clean_target;
  /// Input noise level (sigma_noisy for nested pairs), working units.
  double sigma = 0.1;
  double sigma_gt = 0.0;  // nested only
  AddedNoiseMode added_mode = AddedNoiseMode::total_sigma;
  EstimatorConfig estimator_config{1e-5, DivergenceMode::analytic};
  std::size_t draws = 20000;
  std::uint64_t seed = 0;
  double threshold = 4.0;
  /// Risk oracle supplied by the caller. When absent, the closed-form risk
  /// is used for linear denoisers; otherwise the empirical MSE of the same
  /// draws serves as a paired brute-force oracle.
  std::optional<double> oracle_risk;
};

struct VerificationReport {
  std::string name;
  LossKind estimator = LossKind::sure;
  TargetMode mode = TargetMode::clean_target;
  DenoiserKind denoiser = DenoiserKind::identity;
  std::size_t draws = 0;
  double mean = 0.0;
  double standard_error = 0.0;
  double oracle = 0.0;
  std::string oracle_source;  // supplied | closed_form | brute_force
  double z_score = 0.0;
  double threshold = 4.0;
  bool pass = false;
};

/// Per-pixel MSE risk E (1/N)||x - h(x + n)||^2, n ~ N(0, sigma^2 I), for
/// identity, scaling and conv_filter. Throws Unsupported otherwise.
double closed_form_risk(const Denoiser<double>& d, const Image& clean, double sigma);

/// K independent draws of the estimator, compared with the oracle risk of
/// h at the input noise level. pass <=> |z| <= threshold.
VerificationReport verify_unbiasedness(const Denoiser<double>& d, const Image& clean, const UnbiasednessSetup& setup);

/// |esure_loss(independent) - (n2n_loss - sigma_target^2)| for one sample.
double verify_identity_n2n(const Denoiser<double>& d, const PairedSample& sample);

// ---------------------------------------------------------------------------
// Gradients

struct GradientCheckSetup {
  LossKind loss = LossKind::mse;
  EstimatorConfig estimator_config{1e-5, DivergenceMode::monte_carlo};
  double fd_step = 1e-6;
  /// Coordinates compared; all of them when the denoiser has fewer.
  std::size_t max_coordinates = 200;
  std::uint64_t seed = 0;
};

struct GradientReport {
  std::size_t coordinates = 0;
  double max_abs_error = 0.0;
  double gradient_scale = 0.0;  // max |analytic gradient| over the checked coordinates
  /// max |g - fd| / max |g| over the checked coordinates; the absolute
  /// error when the gradient vanishes.
  double relative_error = 0.0;
};

/// Analytic batch gradient against central finite differences of the
/// batch loss, with the probes frozen (drawn once from seed).
GradientReport verify_gradient(const Denoiser<double>& d, const std::vector<PairedSample>& batch,
                               const GradientCheckSetup& setup);

// ---------------------------------------------------------------------------
// Evaluation

struct PsnrReport {
  std::vector<double> per_image;
  double mean = 0.0;
  double stddev = 0.0;  // population standard deviation over images
};

/// Denoises the clean-target pairs and scores against the clean images.
template <std::floating_point T>
PsnrReport evaluate_psnr(const Denoiser<T>& d, const std::vector<PairedSample>& test_set, double peak = 1.0);

/// Noisy instances from (eval_seed, "eval-noise", i), then evaluate_psnr.
PsnrReport evaluate_psnr(const Denoiser<double>& d, const std::vector<Image>& cleans, double sigma,
                         std::uint64_t eval_seed);

// ---------------------------------------------------------------------------
// Campaigns

enum class Campaign { uncorrelated_pairs, imperfect_gt_sweep };

std::string_view to_string(Campaign c);
Campaign campaign_from_string(std::string_view s);

/// Trainer settings for campaigns: twice the trainer's default schedule, and
/// epsilon = 1.6e-4 * sigma_255 in [0,1] intensity units (kappa = 1.6e-4 * 255).
/// The smaller epsilon of the trainer default makes the finite-difference
/// divergence gradient too noisy for the desk-scale step budget.
TrainConfig campaign_train_defaults();

struct ExperimentConfig {
  Campaign campaign = Campaign::uncorrelated_pairs;
  std::vector<Method> methods;
  double sigma_noisy_255 = 25.0;
  std::vector<double> sigma_gt_255{1.0, 5.0, 10.0};  // imperfect_gt_sweep only
  AddedNoiseMode added_mode = AddedNoiseMode::total_sigma;
  std::optional<std::filesystem::path> corpus_dir;
  std::size_t train_images = 20;
  std::size_t test_images = 8;
  std::size_t image_size = 128;
  PatchOptions patches{};
  DenoiserConfig denoiser{.kind = DenoiserKind::small_cnn};
  TrainConfig train = campaign_train_defaults();
  std::uint64_t eval_seed = 1;

  void validate() const;
  static ExperimentConfig from_json(const nlohmann::json& j);
  [[nodiscard]] nlohmann::json to_json() const;
};

struct ExperimentRow {
  Method method = Method::mse;
  Regime regime = Regime::uncorrelated_pair;
  double sigma_noisy_255 = 0.0;
  double sigma_gt_255 = 0.0;
  double psnr_mean_db = 0.0;
  double psnr_std_db = 0.0;
  std::uint64_t seed = 0;
  std::string config_digest;
  double wall_seconds = 0.0;
};

struct ExperimentResult {
  std::string corpus;
  std::vector<ExperimentRow> rows;
  bool complete = false;
  std::string error;

  [[nodiscard]] std::optional<double> psnr(Method m, double sigma_gt_255 = 0.0) const;
};

extern const CsvSchema kMetricsSchema;

/// Writes metrics.csv (and plot.csv for sweeps) into `out_dir` as rows
/// complete. A failing member aborts the campaign; the rows finished so far
/// stay on disk and the error is returned in the result.
ExperimentResult run_experiment(const ExperimentConfig& config, std::uint64_t seed,
                                const std::optional<std::filesystem::path>& out_dir, bool verbose = false);

void write_metrics_csv(const std::filesystem::path& path, const std::vector<ExperimentRow>& rows, bool append);

/// x = sigma_gt_255, one PSNR column per method in config order.
void write_plot_csv(const std::filesystem::path& path, const ExperimentConfig& config,
                    const std::vector<ExperimentRow>& rows);

}  // namespace esure
