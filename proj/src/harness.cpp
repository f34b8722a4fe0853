#include "esure/harness.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <numeric>

namespace esure {

std::string csv_number(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[32];
  const auto r = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, r.ptr);
}

namespace {

std::string join(const std::vector<std::string>& cells) {
  std::string s;
  for (std::size_t i = 0; i < cells.size(); ++i) {
    if (i) s += ',';
    s += cells[i];
  }
  return s;
}

}  // namespace

void write_csv(const std::filesystem::path& path, const CsvSchema& schema,
               const std::vector<std::vector<std::string>>& rows, bool append) {
  const std::string schema_line = "# schema: " + schema.schema;
  const std::string header = join(schema.columns);
  bool fresh = true;
  if (append && std::filesystem::exists(path) && std::filesystem::file_size(path) > 0) {
    std::ifstream is(path);
    std::string l1, l2;
    std::getline(is, l1);
    std::getline(is, l2);
    if (l1 != schema_line || l2 != header)
      throw CsvSchemaMismatch("cannot append to " + path.string() + ": schema or header differs");
    fresh = false;
  }
  std::ofstream os(path, append && !fresh ? std::ios::app : std::ios::trunc);
  if (!os) throw std::runtime_error("cannot write " + path.string());
  if (fresh) os << schema_line << '\n' << header << '\n';
  for (const auto& r : rows) {
    if (r.size() != schema.columns.size()) throw std::invalid_argument("csv row width does not match the header");
    os << join(r) << '\n';
  }
  if (!os) throw std::runtime_error("write failed: " + path.string());
}

double closed_form_risk(const Denoiser<double>& d, const Image& clean, double sigma) {
  const double n = static_cast<double>(clean.size());
  const double s2 = sigma * sigma;
  switch (d.kind()) {
    case DenoiserKind::identity: return s2;
    case DenoiserKind::scaling: {
      const double a = d.params()[0];
      return (1 - a) * (1 - a) * squared_norm(clean) / n + a * a * s2;
    }
    case DenoiserKind::conv_filter: {
      const double bias = mean_squared_difference(clean, d.forward(clean));
      // Squared Frobenius norm of the zero-padded filter matrix.
      const auto k = static_cast<std::ptrdiff_t>(d.config().kernel_size);
      const std::ptrdiff_t r = k / 2;
      const auto H = static_cast<std::ptrdiff_t>(clean.height()), W = static_cast<std::ptrdiff_t>(clean.width());
      const auto w = d.params();
      double frob = 0;
      for (std::ptrdiff_t i = 0; i < H; ++i)
        for (std::ptrdiff_t j = 0; j < W; ++j)
          for (std::ptrdiff_t di = -r; di <= r; ++di)
            for (std::ptrdiff_t dj = -r; dj <= r; ++dj)
              if (i + di >= 0 && i + di < H && j + dj >= 0 && j + dj < W) {
                const double t = w[static_cast<std::size_t>((di + r) * k + dj + r)];
                frob += t * t;
              }
      frob *= static_cast<double>(clean.channels());
      return bias + s2 * frob / n;
    }
    default: throw Unsupported("closed_form_risk: no closed form for " + std::string(to_string(d.kind())));
  }
}

namespace {

PairedSample verification_draw(const Image& clean, const UnbiasednessSetup& s, const RngStream& stream) {
  switch (s.mode) {
    case TargetMode::clean_target: {
      auto ns = stream.derive("noise");
      return PairedSample{synth_noisy(clean, s.sigma, ns), clean, s.sigma, 0.0, TargetMode::clean_target};
    }
    case TargetMode::independent_target: return make_uncorrelated_pair(clean, s.sigma, stream.derive("pair"));
    case TargetMode::nested_target:
      return make_imperfect_gt_pair(clean, s.sigma_gt, s.sigma, stream.derive("pair"), s.added_mode);
  }
  throw std::logic_error("unreachable");
}

}  // namespace

VerificationReport verify_unbiasedness(const Denoiser<double>& d, const Image& clean, const UnbiasednessSetup& s) {
  if (s.draws < 2) throw std::invalid_argument("verify_unbiasedness: need at least two draws");
  if (s.estimator == LossKind::mse) throw std::invalid_argument("verify_unbiasedness: mse needs no verification");
  if (s.estimator != LossKind::sure) require_compatible(s.estimator, s.mode);
  s.estimator_config.validate();

  VerificationReport rep;
  rep.estimator = s.estimator;
  rep.mode = s.mode;
  rep.denoiser = d.kind();
  rep.draws = s.draws;
  rep.threshold = s.threshold;
  rep.name = std::string(to_string(s.estimator)) + "/" + std::string(to_string(s.mode)) + "/" +
             std::string(to_string(d.kind()));

  // Input noise level of the draws, for the closed-form oracle.
  const double sigma_input =
      s.mode == TargetMode::nested_target
          ? std::hypot(s.sigma_gt, added_noise_sigma(s.sigma_gt, s.sigma, s.added_mode))
          : s.sigma;

  bool paired = false;
  if (s.oracle_risk) {
    rep.oracle = *s.oracle_risk;
    rep.oracle_source = "supplied";
  } else {
    try {
      rep.oracle = closed_form_risk(d, clean, sigma_input);
      rep.oracle_source = "closed_form";
    } catch (const Unsupported&) {
      paired = true;
      rep.oracle_source = "brute_force";
    }
  }

  // Welford over the estimator (or estimator minus empirical MSE when paired).
  double mean = 0, m2 = 0, mse_mean = 0;
  for (std::size_t k = 0; k < s.draws; ++k) {
    const RngStream draw(s.seed, "verify-draw", k);
    const PairedSample sample = verification_draw(clean, s, draw);
    Image probe;
    if (needs_probe(s.estimator, sample, s.estimator_config)) {
      auto ps = draw.derive("probe");
      probe = gaussian_field(ps, sample.input.shape(), 1.0);
    }
    double v = sample_loss<double>(s.estimator, sample, d, s.estimator_config, &probe);
    if (paired) {
      const double mse = mean_squared_difference(clean, d.forward(sample.input));
      mse_mean += (mse - mse_mean) / static_cast<double>(k + 1);
      v -= mse;
    }
    const double delta = v - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (v - mean);
  }
  const double K = static_cast<double>(s.draws);
  const double se = std::sqrt(m2 / (K - 1) / K);
  if (paired) {
    rep.oracle = mse_mean;
    rep.mean = mean + mse_mean;
  } else {
    rep.mean = mean;
  }
  rep.standard_error = se;
  const double diff = paired ? mean : rep.mean - rep.oracle;
  if (se > 1e-15 * std::max(1.0, std::abs(rep.oracle))) {
    rep.z_score = diff / se;
  } else {
    // Deterministic estimator (e.g. SURE of the identity map).
    rep.z_score = std::abs(diff) <= 1e-12 * std::max(1.0, std::abs(rep.oracle))
                      ? 0.0
                      : std::copysign(std::numeric_limits<double>::infinity(), diff);
  }
  rep.pass = std::abs(rep.z_score) <= s.threshold;
  return rep;
}

double verify_identity_n2n(const Denoiser<double>& d, const PairedSample& sample) {
  if (sample.mode != TargetMode::independent_target)
    throw std::invalid_argument("verify_identity_n2n: needs an independent_target sample");
  const EstimatorConfig cfg{0.0, DivergenceMode::analytic};
  const double es = esure_loss<double>(sample, d, cfg, nullptr).value;
  const double n2n = n2n_loss<double>(d, sample.input, sample.target).value;
  return std::abs(es - (n2n - sample.sigma_target * sample.sigma_target));
}

GradientReport verify_gradient(const Denoiser<double>& d, const std::vector<PairedSample>& batch,
                               const GradientCheckSetup& s) {
  if (batch.empty()) throw std::invalid_argument("verify_gradient: empty batch");
  if (!(s.fd_step > 0)) throw std::invalid_argument("verify_gradient: fd_step must be positive");
  const RngStream root(s.seed, "gradient-check");
  const auto probes = draw_probes<double>(s.loss, batch, s.estimator_config, root.derive("probes"));
  const auto analytic = batch_loss_gradient<double>(s.loss, batch, d, s.estimator_config, probes).gradient;

  const std::size_t P = d.num_params();
  std::vector<std::size_t> coords(P);
  std::iota(coords.begin(), coords.end(), std::size_t{0});
  if (P > s.max_coordinates) {
    auto cs = root.derive("coordinates");
    for (std::size_t i = 0; i < s.max_coordinates; ++i) std::swap(coords[i], coords[i + cs.below(P - i)]);
    coords.resize(s.max_coordinates);
    std::sort(coords.begin(), coords.end());
  }

  GradientReport rep;
  rep.coordinates = coords.size();
  Denoiser<double> probe_d = d;
  for (const std::size_t c : coords) {
    const double theta = d.params()[c];
    probe_d.params()[c] = theta + s.fd_step;
    const double up = batch_loss<double>(s.loss, batch, probe_d, s.estimator_config, probes);
    probe_d.params()[c] = theta - s.fd_step;
    const double dn = batch_loss<double>(s.loss, batch, probe_d, s.estimator_config, probes);
    probe_d.params()[c] = theta;
    const double fd = (up - dn) / (2 * s.fd_step);
    rep.max_abs_error = std::max(rep.max_abs_error, std::abs(fd - analytic[c]));
    rep.gradient_scale = std::max(rep.gradient_scale, std::abs(analytic[c]));
  }
  rep.relative_error = rep.gradient_scale > 0 ? rep.max_abs_error / rep.gradient_scale : rep.max_abs_error;
  return rep;
}

template <std::floating_point T>
PsnrReport evaluate_psnr(const Denoiser<T>& d, const std::vector<PairedSample>& test_set, double peak) {
  if (test_set.empty()) throw std::invalid_argument("evaluate_psnr: empty test set");
  PsnrReport rep;
  for (const auto& p : test_set) {
    const Image out = image_cast<double>(d.forward(image_cast<T>(p.input)));
    rep.per_image.push_back(psnr(p.target, out, peak));
  }
  const double n = static_cast<double>(rep.per_image.size());
  rep.mean = std::accumulate(rep.per_image.begin(), rep.per_image.end(), 0.0) / n;
  double var = 0;
  for (double v : rep.per_image) var += (v - rep.mean) * (v - rep.mean);
  rep.stddev = std::sqrt(var / n);
  return rep;
}

PsnrReport evaluate_psnr(const Denoiser<double>& d, const std::vector<Image>& cleans, double sigma,
                         std::uint64_t eval_seed) {
  return evaluate_psnr<double>(d, make_test_set(cleans, sigma, eval_seed));
}

template PsnrReport evaluate_psnr<float>(const Denoiser<float>&, const std::vector<PairedSample>&, double);
template PsnrReport evaluate_psnr<double>(const Denoiser<double>&, const std::vector<PairedSample>&, double);

}  // namespace esure
