// Acceptance checks. One line per criterion:
//   criterion N: PASS|FAIL  <what>  <measurements>
// With no arguments every criterion runs; otherwise only the listed ones.
#include <chrono>
#include <cmath>
#include <cstdlib>
#include <fstream>
#include <functional>
#include <iostream>
#include <map>
#include <sstream>
#include <string>
#include <vector>

#include "esure/harness.hpp"

using namespace esure;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Outcome {
  bool pass = false;
  std::string detail;
};

std::string fmt(double v, int prec = 6) {
  std::ostringstream os;
  os.precision(prec);
  os << v;
  return os.str();
}

// ---------------------------------------------------------------------------
// Fixtures

Image test_image(std::size_t size, std::uint64_t seed) {
  RngStream s(seed, "acceptance-image");
  return synthetic_texture(size, s);
}

Denoiser<double> scaling(double a) {
  DenoiserConfig c;
  c.kind = DenoiserKind::scaling;
  return Denoiser<double>(c, {a});
}

Denoiser<double> identity() { return Denoiser<double>(DenoiserConfig{}, {}); }

// A mild, asymmetric smoothing kernel.
Denoiser<double> conv() {
  DenoiserConfig c;
  c.kind = DenoiserKind::conv_filter;
  return Denoiser<double>(c, {0.02, 0.08, 0.03, 0.12, 0.45, 0.10, 0.04, 0.09, 0.05});
}

Denoiser<double> soft(double t) {
  DenoiserConfig c;
  c.kind = DenoiserKind::soft_threshold;
  c.threshold = t;
  return Denoiser<double>(c, {t});
}

Denoiser<double> cnn(std::size_t layers, std::size_t features, std::uint64_t seed, double jitter) {
  DenoiserConfig c;
  c.kind = DenoiserKind::small_cnn;
  c.cnn.layers = layers;
  c.cnn.features = features;
  RngStream init(seed, "init");
  auto d = build_denoiser<double>(c, init);
  RngStream j(seed, "acceptance-jitter");
  for (auto& p : d.params()) p += jitter * j.normal();
  return d;
}

// ---------------------------------------------------------------------------
// Risk oracles, computed directly from the denoiser's input-output map.

double mean_sq(const Image& x) { return squared_norm(x) / static_cast<double>(x.size()); }

// h linear: E (1/N)||x - H(x+n)||^2 = (1/N)||x - Hx||^2 + sigma^2 ||H||_F^2 / N.
// H is recovered column by column from unit impulses.
double linear_risk(const Denoiser<double>& d, const Image& x, double sigma) {
  const double n = static_cast<double>(x.size());
  double frob = 0;
  Image e(x.shape());
  for (std::size_t i = 0; i < x.size(); ++i) {
    e[i] = 1.0;
    const Image col = d.forward(e);
    frob += squared_norm(col);
    e[i] = 0.0;
  }
  return mean_squared_difference(x, d.forward(x)) + sigma * sigma * frob / n;
}

// Soft threshold acts per pixel: integrate (x - st(x + s z))^2 against the
// standard normal density with composite Simpson on [-10, 10].
double soft_threshold_risk(double t, const Image& x, double sigma) {
  const int m = 4000;
  const double lo = -10, hi = 10, h = (hi - lo) / m;
  const double inv_sqrt_2pi = 1.0 / std::sqrt(2 * std::acos(-1.0));
  double total = 0;
  for (double xv : x.data()) {
    double acc = 0;
    for (int k = 0; k <= m; ++k) {
      const double z = lo + k * h;
      const double y = xv + sigma * z;
      const double st = y > t ? y - t : (y < -t ? y + t : 0.0);
      const double w = (k == 0 || k == m) ? 1 : (k % 2 ? 4 : 2);
      acc += w * (xv - st) * (xv - st) * inv_sqrt_2pi * std::exp(-0.5 * z * z);
    }
    total += acc * h / 3;
  }
  return total / static_cast<double>(x.size());
}

struct NamedDenoiser {
  std::string name;
  Denoiser<double> d;
  std::function<double(const Image&, double)> risk;
};

std::vector<NamedDenoiser> unbiasedness_family() {
  std::vector<NamedDenoiser> v;
  for (double a : {0.3, 0.5, 0.7})
    v.push_back({"scaling(" + fmt(a) + ")", scaling(a),
                 [a](const Image& x, double s) { return (1 - a) * (1 - a) * mean_sq(x) + a * a * s * s; }});
  const auto c = conv();
  v.push_back({"conv_filter", c, [c](const Image& x, double s) { return linear_risk(c, x, s); }});
  v.push_back({"soft_threshold(0.1)", soft(0.1), [](const Image& x, double s) { return soft_threshold_risk(0.1, x, s); }});
  v.push_back({"identity", identity(), [](const Image&, double s) { return s * s; }});
  return v;
}

// ---------------------------------------------------------------------------

Outcome unbiasedness(LossKind estimator, TargetMode mode, double sigma, double sigma_gt, double threshold,
                     double time_limit) {
  const Image x = test_image(32, 11);
  Outcome o{true, ""};
  for (auto& nd : unbiasedness_family()) {
    const auto t0 = Clock::now();
    UnbiasednessSetup s;
    s.estimator = estimator;
    s.mode = mode;
    s.sigma = sigma;
    s.sigma_gt = sigma_gt;
    s.estimator_config = {0.0, DivergenceMode::analytic};
    s.draws = 20000;
    s.seed = 2024;
    s.threshold = threshold;
    s.oracle_risk = nd.risk(x, sigma);
    const auto r = verify_unbiasedness(nd.d, x, s);
    const double secs = seconds_since(t0);
    const bool ok = r.pass && std::abs(r.mean - *s.oracle_risk) <= threshold * r.standard_error && secs <= time_limit;
    o.pass = o.pass && ok;
    o.detail += "\n    " + nd.name + ": mean=" + fmt(r.mean, 8) + " oracle=" + fmt(*s.oracle_risk, 8) +
                " se=" + fmt(r.standard_error, 3) + " z=" + fmt(r.z_score, 3) + " t=" + fmt(secs, 3) + "s" +
                (ok ? "" : "  <-- fail");
  }
  return o;
}

Outcome criterion1() { return unbiasedness(LossKind::sure, TargetMode::clean_target, 0.1, 0.0, 3.0, 60.0); }

Outcome criterion2() {
  return unbiasedness(LossKind::esure, TargetMode::nested_target, 25.0 / 255, 10.0 / 255, 4.0, 60.0);
}

Outcome criterion3() {
  const Image x = test_image(32, 12);
  auto sc = scaling(0.63);
  auto cv = conv();
  auto st = soft(0.07);
  auto net = cnn(3, 8, 5, 0.05);
  const std::vector<std::pair<std::string, Denoiser<double>*>> kinds{
      {"scaling", &sc}, {"conv_filter", &cv}, {"soft_threshold", &st}, {"small_cnn", &net}};
  const EstimatorConfig cfg{0.0, DivergenceMode::analytic};
  double worst = 0;
  for (std::uint64_t i = 0; i < 100; ++i) {
    const auto p = make_uncorrelated_pair(x, 0.1, RngStream(13, "identity-pair", i));
    for (const auto& [name, d] : kinds) {
      const double es = esure_loss(p, *d, cfg, static_cast<const Image*>(nullptr)).value;
      const double nn = mean_squared_difference(p.target, d->forward(p.input));
      worst = std::max(worst, std::abs(es - (nn - p.sigma_target * p.sigma_target)));
    }
  }
  return {worst <= 1e-12, "max |esure - (n2n - sigma_t^2)| = " + fmt(worst, 3) + " over 100 samples x 4 kinds"};
}

// Coarse grid on [0, 1.2], then a fine grid around the coarse minimizer.
double grid_argmin(const std::function<double(double)>& f) {
  double best = 0, best_v = f(0);
  for (int k = 1; k <= 120; ++k) {
    const double a = 0.01 * k, v = f(a);
    if (v < best_v) best = a, best_v = v;
  }
  const double centre = best;
  for (int k = -100; k <= 100; ++k) {
    const double a = centre + 1e-4 * k, v = f(a);
    if (v < best_v) best = a, best_v = v;
  }
  return best;
}

Outcome criterion4() {
  const auto t0 = Clock::now();
  Image x = test_image(16, 14);
  for (auto& v : x.data()) v *= 0.4;
  const double S = mean_sq(x), sg = 10.0 / 255, sn = 25.0 / 255;
  std::vector<PairedSample> pairs;
  for (std::uint64_t k = 0; k < 2000; ++k) pairs.push_back(make_imperfect_gt_pair(x, sg, sn, RngStream(15, "bias", k)));
  const EstimatorConfig cfg{0.0, DivergenceMode::analytic};
  const auto mean_loss = [&](LossKind kind, double a) {
    const auto d = scaling(a);
    double acc = 0;
    for (const auto& p : pairs)
      acc += kind == LossKind::n2n ? n2n_loss(d, p.input, p.target).value
                                   : esure_loss(p, d, cfg, static_cast<const Image*>(nullptr)).value;
    return acc / static_cast<double>(pairs.size());
  };
  const double a_n2n = grid_argmin([&](double a) { return mean_loss(LossKind::n2n, a); });
  const double a_es = grid_argmin([&](double a) { return mean_loss(LossKind::esure, a); });
  const double want_n2n = (S + sg * sg) / (S + sn * sn), want_es = S / (S + sn * sn);
  const double secs = seconds_since(t0);
  const bool ok = std::abs(a_n2n - want_n2n) <= 1e-2 && std::abs(a_es - want_es) <= 1e-2 && secs <= 120;
  return {ok, "N2N argmin " + fmt(a_n2n, 5) + " (expect " + fmt(want_n2n, 5) + "), eSURE argmin " + fmt(a_es, 5) +
                  " (expect " + fmt(want_es, 5) + "), t=" + fmt(secs, 3) + "s"};
}

Outcome criterion5() {
  const Image x = test_image(32, 16);
  const double sigma = 25.0 / 255;
  RngStream ns(16, "noise");
  const Image y = synth_noisy(x, sigma, ns);
  const double eps = epsilon_rule(25.0, 1.6e-4);
  const double n = static_cast<double>(y.size());
  struct Lin {
    std::string name;
    Denoiser<double> d;
    double div_per_pixel;  // trace of the linear map / N
  };
  const std::vector<Lin> maps{{"scaling(0.7)", scaling(0.7), 0.7}, {"conv_filter", conv(), 0.45}};
  const std::size_t reps = 400;
  Outcome o{true, ""};
  for (const auto& m : maps) {
    const auto mean_of = [&](std::size_t draws, std::uint64_t rep, std::string_view tag) {
      double acc = 0;
      const RngStream root(17, tag, rep);
      for (std::size_t k = 0; k < draws; ++k) {
        auto s = root.derive("probe", k);
        acc += mc_divergence(m.d, y, eps, gaussian_field(s, y.shape(), 1.0)) / n;
      }
      return acc / static_cast<double>(draws);
    };
    const double first = mean_of(100, 0, "mc-100");
    const double rel = std::abs(first - m.div_per_pixel) / m.div_per_pixel;
    double sq100 = 0, sq400 = 0;
    for (std::size_t r = 0; r < reps; ++r) {
      const double e100 = mean_of(100, r, "mc-100") - m.div_per_pixel;
      const double e400 = mean_of(400, r, "mc-400") - m.div_per_pixel;
      sq100 += e100 * e100;
      sq400 += e400 * e400;
    }
    const double ratio = std::sqrt(sq100 / sq400);
    const bool ok = rel <= 0.02 && ratio >= 1.6 && ratio <= 2.4;
    o.pass = o.pass && ok;
    o.detail += "\n    " + m.name + ": mean mc/N over 100 draws " + fmt(first, 6) + " vs " + fmt(m.div_per_pixel) +
                " (rel " + fmt(100 * rel, 3) + "%), rms error ratio 100/400 draws = " + fmt(ratio, 4) + " over " +
                std::to_string(reps) + " repetitions" + (ok ? "" : "  <-- fail");
  }
  return o;
}

std::vector<PairedSample> gradient_batch(LossKind loss, std::size_t size, double sigma, double sigma_gt) {
  std::vector<PairedSample> batch;
  for (std::uint64_t i = 0; i < 2; ++i) {
    const Image x = test_image(size, 20 + i);
    switch (loss) {
      case LossKind::mse:
      case LossKind::sure: {
        RngStream s(21, "grad-noise", i);
        batch.push_back({synth_noisy(x, sigma, s), x, sigma, 0.0, TargetMode::clean_target});
        break;
      }
      case LossKind::n2n: batch.push_back(make_uncorrelated_pair(x, sigma, RngStream(21, "grad-pair", i))); break;
      case LossKind::esure:
        batch.push_back(make_imperfect_gt_pair(x, sigma_gt, sigma, RngStream(21, "grad-nested", i)));
        break;
    }
  }
  return batch;
}

// Central differences of the batch loss over (a sample of) the coordinates,
// probes frozen.
double fd_relative_error(LossKind loss, const Denoiser<double>& d, const std::vector<PairedSample>& batch,
                         double fd_step, std::size_t max_coords) {
  const double sigma = batch.front().sigma_input;
  const EstimatorConfig cfg{1.6e-4 * sigma, DivergenceMode::monte_carlo};
  const auto probes = draw_probes<double>(loss, batch, cfg, RngStream(22, "frozen-probes"));
  const auto g = batch_loss_gradient<double>(loss, batch, d, cfg, probes).gradient;
  std::vector<std::size_t> coords(d.num_params());
  for (std::size_t i = 0; i < coords.size(); ++i) coords[i] = i;
  if (coords.size() > max_coords) {
    RngStream pick(22, "coords");
    for (std::size_t i = 0; i < max_coords; ++i) std::swap(coords[i], coords[i + pick.below(coords.size() - i)]);
    coords.resize(max_coords);
  }
  double err = 0, scale = 0;
  for (std::size_t i : coords) {
    Denoiser<double> q = d;
    q.params()[i] = d.params()[i] + fd_step;
    const double up = batch_loss<double>(loss, batch, q, cfg, probes);
    q.params()[i] = d.params()[i] - fd_step;
    const double dn = batch_loss<double>(loss, batch, q, cfg, probes);
    err = std::max(err, std::abs((up - dn) / (2 * fd_step) - g[i]));
    scale = std::max(scale, std::abs(g[i]));
  }
  return scale > 0 ? err / scale : err;
}

Outcome criterion6() {
  struct Case {
    std::string name;
    Denoiser<double> d;
    std::size_t size;
    double fd_step;
    double tolerance;
  };
  // Losses of the linear kinds are quadratic in the parameters, so a wide
  // step has no truncation error and keeps rounding small.
  const std::vector<Case> cases{{"scaling", scaling(0.7), 16, 1e-3, 1e-8},
                                {"conv_filter", conv(), 16, 1e-3, 1e-8},
                                {"small_cnn", cnn(7, 16, 23, 0.05), 12, 1e-6, 1e-4}};
  const double sigma = 25.0 / 255, sigma_gt = 10.0 / 255;
  Outcome o{true, ""};
  for (const auto& c : cases) {
    o.detail += "\n    " + c.name + ":";
    for (auto loss : {LossKind::mse, LossKind::sure, LossKind::n2n, LossKind::esure}) {
      const double rel = fd_relative_error(loss, c.d, gradient_batch(loss, c.size, sigma, sigma_gt), c.fd_step, 200);
      const bool ok = rel <= c.tolerance;
      o.pass = o.pass && ok;
      o.detail += " " + std::string(to_string(loss)) + "=" + fmt(rel, 3) + (ok ? "" : "(fail)");
    }
    o.detail += "  (tolerance " + fmt(c.tolerance) + ")";
  }
  return o;
}

std::filesystem::path scratch(const std::string& name) {
  const auto p = std::filesystem::temp_directory_path() / ("esure-acceptance-" + name);
  std::filesystem::remove_all(p);
  std::filesystem::create_directories(p);
  return p;
}

std::string campaign_table(const ExperimentResult& r) {
  std::string s;
  for (const auto& row : r.rows)
    s += "\n    " + std::string(to_string(row.method)) + " sigma_gt=" + fmt(row.sigma_gt_255) +
         " psnr=" + fmt(row.psnr_mean_db, 6) + " dB (" + fmt(row.wall_seconds, 4) + " s)";
  return s;
}

Outcome criterion7() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  cfg.campaign = Campaign::uncorrelated_pairs;
  cfg.methods = {Method::mse, Method::sure, Method::sure_star, Method::n2n, Method::esure};
  const auto r = run_experiment(cfg, 1, scratch("table1"), false);
  const double secs = seconds_since(t0);
  if (!r.complete) return {false, "campaign failed: " + r.error};
  const double es = *r.psnr(Method::esure), n2n = *r.psnr(Method::n2n), sure = *r.psnr(Method::sure);
  const bool ok = std::abs(es - n2n) <= 0.15 && es - sure >= 0.05 && secs <= 1800;
  return {ok, "|eSURE - N2N| = " + fmt(std::abs(es - n2n), 4) + " dB, eSURE - SURE = " + fmt(es - sure, 4) +
                  " dB, t=" + fmt(secs, 4) + "s" + campaign_table(r)};
}

Outcome criterion8() {
  const auto t0 = Clock::now();
  ExperimentConfig cfg;
  cfg.campaign = Campaign::imperfect_gt_sweep;
  cfg.methods = {Method::mse, Method::n2n, Method::esure};
  cfg.sigma_gt_255 = {1, 5, 10};
  const auto r = run_experiment(cfg, 1, scratch("table2"), false);
  const double secs = seconds_since(t0);
  if (!r.complete) return {false, "campaign failed: " + r.error};
  std::vector<double> es, nn;
  for (double g : cfg.sigma_gt_255) {
    es.push_back(*r.psnr(Method::esure, g));
    nn.push_back(*r.psnr(Method::n2n, g));
  }
  const double es_range = *std::max_element(es.begin(), es.end()) - *std::min_element(es.begin(), es.end());
  bool monotone = true;
  for (std::size_t i = 1; i < nn.size(); ++i) monotone = monotone && nn[i] <= nn[i - 1];
  const double drop = nn.front() - nn.back();
  const double gap = es.back() - nn.back();
  const bool ok = es_range <= 0.2 && monotone && drop >= 0.3 && gap >= 0.3 && secs <= 7200;
  return {ok, "eSURE range " + fmt(es_range, 4) + " dB, N2N " + (monotone ? "monotone" : "NOT monotone") +
                  " with drop " + fmt(drop, 4) + " dB, eSURE - N2N at 10 = " + fmt(gap, 4) + " dB, t=" +
                  fmt(secs, 4) + "s" + campaign_table(r)};
}

std::string slurp(const std::filesystem::path& p) {
  std::ifstream is(p, std::ios::binary);
  std::stringstream ss;
  ss << is.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& p, const std::string& s) { std::ofstream(p) << s; }

int run(const std::vector<std::string>& args) {
  std::string cmd = "\"" ESURE_CLI_PATH "\"";
  for (const auto& a : args) cmd += " \"" + a + "\"";
  cmd += " > /dev/null 2>&1";
  const int status = std::system(cmd.c_str());
  return WIFEXITED(status) ? WEXITSTATUS(status) : -1;
}

Outcome criterion9() {
  const auto dir = scratch("determinism");
  write_text(dir / "synth.json", R"({"regime":"uncorrelated_pair","sigma_255":25,"corpus":{"count":3,"size":32}})");
  write_text(dir / "train.json", R"({"manifest":"data/manifest.json","method":"eSURE",
    "denoiser":{"kind":"small_cnn","layers":4,"features":8},
    "train":{"epochs":2,"batch_size":4},"patches":{"size":16,"stride":8}})");
  write_text(dir / "experiment.json", R"({"campaign":"imperfect_gt_sweep","sigma_gt_255":[2,8],
    "corpus":{"train_images":2,"test_images":2,"image_size":32},"patches":{"size":16,"stride":16},
    "denoiser":{"kind":"small_cnn","layers":3,"features":4},"train":{"epochs":1,"batch_size":4}})");
  const std::string d = dir.string();
  std::vector<int> codes{
      run({"synth", d + "/synth.json", "--seed", "3", "--out", d + "/data"}),
      run({"train", d + "/train.json", "--seed", "4", "--out", d + "/a.ckpt"}),
      run({"train", d + "/train.json", "--seed", "4", "--out", d + "/b.ckpt"}),
      run({"experiment", d + "/experiment.json", "--seed", "5", "--out", d + "/ea"}),
      run({"experiment", d + "/experiment.json", "--seed", "5", "--out", d + "/eb"}),
  };
  for (int c : codes)
    if (c != 0) return {false, "a CLI run exited with " + std::to_string(c)};
  const std::string ca = slurp(dir / "a.ckpt"), cb = slurp(dir / "b.ckpt");
  const std::string ma = slurp(dir / "ea/metrics.csv"), mb = slurp(dir / "eb/metrics.csv");
  const std::string pa = slurp(dir / "ea/plot.csv"), pb = slurp(dir / "eb/plot.csv");
  const bool ckpt = !ca.empty() && ca == cb;
  const bool csv = !ma.empty() && ma == mb && !pa.empty() && pa == pb;
  return {ckpt && csv, std::string("checkpoints ") + (ckpt ? "bit-identical" : "DIFFER") + " (" +
                           std::to_string(ca.size()) + " bytes), experiment CSVs " + (csv ? "identical" : "DIFFER")};
}

const std::map<int, std::pair<std::string, std::function<Outcome()>>> kCriteria{
    {1, {"SURE unbiasedness (|z| <= 3, 20000 draws)", criterion1}},
    {2, {"eSURE unbiasedness on nested pairs (|z| <= 4)", criterion2}},
    {3, {"eSURE on independent pairs equals N2N minus sigma_t^2", criterion3}},
    {4, {"grid minimizers of N2N and eSURE on nested pairs", criterion4}},
    {5, {"Monte-Carlo divergence accuracy and convergence rate", criterion5}},
    {6, {"gradients against central finite differences", criterion6}},
    {7, {"uncorrelated-pair campaign", criterion7}},
    {8, {"imperfect ground-truth sweep", criterion8}},
    {9, {"determinism of train and experiment", criterion9}},
};

}  // namespace

int main(int argc, char** argv) {
  std::vector<int> selected;
  for (int i = 1; i < argc; ++i) {
    const int c = std::atoi(argv[i]);
    if (!kCriteria.count(c)) {
      std::cerr << "usage: esure_acceptance [criterion 1-9 ...]\n";
      return 2;
    }
    selected.push_back(c);
  }
  if (selected.empty())
    for (const auto& [k, v] : kCriteria) selected.push_back(k);

  bool all = true;
  for (int c : selected) {
    const auto& [what, fn] = kCriteria.at(c);
    Outcome o;
    try {
      o = fn();
    } catch (const std::exception& e) {
      o = {false, std::string("exception: ") + e.what()};
    }
    all = all && o.pass;
    std::cout << "criterion " << c << ": " << (o.pass ? "PASS" : "FAIL") << "  " << what << "  " << o.detail
              << std::endl;
  }
  return all ? 0 : 1;
}
