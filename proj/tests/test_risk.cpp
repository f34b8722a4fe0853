#include <doctest.h>

#include <cmath>

#include "esure/risk.hpp"
#include "support.hpp"

using namespace esure;

namespace {

Denoiser<double> scaling(double a) {
  DenoiserConfig c;
  c.kind = DenoiserKind::scaling;
  return Denoiser<double>(c, {a});
}

Denoiser<double> identity() {
  DenoiserConfig c;
  return Denoiser<double>(c, {});
}

Denoiser<double> cnn(std::uint64_t seed) {
  DenoiserConfig c;
  c.kind = DenoiserKind::small_cnn;
  c.cnn.layers = 3;
  c.cnn.features = 4;
  RngStream s(seed, "init");
  auto d = build_denoiser<double>(c, s);
  RngStream j(seed, "jitter");
  for (auto& p : d.params()) p += 0.1 * j.normal();
  return d;
}

const EstimatorConfig kAnalytic{0.0, DivergenceMode::analytic};

}  // namespace

TEST_SUITE("risk_estimators") {

TEST_CASE("mse_loss") {
  const Image x = test::row({3, 4});
  CHECK(mse_loss(identity(), x, x).value == 0.0);
  CHECK(mse_loss(scaling(0.0), x, x).value == doctest::Approx(12.5));
  CHECK(mse_loss(scaling(0.5), x, x).value == doctest::Approx(0.25 * 25 / 2));
}

TEST_CASE("sure_loss direct evaluation") {
  RngStream n(1, "y");
  const Image y = gaussian_field(n, Shape{5, 5, 1}, 1.0);
  CHECK(sure_loss(identity(), y, 0.1, kAnalytic, static_cast<const Image*>(nullptr)).value ==
        doctest::Approx(0.01).epsilon(1e-14));
  CHECK(sure_loss(scaling(0.5), test::row({2, 2}), 1.0, kAnalytic, static_cast<const Image*>(nullptr)).value ==
        doctest::Approx(1.0));
}

TEST_CASE("sure_loss needs a probe in Monte-Carlo mode") {
  const EstimatorConfig mc{1e-4, DivergenceMode::monte_carlo};
  CHECK_THROWS(sure_loss(scaling(0.5), test::row({2, 2}), 1.0, mc, static_cast<const Image*>(nullptr)));
  RngStream s(3, "probe");
  const auto v = sure_loss(scaling(0.5), test::row({2, 2}), 1.0, mc, s);
  CHECK(v.probe_key.has_value());
  CHECK(std::isfinite(v.value));
  CHECK_THROWS_AS(sure_loss(cnn(1), test::row({2, 2}), 1.0, kAnalytic, static_cast<const Image*>(nullptr)),
                  Unsupported);
}

TEST_CASE("mc_divergence of linear maps") {
  const Image probe = test::row({1, -1});
  const Image y = test::row({0.3, 0.9});
  for (double eps : {1e-6, 1e-2, 1.0})
    CHECK(mc_divergence(scaling(0.7), y, eps, probe) == doctest::Approx(1.4).epsilon(1e-9));
  RngStream n(2, "p");
  const Image p = gaussian_field(n, Shape{4, 4, 1}, 1.0);
  CHECK(mc_divergence(identity(), p, 1e-3, p) == doctest::Approx(squared_norm(p)).epsilon(1e-10));
}

TEST_CASE("mc_divergence of a conv filter averages to N times the centre tap") {
  DenoiserConfig c;
  c.kind = DenoiserKind::conv_filter;
  RngStream k(4, "kernel");
  std::vector<double> w(9);
  for (auto& v : w) v = k.normal() * 0.3;
  w[4] = 0.6;
  const Denoiser<double> d(c, w);
  const Image y = test::constant(32, 32, 0.5);
  double acc = 0;
  for (std::uint64_t r = 0; r < 100; ++r) {
    RngStream s(5, "probe", r);
    acc += mc_divergence(d, y, 1e-5, gaussian_field(s, y.shape(), 1.0)) / static_cast<double>(y.size());
  }
  CHECK(acc / 100 == doctest::Approx(0.6).epsilon(0.02));
}

TEST_CASE("esure_loss direct evaluation") {
  PairedSample s{test::row({1.2, 0.8}), test::row({1, 1}), std::hypot(0.1, 0.2), 0.1, TargetMode::nested_target};
  CHECK(esure_loss(s, identity(), kAnalytic, static_cast<const Image*>(nullptr)).value == doctest::Approx(0.05));
  PairedSample clean{test::row({1}), test::row({1}), 0.1, 0.0, TargetMode::clean_target};
  CHECK_THROWS_AS(esure_loss(clean, identity(), kAnalytic, static_cast<const Image*>(nullptr)),
                  std::invalid_argument);
}

TEST_CASE("esure on independent pairs is n2n minus the target variance") {
  RngStream n(6, "x");
  const Image x = gaussian_field(n, Shape{6, 6, 1}, 0.3);
  for (std::uint64_t i = 0; i < 20; ++i) {
    const auto p = make_uncorrelated_pair(x, 0.1, RngStream(6, "pair", i));
    for (const auto& d : {identity(), scaling(0.6), cnn(3)}) {
      const double es = esure_loss(p, d, kAnalytic, static_cast<const Image*>(nullptr)).value;
      const double nn = n2n_loss(d, p.input, p.target).value;
      CHECK(std::abs(es - (nn - 0.01)) <= 1e-12);
    }
  }
  const auto p0 = make_uncorrelated_pair(x, 0.0, RngStream(6, "pair"));
  CHECK(esure_loss(p0, scaling(0.5), kAnalytic, static_cast<const Image*>(nullptr)).value ==
        n2n_loss(scaling(0.5), p0.input, p0.target).value);
}

TEST_CASE("n2n_loss") {
  CHECK(n2n_loss(identity(), test::row({1, 0}), test::row({0, 1})).value == doctest::Approx(1.0));
  CHECK(n2n_loss(identity(), test::row({1, 0}), test::row({1, 0})).value == 0.0);
}

TEST_CASE("n2n on nested pairs is biased by sigma_gt^2 (1 - 2a)") {
  RngStream n(7, "x");
  Image x(Shape{16, 16, 1});
  for (auto& v : x.data()) v = n.uniform(0.0, 0.4);
  const double S = squared_norm(x) / static_cast<double>(x.size());
  const double sg = 10.0 / 255, sn = 25.0 / 255, a = 0.8;
  const auto d = scaling(a);
  const std::size_t K = 20000;
  double mean = 0, m2 = 0;
  for (std::size_t k = 0; k < K; ++k) {
    const auto p = make_imperfect_gt_pair(x, sg, sn, RngStream(8, "pair", k));
    const double v = n2n_loss(d, p.input, p.target).value;
    const double delta = v - mean;
    mean += delta / static_cast<double>(k + 1);
    m2 += delta * (v - mean);
  }
  const double se = std::sqrt(m2 / (K - 1) / K);
  const double risk = (1 - a) * (1 - a) * S + a * a * sn * sn;
  const double predicted = risk + sg * sg * (1 - 2 * a);
  CHECK(std::abs(mean - predicted) <= 4 * se);
  CHECK(std::abs(mean - risk) > 4 * se);
}

TEST_CASE("loss_gradient by hand") {
  PatchBatch b{{PairedSample{test::row({2, 2}), test::row({2, 2}), 1.0, 0.0, TargetMode::clean_target}}, 1};
  const auto g = loss_gradient<double>(LossKind::sure, b, scaling(0.5), kAnalytic, {Image()});
  REQUIRE(g.size() == 1);
  CHECK(g[0] == doctest::Approx(-2.0));
}

TEST_CASE("identity-initialized cnn has zero gradient on clean batches") {
  DenoiserConfig c;
  c.kind = DenoiserKind::small_cnn;
  c.cnn.layers = 3;
  c.cnn.features = 4;
  RngStream s(1, "init");
  const auto d = build_denoiser<double>(c, s);
  RngStream n(2, "x");
  const Image x = gaussian_field(n, Shape{6, 6, 1}, 0.3);
  const std::vector<PairedSample> batch{{x, x, 0.0, 0.0, TargetMode::clean_target}};
  const auto lg = batch_loss_gradient<double>(LossKind::mse, batch, d, kAnalytic, {Image()});
  CHECK(lg.loss == 0.0);
  for (double v : lg.gradient) CHECK(v == 0.0);
}

TEST_CASE("gradients match finite differences with frozen probes") {
  RngStream n(9, "x");
  const Image x = gaussian_field(n, Shape{6, 6, 1}, 0.3);
  const double sigma = 0.1;
  const EstimatorConfig mc{1.6e-4 * sigma, DivergenceMode::monte_carlo};
  const auto nested = make_imperfect_gt_pair(x, 0.04, sigma, RngStream(9, "n"));
  const auto indep = make_uncorrelated_pair(x, sigma, RngStream(9, "i"));
  auto s1 = RngStream(9, "s");
  const PairedSample single{synth_noisy(x, sigma, s1), x, sigma, 0.0, TargetMode::clean_target};
  const auto d = cnn(12);
  struct Case {
    LossKind loss;
    PairedSample sample;
  };
  for (const auto& cs : {Case{LossKind::mse, single}, Case{LossKind::sure, single}, Case{LossKind::esure, nested},
                         Case{LossKind::n2n, indep}}) {
    const std::vector<PairedSample> batch{cs.sample};
    const auto probes = draw_probes<double>(cs.loss, batch, mc, RngStream(10, "probes"));
    const auto g = batch_loss_gradient<double>(cs.loss, batch, d, mc, probes).gradient;
    double worst = 0, scale = 0;
    for (std::size_t i = 0; i < d.num_params(); i += 7) {
      Denoiser<double> q = d;
      const double h = 1e-6;
      q.params()[i] += h;
      const double up = batch_loss<double>(cs.loss, batch, q, mc, probes);
      q.params()[i] -= 2 * h;
      const double dn = batch_loss<double>(cs.loss, batch, q, mc, probes);
      worst = std::max(worst, std::abs((up - dn) / (2 * h) - g[i]));
      scale = std::max(scale, std::abs(g[i]));
    }
    INFO(to_string(cs.loss));
    CHECK(worst / scale <= 1e-4);
  }
}

TEST_CASE("batch gradient does not depend on the thread count") {
  RngStream n(11, "x");
  std::vector<PairedSample> batch;
  for (std::uint64_t i = 0; i < 5; ++i) {
    const Image x = gaussian_field(n, Shape{8, 8, 1}, 0.3);
    batch.push_back(make_imperfect_gt_pair(x, 0.03, 0.1, RngStream(11, "p", i)));
  }
  const EstimatorConfig mc{1.6e-5, DivergenceMode::monte_carlo};
  const auto d = cnn(13);
  const auto probes = draw_probes<double>(LossKind::esure, batch, mc, RngStream(11, "probes"));
  const auto a = batch_loss_gradient<double>(LossKind::esure, batch, d, mc, probes, 1);
  const auto b = batch_loss_gradient<double>(LossKind::esure, batch, d, mc, probes, 3);
  CHECK(a.loss == b.loss);
  CHECK(a.gradient == b.gradient);
}

TEST_CASE("regime compatibility") {
  CHECK_THROWS(require_compatible(LossKind::mse, TargetMode::nested_target));
  CHECK_THROWS(require_compatible(LossKind::n2n, TargetMode::clean_target));
  CHECK_THROWS(require_compatible(LossKind::esure, TargetMode::clean_target));
  CHECK_NOTHROW(require_compatible(LossKind::sure, TargetMode::nested_target));
  CHECK_NOTHROW(require_compatible(LossKind::esure, TargetMode::independent_target));
  CHECK(loss_kind_from_string("eSURE") == LossKind::esure);
  CHECK(divergence_mode_from_string("mc") == DivergenceMode::monte_carlo);
}

TEST_CASE("estimator config validation") {
  CHECK_THROWS(EstimatorConfig{0.0, DivergenceMode::monte_carlo}.validate());
  CHECK_NOTHROW(EstimatorConfig{0.0, DivergenceMode::analytic}.validate());
  CHECK_THROWS(EstimatorConfig{-1.0, DivergenceMode::analytic}.validate());
}

}  // TEST_SUITE
