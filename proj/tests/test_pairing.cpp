#include <doctest.h>

#include <cmath>
#include <set>

#include "esure/pairing.hpp"
#include "support.hpp"

using namespace esure;

TEST_SUITE("pairing") {

TEST_CASE("synth_noisy") {
  const Image x = test::constant(64, 64, 0.5);
  RngStream s0(1, "a");
  CHECK(synth_noisy(x, 0.0, s0) == x);

  RngStream s(1, "a");
  const Image y = synth_noisy(x, 0.1, s);
  CHECK(std::abs(test::sample_mean(y - x)) <= 4 * 0.1 / 64);

  RngStream t(1, "b");
  const Image z = synth_noisy(x, 0.1, t);
  const double corr = test::sample_cov(y - x, z - x) / std::sqrt(test::sample_var(y - x) * test::sample_var(z - x));
  CHECK(std::abs(corr) <= 4.0 / 64);
}

TEST_CASE("uncorrelated pair") {
  const Image x = test::constant(64, 64, 0.3);
  const PairedSample zero = make_uncorrelated_pair(x, 0.0, RngStream(2, "p"));
  CHECK(zero.input == x);
  CHECK(zero.target == x);
  CHECK(zero.mode == TargetMode::independent_target);

  const double sigma = 0.1;
  const PairedSample p = make_uncorrelated_pair(x, sigma, RngStream(2, "p"));
  CHECK(p.mode == TargetMode::independent_target);
  CHECK(p.sigma_input == sigma);
  CHECK(p.sigma_target == sigma);
  CHECK(std::abs(test::sample_cov(p.input - x, p.target - x)) <= 4 * sigma * sigma / 64);
  CHECK_NOTHROW(p.validate());
}

TEST_CASE("averaging transform averages and re-noises") {
  PairedSample pair{test::row({1, 3}), test::row({3, 1}), 1.0, 1.0, TargetMode::independent_target};
  const PairedSample c = corollary_transform(pair, RngStream(3, "c"));
  CHECK(c.target == test::row({2, 2}));
  CHECK(c.mode == TargetMode::nested_target);
  CHECK(c.sigma_target == doctest::Approx(1.0 / std::sqrt(2.0)));
  CHECK(c.sigma_input == doctest::Approx(1.0));

  // Statistics over repeats on a 64x64 image.
  const Image x = test::constant(64, 64, 0.5);
  const double sigma = 0.1;
  double var_w = 0, cov_sum = 0;
  const int R = 100;
  for (int r = 0; r < R; ++r) {
    const auto p = make_uncorrelated_pair(x, sigma, RngStream(4, "pairs", static_cast<std::uint64_t>(r)));
    const auto n = corollary_transform(p, RngStream(4, "corollary", static_cast<std::uint64_t>(r)));
    var_w += test::sample_var(n.target - x);
    cov_sum += test::sample_cov(n.target - x, n.input - n.target);
  }
  CHECK(std::sqrt(var_w / R) == doctest::Approx(sigma / std::sqrt(2.0)).epsilon(0.05));
  // Mean covariance of 100 independent repeats: sd is (sigma^2/2)/64/10.
  CHECK(std::abs(cov_sum / R) <= 4 * (sigma * sigma / 2) / 64 / 10);
}

TEST_CASE("averaging transform preconditions") {
  PairedSample nested{test::row({1}), test::row({1}), 0.2, 0.1, TargetMode::nested_target};
  CHECK_THROWS_AS(corollary_transform(nested, RngStream(1, "c")), std::invalid_argument);
  PairedSample unequal{test::row({1}), test::row({1}), 0.2, 0.1, TargetMode::independent_target};
  CHECK_THROWS_AS(corollary_transform(unequal, RngStream(1, "c")), std::invalid_argument);
}

TEST_CASE("imperfect ground truth pair") {
  const Image x = test::constant(32, 32, 0.4);
  CHECK(added_noise_sigma(10.0 / 255, 25.0 / 255, AddedNoiseMode::total_sigma) * 255 ==
        doctest::Approx(std::sqrt(525.0)));
  CHECK(std::sqrt(525.0) == doctest::Approx(22.91).epsilon(1e-3));
  CHECK(added_noise_sigma(0.1, 0.2, AddedNoiseMode::added_sigma) == 0.2);
  CHECK_THROWS_AS(make_imperfect_gt_pair(x, 0.2, 0.1, RngStream(1, "p")), std::invalid_argument);

  const PairedSample zero = make_imperfect_gt_pair(x, 0.0, 0.1, RngStream(1, "p"));
  CHECK(zero.target == x);
  CHECK(zero.mode == TargetMode::nested_target);

  const double sn = 25.0 / 255;
  double var = 0;
  const int R = 20;
  for (int r = 0; r < R; ++r) {
    const auto p = make_imperfect_gt_pair(x, 10.0 / 255, sn, RngStream(5, "p", static_cast<std::uint64_t>(r)));
    var += test::sample_var(p.input - x);
    CHECK(p.sigma_input == doctest::Approx(sn));
    CHECK_NOTHROW(p.validate());
  }
  CHECK(std::sqrt(var / R) == doctest::Approx(sn).epsilon(0.05));
}

TEST_CASE("imperfect pairs share underlying normals across sigma_gt") {
  const Image x = test::constant(8, 8, 0.4);
  const auto a = make_imperfect_gt_pair(x, 1.0 / 255, 25.0 / 255, RngStream(6, "p"));
  const auto b = make_imperfect_gt_pair(x, 10.0 / 255, 25.0 / 255, RngStream(6, "p"));
  // target noise scales by exactly 10
  for (std::size_t i = 0; i < x.size(); ++i)
    CHECK((b.target[i] - x[i]) == doctest::Approx(10 * (a.target[i] - x[i])).epsilon(1e-9));
}

TEST_CASE("paired sample validation") {
  PairedSample bad{test::row({1, 2}), test::row({1}), 0.1, 0.0, TargetMode::clean_target};
  CHECK_THROWS(bad.validate());
  PairedSample inverted{test::row({1}), test::row({1}), 0.1, 0.2, TargetMode::nested_target};
  CHECK_THROWS(inverted.validate());
}

TEST_CASE("patch extraction geometry") {
  Image img(Shape{4, 4, 1});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i);
  RngStream s(1, "aug");
  const auto b = extract_patches({PairedSample{img, img, 0, 0, TargetMode::clean_target}}, 2, 2, false, s);
  REQUIRE(b.size() == 4);
  CHECK(b.patches[0].input == Image(Shape{2, 2, 1}, std::vector<double>{0, 1, 4, 5}));
  CHECK(b.patches[1].input == Image(Shape{2, 2, 1}, std::vector<double>{2, 3, 6, 7}));
  CHECK(b.patches[2].input == Image(Shape{2, 2, 1}, std::vector<double>{8, 9, 12, 13}));
  CHECK(b.patches[3].input == Image(Shape{2, 2, 1}, std::vector<double>{10, 11, 14, 15}));
  CHECK(patches_per_axis(180, 50, 40) == 4);
  CHECK_THROWS(extract_patches({PairedSample{img, img, 0, 0, TargetMode::clean_target}}, 5, 1, false, s));
}

TEST_CASE("dihedral transforms") {
  Image img(Shape{3, 3, 1});
  for (std::size_t i = 0; i < img.size(); ++i) img[i] = static_cast<double>(i);
  CHECK(dihedral(img, 0) == img);
  // Four quarter turns and two flips are the identity.
  CHECK(dihedral(dihedral(dihedral(dihedral(img, 1), 1), 1), 1) == img);
  CHECK(dihedral(dihedral(img, 4), 4) == img);
  std::set<std::vector<double>> distinct;
  for (unsigned k = 0; k < 8; ++k) distinct.insert(dihedral(img, k).vec());
  CHECK(distinct.size() == 8);
}

TEST_CASE("augmented patches keep input and target aligned") {
  RngStream n(3, "n");
  const Image a = gaussian_field(n, Shape{6, 6, 1}, 1.0);
  RngStream s(2, "aug");
  const auto b = extract_patches({PairedSample{a, 2.0 * a, 1, 1, TargetMode::independent_target}}, 3, 3, true, s);
  for (const auto& p : b.patches) CHECK(p.target == 2.0 * p.input);
}

}  // TEST_SUITE
