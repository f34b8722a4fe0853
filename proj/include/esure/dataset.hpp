#pragma once

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

#include "esure/image.hpp"
#include "esure/pairing.hpp"
#include "esure/risk.hpp"
#include "esure/rng.hpp"

namespace esure {

/// Piecewise-smooth grayscale test pattern: a shaded background, random
/// ellipses, rectangles and triangles (flat, shaded or striped fills),
/// anti-aliased by 2x2 supersampling and softened with a 3x3 binomial blur.
/// Values lie in [0, 1].
Image synthetic_texture(std::size_t size, RngStream& stream);

/// `count` synthetic images; image i uses stream (seed, "synthetic", i).
std::vector<Image> synthetic_corpus(std::size_t count, std::size_t size, std::uint64_t seed);

struct Corpus {
  std::string name;
  std::vector<Image> images;
};

/// PGMs from `dir` (sorted by file name, center-cropped to `size` when
/// larger), topped up with synthetic images until `count` are available.
Corpus load_corpus(const std::optional<std::filesystem::path>& dir, std::size_t count, std::size_t size,
                   std::uint64_t seed);

enum class Regime { single, uncorrelated_pair, imperfect_gt };

std::string_view to_string(Regime r);
Regime regime_from_string(std::string_view s);

/// Noise parameters of a regime, in working units (0-1 intensities).
struct RegimeParams {
  Regime regime = Regime::single;
  double sigma = 25.0 / 255.0;  // single / uncorrelated_pair, and sigma_noisy for imperfect_gt
  double sigma_gt = 0.0;        // imperfect_gt only
  AddedNoiseMode added_mode = AddedNoiseMode::total_sigma;
  /// Blind mode: sigma drawn uniformly per patch from this range.
  std::optional<std::pair<double, double>> sigma_range;

  void validate() const;
};

/// One noisy sample of `clean` under the regime.
///  single:            (y, clean, clean_target)
///  uncorrelated_pair: (y3, y4, independent_target)
///  imperfect_gt:      (y2, y1, nested_target)
PairedSample synthesize(const Image& clean, const RegimeParams& params, double sigma, const RngStream& stream);

/// Clean patches from every image, then one noisy sample per patch with
/// stream (seed, "train-noise", patch index). In blind mode each patch
/// draws its own sigma from ("train-sigma", patch index). Returns the
/// regime samples and the clean patches, index aligned.
struct PatchSet {
  std::vector<PairedSample> samples;
  std::vector<Image> cleans;
  std::size_t patch_size = 0;
};

struct PatchOptions {
  std::size_t patch_size = 40;
  std::size_t stride = 22;
  bool augment = false;
};

PatchSet build_patch_set(const std::vector<Image>& cleans, const RegimeParams& params, const PatchOptions& patches,
                         std::uint64_t seed);

/// Training methods compared by the harness.
enum class Method { mse, sure, sure_star, n2n, esure };

std::string_view to_string(Method m);
Method method_from_string(std::string_view s);
LossKind loss_for(Method m);

/// Turns regime samples into the samples a method trains on:
///  mse       (input, clean) clean targets
///  sure      samples as they are; the loss reads only the input
///  sure_star as sure, plus each independent pair swapped so the second
///            realization is also used as an input (twice the data)
///  n2n       pairs as they are
///  esure     independent pairs go through corollary_transform with
///            stream ("corollary", i); nested pairs as they are
/// Throws std::invalid_argument when the regime cannot feed the method.
std::vector<PairedSample> method_samples(Method m, const std::vector<PairedSample>& regime_samples,
                                         const std::vector<Image>& cleans, std::uint64_t seed);

/// Noisy test instances: input = clean + N(0, sigma^2) from
/// (eval_seed, "eval-noise", i); target = clean.
std::vector<PairedSample> make_test_set(const std::vector<Image>& cleans, double sigma, std::uint64_t eval_seed);

/// 0-255 to working units and back.
constexpr double from_255(double s) { return s / 255.0; }
constexpr double to_255(double s) { return s * 255.0; }

/// Dataset manifest (JSON). Written by `synth`, read by `train`/`eval`.
struct ManifestEntry {
  std::filesystem::path clean;
  std::filesystem::path input;
  std::filesystem::path target;
  double sigma_input_255 = 0.0;
  double sigma_target_255 = 0.0;
  TargetMode mode = TargetMode::clean_target;
};

struct Manifest {
  static constexpr std::string_view kSchema = "esure-manifest/1";
  Regime regime = Regime::single;
  double sigma_255 = 25.0;
  double sigma_gt_255 = 0.0;
  AddedNoiseMode added_mode = AddedNoiseMode::total_sigma;
  std::optional<std::pair<double, double>> sigma_range_255;
  std::uint64_t seed = 0;
  std::vector<std::filesystem::path> clean_paths;
  /// Synthetic corpus used when no clean paths are listed.
  std::size_t synthetic_count = 0;
  std::size_t synthetic_size = 128;
  std::vector<ManifestEntry> samples;
  std::vector<ManifestEntry> validation;

  [[nodiscard]] RegimeParams regime_params() const;
  static Manifest load(const std::filesystem::path& path);
  void save(const std::filesystem::path& path) const;
};

/// Loads the materialized samples of a manifest (paths relative to the
/// manifest directory).
std::vector<PairedSample> load_samples(const std::vector<ManifestEntry>& entries, const std::filesystem::path& base,
                                       std::vector<Image>* cleans = nullptr);

}  // namespace esure
