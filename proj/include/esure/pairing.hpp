#pragma once

#include <cstddef>
#include <string>
#include <string_view>
#include <vector>

#include "esure/image.hpp"
#include "esure/rng.hpp"

namespace esure {

/// How the target of a pair relates to the input.
///  - clean_target: target is the clean signal (supervised / MSE oracle).
///  - independent_target: target noise drawn independently of input noise.
///  - nested_target: input = target + extra independent noise.
enum class TargetMode { clean_target, independent_target, nested_target };

std::string_view to_string(TargetMode mode);
TargetMode target_mode_from_string(std::string_view s);

struct PairedSample {
  Image input;
  Image target;
  double sigma_input = 0.0;
  double sigma_target = 0.0;
  TargetMode mode = TargetMode::clean_target;

  /// Throws std::invalid_argument if the pair violates its mode's invariants.
  void validate() const;
};

struct PatchBatch {
  std::vector<PairedSample> patches;
  std::size_t patch_size = 0;

  [[nodiscard]] std::size_t size() const noexcept { return patches.size(); }
  [[nodiscard]] bool empty() const noexcept { return patches.empty(); }
  [[nodiscard]] std::vector<double> sigma_inputs() const;
  void validate() const;
};

/// How the added noise of an imperfect ground-truth pair is sized.
///  - total_sigma: sigma_z = sqrt(sigma_noisy^2 - sigma_gt^2) so the input
///    carries exactly sigma_noisy in total.
///  - added_sigma: sigma_z = sigma_noisy.
enum class AddedNoiseMode { total_sigma, added_sigma };

/// clean + N(0, sigma^2 I).
Image synth_noisy(const Image& clean, double sigma, RngStream& stream);

/// Two independent noisy realizations of `clean`. Noise for the input and
/// the target come from the "pair-a" / "pair-b" children of `stream`.
PairedSample make_uncorrelated_pair(const Image& clean, double sigma, const RngStream& stream);

/// Averages an independent pair into w = (y3 + y4) / 2 and re-noises it into
/// v = w + z, z ~ N(0, sigma^2/2 I) from the "corollary-z" child of
/// `stream`. The result is a nested pair (input v, target w).
PairedSample corollary_transform(const PairedSample& pair, const RngStream& stream);

/// Imperfect ground truth y1 = clean + n_gt and input y2 = y1 + z. Requires
/// sigma_noisy > sigma_gt >= 0. n_gt and z come from the "gt" and "added"
/// children of `stream`, so the same stream gives common random numbers
/// across different sigma values.
PairedSample make_imperfect_gt_pair(const Image& clean, double sigma_gt, double sigma_noisy, const RngStream& stream,
                                    AddedNoiseMode mode = AddedNoiseMode::total_sigma);

/// Standard deviation of the noise added on top of the ground truth.
double added_noise_sigma(double sigma_gt, double sigma_noisy, AddedNoiseMode mode);

/// Dihedral group element k in [0, 8) applied to a square image: k & 3 is
/// the number of quarter turns, bit 2 adds a horizontal flip first.
Image dihedral(const Image& image, unsigned k);

Image crop(const Image& image, std::size_t row, std::size_t col, std::size_t height, std::size_t width);

/// Regular-grid square crops from every sample, in sample order then
/// row-major grid order. Input and target get the same geometry (and, when
/// `augment`, the same dihedral transform, one draw per patch).
PatchBatch extract_patches(const std::vector<PairedSample>& images, std::size_t patch_size, std::size_t stride,
                           bool augment, RngStream& stream);

/// Number of grid positions along one axis.
std::size_t patches_per_axis(std::size_t extent, std::size_t patch_size, std::size_t stride);

}  // namespace esure
