#include "esure/pairing.hpp"

#include <cmath>
#include <stdexcept>

namespace esure {

std::string_view to_string(TargetMode mode) {
  switch (mode) {
    case TargetMode::clean_target: return "clean_target";
    case TargetMode::independent_target: return "independent_target";
    case TargetMode::nested_target: return "nested_target";
  }
  return "?";
}

TargetMode target_mode_from_string(std::string_view s) {
  if (s == "clean_target") return TargetMode::clean_target;
  if (s == "independent_target") return TargetMode::independent_target;
  if (s == "nested_target") return TargetMode::nested_target;
  throw std::invalid_argument("unknown target mode: " + std::string(s));
}

void PairedSample::validate() const {
  input.require_same(target, "PairedSample");
  if (!(sigma_input >= 0) || !(sigma_target >= 0)) throw std::invalid_argument("PairedSample: negative sigma");
  if (mode == TargetMode::nested_target && sigma_input < sigma_target)
    throw std::invalid_argument("PairedSample: nested target requires sigma_input >= sigma_target");
}

std::vector<double> PatchBatch::sigma_inputs() const {
  std::vector<double> out;
  out.reserve(patches.size());
  for (const auto& p : patches) out.push_back(p.sigma_input);
  return out;
}

void PatchBatch::validate() const {
  if (patches.empty()) throw std::invalid_argument("PatchBatch: empty batch");
  for (const auto& p : patches) {
    p.validate();
    if (p.input.height() != patch_size || p.input.width() != patch_size)
      throw std::invalid_argument("PatchBatch: patch is not " + std::to_string(patch_size) + " square");
  }
}

Image synth_noisy(const Image& clean, double sigma, RngStream& stream) {
  return clean + gaussian_field(stream, clean.shape(), sigma);
}

PairedSample make_uncorrelated_pair(const Image& clean, double sigma, const RngStream& stream) {
  auto sa = stream.derive("pair-a");
  auto sb = stream.derive("pair-b");
  PairedSample out;
  out.input = synth_noisy(clean, sigma, sa);
  out.target = synth_noisy(clean, sigma, sb);
  out.sigma_input = sigma;
  out.sigma_target = sigma;
  out.mode = TargetMode::independent_target;
  return out;
}

PairedSample corollary_transform(const PairedSample& pair, const RngStream& stream) {
  if (pair.mode != TargetMode::independent_target)
    throw std::invalid_argument("corollary_transform: requires an independent_target pair");
  if (pair.sigma_input != pair.sigma_target)
    throw std::invalid_argument("corollary_transform: both realizations must share one sigma");
  pair.input.require_same(pair.target, "corollary_transform");

  const double sigma = pair.sigma_input;
  Image w = pair.input;
  for (std::size_t i = 0; i < w.size(); ++i) w[i] = 0.5 * (pair.input[i] + pair.target[i]);
  auto sz = stream.derive("corollary-z");
  Image v = w + gaussian_field(sz, w.shape(), sigma / std::sqrt(2.0));

  PairedSample out;
  out.input = std::move(v);
  out.target = std::move(w);
  out.sigma_input = sigma;
  out.sigma_target = sigma / std::sqrt(2.0);
  out.mode = TargetMode::nested_target;
  return out;
}

double added_noise_sigma(double sigma_gt, double sigma_noisy, AddedNoiseMode mode) {
  if (!(sigma_gt >= 0)) throw std::invalid_argument("imperfect gt: sigma_gt must be non-negative");
  if (!(sigma_noisy > sigma_gt))
    throw std::invalid_argument("imperfect gt: sigma_noisy must exceed sigma_gt (noise has to be added)");
  if (mode == AddedNoiseMode::added_sigma) return sigma_noisy;
  return std::sqrt(sigma_noisy * sigma_noisy - sigma_gt * sigma_gt);
}

PairedSample make_imperfect_gt_pair(const Image& clean, double sigma_gt, double sigma_noisy, const RngStream& stream,
                                    AddedNoiseMode mode) {
  const double sigma_z = added_noise_sigma(sigma_gt, sigma_noisy, mode);
  auto sgt = stream.derive("gt");
  auto sadd = stream.derive("added");
  PairedSample out;
  out.target = synth_noisy(clean, sigma_gt, sgt);
  out.input = out.target + gaussian_field(sadd, clean.shape(), sigma_z);
  out.sigma_target = sigma_gt;
  out.sigma_input = std::sqrt(sigma_gt * sigma_gt + sigma_z * sigma_z);
  out.mode = TargetMode::nested_target;
  return out;
}

Image dihedral(const Image& image, unsigned k) {
  if (image.height() != image.width()) throw std::invalid_argument("dihedral: image must be square");
  k &= 7u;
  if (k == 0) return image;
  const std::size_t n = image.height();
  const std::size_t c = image.channels();
  Image out(image.shape());
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t q = 0; q < n; ++q) {
      std::size_t sr = r, sq = q;
      // Inverse map: undo rotations, then the flip.
      for (unsigned t = 0; t < (k & 3u); ++t) {
        const std::size_t nr = sq, nq = n - 1 - sr;  // inverse of a clockwise quarter turn
        sr = nr;
        sq = nq;
      }
      if (k & 4u) sq = n - 1 - sq;
      for (std::size_t ch = 0; ch < c; ++ch) out.at(r, q, ch) = image.at(sr, sq, ch);
    }
  }
  return out;
}

Image crop(const Image& image, std::size_t row, std::size_t col, std::size_t height, std::size_t width) {
  if (row + height > image.height() || col + width > image.width())
    throw std::invalid_argument("crop: window exceeds image bounds");
  Image out(Shape{height, width, image.channels()});
  const std::size_t c = image.channels();
  for (std::size_t r = 0; r < height; ++r)
    for (std::size_t q = 0; q < width; ++q)
      for (std::size_t ch = 0; ch < c; ++ch) out.at(r, q, ch) = image.at(row + r, col + q, ch);
  return out;
}

std::size_t patches_per_axis(std::size_t extent, std::size_t patch_size, std::size_t stride) {
  if (stride == 0) throw std::invalid_argument("extract_patches: stride must be >= 1");
  if (patch_size == 0 || patch_size > extent) throw std::invalid_argument("extract_patches: patch larger than image");
  return (extent - patch_size) / stride + 1;
}

PatchBatch extract_patches(const std::vector<PairedSample>& images, std::size_t patch_size, std::size_t stride,
                           bool augment, RngStream& stream) {
  PatchBatch batch;
  batch.patch_size = patch_size;
  for (const auto& sample : images) {
    sample.input.require_same(sample.target, "extract_patches");
    const std::size_t rows = patches_per_axis(sample.input.height(), patch_size, stride);
    const std::size_t cols = patches_per_axis(sample.input.width(), patch_size, stride);
    for (std::size_t i = 0; i < rows; ++i) {
      for (std::size_t j = 0; j < cols; ++j) {
        PairedSample p;
        p.input = crop(sample.input, i * stride, j * stride, patch_size, patch_size);
        p.target = crop(sample.target, i * stride, j * stride, patch_size, patch_size);
        if (augment) {
          const auto k = static_cast<unsigned>(stream.below(8));
          p.input = dihedral(p.input, k);
          p.target = dihedral(p.target, k);
        }
        p.sigma_input = sample.sigma_input;
        p.sigma_target = sample.sigma_target;
        p.mode = sample.mode;
        batch.patches.push_back(std::move(p));
      }
    }
  }
  return batch;
}

}  // namespace esure
