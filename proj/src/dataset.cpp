#include "esure/dataset.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <numbers>
#include <stdexcept>

#include <json.hpp>

#include "esure/image_io.hpp"

namespace esure {

namespace {

struct Fill {
  int type;  // 0 flat, 1 shaded, 2 striped
  double value, gx, gy, amp, freq, phase, cos_a, sin_a;

  double at(double x, double y) const {
    switch (type) {
      case 1: return value + gx * x + gy * y;
      case 2: return value + amp * std::sin(2.0 * std::numbers::pi * freq * (cos_a * x + sin_a * y) + phase);
      default: return value;
    }
  }
};

Fill random_fill(RngStream& s, double hires) {
  Fill f{};
  f.type = static_cast<int>(s.below(3));
  f.value = s.uniform(0.08, 0.92);
  f.gx = s.uniform(-0.5, 0.5) / hires;
  f.gy = s.uniform(-0.5, 0.5) / hires;
  f.amp = s.uniform(0.05, 0.2);
  f.freq = 1.0 / (2.0 * s.uniform(4.0, 16.0));  // period 4..16 output pixels
  f.phase = s.uniform(0.0, 2.0 * std::numbers::pi);
  const double a = s.uniform(0.0, std::numbers::pi);
  f.cos_a = std::cos(a);
  f.sin_a = std::sin(a);
  return f;
}

double cross(double ax, double ay, double bx, double by) { return ax * by - ay * bx; }

}  // namespace

Image synthetic_texture(std::size_t size, RngStream& stream) {
  if (size == 0) throw std::invalid_argument("synthetic_texture: size must be positive");
  constexpr std::size_t ss = 2;
  const std::size_t n = size * ss;
  const double hn = static_cast<double>(n);
  std::vector<double> hi(n * n);

  const double base = stream.uniform(0.25, 0.75);
  const double bgx = stream.uniform(-0.3, 0.3) / hn, bgy = stream.uniform(-0.3, 0.3) / hn;
  for (std::size_t y = 0; y < n; ++y)
    for (std::size_t x = 0; x < n; ++x)
      hi[y * n + x] = base + bgx * (static_cast<double>(x) - hn / 2) + bgy * (static_cast<double>(y) - hn / 2);

  const std::size_t shapes = 6 + stream.below(10);
  for (std::size_t k = 0; k < shapes; ++k) {
    const auto type = stream.below(3);
    const Fill fill = random_fill(stream, hn);
    const double cx = stream.uniform(0.0, hn), cy = stream.uniform(0.0, hn);
    const double rx = stream.uniform(0.04, 0.3) * hn, ry = stream.uniform(0.04, 0.3) * hn;
    const double ang = stream.uniform(0.0, std::numbers::pi);
    const double ca = std::cos(ang), sa = std::sin(ang);
    double px[3], py[3];
    for (int v = 0; v < 3; ++v) {
      px[v] = cx + stream.uniform(-1.0, 1.0) * rx;
      py[v] = cy + stream.uniform(-1.0, 1.0) * ry;
    }
    const double reach = std::max(rx, ry) * 1.5;
    const auto lo = [&](double c) { return static_cast<std::size_t>(std::clamp(c - reach, 0.0, hn)); };
    const auto up = [&](double c) { return static_cast<std::size_t>(std::clamp(c + reach, 0.0, hn)); };
    for (std::size_t y = lo(cy); y < up(cy); ++y) {
      for (std::size_t x = lo(cx); x < up(cx); ++x) {
        const double fx = static_cast<double>(x) + 0.5, fy = static_cast<double>(y) + 0.5;
        const double dx = fx - cx, dy = fy - cy;
        const double u = ca * dx + sa * dy, w = -sa * dx + ca * dy;
        bool inside = false;
        if (type == 0) {
          inside = (u * u) / (rx * rx) + (w * w) / (ry * ry) <= 1.0;
        } else if (type == 1) {
          inside = std::abs(u) <= rx && std::abs(w) <= ry;
        } else {
          const double d0 = cross(px[1] - px[0], py[1] - py[0], fx - px[0], fy - py[0]);
          const double d1 = cross(px[2] - px[1], py[2] - py[1], fx - px[1], fy - py[1]);
          const double d2 = cross(px[0] - px[2], py[0] - py[2], fx - px[2], fy - py[2]);
          inside = (d0 >= 0 && d1 >= 0 && d2 >= 0) || (d0 <= 0 && d1 <= 0 && d2 <= 0);
        }
        if (inside) hi[y * n + x] = fill.at(fx / static_cast<double>(ss), fy / static_cast<double>(ss));
      }
    }
  }

  // 2x2 box downsample.
  Image img(Shape{size, size, 1});
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      double acc = 0;
      for (std::size_t a = 0; a < ss; ++a)
        for (std::size_t b = 0; b < ss; ++b) acc += hi[(y * ss + a) * n + x * ss + b];
      img.at(y, x) = acc / static_cast<double>(ss * ss);
    }

  // Separable [1 2 1]/4 blur, clamp-to-edge.
  const auto clampi = [&](std::ptrdiff_t i) {
    return static_cast<std::size_t>(std::clamp<std::ptrdiff_t>(i, 0, static_cast<std::ptrdiff_t>(size) - 1));
  };
  Image tmp = img;
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const auto xi = static_cast<std::ptrdiff_t>(x);
      tmp.at(y, x) = 0.25 * img.at(y, clampi(xi - 1)) + 0.5 * img.at(y, x) + 0.25 * img.at(y, clampi(xi + 1));
    }
  for (std::size_t y = 0; y < size; ++y)
    for (std::size_t x = 0; x < size; ++x) {
      const auto yi = static_cast<std::ptrdiff_t>(y);
      img.at(y, x) = 0.25 * tmp.at(clampi(yi - 1), x) + 0.5 * tmp.at(y, x) + 0.25 * tmp.at(clampi(yi + 1), x);
    }
  for (auto& v : img.data()) v = std::clamp(v, 0.0, 1.0);
  return img;
}

std::vector<Image> synthetic_corpus(std::size_t count, std::size_t size, std::uint64_t seed) {
  std::vector<Image> out;
  out.reserve(count);
  for (std::size_t i = 0; i < count; ++i) {
    RngStream s(seed, "synthetic", i);
    out.push_back(synthetic_texture(size, s));
  }
  return out;
}

Corpus load_corpus(const std::optional<std::filesystem::path>& dir, std::size_t count, std::size_t size,
                   std::uint64_t seed) {
  Corpus corpus;
  if (dir) {
    std::vector<std::filesystem::path> files;
    for (const auto& e : std::filesystem::directory_iterator(*dir))
      if (e.is_regular_file() && e.path().extension() == ".pgm") files.push_back(e.path());
    std::sort(files.begin(), files.end());
    for (const auto& f : files) {
      if (corpus.images.size() == count) break;
      Image img = read_pgm8(f);
      if (img.height() < size || img.width() < size) continue;
      corpus.images.push_back(crop(img, (img.height() - size) / 2, (img.width() - size) / 2, size, size));
    }
    corpus.name = "pgm:" + dir->filename().string();
  }
  const std::size_t loaded = corpus.images.size();
  if (loaded < count) {
    auto extra = synthetic_corpus(count - loaded, size, seed);
    for (auto& img : extra) corpus.images.push_back(std::move(img));
    corpus.name = loaded ? corpus.name + "+synthetic" : "synthetic";
  }
  return corpus;
}

std::string_view to_string(Regime r) {
  switch (r) {
    case Regime::single: return "single";
    case Regime::uncorrelated_pair: return "uncorrelated_pair";
    case Regime::imperfect_gt: return "imperfect_gt";
  }
  return "?";
}

Regime regime_from_string(std::string_view s) {
  for (auto r : {Regime::single, Regime::uncorrelated_pair, Regime::imperfect_gt})
    if (to_string(r) == s) return r;
  throw std::invalid_argument("unknown regime: " + std::string(s));
}

void RegimeParams::validate() const {
  if (!(sigma >= 0)) throw std::invalid_argument("regime: sigma must be non-negative");
  if (sigma_range && !(sigma_range->first >= 0 && sigma_range->second >= sigma_range->first))
    throw std::invalid_argument("regime: invalid sigma range");
  if (regime == Regime::imperfect_gt) (void)added_noise_sigma(sigma_gt, sigma, added_mode);
}

PairedSample synthesize(const Image& clean, const RegimeParams& params, double sigma, const RngStream& stream) {
  switch (params.regime) {
    case Regime::single: {
      auto s = stream.derive("single");
      PairedSample out;
      out.input = synth_noisy(clean, sigma, s);
      out.target = clean;
      out.sigma_input = sigma;
      out.sigma_target = 0.0;
      out.mode = TargetMode::clean_target;
      return out;
    }
    case Regime::uncorrelated_pair: return make_uncorrelated_pair(clean, sigma, stream);
    case Regime::imperfect_gt: return make_imperfect_gt_pair(clean, params.sigma_gt, sigma, stream, params.added_mode);
  }
  throw std::logic_error("unreachable");
}

PatchSet build_patch_set(const std::vector<Image>& cleans, const RegimeParams& params, const PatchOptions& patches,
                         std::uint64_t seed) {
  params.validate();
  std::vector<PairedSample> clean_pairs;
  clean_pairs.reserve(cleans.size());
  for (const auto& c : cleans) clean_pairs.push_back(PairedSample{c, c, 0.0, 0.0, TargetMode::clean_target});
  RngStream aug(seed, "augment");
  PatchBatch clean_batch = extract_patches(clean_pairs, patches.patch_size, patches.stride, patches.augment, aug);

  PatchSet out;
  out.patch_size = patches.patch_size;
  out.samples.reserve(clean_batch.size());
  out.cleans.reserve(clean_batch.size());
  for (std::size_t i = 0; i < clean_batch.size(); ++i) {
    double sigma = params.sigma;
    if (params.sigma_range) {
      RngStream ss(seed, "train-sigma", i);
      const auto [lo, hi] = *params.sigma_range;
      sigma = ss.uniform(lo, hi);
      if (params.regime == Regime::imperfect_gt && !(sigma > params.sigma_gt))
        sigma = std::nextafter(params.sigma_gt, hi + 1.0);
    }
    out.samples.push_back(synthesize(clean_batch.patches[i].target, params, sigma, RngStream(seed, "train-noise", i)));
    out.cleans.push_back(std::move(clean_batch.patches[i].target));
  }
  return out;
}

std::string_view to_string(Method m) {
  switch (m) {
    case Method::mse: return "MSE";
    case Method::sure: return "SURE";
    case Method::sure_star: return "SURE*";
    case Method::n2n: return "N2N";
    case Method::esure: return "eSURE";
  }
  return "?";
}

Method method_from_string(std::string_view s) {
  for (auto m : {Method::mse, Method::sure, Method::sure_star, Method::n2n, Method::esure})
    if (to_string(m) == s) return m;
  throw std::invalid_argument("unknown method: " + std::string(s));
}

LossKind loss_for(Method m) {
  switch (m) {
    case Method::mse: return LossKind::mse;
    case Method::sure:
    case Method::sure_star: return LossKind::sure;
    case Method::n2n: return LossKind::n2n;
    case Method::esure: return LossKind::esure;
  }
  return LossKind::mse;
}

std::vector<PairedSample> method_samples(Method m, const std::vector<PairedSample>& regime_samples,
                                         const std::vector<Image>& cleans, std::uint64_t seed) {
  if (cleans.size() != regime_samples.size() && m == Method::mse)
    throw std::invalid_argument("method_samples: MSE needs the clean image of every sample");
  std::vector<PairedSample> out;
  out.reserve(regime_samples.size() * (m == Method::sure_star ? 2 : 1));
  for (std::size_t i = 0; i < regime_samples.size(); ++i) {
    const PairedSample& s = regime_samples[i];
    switch (m) {
      case Method::mse: out.push_back({s.input, cleans[i], s.sigma_input, 0.0, TargetMode::clean_target}); break;
      case Method::sure: out.push_back(s); break;
      case Method::sure_star:
        if (s.mode != TargetMode::independent_target)
          throw std::invalid_argument("SURE* needs uncorrelated noisy pairs");
        out.push_back(s);
        // The swapped pair feeds the second realization in as an input.
        out.push_back({s.target, s.input, s.sigma_target, s.sigma_input, TargetMode::independent_target});
        break;
      case Method::n2n:
        require_compatible(LossKind::n2n, s.mode);
        out.push_back(s);
        break;
      case Method::esure:
        if (s.mode == TargetMode::independent_target)
          out.push_back(corollary_transform(s, RngStream(seed, "corollary", i)));
        else if (s.mode == TargetMode::nested_target)
          out.push_back(s);
        else
          throw std::invalid_argument("eSURE needs paired noisy samples");
        break;
    }
  }
  return out;
}

std::vector<PairedSample> make_test_set(const std::vector<Image>& cleans, double sigma, std::uint64_t eval_seed) {
  std::vector<PairedSample> out;
  out.reserve(cleans.size());
  for (std::size_t i = 0; i < cleans.size(); ++i) {
    RngStream s(eval_seed, "eval-noise", i);
    out.push_back({synth_noisy(cleans[i], sigma, s), cleans[i], sigma, 0.0, TargetMode::clean_target});
  }
  return out;
}

// ---- manifest ---------------------------------------------------------------

namespace {

using nlohmann::json;

json entry_to_json(const ManifestEntry& e) {
  return json{{"clean", e.clean.string()},
              {"input", e.input.string()},
              {"target", e.target.string()},
              {"sigma_input_255", e.sigma_input_255},
              {"sigma_target_255", e.sigma_target_255},
              {"mode", std::string(to_string(e.mode))}};
}

ManifestEntry entry_from_json(const json& j) {
  ManifestEntry e;
  e.clean = j.value("clean", std::string());
  e.input = j.at("input").get<std::string>();
  e.target = j.at("target").get<std::string>();
  e.sigma_input_255 = j.at("sigma_input_255").get<double>();
  e.sigma_target_255 = j.at("sigma_target_255").get<double>();
  e.mode = target_mode_from_string(j.at("mode").get<std::string>());
  return e;
}

std::string added_mode_name(AddedNoiseMode m) { return m == AddedNoiseMode::total_sigma ? "total_sigma" : "added_sigma"; }

}  // namespace

RegimeParams Manifest::regime_params() const {
  RegimeParams p;
  p.regime = regime;
  p.sigma = from_255(sigma_255);
  p.sigma_gt = from_255(sigma_gt_255);
  p.added_mode = added_mode;
  if (sigma_range_255) p.sigma_range = std::make_pair(from_255(sigma_range_255->first), from_255(sigma_range_255->second));
  p.validate();
  return p;
}

Manifest Manifest::load(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw std::runtime_error("cannot open manifest: " + path.string());
  json j;
  try {
    j = json::parse(is);
  } catch (const json::exception& e) {
    throw std::invalid_argument("manifest " + path.string() + ": " + e.what());
  }
  Manifest m;
  try {
    if (j.contains("schema") && j["schema"].get<std::string>() != kSchema)
      throw std::invalid_argument("unsupported manifest schema " + j["schema"].get<std::string>());
    m.regime = regime_from_string(j.value("regime", std::string("single")));
    m.sigma_255 = j.value("sigma_255", j.value("sigma_noisy_255", 25.0));
    m.sigma_gt_255 = j.value("sigma_gt_255", 0.0);
    const auto mode = j.value("added_noise_mode", std::string("total_sigma"));
    if (mode != "total_sigma" && mode != "added_sigma") throw std::invalid_argument("unknown added_noise_mode " + mode);
    m.added_mode = mode == "total_sigma" ? AddedNoiseMode::total_sigma : AddedNoiseMode::added_sigma;
    if (j.contains("sigma_range_255")) {
      const auto& r = j["sigma_range_255"];
      m.sigma_range_255 = std::make_pair(r.at(0).get<double>(), r.at(1).get<double>());
    }
    m.seed = j.value("seed", std::uint64_t{0});
    for (const auto& c : j.value("clean", json::array())) m.clean_paths.emplace_back(c.get<std::string>());
    if (j.contains("synthetic")) {
      m.synthetic_count = j["synthetic"].value("count", std::size_t{0});
      m.synthetic_size = j["synthetic"].value("size", std::size_t{128});
    }
    for (const auto& e : j.value("samples", json::array())) m.samples.push_back(entry_from_json(e));
    for (const auto& e : j.value("validation", json::array())) m.validation.push_back(entry_from_json(e));
  } catch (const json::exception& e) {
    throw std::invalid_argument("manifest " + path.string() + ": " + e.what());
  }
  return m;
}

void Manifest::save(const std::filesystem::path& path) const {
  json j;
  j["schema"] = kSchema;
  j["regime"] = std::string(to_string(regime));
  j["sigma_255"] = sigma_255;
  j["sigma_gt_255"] = sigma_gt_255;
  j["added_noise_mode"] = added_mode_name(added_mode);
  if (sigma_range_255) j["sigma_range_255"] = {sigma_range_255->first, sigma_range_255->second};
  j["seed"] = seed;
  j["clean"] = json::array();
  for (const auto& c : clean_paths) j["clean"].push_back(c.string());
  if (synthetic_count) j["synthetic"] = {{"count", synthetic_count}, {"size", synthetic_size}};
  j["samples"] = json::array();
  for (const auto& e : samples) j["samples"].push_back(entry_to_json(e));
  j["validation"] = json::array();
  for (const auto& e : validation) j["validation"].push_back(entry_to_json(e));
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write manifest: " + path.string());
  os << j.dump(2) << "\n";
}

std::vector<PairedSample> load_samples(const std::vector<ManifestEntry>& entries, const std::filesystem::path& base,
                                       std::vector<Image>* cleans) {
  const auto resolve = [&](const std::filesystem::path& p) { return p.is_absolute() ? p : base / p; };
  std::vector<PairedSample> out;
  for (const auto& e : entries) {
    PairedSample s;
    s.input = read_image(resolve(e.input), format_for(e.input));
    s.target = read_image(resolve(e.target), format_for(e.target));
    s.sigma_input = from_255(e.sigma_input_255);
    s.sigma_target = from_255(e.sigma_target_255);
    s.mode = e.mode;
    s.validate();
    if (cleans) {
      if (e.clean.empty()) throw std::invalid_argument("manifest entry lacks a clean image");
      cleans->push_back(read_image(resolve(e.clean), format_for(e.clean)));
    }
    out.push_back(std::move(s));
  }
  return out;
}

}  // namespace esure
