#include "esure/cli.hpp"

#include <CLI11.hpp>

#include <fstream>
#include <iostream>
#include <set>

#include "esure/checkpoint.hpp"
#include "esure/harness.hpp"
#include "esure/image_io.hpp"

namespace esure {

using nlohmann::json;

namespace {

class ConfigError : public std::invalid_argument {
 public:
  using std::invalid_argument::invalid_argument;
};

json load_json(const std::filesystem::path& path) {
  std::ifstream is(path);
  if (!is) throw ConfigError("cannot open config: " + path.string());
  try {
    return json::parse(is);
  } catch (const json::exception& e) {
    throw ConfigError("config " + path.string() + ": " + e.what());
  }
}

void reject_unknown(const json& j, const std::set<std::string>& allowed, const std::string& what) {
  if (!j.is_object()) throw ConfigError(what + ": expected a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw ConfigError(what + ": unknown key '" + k + "'");
}

/// `<key>_255` in 0-255 units, or `<key>` in working units.
double sigma_from(const json& j, const std::string& key, double fallback) {
  if (j.contains(key + "_255")) return from_255(j.at(key + "_255").get<double>());
  if (j.contains(key)) return j.at(key).get<double>();
  return fallback;
}

AddedNoiseMode added_mode_from(const json& j) {
  const auto m = j.value("added_noise_mode", std::string("total_sigma"));
  if (m == "total_sigma") return AddedNoiseMode::total_sigma;
  if (m == "added_sigma") return AddedNoiseMode::added_sigma;
  throw ConfigError("unknown added_noise_mode: " + m);
}

std::filesystem::path relative_to(const std::filesystem::path& base, const std::string& p) {
  std::filesystem::path q(p);
  return q.is_absolute() ? q : base / q;
}

/// {"size": n, "seed": s} synthetic texture, or {"path": "x.pgm"}.
Image verification_image(const json& j, std::uint64_t seed, const std::filesystem::path& base) {
  if (j.contains("path")) return read_image(relative_to(base, j.at("path").get<std::string>()),
                                            format_for(j.at("path").get<std::string>()));
  RngStream s(j.value("seed", seed), "verify-image");
  return synthetic_texture(j.value("size", std::size_t{32}), s);
}

std::string three_digits(std::size_t i) {
  std::string s = std::to_string(i);
  return std::string(s.size() < 3 ? 3 - s.size() : 0, '0') + s;
}

// ---------------------------------------------------------------------------

int cmd_synth(const std::filesystem::path& config_path, std::uint64_t seed, const std::filesystem::path& out) {
  const json j = load_json(config_path);
  reject_unknown(j, {"regime", "sigma_255", "sigma", "sigma_gt_255", "sigma_gt", "added_noise_mode",
                     "sigma_range_255", "corpus", "validation"},
                 "synth config");
  Manifest m;
  m.seed = seed;
  m.regime = regime_from_string(j.value("regime", std::string("single")));
  m.sigma_255 = to_255(sigma_from(j, "sigma", from_255(25.0)));
  m.sigma_gt_255 = to_255(sigma_from(j, "sigma_gt", 0.0));
  m.added_mode = added_mode_from(j);
  if (j.contains("sigma_range_255"))
    m.sigma_range_255 = std::make_pair(j["sigma_range_255"].at(0).get<double>(), j["sigma_range_255"].at(1).get<double>());
  const RegimeParams rp = m.regime_params();

  const json corpus = j.value("corpus", json::object());
  reject_unknown(corpus, {"dir", "count", "size"}, "corpus");
  std::optional<std::filesystem::path> dir;
  if (corpus.contains("dir") && !corpus["dir"].is_null())
    dir = relative_to(config_path.parent_path(), corpus["dir"].get<std::string>());
  const std::size_t count = corpus.value("count", std::size_t{20});
  const std::size_t size = corpus.value("size", std::size_t{128});
  const Corpus cleans = load_corpus(dir, count, size, mix64(seed ^ hash_tag("train-corpus")));

  std::filesystem::create_directories(out / "clean");
  std::filesystem::create_directories(out / "noisy");
  for (std::size_t i = 0; i < cleans.images.size(); ++i) {
    const std::string id = three_digits(i);
    const std::filesystem::path clean_rel = std::filesystem::path("clean") / (id + ".esdn");
    write_image(out / clean_rel, cleans.images[i], ImageFormat::tensor_f32);
    m.clean_paths.push_back(clean_rel);

    double sigma = rp.sigma;
    if (rp.sigma_range) {
      RngStream ss(seed, "synth-sigma", i);
      sigma = ss.uniform(rp.sigma_range->first, rp.sigma_range->second);
    }
    const PairedSample s = synthesize(cleans.images[i], rp, sigma, RngStream(seed, "synth-noise", i));
    ManifestEntry e;
    e.clean = clean_rel;
    e.input = std::filesystem::path("noisy") / (id + "_input.esdn");
    e.target = s.mode == TargetMode::clean_target ? clean_rel : std::filesystem::path("noisy") / (id + "_target.esdn");
    e.sigma_input_255 = to_255(s.sigma_input);
    e.sigma_target_255 = to_255(s.sigma_target);
    e.mode = s.mode;
    write_image(out / e.input, s.input, ImageFormat::tensor_f32);
    if (s.mode != TargetMode::clean_target) write_image(out / e.target, s.target, ImageFormat::tensor_f32);
    m.samples.push_back(e);
  }

  const json val = j.value("validation", json::object());
  reject_unknown(val, {"count", "sigma_255", "sigma"}, "validation");
  const std::size_t vcount = val.value("count", std::size_t{0});
  if (vcount) {
    std::filesystem::create_directories(out / "validation");
    const double vsigma = sigma_from(val, "sigma", rp.sigma);
    const Corpus vimgs = load_corpus(std::nullopt, vcount, size, mix64(seed ^ hash_tag("validation-corpus")));
    const auto pairs = make_test_set(vimgs.images, vsigma, mix64(seed ^ hash_tag("validation-noise")));
    for (std::size_t i = 0; i < pairs.size(); ++i) {
      ManifestEntry e;
      e.clean = std::filesystem::path("validation") / (three_digits(i) + "_clean.esdn");
      e.input = std::filesystem::path("validation") / (three_digits(i) + "_input.esdn");
      e.target = e.clean;
      e.sigma_input_255 = to_255(vsigma);
      e.mode = TargetMode::clean_target;
      write_image(out / e.clean, pairs[i].target, ImageFormat::tensor_f32);
      write_image(out / e.input, pairs[i].input, ImageFormat::tensor_f32);
      m.validation.push_back(e);
    }
  }
  m.save(out / "manifest.json");
  std::cout << "synth: " << m.samples.size() << " samples (" << cleans.name << ") -> " << (out / "manifest.json").string()
            << "\n";
  return kExitPass;
}

// ---------------------------------------------------------------------------

template <std::floating_point T>
Denoiser<T> run_training(const TrainConfig& tc, const TrainingData& data, const DenoiserConfig& dc, std::uint64_t seed,
                         TrainingLog* log) {
  RngStream init(seed, "init");
  return train<T>(tc, data, build_denoiser<T>(dc, init), log);
}

int cmd_train(const std::filesystem::path& config_path, std::uint64_t seed, const std::filesystem::path& out,
              const std::optional<std::filesystem::path>& manifest_flag) {
  const json j = load_json(config_path);
  reject_unknown(j, {"manifest", "method", "denoiser", "train", "patches"}, "train config");
  std::filesystem::path manifest_path;
  if (manifest_flag) manifest_path = *manifest_flag;
  else if (j.contains("manifest")) manifest_path = relative_to(config_path.parent_path(), j["manifest"].get<std::string>());
  else throw ConfigError("train: no manifest given (config key 'manifest' or --manifest)");

  DenoiserConfig dc;
  dc.kind = DenoiserKind::small_cnn;
  if (j.contains("denoiser")) dc = denoiser_config_from_json(j["denoiser"]);
  TrainConfig tc = j.contains("train") ? train_config_from_json(j["train"]) : TrainConfig{};
  tc.global_seed = seed;
  std::optional<Method> method;
  if (j.contains("method")) {
    method = method_from_string(j["method"].get<std::string>());
    tc.loss = loss_for(*method);
  }
  PatchOptions po;
  if (j.contains("patches")) {
    const auto& p = j["patches"];
    reject_unknown(p, {"size", "stride", "augment"}, "patches");
    po.patch_size = p.value("size", po.patch_size);
    po.stride = p.value("stride", po.stride);
    po.augment = p.value("augment", po.augment);
  }

  const Manifest m = Manifest::load(manifest_path);
  const auto base = manifest_path.parent_path();
  std::vector<Image> cleans;
  std::vector<PairedSample> samples = load_samples(m.samples, base, &cleans);
  if (method) samples = method_samples(*method, samples, cleans, seed);
  RngStream aug(seed, "augment");
  TrainingData data;
  data.train = extract_patches(samples, po.patch_size, po.stride, po.augment, aug);
  data.validation = load_samples(m.validation, base);
  check_regime(tc.loss, data.train);

  TrainingLog log;
  json extra{{"train", to_json(tc)},
             {"method", method ? json(std::string(to_string(*method))) : json(nullptr)},
             {"patches", {{"size", po.patch_size}, {"stride", po.stride}, {"augment", po.augment}}}};
  extra["config_digest"] = config_digest(extra);
  if (tc.precision == Precision::f32) save_checkpoint(out, run_training<float>(tc, data, dc, seed, &log), extra);
  else save_checkpoint(out, run_training<double>(tc, data, dc, seed, &log), extra);
  std::filesystem::path log_path = out;
  log_path += ".log.csv";
  log.write_csv(log_path);
  std::cout << "train: " << to_string(tc.loss) << ", " << data.train.size() << " patches, " << tc.epochs
            << " epochs -> " << out.string() << "\n";
  if (!log.epochs.empty()) {
    const auto& last = log.epochs.back();
    std::cout << "  final mean loss " << last.mean_loss;
    if (last.val_psnr) std::cout << ", validation PSNR " << *last.val_psnr << " dB";
    std::cout << "\n";
  }
  return kExitPass;
}

// ---------------------------------------------------------------------------

int cmd_eval(const std::filesystem::path& config_path, std::optional<std::uint64_t> seed,
             const std::optional<std::filesystem::path>& out, const std::optional<std::filesystem::path>& ckpt_flag) {
  const json j = load_json(config_path);
  reject_unknown(j, {"checkpoint", "denoiser", "sigma_255", "sigma", "test", "eval_seed", "denoised_dir"},
                 "eval config");
  const auto base = config_path.parent_path();
  std::optional<Denoiser<double>> d;
  if (ckpt_flag) d = load_checkpoint(*ckpt_flag).denoiser;
  else if (j.contains("checkpoint")) d = load_checkpoint(relative_to(base, j["checkpoint"].get<std::string>())).denoiser;
  else if (j.contains("denoiser")) {
    RngStream init(seed.value_or(0), "init");
    d = build_denoiser<double>(denoiser_config_from_json(j["denoiser"]), init);
  } else {
    throw ConfigError("eval: give a checkpoint or a denoiser");
  }
  const double sigma = sigma_from(j, "sigma", from_255(25.0));
  const std::uint64_t eval_seed = seed.value_or(j.value("eval_seed", std::uint64_t{1}));
  const json t = j.value("test", json::object());
  reject_unknown(t, {"dir", "count", "size", "corpus_seed"}, "test");
  std::optional<std::filesystem::path> dir;
  if (t.contains("dir") && !t["dir"].is_null()) dir = relative_to(base, t["dir"].get<std::string>());
  const Corpus corpus = load_corpus(dir, t.value("count", std::size_t{8}), t.value("size", std::size_t{128}),
                                    t.value("corpus_seed", mix64(std::uint64_t{0} ^ hash_tag("test-corpus"))));
  const auto test_set = make_test_set(corpus.images, sigma, eval_seed);
  const PsnrReport rep = evaluate_psnr<double>(*d, test_set);

  if (j.contains("denoised_dir")) {
    const auto dd = relative_to(base, j["denoised_dir"].get<std::string>());
    std::filesystem::create_directories(dd);
    for (std::size_t i = 0; i < test_set.size(); ++i)
      write_pgm8(dd / (three_digits(i) + ".pgm"), d->forward(test_set[i].input));
  }
  if (out) {
    std::vector<std::vector<std::string>> rows;
    for (std::size_t i = 0; i < rep.per_image.size(); ++i)
      rows.push_back({std::to_string(i), csv_number(rep.per_image[i])});
    rows.push_back({"mean", csv_number(rep.mean)});
    rows.push_back({"std", csv_number(rep.stddev)});
    write_csv(*out, CsvSchema{"esure-eval/1", {"image", "psnr_db"}}, rows);
  }
  std::cout << "eval: " << corpus.name << ", " << rep.per_image.size() << " images, sigma " << to_255(sigma)
            << "/255, mean PSNR " << rep.mean << " dB (std " << rep.stddev << ")\n";
  return kExitPass;
}

// ---------------------------------------------------------------------------

const CsvSchema kUnbiasednessSchema{"esure-unbiasedness/1",
                                    {"check", "estimator", "mode", "denoiser", "draws", "mean", "standard_error",
                                     "oracle", "oracle_source", "z_score", "threshold", "pass", "expected_pass"}};

const CsvSchema kVerificationSchema{"esure-verification/1",
                                    {"check", "subject", "metric", "value", "tolerance", "pass"}};

int cmd_verify_unbiasedness(const std::filesystem::path& config_path, std::uint64_t seed,
                            const std::optional<std::filesystem::path>& out) {
  const json j = load_json(config_path);
  reject_unknown(j, {"estimator", "mode", "sigma_255", "sigma", "sigma_gt_255", "sigma_gt", "added_noise_mode",
                     "divergence", "epsilon", "draws", "threshold", "image", "denoisers", "expect"},
                 "unbiasedness config");
  UnbiasednessSetup s;
  s.estimator = loss_kind_from_string(j.value("estimator", std::string("sure")));
  s.mode = target_mode_from_string(j.value("mode", std::string("clean_target")));
  s.sigma = sigma_from(j, "sigma", 0.1);
  s.sigma_gt = sigma_from(j, "sigma_gt", 0.0);
  s.added_mode = added_mode_from(j);
  s.estimator_config.divergence = divergence_mode_from_string(j.value("divergence", std::string("analytic")));
  s.estimator_config.epsilon = j.value("epsilon", 1.6e-4 * s.sigma);
  s.draws = j.value("draws", std::size_t{20000});
  s.threshold = j.value("threshold", 4.0);
  s.seed = seed;
  const std::string expect = j.value("expect", std::string("pass"));
  if (expect != "pass" && expect != "fail") throw ConfigError("expect must be 'pass' or 'fail'");
  const bool want_pass = expect == "pass";
  if (s.draws < 1000) throw ConfigError("unbiasedness: at least 1000 draws are required");

  const Image clean = verification_image(j.value("image", json::object()), seed, config_path.parent_path());
  std::vector<DenoiserConfig> dcs;
  for (const auto& dj : j.value("denoisers", json::array({json{{"kind", "identity"}}})))
    dcs.push_back(denoiser_config_from_json(dj));

  bool all_ok = true;
  std::vector<std::vector<std::string>> rows;
  for (const auto& dc : dcs) {
    RngStream init(seed, "init");
    const auto d = build_denoiser<double>(dc, init);
    const VerificationReport r = verify_unbiasedness(d, clean, s);
    const bool ok = r.pass == want_pass;
    all_ok = all_ok && ok;
    rows.push_back({r.name, std::string(to_string(r.estimator)), std::string(to_string(r.mode)),
                    std::string(to_string(r.denoiser)), std::to_string(r.draws), csv_number(r.mean),
                    csv_number(r.standard_error), csv_number(r.oracle), r.oracle_source, csv_number(r.z_score),
                    csv_number(r.threshold), r.pass ? "1" : "0", want_pass ? "1" : "0"});
    std::cout << (ok ? "ok   " : "FAIL ") << r.name << ": mean " << r.mean << ", oracle " << r.oracle << " ("
              << r.oracle_source << "), z " << r.z_score << ", expected " << expect << "\n";
  }
  if (out) write_csv(*out, kUnbiasednessSchema, rows);
  return all_ok ? kExitPass : kExitVerificationFailure;
}

int cmd_verify_identity(const std::filesystem::path& config_path, std::uint64_t seed,
                        const std::optional<std::filesystem::path>& out) {
  const json j = load_json(config_path);
  reject_unknown(j, {"samples", "sigma_255", "sigma", "image_size", "denoisers", "tolerance"}, "identity config");
  const std::size_t n = j.value("samples", std::size_t{100});
  const double sigma = sigma_from(j, "sigma", from_255(25.0));
  const std::size_t size = j.value("image_size", std::size_t{32});
  const double tol = j.value("tolerance", 1e-12);
  std::vector<DenoiserConfig> dcs;
  if (j.contains("denoisers")) {
    for (const auto& dj : j["denoisers"]) dcs.push_back(denoiser_config_from_json(dj));
  } else {
    DenoiserConfig a;
    a.kind = DenoiserKind::scaling;
    a.scale = 0.7;
    DenoiserConfig b;
    b.kind = DenoiserKind::conv_filter;
    DenoiserConfig c;
    c.kind = DenoiserKind::soft_threshold;
    DenoiserConfig e;
    e.kind = DenoiserKind::small_cnn;
    e.cnn.layers = 3;
    e.cnn.features = 4;
    dcs = {a, b, c, e};
  }
  const RngStream root(seed, "verify-identity");
  bool all_ok = true;
  std::vector<std::vector<std::string>> rows;
  for (std::size_t k = 0; k < dcs.size(); ++k) {
    auto init = root.derive("init", k);
    Denoiser<double> d = build_denoiser<double>(dcs[k], init);
    // Move away from the initial parameters so every term is exercised.
    auto jitter = root.derive("jitter", k);
    for (auto& p : d.params()) p += 0.05 * jitter.normal();
    double worst = 0;
    for (std::size_t i = 0; i < n; ++i) {
      auto is = root.derive("image", i);
      const Image x = synthetic_texture(size, is);
      worst = std::max(worst, verify_identity_n2n(d, make_uncorrelated_pair(x, sigma, root.derive("pair", i))));
    }
    const bool ok = worst <= tol;
    all_ok = all_ok && ok;
    rows.push_back({"identity", std::string(to_string(dcs[k].kind)), "max_abs_deviation", csv_number(worst),
                    csv_number(tol), ok ? "1" : "0"});
    std::cout << (ok ? "ok   " : "FAIL ") << to_string(dcs[k].kind) << ": max deviation " << worst << " over " << n
              << " samples\n";
  }
  if (out) write_csv(*out, kVerificationSchema, rows);
  return all_ok ? kExitPass : kExitVerificationFailure;
}

std::vector<PairedSample> gradient_batch(LossKind loss, std::size_t count, std::size_t size, double sigma,
                                         double sigma_gt, const RngStream& root) {
  std::vector<PairedSample> out;
  for (std::size_t i = 0; i < count; ++i) {
    auto is = root.derive("image", i);
    const Image x = synthetic_texture(size, is);
    const RngStream ns = root.derive("noise", i);
    switch (loss) {
      case LossKind::mse:
      case LossKind::sure: {
        auto s = ns.derive("single");
        out.push_back({synth_noisy(x, sigma, s), x, sigma, 0.0, TargetMode::clean_target});
        break;
      }
      case LossKind::n2n: out.push_back(make_uncorrelated_pair(x, sigma, ns)); break;
      case LossKind::esure:
        out.push_back(make_imperfect_gt_pair(x, sigma_gt, sigma, ns, AddedNoiseMode::total_sigma));
        break;
    }
  }
  return out;
}

int cmd_verify_gradient(const std::filesystem::path& config_path, std::uint64_t seed,
                        const std::optional<std::filesystem::path>& out) {
  const json j = load_json(config_path);
  reject_unknown(j, {"image_size", "batch", "sigma_255", "sigma", "sigma_gt_255", "sigma_gt", "fd_step", "epsilon",
                     "divergence", "max_coordinates", "cases"},
                 "gradient config");
  const std::size_t size = j.value("image_size", std::size_t{12});
  const std::size_t count = j.value("batch", std::size_t{2});
  const double sigma = sigma_from(j, "sigma", from_255(25.0));
  const double sigma_gt = sigma_from(j, "sigma_gt", from_255(10.0));
  GradientCheckSetup base;
  base.fd_step = j.value("fd_step", 1e-6);
  base.estimator_config.epsilon = j.value("epsilon", 1.6e-4 * sigma);
  base.estimator_config.divergence = divergence_mode_from_string(j.value("divergence", std::string("monte_carlo")));
  base.max_coordinates = j.value("max_coordinates", std::size_t{200});
  base.seed = seed;
  if (!j.contains("cases")) throw ConfigError("gradient: no cases");

  const RngStream root(seed, "verify-gradient");
  bool all_ok = true;
  std::vector<std::vector<std::string>> rows;
  std::size_t case_index = 0;
  for (const auto& c : j["cases"]) {
    reject_unknown(c, {"denoiser", "tolerance", "perturb", "losses", "fd_step"}, "gradient case");
    const DenoiserConfig dc = denoiser_config_from_json(c.at("denoiser"));
    const double tol = c.value("tolerance", 1e-8);
    auto init = root.derive("init", case_index);
    Denoiser<double> d = build_denoiser<double>(dc, init);
    const double perturb = c.value("perturb", 0.0);
    auto jitter = root.derive("perturb", case_index);
    for (auto& p : d.params()) p += perturb * jitter.normal();
    std::vector<LossKind> losses{LossKind::mse, LossKind::sure, LossKind::esure, LossKind::n2n};
    if (c.contains("losses")) {
      losses.clear();
      for (const auto& l : c["losses"]) losses.push_back(loss_kind_from_string(l.get<std::string>()));
    }
    for (LossKind loss : losses) {
      GradientCheckSetup s = base;
      s.loss = loss;
      s.fd_step = c.value("fd_step", base.fd_step);
      const auto batch = gradient_batch(loss, count, size, sigma, sigma_gt, root.derive("batch", case_index));
      const GradientReport r = verify_gradient(d, batch, s);
      const bool ok = r.relative_error <= tol;
      all_ok = all_ok && ok;
      const std::string subject = std::string(to_string(dc.kind)) + "/" + std::string(to_string(loss));
      rows.push_back({"gradient", subject, "relative_error", csv_number(r.relative_error), csv_number(tol),
                      ok ? "1" : "0"});
      std::cout << (ok ? "ok   " : "FAIL ") << subject << ": rel. error " << r.relative_error << " over "
                << r.coordinates << " coordinates (|g|max " << r.gradient_scale << ")\n";
    }
    ++case_index;
  }
  if (out) write_csv(*out, kVerificationSchema, rows);
  return all_ok ? kExitPass : kExitVerificationFailure;
}

// ---------------------------------------------------------------------------

int cmd_experiment(const std::filesystem::path& config_path, std::uint64_t seed,
                   const std::optional<std::filesystem::path>& out) {
  ExperimentConfig cfg;
  try {
    cfg = ExperimentConfig::from_json(load_json(config_path));
  } catch (const json::exception& e) {
    throw ConfigError(std::string("experiment config: ") + e.what());
  }
  if (cfg.corpus_dir && cfg.corpus_dir->is_relative()) cfg.corpus_dir = config_path.parent_path() / *cfg.corpus_dir;
  std::cout << "experiment: " << to_string(cfg.campaign) << ", seed " << seed << "\n";
  const ExperimentResult r = run_experiment(cfg, seed, out, true);
  std::cout << "corpus: " << r.corpus << "\n";
  for (const auto& row : r.rows)
    std::cout << "  " << to_string(row.method) << "  sigma_gt " << row.sigma_gt_255 << "  " << row.psnr_mean_db
              << " dB\n";
  if (!r.complete) {
    std::cerr << "experiment aborted: " << r.error << "\n";
    return kExitVerificationFailure;
  }
  return kExitPass;
}

}  // namespace

int run_cli(int argc, char** argv) {
  CLI::App app{"Unbiased risk estimators for training Gaussian denoisers"};
  app.require_subcommand(1);

  std::string config;
  std::uint64_t seed = 0;
  std::string out;
  std::string manifest, checkpoint;

  const auto common = [&](CLI::App* sub, bool out_required) {
    sub->add_option("config", config, "JSON config path")->required()->check(CLI::ExistingFile);
    sub->add_option("--seed", seed, "global seed");
    auto* o = sub->add_option("--out", out, "output path");
    if (out_required) o->required();
  };

  auto* synth = app.add_subcommand("synth", "synthesize a noisy dataset and its manifest");
  common(synth, true);
  auto* train_cmd = app.add_subcommand("train", "train a denoiser and write a checkpoint");
  common(train_cmd, true);
  train_cmd->add_option("--manifest", manifest, "dataset manifest (overrides the config)");
  auto* eval = app.add_subcommand("eval", "PSNR of a checkpoint on a noisy test set");
  common(eval, false);
  eval->add_option("--checkpoint", checkpoint, "checkpoint (overrides the config)");
  auto* verify = app.add_subcommand("verify", "verification checks");
  verify->require_subcommand(1);
  auto* v_unb = verify->add_subcommand("unbiasedness", "risk estimator mean vs oracle risk");
  common(v_unb, false);
  auto* v_id = verify->add_subcommand("identity", "eSURE on independent pairs equals N2N minus the target variance");
  common(v_id, false);
  auto* v_grad = verify->add_subcommand("gradient", "loss gradients vs central finite differences");
  common(v_grad, false);
  auto* experiment = app.add_subcommand("experiment", "desk-scale comparison campaign");
  common(experiment, false);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? kExitPass : kExitUsage;
  }

  const std::filesystem::path cfg(config);
  const auto out_opt = out.empty() ? std::nullopt : std::optional<std::filesystem::path>(out);
  const bool seed_given = [&] {
    for (auto* s : {synth, train_cmd, eval, v_unb, v_id, v_grad, experiment})
      if (s->parsed()) return s->count("--seed") > 0;
    return false;
  }();
  try {
    if (synth->parsed()) return cmd_synth(cfg, seed, out);
    if (train_cmd->parsed())
      return cmd_train(cfg, seed, out, manifest.empty() ? std::nullopt : std::optional<std::filesystem::path>(manifest));
    if (eval->parsed())
      return cmd_eval(cfg, seed_given ? std::optional<std::uint64_t>(seed) : std::nullopt, out_opt,
                      checkpoint.empty() ? std::nullopt : std::optional<std::filesystem::path>(checkpoint));
    if (v_unb->parsed()) return cmd_verify_unbiasedness(cfg, seed, out_opt);
    if (v_id->parsed()) return cmd_verify_identity(cfg, seed, out_opt);
    if (v_grad->parsed()) return cmd_verify_gradient(cfg, seed, out_opt);
    if (experiment->parsed()) return cmd_experiment(cfg, seed, out_opt);
  } catch (const std::invalid_argument& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const nlohmann::json::exception& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const IoError& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::filesystem::filesystem_error& e) {
    std::cerr << "io error: " << e.what() << "\n";
    return kExitUsage;
  } catch (const Unsupported& e) {
    std::cerr << "unsupported: " << e.what() << "\n";
    return kExitUsage;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitVerificationFailure;
  }
  return kExitUsage;
}

}  // namespace esure
