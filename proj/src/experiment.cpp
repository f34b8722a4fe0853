#include <chrono>
#include <cmath>
#include <iostream>
#include <set>

#include "esure/checkpoint.hpp"
#include "esure/harness.hpp"

namespace esure {

using nlohmann::json;

std::string_view to_string(Campaign c) {
  return c == Campaign::uncorrelated_pairs ? "uncorrelated_pairs" : "imperfect_gt_sweep";
}

Campaign campaign_from_string(std::string_view s) {
  if (s == "uncorrelated_pairs") return Campaign::uncorrelated_pairs;
  if (s == "imperfect_gt_sweep") return Campaign::imperfect_gt_sweep;
  throw std::invalid_argument("unknown campaign: " + std::string(s));
}

const CsvSchema kMetricsSchema{
    "esure-metrics/1",
    {"method", "regime", "sigma_noisy_255", "sigma_gt_255", "psnr_mean_db", "psnr_std_db", "seed", "config_digest"}};

namespace {

std::vector<Method> default_methods(Campaign c) {
  if (c == Campaign::uncorrelated_pairs) return {Method::mse, Method::sure, Method::sure_star, Method::n2n, Method::esure};
  return {Method::mse, Method::n2n, Method::esure};
}

// Methods whose training data does not depend on sigma_gt in the sweep.
bool gt_independent(Method m) { return m == Method::mse || m == Method::sure; }

std::string added_mode_name(AddedNoiseMode m) { return m == AddedNoiseMode::total_sigma ? "total_sigma" : "added_sigma"; }

void reject_unknown(const json& j, const std::set<std::string>& allowed, const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + ": expected a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw std::invalid_argument(std::string(what) + ": unknown key '" + k + "'");
}

}  // namespace

TrainConfig campaign_train_defaults() {
  TrainConfig t;
  t.epochs = 100;
  t.lr_drop_epoch = 80;
  t.epsilon_coefficient = 1.6e-4 * 255;
  return t;
}

void ExperimentConfig::validate() const {
  if (methods.empty()) throw std::invalid_argument("experiment: no methods");
  if (!(sigma_noisy_255 > 0)) throw std::invalid_argument("experiment: sigma_noisy_255 must be positive");
  if (campaign == Campaign::imperfect_gt_sweep) {
    if (sigma_gt_255.empty()) throw std::invalid_argument("experiment: sigma_gt_255 list is empty");
    for (double g : sigma_gt_255) (void)added_noise_sigma(from_255(g), from_255(sigma_noisy_255), added_mode);
    for (Method m : methods)
      if (m == Method::sure_star) throw std::invalid_argument("experiment: SURE* needs uncorrelated pairs");
  }
  if (train_images == 0 || test_images == 0) throw std::invalid_argument("experiment: empty corpus");
  if (patches.patch_size == 0 || patches.stride == 0 || patches.patch_size > image_size)
    throw std::invalid_argument("experiment: invalid patch geometry");
  denoiser.validate();
  train.validate();
}

ExperimentConfig ExperimentConfig::from_json(const json& j) {
  reject_unknown(j,
                 {"campaign", "methods", "sigma_noisy_255", "sigma_gt_255", "added_noise_mode", "corpus", "patches",
                  "denoiser", "train", "eval_seed"},
                 "experiment config");
  ExperimentConfig c;
  c.campaign = campaign_from_string(j.at("campaign").get<std::string>());
  if (j.contains("methods"))
    for (const auto& m : j.at("methods")) c.methods.push_back(method_from_string(m.get<std::string>()));
  else
    c.methods = default_methods(c.campaign);
  c.sigma_noisy_255 = j.value("sigma_noisy_255", c.sigma_noisy_255);
  if (j.contains("sigma_gt_255")) c.sigma_gt_255 = j.at("sigma_gt_255").get<std::vector<double>>();
  if (j.contains("added_noise_mode")) {
    const auto m = j.at("added_noise_mode").get<std::string>();
    if (m == "total_sigma") c.added_mode = AddedNoiseMode::total_sigma;
    else if (m == "added_sigma") c.added_mode = AddedNoiseMode::added_sigma;
    else throw std::invalid_argument("unknown added_noise_mode: " + m);
  }
  if (j.contains("corpus")) {
    const auto& k = j.at("corpus");
    reject_unknown(k, {"dir", "train_images", "test_images", "image_size"}, "corpus");
    if (k.contains("dir") && !k.at("dir").is_null()) c.corpus_dir = k.at("dir").get<std::string>();
    c.train_images = k.value("train_images", c.train_images);
    c.test_images = k.value("test_images", c.test_images);
    c.image_size = k.value("image_size", c.image_size);
  }
  if (j.contains("patches")) {
    const auto& p = j.at("patches");
    reject_unknown(p, {"size", "stride", "augment"}, "patches");
    c.patches.patch_size = p.value("size", c.patches.patch_size);
    c.patches.stride = p.value("stride", c.patches.stride);
    c.patches.augment = p.value("augment", c.patches.augment);
  }
  if (j.contains("denoiser")) c.denoiser = denoiser_config_from_json(j.at("denoiser"));
  if (j.contains("train")) c.train = train_config_from_json(j.at("train"), c.train);
  c.eval_seed = j.value("eval_seed", c.eval_seed);
  c.validate();
  return c;
}

json ExperimentConfig::to_json() const {
  json methods_j = json::array();
  for (Method m : methods) methods_j.push_back(std::string(to_string(m)));
  json t = esure::to_json(train);
  t.erase("seed");  // the run seed is reported separately
  return json{{"campaign", std::string(to_string(campaign))},
              {"methods", methods_j},
              {"sigma_noisy_255", sigma_noisy_255},
              {"sigma_gt_255", sigma_gt_255},
              {"added_noise_mode", added_mode_name(added_mode)},
              {"corpus",
               {{"dir", corpus_dir ? json(corpus_dir->string()) : json(nullptr)},
                {"train_images", train_images},
                {"test_images", test_images},
                {"image_size", image_size}}},
              {"patches", {{"size", patches.patch_size}, {"stride", patches.stride}, {"augment", patches.augment}}},
              {"denoiser", esure::to_json(denoiser)},
              {"train", t},
              {"eval_seed", eval_seed}};
}

std::optional<double> ExperimentResult::psnr(Method m, double sigma_gt_255) const {
  for (const auto& r : rows)
    if (r.method == m && r.sigma_gt_255 == sigma_gt_255) return r.psnr_mean_db;
  return std::nullopt;
}

void write_metrics_csv(const std::filesystem::path& path, const std::vector<ExperimentRow>& rows, bool append) {
  std::vector<std::vector<std::string>> cells;
  for (const auto& r : rows)
    cells.push_back({std::string(to_string(r.method)), std::string(to_string(r.regime)), csv_number(r.sigma_noisy_255),
                     csv_number(r.sigma_gt_255), csv_number(r.psnr_mean_db), csv_number(r.psnr_std_db),
                     std::to_string(r.seed), r.config_digest});
  write_csv(path, kMetricsSchema, cells, append);
}

void write_plot_csv(const std::filesystem::path& path, const ExperimentConfig& config,
                    const std::vector<ExperimentRow>& rows) {
  CsvSchema schema{"esure-plot/1", {"sigma_gt_255"}};
  for (Method m : config.methods) schema.columns.emplace_back(to_string(m));
  std::vector<std::vector<std::string>> cells;
  for (double g : config.sigma_gt_255) {
    std::vector<std::string> row{csv_number(g)};
    for (Method m : config.methods) {
      std::string v;
      for (const auto& r : rows)
        if (r.method == m && r.sigma_gt_255 == g) v = csv_number(r.psnr_mean_db);
      row.push_back(v);
    }
    cells.push_back(std::move(row));
  }
  write_csv(path, schema, cells);
}

namespace {

template <std::floating_point T>
PsnrReport train_and_score(const ExperimentConfig& cfg, Method m, const PatchSet& ps, std::uint64_t seed,
                           const std::vector<PairedSample>& test_set) {
  TrainConfig tc = cfg.train;
  tc.loss = loss_for(m);
  tc.global_seed = seed;
  TrainingData data;
  data.train.patch_size = ps.patch_size;
  data.train.patches = method_samples(m, ps.samples, ps.cleans, seed);
  RngStream init(seed, "init");
  Denoiser<T> d = build_denoiser<T>(cfg.denoiser, init);
  d = train<T>(tc, data, std::move(d));
  return evaluate_psnr<T>(d, test_set);
}

}  // namespace

ExperimentResult run_experiment(const ExperimentConfig& config, std::uint64_t seed,
                                const std::optional<std::filesystem::path>& out_dir, bool verbose) {
  config.validate();
  ExperimentResult result;
  const std::string digest = config_digest(config.to_json());

  std::optional<std::filesystem::path> train_dir, test_dir;
  if (config.corpus_dir) {
    train_dir = *config.corpus_dir / "train";
    test_dir = *config.corpus_dir / "test";
  }
  const Corpus train_corpus =
      load_corpus(train_dir, config.train_images, config.image_size, mix64(seed ^ hash_tag("train-corpus")));
  const Corpus test_corpus =
      load_corpus(test_dir, config.test_images, config.image_size, mix64(seed ^ hash_tag("test-corpus")));
  result.corpus = train_corpus.name + " / " + test_corpus.name;

  const double sigma = from_255(config.sigma_noisy_255);
  const auto test_set = make_test_set(test_corpus.images, sigma, config.eval_seed);

  std::optional<std::filesystem::path> metrics;
  if (out_dir) {
    std::filesystem::create_directories(*out_dir);
    metrics = *out_dir / "metrics.csv";
    write_metrics_csv(*metrics, {}, false);
  }

  const auto emit = [&](ExperimentRow row) {
    if (metrics) write_metrics_csv(*metrics, {row}, true);
    if (verbose)
      std::cerr << "  " << to_string(row.method) << " sigma_gt=" << row.sigma_gt_255 << " psnr=" << row.psnr_mean_db
                << " dB (" << row.wall_seconds << " s)\n";
    result.rows.push_back(std::move(row));
  };

  struct Member {
    Regime regime;
    double sigma_gt_255;
  };
  std::vector<Member> settings;
  if (config.campaign == Campaign::uncorrelated_pairs) settings.push_back({Regime::uncorrelated_pair, 0.0});
  else
    for (double g : config.sigma_gt_255) settings.push_back({Regime::imperfect_gt, g});

  try {
    std::vector<std::pair<Method, ExperimentRow>> reusable;
    for (const auto& st : settings) {
      RegimeParams rp;
      rp.regime = st.regime;
      rp.sigma = sigma;
      rp.sigma_gt = from_255(st.sigma_gt_255);
      rp.added_mode = config.added_mode;
      const PatchSet ps = build_patch_set(train_corpus.images, rp, config.patches, seed);
      for (Method m : config.methods) {
        if (st.regime == Regime::imperfect_gt && gt_independent(m)) {
          auto it = std::find_if(reusable.begin(), reusable.end(), [&](const auto& p) { return p.first == m; });
          if (it != reusable.end()) {
            ExperimentRow row = it->second;
            row.sigma_gt_255 = st.sigma_gt_255;
            row.wall_seconds = 0;
            emit(row);
            continue;
          }
        }
        const auto t0 = std::chrono::steady_clock::now();
        const PsnrReport rep = config.train.precision == Precision::f32
                                   ? train_and_score<float>(config, m, ps, seed, test_set)
                                   : train_and_score<double>(config, m, ps, seed, test_set);
        ExperimentRow row;
        row.method = m;
        row.regime = st.regime;
        row.sigma_noisy_255 = config.sigma_noisy_255;
        row.sigma_gt_255 = st.sigma_gt_255;
        row.psnr_mean_db = rep.mean;
        row.psnr_std_db = rep.stddev;
        row.seed = seed;
        row.config_digest = digest;
        row.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
        if (!std::isfinite(row.psnr_mean_db)) throw std::runtime_error("non-finite PSNR for " + std::string(to_string(m)));
        if (st.regime == Regime::imperfect_gt && gt_independent(m)) reusable.emplace_back(m, row);
        emit(row);
      }
    }
    result.complete = true;
  } catch (const std::exception& e) {
    result.error = e.what();
  }
  if (out_dir && config.campaign == Campaign::imperfect_gt_sweep)
    write_plot_csv(*out_dir / "plot.csv", config, result.rows);
  return result;
}

}  // namespace esure
