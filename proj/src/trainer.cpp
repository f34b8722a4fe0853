#include "esure/trainer.hpp"

#include <chrono>
#include <cmath>
#include <fstream>
#include <numeric>
#include <sstream>

namespace esure {

std::string_view to_string(Precision p) { return p == Precision::f32 ? "f32" : "f64"; }

Precision precision_from_string(std::string_view s) {
  if (s == "f32" || s == "float32") return Precision::f32;
  if (s == "f64" || s == "float64") return Precision::f64;
  throw std::invalid_argument("unknown precision: " + std::string(s));
}

void TrainConfig::validate() const {
  if (batch_size == 0) throw std::invalid_argument("train: batch_size must be >= 1");
  if (!(lr_initial > 0)) throw std::invalid_argument("train: lr_initial must be positive");
  if (!(lr_drop_factor > 0)) throw std::invalid_argument("train: lr_drop_factor must be positive");
  if (!(epsilon_coefficient > 0)) throw std::invalid_argument("train: epsilon coefficient must be positive");
  if (epsilon_fixed < 0) throw std::invalid_argument("train: epsilon must be non-negative");
}

double TrainConfig::lr_for_epoch(std::size_t epoch) const {
  return epoch < lr_drop_epoch ? lr_initial : lr_initial * lr_drop_factor;
}

double epsilon_rule(double sigma_255, double kappa) {
  if (!(sigma_255 >= 0)) throw std::invalid_argument("epsilon_rule: sigma must be non-negative");
  return kappa * sigma_255 / 255.0;
}

template <std::floating_point T>
void adam_step(std::span<T> params, std::span<const T> grad, OptimizerState<T>& state, double lr) {
  if (grad.size() != params.size() || state.first_moment.size() != params.size() ||
      state.second_moment.size() != params.size())
    throw std::invalid_argument("adam_step: length mismatch");
  ++state.step;
  const auto t = static_cast<double>(state.step);
  const double c1 = 1.0 - std::pow(state.beta1, t);
  const double c2 = 1.0 - std::pow(state.beta2, t);
  const T b1 = static_cast<T>(state.beta1), b2 = static_cast<T>(state.beta2);
  for (std::size_t i = 0; i < params.size(); ++i) {
    const T g = grad[i];
    state.first_moment[i] = b1 * state.first_moment[i] + (T(1) - b1) * g;
    state.second_moment[i] = b2 * state.second_moment[i] + (T(1) - b2) * g * g;
    const double mhat = static_cast<double>(state.first_moment[i]) / c1;
    const double vhat = static_cast<double>(state.second_moment[i]) / c2;
    params[i] -= static_cast<T>(lr * mhat / (std::sqrt(vhat) + state.stabilizer));
  }
}

void TrainingLog::write_csv(const std::filesystem::path& path) const {
  std::ofstream os(path);
  if (!os) throw std::runtime_error("cannot write training log: " + path.string());
  if (!header_comment.empty()) os << "# " << header_comment << "\n";
  os << "epoch,step,lr,mean_loss,val_psnr,wall_ms\n";
  os.precision(10);
  for (const auto& r : epochs) {
    os << r.epoch << ',' << r.step << ',' << r.lr << ',' << r.mean_loss << ',';
    if (r.val_psnr) os << *r.val_psnr;
    os << ',' << r.wall_ms << "\n";
  }
}

std::vector<std::size_t> shuffled_indices(std::size_t n, RngStream& stream) {
  std::vector<std::size_t> idx(n);
  std::iota(idx.begin(), idx.end(), std::size_t{0});
  for (std::size_t i = n; i > 1; --i) std::swap(idx[i - 1], idx[stream.below(i)]);
  return idx;
}

void check_regime(LossKind loss, const PatchBatch& batch) {
  if (batch.empty()) throw std::invalid_argument("train: empty training set");
  for (const auto& s : batch.patches) require_compatible(loss, s.mode);
}

template <std::floating_point T>
double mean_psnr(const Denoiser<T>& d, const std::vector<PairedSample>& pairs, double peak) {
  if (pairs.empty()) throw std::invalid_argument("mean_psnr: no images");
  double acc = 0;
  for (const auto& p : pairs) {
    const Image out = image_cast<double>(d.forward(image_cast<T>(p.input)));
    acc += psnr(p.target, out, peak);
  }
  return acc / static_cast<double>(pairs.size());
}

template <std::floating_point T>
Denoiser<T> train(const TrainConfig& config, const TrainingData& data, Denoiser<T> d, TrainingLog* log) {
  config.validate();
  if (config.epochs == 0) return d;
  check_regime(config.loss, data.train);

  OptimizerState<T> opt(d.num_params());
  if (log) {
    std::ostringstream hdr;
    hdr << "loss=" << to_string(config.loss) << " adam beta1=" << opt.beta1 << " beta2=" << opt.beta2
        << " stabilizer=" << opt.stabilizer << " batch=" << config.batch_size << " seed=" << config.global_seed
        << " precision=" << to_string(config.precision) << " kappa=" << config.epsilon_coefficient;
    log->header_comment = hdr.str();
    log->epochs.clear();
  }

  EstimatorConfig est{config.epsilon_fixed, config.divergence};
  // epsilon = kappa * sigma_255 / 255 = kappa * sigma in working units.
  const EpsilonPolicy eps{config.epsilon_fixed, config.epsilon_coefficient};
  const RngStream root(config.global_seed, "train");
  const std::size_t n = data.train.size();
  std::size_t step = 0;
  std::vector<PairedSample> batch;
  batch.reserve(config.batch_size);

  for (std::size_t epoch = 0; epoch < config.epochs; ++epoch) {
    const auto t0 = std::chrono::steady_clock::now();
    const double lr = config.lr_for_epoch(epoch);
    auto shuffle_stream = root.derive("shuffle", epoch);
    const auto order = shuffled_indices(n, shuffle_stream);
    double loss_sum = 0;
    for (std::size_t begin = 0; begin < n; begin += config.batch_size) {
      const std::size_t end = std::min(n, begin + config.batch_size);
      batch.clear();
      for (std::size_t i = begin; i < end; ++i) batch.push_back(data.train.patches[order[i]]);
      const auto probes = draw_probes<T>(config.loss, batch, est, root.derive("probe", step));
      auto lg = batch_loss_gradient<T>(config.loss, batch, d, est, probes, config.threads, &eps);
      if (!std::isfinite(lg.loss))
        throw TrainingDiverged("non-finite loss at epoch " + std::to_string(epoch) + " step " + std::to_string(step));
      for (T g : lg.gradient)
        if (!std::isfinite(g))
          throw TrainingDiverged("non-finite gradient at epoch " + std::to_string(epoch) + " step " +
                                 std::to_string(step));
      adam_step<T>(d.params(), lg.gradient, opt, lr);
      loss_sum += lg.loss * static_cast<double>(end - begin);
      ++step;
    }
    if (log) {
      EpochRecord rec;
      rec.epoch = epoch;
      rec.step = step;
      rec.lr = lr;
      rec.mean_loss = loss_sum / static_cast<double>(n);
      if (!data.validation.empty()) rec.val_psnr = mean_psnr(d, data.validation);
      rec.wall_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() - t0).count();
      log->epochs.push_back(rec);
    }
  }
  return d;
}

template void adam_step<float>(std::span<float>, std::span<const float>, OptimizerState<float>&, double);
template void adam_step<double>(std::span<double>, std::span<const double>, OptimizerState<double>&, double);
template Denoiser<float> train<float>(const TrainConfig&, const TrainingData&, Denoiser<float>, TrainingLog*);
template Denoiser<double> train<double>(const TrainConfig&, const TrainingData&, Denoiser<double>, TrainingLog*);
template double mean_psnr<float>(const Denoiser<float>&, const std::vector<PairedSample>&, double);
template double mean_psnr<double>(const Denoiser<double>&, const std::vector<PairedSample>&, double);

}  // namespace esure
