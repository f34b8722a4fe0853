#include "esure/checkpoint.hpp"

#include <cstdio>
#include <fstream>
#include <set>

#include "esure/image_io.hpp"

namespace esure {

using nlohmann::json;

namespace {

void reject_unknown(const json& j, const std::set<std::string>& allowed, const char* what) {
  if (!j.is_object()) throw std::invalid_argument(std::string(what) + ": expected a JSON object");
  for (const auto& [k, v] : j.items())
    if (!allowed.count(k)) throw std::invalid_argument(std::string(what) + ": unknown key '" + k + "'");
}

}  // namespace

json to_json(const DenoiserConfig& c) {
  json j{{"kind", std::string(to_string(c.kind))}};
  switch (c.kind) {
    case DenoiserKind::scaling: j["scale"] = c.scale; break;
    case DenoiserKind::conv_filter: j["kernel_size"] = c.kernel_size; break;
    case DenoiserKind::soft_threshold: j["threshold"] = c.threshold; break;
    case DenoiserKind::small_cnn:
      j["layers"] = c.cnn.layers;
      j["features"] = c.cnn.features;
      j["kernel"] = c.cnn.kernel;
      j["channels"] = c.cnn.channels;
      break;
    case DenoiserKind::identity: break;
  }
  return j;
}

DenoiserConfig denoiser_config_from_json(const json& j) {
  reject_unknown(j, {"kind", "scale", "kernel_size", "threshold", "layers", "features", "kernel", "channels"},
                 "denoiser config");
  DenoiserConfig c;
  c.kind = denoiser_kind_from_string(j.value("kind", std::string("small_cnn")));
  c.scale = j.value("scale", c.scale);
  c.kernel_size = j.value("kernel_size", c.kernel_size);
  c.threshold = j.value("threshold", c.threshold);
  c.cnn.layers = j.value("layers", c.cnn.layers);
  c.cnn.features = j.value("features", c.cnn.features);
  c.cnn.kernel = j.value("kernel", c.cnn.kernel);
  c.cnn.channels = j.value("channels", c.cnn.channels);
  c.validate();
  return c;
}

json to_json(const TrainConfig& c) {
  return json{{"loss", std::string(to_string(c.loss))},
              {"epochs", c.epochs},
              {"batch_size", c.batch_size},
              {"lr_initial", c.lr_initial},
              {"lr_drop_factor", c.lr_drop_factor},
              {"lr_drop_epoch", c.lr_drop_epoch},
              {"epsilon_coefficient", c.epsilon_coefficient},
              {"epsilon_fixed", c.epsilon_fixed},
              {"divergence", std::string(to_string(c.divergence))},
              {"seed", c.global_seed},
              {"precision", std::string(to_string(c.precision))},
              {"threads", c.threads}};
}

TrainConfig train_config_from_json(const json& j, const TrainConfig& base) {
  reject_unknown(j,
                 {"loss", "epochs", "batch_size", "lr_initial", "lr_drop_factor", "lr_drop_epoch",
                  "epsilon_coefficient", "epsilon_fixed", "divergence", "seed", "precision", "threads"},
                 "train config");
  TrainConfig c = base;
  c.loss = loss_kind_from_string(j.value("loss", std::string(to_string(c.loss))));
  c.epochs = j.value("epochs", c.epochs);
  c.batch_size = j.value("batch_size", c.batch_size);
  c.lr_initial = j.value("lr_initial", c.lr_initial);
  c.lr_drop_factor = j.value("lr_drop_factor", c.lr_drop_factor);
  c.lr_drop_epoch = j.value("lr_drop_epoch", c.lr_drop_epoch);
  c.epsilon_coefficient = j.value("epsilon_coefficient", c.epsilon_coefficient);
  c.epsilon_fixed = j.value("epsilon_fixed", c.epsilon_fixed);
  c.divergence = divergence_mode_from_string(j.value("divergence", std::string(to_string(c.divergence))));
  c.global_seed = j.value("seed", c.global_seed);
  c.precision = precision_from_string(j.value("precision", std::string(to_string(c.precision))));
  c.threads = j.value("threads", c.threads);
  c.validate();
  return c;
}

std::string config_digest(const json& j) {
  const std::string s = j.dump();
  std::uint64_t h = hash_tag(s);
  char buf[17];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

template <std::floating_point T>
void save_checkpoint(const std::filesystem::path& path, const Denoiser<T>& d, const json& extra) {
  json header{{"format", "esure-checkpoint/1"}, {"denoiser", to_json(d.config())}, {"num_params", d.num_params()}};
  json layout = json::array();
  for (const auto& b : param_layout(d.config())) layout.push_back({{"name", b.name}, {"offset", b.offset}, {"size", b.size}});
  header["layout"] = layout;
  if (!extra.is_null()) header["extra"] = extra;

  std::vector<float> p(d.params().begin(), d.params().end());
  std::ofstream os(path, std::ios::binary | std::ios::trunc);
  if (!os) throw IoError(IoError::Code::unwritable, "cannot write checkpoint: " + path.string());
  os << header.dump() << '\n';
  // A parameterless denoiser still stores one (zero) value so the tensor is non-empty.
  if (p.empty()) p.push_back(0.0f);
  const Shape shape{1, p.size(), 1};
  write_tensor_f32(os, ImageF(shape, std::move(p)));
}

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path) {
  std::ifstream is(path, std::ios::binary);
  if (!is) throw IoError(IoError::Code::unreadable, "cannot read checkpoint: " + path.string());
  std::string line;
  if (!std::getline(is, line)) throw IoError(IoError::Code::truncated, "checkpoint: missing header");
  json header;
  try {
    header = json::parse(line);
  } catch (const json::exception& e) {
    throw IoError(IoError::Code::malformed_header, std::string("checkpoint: bad JSON header: ") + e.what());
  }
  const DenoiserConfig config = denoiser_config_from_json(header.at("denoiser"));
  const ImageF t = read_tensor_f32(is);
  std::vector<double> params(t.data().begin(), t.data().end());
  if (param_count(config) == 0) params.clear();
  return {Denoiser<double>(config, std::move(params)), std::move(header)};
}

template void save_checkpoint<float>(const std::filesystem::path&, const Denoiser<float>&, const json&);
template void save_checkpoint<double>(const std::filesystem::path&, const Denoiser<double>&, const json&);

}  // namespace esure
