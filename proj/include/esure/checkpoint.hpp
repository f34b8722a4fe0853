#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "esure/denoiser.hpp"
#include "esure/trainer.hpp"

namespace esure {

/// JSON forms of the configuration structs. Unknown keys are rejected so a
/// typo in a config file fails loudly.
nlohmann::json to_json(const DenoiserConfig& c);
DenoiserConfig denoiser_config_from_json(const nlohmann::json& j);
nlohmann::json to_json(const TrainConfig& c);
/// Keys absent from `j` keep their value from `base`.
TrainConfig train_config_from_json(const nlohmann::json& j, const TrainConfig& base = {});

/// 16 hex digits of FNV-1a over the compact dump of `j`.
std::string config_digest(const nlohmann::json& j);

/// Checkpoint file: one line of compact JSON header (kind, architecture,
/// parameter layout, `extra`), a newline, then the parameter vector as a
/// 1 x P x 1 tensor container.
template <std::floating_point T>
void save_checkpoint(const std::filesystem::path& path, const Denoiser<T>& d, const nlohmann::json& extra = {});

struct LoadedCheckpoint {
  Denoiser<double> denoiser;
  nlohmann::json header;
};

LoadedCheckpoint load_checkpoint(const std::filesystem::path& path);

}  // namespace esure
