#pragma once

#include <string>

#include <json.hpp>

#include "layerforge/vae.hpp"

namespace layerforge::checkpoint {

// Container layout: magic "LFCP1\n", u64 LE manifest byte count, JSON
// manifest, little-endian float64 blob. The manifest names every blob entry
// with shape, dtype, and byte offset; round-trips are bit-exact.

nlohmann::json arch_to_json(const vae::ArchSpec& arch);
vae::ArchSpec arch_from_json(const nlohmann::json& j);

nlohmann::json prior_to_json(const vae::GaussianCodePrior& prior);
vae::GaussianCodePrior prior_from_json(const nlohmann::json& j);

// Model-only container (kind "model"): parameters plus fitted prior.
void save_model(const vae::LayerModel& model, const std::string& path);
vae::LayerModel load_model(const std::string& path);

// Training container (kind "training"): adds optimizer moments, step counts,
// config, and the loss history so a resumed run continues the exact
// trajectory. load_model also accepts these.
void save_training(const vae::TrainState& state, const std::string& path);
vae::TrainState load_training(const std::string& path);

}  // namespace layerforge::checkpoint
