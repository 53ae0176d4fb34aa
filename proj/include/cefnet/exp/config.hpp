#pragma once

#include <filesystem>
#include <string>

#include <nlohmann/json.hpp>

#include "cefnet/data/synthetic.hpp"
#include "cefnet/exp/training.hpp"

namespace cefnet::exp {

/// One JSON document with optional "model", "train" and "synthetic" objects.
/// Unknown keys are rejected so typos do not silently fall back to defaults.
struct ExperimentConfig {
  model::FusionConfig model;
  TrainConfig train;
  data::SyntheticSpec synthetic;
};

/// Defaults, or desk-scale defaults (small images, narrow DCNN, short budget).
ExperimentConfig default_config(bool desk_scale);
/// Applies the fields present in `doc` on top of `base`.
void apply_json(ExperimentConfig& base, const nlohmann::json& doc);
ExperimentConfig load_config(const std::filesystem::path& path, bool desk_scale);
nlohmann::json to_json(const ExperimentConfig& config);

model::GuidanceMode parse_guidance(const std::string& s);
model::Modality parse_modality(const std::string& s);
model::DirectionalBlock parse_directional(const std::string& s);

}  // namespace cefnet::exp
