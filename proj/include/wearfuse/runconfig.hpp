#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "wearfuse/synthcohort.hpp"
#include "wearfuse/timeline.hpp"
#include "wearfuse/training.hpp"

namespace wearfuse::config {

// Everything a run needs, round-trippable through JSON. Parsing is strict:
// unknown keys anywhere in the document are rejected.
struct RunConfig {
  std::vector<timeline::ModalitySchema> schema;
  training::DataConfig data;
  std::string cohort_dir = "cohort";
  std::string out_dir = "out";
  synth::SynthConfig synth;
  training::TrainConfig train;
};

RunConfig default_config();

nlohmann::json to_json(const RunConfig& cfg);
RunConfig from_json(const nlohmann::json& doc);
RunConfig load_config(const std::filesystem::path& path);

// Window/stride vs schema consistency, positive steps, synth coverage of the
// schema modalities; throws ConfigError with the offending field.
void validate(const RunConfig& cfg);

}  // namespace wearfuse::config
