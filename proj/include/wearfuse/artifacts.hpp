#pragma once

#include <filesystem>
#include <string>

#include <json.hpp>

#include "wearfuse/model.hpp"
#include "wearfuse/timeline.hpp"
#include "wearfuse/training.hpp"

namespace wearfuse::artifacts {

// Serialized outputs shared by the CLI and the test suites. Everything here
// is deterministic: no timestamps, sorted keys, fixed float formatting.

nlohmann::json metrics_to_json(const training::MetricsReport& metrics, const std::string& scheme,
                               std::uint64_t seed);
void write_metrics_json(const training::MetricsReport& metrics, const std::string& scheme,
                        std::uint64_t seed, const std::filesystem::path& path);

// epoch,stage,total,cross_entropy,contrastive
void write_loss_curve_csv(const std::vector<training::EpochLoss>& curve,
                          const std::filesystem::path& path);

// modality,mean_alpha
void write_attention_means_csv(const std::vector<std::pair<std::string, double>>& means,
                               const std::filesystem::path& path);

// participant_id,t_start,t_end,<one column per modality>
void write_attention_instances_csv(const model::AttentionReport& report,
                                   const std::filesystem::path& path);

// participant_id,t_start,t_end,signal_at_end,label
void write_labels_csv(const timeline::Cohort& cohort,
                      const std::vector<timeline::Episode>& episodes,
                      const std::filesystem::path& path);

}  // namespace wearfuse::artifacts
