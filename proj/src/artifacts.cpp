#include "wearfuse/artifacts.hpp"

#include <fstream>

#include "wearfuse/errors.hpp"
#include "wearfuse/labeling.hpp"
#include "wearfuse/synthcohort.hpp"

namespace wearfuse::artifacts {

using json = nlohmann::json;
using synth::format_double;

namespace {

std::ofstream open_out(const std::filesystem::path& path) {
  if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
  std::ofstream out(path, std::ios::binary);
  if (!out) throw DataError("cannot write " + path.string());
  return out;
}

}  // namespace

json metrics_to_json(const training::MetricsReport& m, const std::string& scheme,
                     std::uint64_t seed) {
  json doc;
  doc["scheme"] = scheme;
  doc["seed"] = seed;
  doc["accuracy"] = m.accuracy;
  doc["majority_baseline"] = m.majority_baseline;
  doc["confusion"] = {{m.confusion[0][0], m.confusion[0][1]},
                      {m.confusion[1][0], m.confusion[1][1]}};
  doc["precision"] = {{"non_stressed", m.precision[0]}, {"stressed", m.precision[1]}};
  doc["recall"] = {{"non_stressed", m.recall[0]}, {"stressed", m.recall[1]}};
  doc["evaluated_count"] = m.evaluated_count;
  doc["train_count"] = m.train_count;
  json curve = json::array();
  for (const auto& e : m.loss_curve) {
    curve.push_back({{"epoch", e.epoch},
                     {"stage", e.stage},
                     {"total", e.total},
                     {"cross_entropy", e.cross_entropy},
                     {"contrastive", e.contrastive}});
  }
  doc["loss_curve"] = std::move(curve);
  json means = json::object();
  for (const auto& [modality, v] : m.attention_means) means[modality] = v;
  doc["attention_means"] = std::move(means);
  return doc;
}

void write_metrics_json(const training::MetricsReport& metrics, const std::string& scheme,
                        std::uint64_t seed, const std::filesystem::path& path) {
  auto out = open_out(path);
  out << metrics_to_json(metrics, scheme, seed).dump(1) << "\n";
}

void write_loss_curve_csv(const std::vector<training::EpochLoss>& curve,
                          const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "epoch,stage,total,cross_entropy,contrastive\n";
  for (const auto& e : curve) {
    out << e.epoch << "," << e.stage << "," << format_double(e.total) << ","
        << format_double(e.cross_entropy) << "," << format_double(e.contrastive) << "\n";
  }
}

void write_attention_means_csv(const std::vector<std::pair<std::string, double>>& means,
                               const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "modality,mean_alpha\n";
  for (const auto& [modality, v] : means) out << modality << "," << format_double(v) << "\n";
}

void write_attention_instances_csv(const model::AttentionReport& report,
                                   const std::filesystem::path& path) {
  auto out = open_out(path);
  out << "participant_id,t_start,t_end";
  for (const auto& m : report.modalities) out << "," << m;
  out << "\n";
  for (const auto& inst : report.instances) {
    out << inst.participant_id << "," << format_double(inst.t_start) << ","
        << format_double(inst.t_end);
    for (double a : inst.alpha) out << "," << format_double(a);
    out << "\n";
  }
}

void write_labels_csv(const timeline::Cohort& cohort,
                      const std::vector<timeline::Episode>& episodes,
                      const std::filesystem::path& path) {
  std::map<std::string, labeling::SupervisionSignal> signals;
  for (const auto& p : cohort.participants)
    signals.emplace(p.id, labeling::build_signal(p.id, p.reports));

  auto out = open_out(path);
  out << "participant_id,t_start,t_end,signal_at_end,label\n";
  for (const auto& e : episodes) {
    const double value = labeling::evaluate_signal(signals.at(e.participant_id), e.t_end);
    out << e.participant_id << "," << format_double(e.t_start) << "," << format_double(e.t_end)
        << "," << format_double(value) << "," << (value > labeling::kLabelThreshold ? 1 : 0)
        << "\n";
  }
}

}  // namespace wearfuse::artifacts
