#pragma once

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "wearfuse/timeline.hpp"

namespace wearfuse::synth {

struct ModalityBase {
  double mean = 0.0;
  double std = 1.0;
  double period_s = 60.0;  // raw sampling period
};

struct SynthConfig {
  std::size_t participants = 14;
  double days = 2.0;
  double event_rate_per_day = 5.5;  // Poisson process intensity
  double event_duration_min_s = 1200.0;
  double event_duration_max_s = 5400.0;
  // weights over {low, medium, high}
  std::map<std::string, double> intensity_weights{{"low", 0.3}, {"medium", 0.4}, {"high", 0.3}};
  double report_jitter_s = 300.0;  // self-report imprecision on span placement
  double ar_coeff = 0.9;           // AR(1) coefficient of the base signals
  // Fraction of each modality's timeline covered by device gaps (samples
  // dropped entirely), drawn independently per modality. Wearables lose
  // contact and sync intermittently; the gaps give the per-instance
  // importance weights real missingness to react to.
  double dropout_fraction = 0.15;
  double dropout_gap_min_s = 1800.0;
  double dropout_gap_max_s = 7200.0;
  std::map<std::string, ModalityBase> base;    // one entry per schema modality
  std::map<std::string, double> effect;        // additive shift during events, in std units
  std::vector<std::string> noise_modalities;   // forced to zero effect
  std::uint64_t seed = 1;
};

SynthConfig default_synth_config();

struct GroundTruthEvent {
  double t_start = 0.0;
  double t_end = 0.0;
  std::string intensity;
};

struct GenerateSummary {
  std::size_t participants = 0;
  std::size_t events = 0;
  std::size_t episodes = 0;          // window placements scanned for the balance check
  double stressed_fraction = 0.0;    // of those, labeled stressed
  std::map<std::string, std::vector<GroundTruthEvent>> events_by_participant;
};

// Writes the cohort in the timeline directory layout plus ground_truth.json.
// Each participant derives from a participant-indexed sub-seed, so generation
// parallelizes without changing any byte of the output. The summary's label
// balance uses the given window/stride (the ones the pipeline will use).
GenerateSummary generate(const SynthConfig& config,
                         const std::vector<timeline::ModalitySchema>& schema,
                         double window_s, double stride_s,
                         const std::filesystem::path& out_dir);

enum class CorruptMode { drop, noise };

// In-place corruption of one modality across all participants: `drop` removes
// the chosen fraction of samples, `noise` replaces values with high-variance
// noise (5x the column std around its mean).
void corrupt_modality(const std::filesystem::path& cohort_dir, const std::string& modality_id,
                      CorruptMode mode, double fraction, std::uint64_t seed);

// Shortest round-trip decimal formatting (shared by every CSV writer).
std::string format_double(double v);

}  // namespace wearfuse::synth
