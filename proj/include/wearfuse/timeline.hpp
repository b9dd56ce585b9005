#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "wearfuse/labeling.hpp"
#include "wearfuse/tensor.hpp"

namespace wearfuse::timeline {

struct Sample {
  double t = 0.0;  // seconds since epoch
  std::vector<double> features;
};

// Irregularly sampled feature vectors for one modality of one participant.
struct ModalityStream {
  std::string participant_id;
  std::string modality_id;
  std::vector<std::string> feature_names;
  std::vector<Sample> samples;  // strictly increasing timestamps
};

struct ModalitySchema {
  std::string modality_id;
  std::vector<std::string> feature_names;
  double resample_step_s = 0.0;
  std::size_t window_steps = 0;  // L_m

  std::size_t feature_count() const { return feature_names.size(); }
};

// A classification unit: one timespan with resampled per-modality windows.
// Each window is [L_m x (d_m + 1)]; the trailing column is the missingness
// indicator (1 where no raw sample was near the grid point).
struct Episode {
  std::string participant_id;
  double t_start = 0.0;
  double t_end = 0.0;
  std::map<std::string, Tensor> windows;
  std::optional<bool> label;
};

enum class Split { train, test };

struct Participant {
  std::string id;
  std::map<std::string, ModalityStream> streams;
  std::vector<labeling::SelfReport> reports;
};

struct Cohort {
  std::vector<Participant> participants;  // sorted by id
  std::vector<ModalitySchema> schema;
  std::map<std::string, Split> split;
};

// Directory layout: <root>/<participant>/<modality>.csv with header
// `timestamp,<feature names...>`, plus optional <root>/<participant>/reports.csv
// with header `t_start,t_end,intensity`. Rows are sorted by timestamp on load;
// duplicate timestamps are rejected. Non-fatal oddities (e.g. a participant
// directory with no streams) are appended to `warnings`.
Cohort load_cohort(const std::filesystem::path& root, const std::vector<ModalitySchema>& schema,
                   std::vector<std::string>* warnings = nullptr);

// Participant-level train/test split: sorted ids shuffled by a seed-derived
// permutation, first ceil(fraction * P) become the test set.
void assign_split(Cohort& cohort, double test_fraction, std::uint64_t seed);

// Sliding [t0, t0 + window) spans per participant; a span is emitted only if
// at least one modality has a raw sample inside it. Labels left unset.
std::vector<Episode> extract_episodes(const Cohort& cohort, double window_s, double stride_s);

// L_m grid points over [t_start, t_end): nearest sample within half a step
// (indicator 0), else the last earlier sample carried forward (indicator 1),
// else zeros (indicator 1).
Tensor resample_window(const ModalityStream& stream, double t_start, double t_end,
                       const ModalitySchema& schema);

// Per-modality, per-feature z-scoring statistics fitted on the training split.
struct Normalizer {
  struct FeatureStats {
    double mean = 0.0;
    double std = 1.0;
  };
  std::map<std::string, std::vector<FeatureStats>> by_modality;
};

inline constexpr double kDegenerateStd = 1e-8;

// Statistics over every window row of the given episodes (missingness column
// excluded from normalization, included rows regardless of indicator).
Normalizer fit_normalizer(const std::vector<Episode>& train_episodes,
                          const std::vector<ModalitySchema>& schema);
void apply_normalizer(std::vector<Episode>& episodes, const Normalizer& normalizer);

// Assign labels from each participant's supervision signal at episode end.
void label_episodes(std::vector<Episode>& episodes, const Cohort& cohort);

}  // namespace wearfuse::timeline
