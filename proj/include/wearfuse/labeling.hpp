#pragma once

#include <optional>
#include <string>
#include <vector>

namespace wearfuse::labeling {

enum class Intensity { none = 0, low = 1, medium = 2, high = 3 };

Intensity intensity_from_string(const std::string& s);  // none/low/medium/high
std::string to_string(Intensity i);

// One self-reported stress entry: an instant or a timespan plus an intensity.
struct SelfReport {
  double t_start = 0.0;
  std::optional<double> t_end;
  Intensity intensity = Intensity::none;
};

struct GaussianComponent {
  double mu = 0.0;         // seconds
  double sigma = 0.0;      // seconds, > 0
  double amplitude = 0.0;  // intensity magnitude 0..3
};

// Continuous stress-intensity signal for one participant: a sum of Gaussian
// bumps, kept in closed form and evaluated analytically.
struct SupervisionSignal {
  std::string participant_id;
  std::vector<GaussianComponent> components;
};

inline constexpr double kBaseSigmaSeconds = 1800.0;       // 30 minutes
inline constexpr double kSigmaScaleSpanSeconds = 3600.0;  // spans beyond 1 h stretch sigma
inline constexpr double kLabelThreshold = 0.5;            // strictly greater

// Peak at the report's timestamp (or span midpoint); sigma 30 min, stretched
// in proportion to spans longer than one hour; amplitude = intensity.
GaussianComponent report_to_gaussian(const SelfReport& report);

SupervisionSignal build_signal(const std::string& participant_id,
                               const std::vector<SelfReport>& reports);

double evaluate_signal(const SupervisionSignal& signal, double t);

// True iff the signal at the episode end exceeds the threshold (strictly).
bool label_at(const SupervisionSignal& signal, double t_end);

}  // namespace wearfuse::labeling
