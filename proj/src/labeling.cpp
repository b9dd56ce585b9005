#include "wearfuse/labeling.hpp"

#include <cmath>

#include "wearfuse/errors.hpp"

namespace wearfuse::labeling {

Intensity intensity_from_string(const std::string& s) {
  if (s == "none") return Intensity::none;
  if (s == "low") return Intensity::low;
  if (s == "medium") return Intensity::medium;
  if (s == "high") return Intensity::high;
  throw DataError("unknown intensity '" + s + "' (expected none|low|medium|high)");
}

std::string to_string(Intensity i) {
  switch (i) {
    case Intensity::none: return "none";
    case Intensity::low: return "low";
    case Intensity::medium: return "medium";
    case Intensity::high: return "high";
  }
  throw Error("bad intensity value");
}

GaussianComponent report_to_gaussian(const SelfReport& report) {
  GaussianComponent c;
  if (report.t_end.has_value()) {
    if (*report.t_end < report.t_start)
      throw DataError("report span ends before it starts");
    c.mu = 0.5 * (report.t_start + *report.t_end);
    const double span = *report.t_end - report.t_start;
    c.sigma = kBaseSigmaSeconds * std::max(1.0, span / kSigmaScaleSpanSeconds);
  } else {
    c.mu = report.t_start;
    c.sigma = kBaseSigmaSeconds;
  }
  c.amplitude = static_cast<double>(static_cast<int>(report.intensity));
  return c;
}

SupervisionSignal build_signal(const std::string& participant_id,
                               const std::vector<SelfReport>& reports) {
  SupervisionSignal s;
  s.participant_id = participant_id;
  s.components.reserve(reports.size());
  for (const auto& r : reports) s.components.push_back(report_to_gaussian(r));
  return s;
}

double evaluate_signal(const SupervisionSignal& signal, double t) {
  double total = 0.0;
  for (const auto& c : signal.components) {
    const double d = t - c.mu;
    total += c.amplitude * std::exp(-(d * d) / (2.0 * c.sigma * c.sigma));
  }
  return total;
}

bool label_at(const SupervisionSignal& signal, double t_end) {
  return evaluate_signal(signal, t_end) > kLabelThreshold;
}

}  // namespace wearfuse::labeling
