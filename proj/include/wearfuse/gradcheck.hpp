#pragma once

#include <cstdint>

#include "wearfuse/autodiff.hpp"
#include "wearfuse/model.hpp"
#include "wearfuse/objectives.hpp"

namespace wearfuse::gradcheck {

// Reduced end-to-end fixture: a down-sized late-fusion model on a synthetic
// two-episode batch, checked with the regularized loss so every parameter
// group (encoders, importance head, projection head, classifier) is reached.
struct ReducedSpec {
  std::size_t modality_count = 2;
  std::size_t window_steps = 8;  // L_m
  std::size_t hidden = 8;        // LSTM hidden per direction; other widths scale with it
  std::size_t batch = 2;
  std::uint64_t seed = 1;
  double step = 1e-5;
  double tol = 1e-4;
  double temperature = 0.5;
  double lambda_reg = 0.1;
};

ad::GradCheckReport run_reduced(const ReducedSpec& spec);

}  // namespace wearfuse::gradcheck
