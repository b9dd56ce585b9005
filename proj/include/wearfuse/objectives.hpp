#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "wearfuse/autodiff.hpp"
#include "wearfuse/model.hpp"

namespace wearfuse::objectives {

// The similarity projection h(.): the trained two-layer head, or the identity
// for closed-form tests and oracles.
enum class ProjectionMode { mlp, identity };

struct ContrastiveConfig {
  double temperature = 0.5;  // > 0
  double lambda_reg = 0.1;   // >= 0
  ProjectionMode projection = ProjectionMode::mlp;
};

inline constexpr double kNormEpsilon = 1e-12;  // guards norms and logarithms

ad::Var project(const ad::Var& u, const model::LateFusionVars& params, ProjectionMode mode);

// phi(u, v) = h(u).h(v) / (||h(u)|| ||h(v)||), norms guarded by kNormEpsilon.
ad::Var cosine_similarity(const ad::Var& u, const ad::Var& v, const model::LateFusionVars& params,
                          ProjectionMode mode);

// Inter-modality contrastive loss over a batch of shared latents. For each
// instance i and modality m the positive pair is (z_i^(m), z_i) and the
// denominator ranges over the other instances' aggregates only (j != i).
// Computed in log-sum-exp form; `tau` is passed as a var so its sensitivity
// is checkable alongside parameter gradients.
ad::Var contrastive_loss(std::span<const model::SharedLatent> batch,
                         const model::LateFusionVars& params, ProjectionMode mode,
                         const ad::Var& tau);

// -sum_c y_c ln p_c with the true-class probability clamped at kNormEpsilon;
// engaging the clamp increments a process-wide warning counter.
ad::Var cross_entropy(const ad::Var& probs, std::size_t true_class);
std::uint64_t ce_clamp_count();
void reset_ce_clamp_count();

enum class LossKind { supervised, contrastive_only, regularized };

struct BatchOutputs {
  std::vector<model::SharedLatent> latents;
  std::vector<ad::Var> probs;
  std::vector<std::size_t> labels;
};

// supervised: mean cross-entropy; contrastive_only: the contrastive loss;
// regularized: mean cross-entropy + lambda * contrastive. With lambda == 0
// the contrastive term is skipped entirely, so the regularized graph is
// bit-identical to the supervised one.
ad::Var combined_loss(const BatchOutputs& batch, const model::LateFusionVars& params,
                      const ContrastiveConfig& config, LossKind kind);

}  // namespace wearfuse::objectives
