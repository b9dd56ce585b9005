#include "wearfuse/objectives.hpp"

#include <atomic>
#include <cmath>

#include "wearfuse/errors.hpp"

namespace wearfuse::objectives {

namespace ad = wearfuse::ad;

namespace {

std::atomic<std::uint64_t> g_ce_clamps{0};

ad::Var guarded_norm(const ad::Var& u) {
  // sqrt(sum(u^2) + eps^2): exact to well below test tolerances for any
  // non-degenerate input, nonzero for the zero vector.
  return ad::sqrt(ad::shift(ad::sum(ad::mul(u, u)), kNormEpsilon * kNormEpsilon));
}

}  // namespace

ad::Var project(const ad::Var& u, const model::LateFusionVars& p, ProjectionMode mode) {
  if (mode == ProjectionMode::identity) return u;
  ad::Var hidden = ad::tanh(ad::add(ad::matmul(u, p.proj_w1), p.proj_b1));
  return ad::add(ad::matmul(hidden, p.proj_w2), p.proj_b2);
}

ad::Var cosine_similarity(const ad::Var& u, const ad::Var& v, const model::LateFusionVars& p,
                          ProjectionMode mode) {
  ad::Var hu = project(u, p, mode);
  ad::Var hv = project(v, p, mode);
  ad::Var dot = ad::sum(ad::mul(hu, hv));
  return ad::div(dot, ad::mul(guarded_norm(hu), guarded_norm(hv)));
}

ad::Var contrastive_loss(std::span<const model::SharedLatent> batch,
                         const model::LateFusionVars& params, ProjectionMode mode,
                         const ad::Var& tau) {
  const std::size_t b = batch.size();
  if (b < 2) throw DataError("contrastive loss undefined for singleton batch");
  const std::size_t m_count = batch[0].modality_embeddings.size();
  if (m_count == 0) throw ShapeError("contrastive_loss: instances carry no modality embeddings");
  for (const auto& inst : batch) {
    if (inst.modality_embeddings.size() != m_count)
      throw ShapeError("contrastive_loss: ragged modality counts in batch");
  }

  ad::Var inv_tau = ad::div(ad::Var{Tensor::scalar(1.0)}, tau);

  // Project each aggregate once; its norm is shared by every pair it enters.
  std::vector<ad::Var> agg_proj, agg_norm;
  agg_proj.reserve(b);
  agg_norm.reserve(b);
  for (const auto& inst : batch) {
    agg_proj.push_back(project(inst.aggregate, params, mode));
    agg_norm.push_back(guarded_norm(agg_proj.back()));
  }

  ad::Var total{Tensor::scalar(0.0)};
  for (std::size_t i = 0; i < b; ++i) {
    for (std::size_t m = 0; m < m_count; ++m) {
      ad::Var pm = project(batch[i].modality_embeddings[m], params, mode);
      ad::Var pm_norm = guarded_norm(pm);
      auto phi_with = [&](std::size_t j) {
        ad::Var dot = ad::sum(ad::mul(pm, agg_proj[j]));
        return ad::div(dot, ad::mul(pm_norm, agg_norm[j]));
      };
      ad::Var pos = ad::mul(phi_with(i), inv_tau);
      std::vector<ad::Var> negatives;
      negatives.reserve(b - 1);
      for (std::size_t j = 0; j < b; ++j) {
        if (j == i) continue;
        negatives.push_back(ad::mul(phi_with(j), inv_tau));
      }
      ad::Var denom = ad::logsumexp_row(ad::concat(negatives));
      total = ad::add(total, ad::sub(denom, pos));
    }
  }
  return ad::scale(total, 1.0 / (static_cast<double>(b) * static_cast<double>(m_count)));
}

ad::Var cross_entropy(const ad::Var& probs, std::size_t true_class) {
  const Tensor& p = probs.value();
  if (p.rank() != 1 || true_class >= p.numel())
    throw ShapeError("cross_entropy: class " + std::to_string(true_class) +
                     " out of range for " + p.shape_str());
  if (p[true_class] < kNormEpsilon) g_ce_clamps.fetch_add(1, std::memory_order_relaxed);
  return ad::neg(ad::log(ad::clamp_min(ad::index(probs, true_class), kNormEpsilon)));
}

std::uint64_t ce_clamp_count() { return g_ce_clamps.load(std::memory_order_relaxed); }
void reset_ce_clamp_count() { g_ce_clamps.store(0, std::memory_order_relaxed); }

ad::Var combined_loss(const BatchOutputs& batch, const model::LateFusionVars& params,
                      const ContrastiveConfig& config, LossKind kind) {
  if (!(config.temperature > 0.0)) throw ConfigError("temperature must be positive");
  if (config.lambda_reg < 0.0) throw ConfigError("lambda_reg must be non-negative");

  auto ce_mean = [&]() {
    if (batch.probs.empty()) throw DataError("combined_loss: empty batch");
    if (batch.probs.size() != batch.labels.size())
      throw ShapeError("combined_loss: probs/labels size mismatch");
    ad::Var total = cross_entropy(batch.probs[0], batch.labels[0]);
    for (std::size_t i = 1; i < batch.probs.size(); ++i)
      total = ad::add(total, cross_entropy(batch.probs[i], batch.labels[i]));
    return ad::scale(total, 1.0 / static_cast<double>(batch.probs.size()));
  };
  auto cl = [&]() {
    return contrastive_loss(batch.latents, params, config.projection,
                            ad::Var{Tensor::scalar(config.temperature)});
  };

  switch (kind) {
    case LossKind::supervised:
      return ce_mean();
    case LossKind::contrastive_only:
      return cl();
    case LossKind::regularized:
      if (config.lambda_reg == 0.0) return ce_mean();
      return ad::add(ce_mean(), ad::scale(cl(), config.lambda_reg));
  }
  throw Error("combined_loss: unknown kind");
}

}  // namespace wearfuse::objectives
