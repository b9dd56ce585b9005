#include "wearfuse/training.hpp"

#include <algorithm>
#include <cmath>

#include "wearfuse/errors.hpp"
#include "wearfuse/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace wearfuse::training {

namespace ad = wearfuse::ad;
using model::LateFusionParams;
using model::LateFusionVars;
using model::ModelBundle;
using timeline::Episode;

std::string to_string(Scheme s) {
  switch (s) {
    case Scheme::supervised_early_fusion: return "supervised-early-fusion";
    case Scheme::supervised_late_fusion: return "supervised-late-fusion";
    case Scheme::pretrain_finetune: return "pretrain-finetune";
    case Scheme::regularized: return "regularized";
  }
  throw Error("bad scheme value");
}

Scheme scheme_from_string(const std::string& s) {
  if (s == "supervised-early-fusion") return Scheme::supervised_early_fusion;
  if (s == "supervised-late-fusion") return Scheme::supervised_late_fusion;
  if (s == "pretrain-finetune") return Scheme::pretrain_finetune;
  if (s == "regularized") return Scheme::regularized;
  throw ConfigError("unknown scheme '" + s +
                    "' (valid: supervised-early-fusion, supervised-late-fusion, "
                    "pretrain-finetune, regularized)");
}

// ---- optimizer -----------------------------------------------------------------

void adam_step(const std::vector<std::string>& names, std::vector<Tensor*>& params,
               const std::vector<Tensor>& grads, AdamState& state, const AdamConfig& cfg,
               double lr) {
  if (params.size() != grads.size())
    throw ShapeError("adam_step: params/grads size mismatch");
  if (state.m.empty()) {
    for (Tensor* p : params) {
      state.m.push_back(Tensor::zeros(p->shape()));
      state.v.push_back(Tensor::zeros(p->shape()));
    }
  }
  state.t += 1;
  const double bc1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.t));
  const double bc2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.t));

  for (std::size_t i = 0; i < params.size(); ++i) {
    Tensor& p = *params[i];
    const Tensor& g = grads[i];
    if (!g.all_finite())
      throw NumericError("non-finite gradient for parameter '" + names[i] + "'");
    if (!p.same_shape(g))
      throw ShapeError("adam_step: gradient shape " + g.shape_str() + " vs parameter " +
                       p.shape_str() + " ('" + names[i] + "')");
    Tensor& m = state.m[i];
    Tensor& v = state.v[i];
    for (std::size_t e = 0; e < p.numel(); ++e) {
      m[e] = cfg.beta1 * m[e] + (1.0 - cfg.beta1) * g[e];
      v[e] = cfg.beta2 * v[e] + (1.0 - cfg.beta2) * g[e] * g[e];
      const double mhat = m[e] / bc1;
      const double vhat = v[e] / bc2;
      p[e] -= lr * mhat / (std::sqrt(vhat) + cfg.eps);
    }
  }
}

// ---- helpers -------------------------------------------------------------------

namespace {

std::uint64_t fnv1a(std::uint64_t h, const void* data, std::size_t bytes) {
  const auto* p = static_cast<const unsigned char*>(data);
  for (std::size_t i = 0; i < bytes; ++i) {
    h ^= p[i];
    h *= 0x100000001b3ULL;
  }
  return h;
}

constexpr std::uint64_t kFnvBasis = 0xcbf29ce484222325ULL;

template <class P>
std::uint64_t hash_params(P& params) {
  std::uint64_t h = kFnvBasis;
  model::walk(params, [&h](const std::string&, Tensor& t) {
    h = fnv1a(h, t.data(), t.numel() * sizeof(double));
  });
  return h;
}

struct FlatParams {
  std::vector<std::string> names;
  std::vector<Tensor*> tensors;
};

template <class P>
FlatParams flatten(P& params) {
  FlatParams flat;
  model::walk(params, [&flat](const std::string& name, Tensor& t) {
    flat.names.push_back(name);
    flat.tensors.push_back(&t);
  });
  return flat;
}

std::size_t label_of(const Episode& e) {
  if (!e.label.has_value()) throw DataError("episode without a label");
  return *e.label ? 1u : 0u;
}

std::vector<std::vector<std::size_t>> make_batches(std::size_t count, std::size_t batch_size,
                                                   Rng& rng) {
  std::vector<std::size_t> order(count);
  for (std::size_t i = 0; i < count; ++i) order[i] = i;
  rng.shuffle(order);
  std::vector<std::vector<std::size_t>> batches;
  for (std::size_t at = 0; at < count; at += batch_size) {
    const std::size_t take = std::min(batch_size, count - at);
    if (take < 2) break;  // a singleton batch would break the contrastive term
    batches.emplace_back(order.begin() + static_cast<long>(at),
                         order.begin() + static_cast<long>(at + take));
  }
  return batches;
}

struct StepLosses {
  double total = 0.0, ce = 0.0, cl = 0.0;
};

// One gradient step over a batch for a late-fusion scheme.
StepLosses late_fusion_step(LateFusionParams& params, const std::vector<Episode>& episodes,
                            const std::vector<std::size_t>& batch,
                            const std::vector<timeline::ModalitySchema>& schema,
                            const TrainConfig& cfg, objectives::LossKind kind, AdamState& state) {
  ad::Tape tape;
  std::vector<ad::Var> flat_vars;
  LateFusionVars vars = model::bind(params, &tape, &flat_vars);

  objectives::BatchOutputs out;
  const bool needs_probs = kind != objectives::LossKind::contrastive_only;
  const bool needs_latents = kind == objectives::LossKind::contrastive_only ||
                             (kind == objectives::LossKind::regularized &&
                              cfg.contrastive.lambda_reg != 0.0);
  for (std::size_t idx : batch) {
    auto fwd = model::forward_late_fusion(episodes[idx], vars, schema, cfg.dims);
    if (needs_latents) out.latents.push_back(fwd.latent);
    if (needs_probs) {
      out.probs.push_back(fwd.probs);
      out.labels.push_back(label_of(episodes[idx]));
    }
  }

  ad::Var loss = objectives::combined_loss(out, vars, cfg.contrastive, kind);
  if (!std::isfinite(loss.value()[0]))
    throw NumericError("training loss is not finite (diverged)");

  StepLosses losses;
  losses.total = loss.value()[0];
  if (kind == objectives::LossKind::contrastive_only) {
    losses.cl = losses.total;
  } else if (kind == objectives::LossKind::regularized && cfg.contrastive.lambda_reg != 0.0) {
    // components evaluated separately so the total = ce + lambda * cl identity
    // stays checkable from the loss curve
    losses.ce = objectives::combined_loss(out, vars, cfg.contrastive,
                                          objectives::LossKind::supervised)
                    .value()[0];
    losses.cl = objectives::combined_loss(out, vars, cfg.contrastive,
                                          objectives::LossKind::contrastive_only)
                    .value()[0];
  } else {
    losses.ce = losses.total;
  }

  ad::GradMap grads = tape.backward(loss);
  std::vector<Tensor> flat_grads;
  flat_grads.reserve(flat_vars.size());
  for (const ad::Var& v : flat_vars) flat_grads.push_back(grads.at(v));

  FlatParams flat = flatten(params);
  adam_step(flat.names, flat.tensors, flat_grads, state, cfg.adam, cfg.learning_rate);
  return losses;
}

StepLosses early_fusion_step(model::EarlyFusionParams& params, const std::vector<Episode>& episodes,
                             const std::vector<std::size_t>& batch,
                             const std::vector<timeline::ModalitySchema>& schema,
                             const TrainConfig& cfg, AdamState& state) {
  ad::Tape tape;
  std::vector<ad::Var> flat_vars;
  model::EarlyFusionVars vars = model::bind(params, &tape, &flat_vars);

  ad::Var total{Tensor::scalar(0.0)};
  for (std::size_t idx : batch) {
    ad::Var probs = model::forward_early_fusion(episodes[idx], vars, schema, cfg.dims);
    total = ad::add(total, objectives::cross_entropy(probs, label_of(episodes[idx])));
  }
  ad::Var loss = ad::scale(total, 1.0 / static_cast<double>(batch.size()));
  if (!std::isfinite(loss.value()[0]))
    throw NumericError("training loss is not finite (diverged)");

  ad::GradMap grads = tape.backward(loss);
  std::vector<Tensor> flat_grads;
  flat_grads.reserve(flat_vars.size());
  for (const ad::Var& v : flat_vars) flat_grads.push_back(grads.at(v));

  FlatParams flat = flatten(params);
  adam_step(flat.names, flat.tensors, flat_grads, state, cfg.adam, cfg.learning_rate);

  StepLosses losses;
  losses.total = losses.ce = loss.value()[0];
  return losses;
}

}  // namespace

EpisodeSets prepare_episodes(const timeline::Cohort& cohort, const DataConfig& data) {
  if (cohort.split.empty())
    throw ConfigError("cohort has no train/test split assigned");
  auto episodes = timeline::extract_episodes(cohort, data.window_s, data.stride_s);
  timeline::label_episodes(episodes, cohort);
  EpisodeSets sets;
  for (auto& e : episodes) {
    auto it = cohort.split.find(e.participant_id);
    if (it == cohort.split.end())
      throw DataError("participant '" + e.participant_id + "' missing from the split");
    (it->second == timeline::Split::train ? sets.train : sets.test).push_back(std::move(e));
  }
  return sets;
}

TrainResult train(const timeline::Cohort& cohort, const DataConfig& data, const TrainConfig& cfg) {
  if (cfg.batch_size < 2) throw ConfigError("batch size must be at least 2");
  EpisodeSets sets = prepare_episodes(cohort, data);
  if (sets.train.empty()) throw DataError("training split has no episodes");
  if (sets.test.empty()) throw DataError("test split has no episodes");

  std::size_t stressed = 0;
  for (const auto& e : sets.train) stressed += label_of(e);
  if (stressed == 0 || stressed == sets.train.size())
    throw DataError(
        "training labels are single-class (" + std::to_string(stressed) + "/" +
        std::to_string(sets.train.size()) +
        " stressed); adjust the synthetic event rate or the labeling threshold");

  auto normalizer = timeline::fit_normalizer(sets.train, cohort.schema);
  timeline::apply_normalizer(sets.train, normalizer);
  timeline::apply_normalizer(sets.test, normalizer);

  TrainResult result;
  result.bundle.dims = cfg.dims;
  result.bundle.schema = cohort.schema;
  result.bundle.normalizer = normalizer;
  result.trajectory_hash = kFnvBasis;

  Rng shuffle_rng(Rng::derive(cfg.seed, 0x7e41ULL));
  const bool early = cfg.scheme == Scheme::supervised_early_fusion;

  auto run_stage = [&](auto& params, const std::string& stage, std::size_t epochs,
                       objectives::LossKind kind, AdamState& state) {
    for (std::size_t epoch = 1; epoch <= epochs; ++epoch) {
      auto batches = make_batches(sets.train.size(), cfg.batch_size, shuffle_rng);
      if (batches.empty()) throw DataError("no usable batches (need at least 2 episodes)");
      StepLosses epoch_losses;
      for (const auto& batch : batches) {
        StepLosses step;
        if constexpr (std::is_same_v<std::decay_t<decltype(params)>, LateFusionParams>) {
          step = late_fusion_step(params, sets.train, batch, cohort.schema, cfg, kind, state);
        } else {
          step = early_fusion_step(params, sets.train, batch, cohort.schema, cfg, state);
        }
        epoch_losses.total += step.total;
        epoch_losses.ce += step.ce;
        epoch_losses.cl += step.cl;
        result.trajectory_hash =
            fnv1a(result.trajectory_hash, &state.t, sizeof(state.t));
        const std::uint64_t h = hash_params(params);
        result.trajectory_hash = fnv1a(result.trajectory_hash, &h, sizeof(h));
      }
      const double nb = static_cast<double>(batches.size());
      result.metrics.loss_curve.push_back(
          {epoch, stage, epoch_losses.total / nb, epoch_losses.ce / nb, epoch_losses.cl / nb});
      result.epoch_param_hashes.push_back(hash_params(params));
    }
  };

  if (early) {
    auto params = model::init_early_fusion(cohort.schema, cfg.dims, cfg.seed);
    AdamState state;
    run_stage(params, "train", cfg.epochs, objectives::LossKind::supervised, state);
    result.bundle.kind = "early-fusion";
    result.bundle.early = std::move(params);
  } else {
    auto params = model::init_late_fusion(cohort.schema, cfg.dims, cfg.seed);
    if (cfg.scheme == Scheme::pretrain_finetune) {
      {
        AdamState state;
        run_stage(params, "pretrain", cfg.pretrain_epochs, objectives::LossKind::contrastive_only,
                  state);
      }
      // The contrastive stage never touches the classifier; fine-tuning starts
      // it from a fresh draw and a fresh optimizer.
      model::reinit_classifier(params, cfg.dims, cfg.seed);
      AdamState state;
      run_stage(params, "finetune", cfg.finetune_epochs, objectives::LossKind::supervised, state);
    } else {
      const auto kind = cfg.scheme == Scheme::regularized ? objectives::LossKind::regularized
                                                          : objectives::LossKind::supervised;
      AdamState state;
      run_stage(params, "train", cfg.epochs, kind, state);
    }
    result.bundle.kind = "late-fusion";
    result.bundle.late = std::move(params);
  }

  auto curve = std::move(result.metrics.loss_curve);
  result.metrics = evaluate(result.bundle, sets.test);
  result.metrics.loss_curve = std::move(curve);
  result.metrics.train_count = sets.train.size();
  return result;
}

MetricsReport evaluate(const ModelBundle& bundle, const std::vector<Episode>& episodes) {
  if (episodes.empty()) throw DataError("evaluate: no episodes");
  MetricsReport report;
  report.evaluated_count = episodes.size();

  std::vector<std::size_t> predicted(episodes.size());
  std::vector<std::size_t> actual(episodes.size());
  std::vector<std::vector<double>> alphas(episodes.size());

  const bool late = bundle.kind == "late-fusion";
  if (late) {
    LateFusionVars vars = model::bind(bundle.late, nullptr);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 4)
#endif
    for (long long i = 0; i < static_cast<long long>(episodes.size()); ++i) {
      const auto idx = static_cast<std::size_t>(i);
      auto fwd = model::forward_late_fusion(episodes[idx], vars, bundle.schema, bundle.dims);
      const Tensor& p = fwd.probs.value();
      predicted[idx] = p[1] > p[0] ? 1u : 0u;
      actual[idx] = label_of(episodes[idx]);
      alphas[idx] = fwd.latent.alpha.value().vec_data();
    }
  } else if (bundle.kind == "early-fusion") {
    model::EarlyFusionVars vars = model::bind(bundle.early, nullptr);
#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 4)
#endif
    for (long long i = 0; i < static_cast<long long>(episodes.size()); ++i) {
      const auto idx = static_cast<std::size_t>(i);
      auto probs = model::forward_early_fusion(episodes[idx], vars, bundle.schema, bundle.dims);
      predicted[idx] = probs.value()[1] > probs.value()[0] ? 1u : 0u;
      actual[idx] = label_of(episodes[idx]);
    }
  } else {
    throw Error("evaluate: unknown model kind '" + bundle.kind + "'");
  }

  for (std::size_t i = 0; i < episodes.size(); ++i)
    report.confusion[actual[i]][predicted[i]] += 1;
  const double total = static_cast<double>(episodes.size());
  report.accuracy =
      static_cast<double>(report.confusion[0][0] + report.confusion[1][1]) / total;
  const std::size_t positives = report.confusion[1][0] + report.confusion[1][1];
  const std::size_t negatives = report.confusion[0][0] + report.confusion[0][1];
  report.majority_baseline = static_cast<double>(std::max(positives, negatives)) / total;
  for (std::size_t c = 0; c < 2; ++c) {
    const std::size_t tp = report.confusion[c][c];
    const std::size_t pred_c = report.confusion[0][c] + report.confusion[1][c];
    const std::size_t true_c = report.confusion[c][0] + report.confusion[c][1];
    report.precision[c] = pred_c ? static_cast<double>(tp) / static_cast<double>(pred_c) : 0.0;
    report.recall[c] = true_c ? static_cast<double>(tp) / static_cast<double>(true_c) : 0.0;
  }

  if (late) {
    const std::size_t m_count = bundle.late.encoders.size();
    std::vector<double> means(m_count, 0.0);
    for (const auto& a : alphas)
      for (std::size_t m = 0; m < m_count; ++m) means[m] += a[m];
    for (std::size_t m = 0; m < m_count; ++m)
      report.attention_means.emplace_back(bundle.late.encoders[m].first,
                                          means[m] / total);
  }
  return report;
}

}  // namespace wearfuse::training
