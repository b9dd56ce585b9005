#pragma once

#include <array>
#include <cstdint>
#include <string>
#include <vector>

#include "wearfuse/model.hpp"
#include "wearfuse/objectives.hpp"
#include "wearfuse/timeline.hpp"

namespace wearfuse::training {

enum class Scheme {
  supervised_early_fusion,
  supervised_late_fusion,
  pretrain_finetune,
  regularized,
};

std::string to_string(Scheme s);
// Throws ConfigError listing the valid names on an unknown scheme.
Scheme scheme_from_string(const std::string& s);

struct AdamConfig {
  double beta1 = 0.9;
  double beta2 = 0.999;
  double eps = 1e-8;
};

struct TrainConfig {
  Scheme scheme = Scheme::regularized;
  std::size_t epochs = 6;  // single-stage schemes
  std::size_t pretrain_epochs = 3;
  std::size_t finetune_epochs = 3;
  std::size_t batch_size = 16;
  double learning_rate = 2e-3;
  std::uint64_t seed = 1;
  objectives::ContrastiveConfig contrastive;
  AdamConfig adam;
  model::ModelDims dims;
};

struct DataConfig {
  double window_s = 3600.0;
  double stride_s = 1800.0;
  double test_fraction = 0.3;
};

struct EpochLoss {
  std::size_t epoch = 0;
  std::string stage;  // "train", "pretrain" or "finetune"
  double total = 0.0;
  double cross_entropy = 0.0;
  double contrastive = 0.0;
};

struct MetricsReport {
  double accuracy = 0.0;
  double majority_baseline = 0.0;  // best constant predictor on the evaluated set
  std::array<std::array<std::size_t, 2>, 2> confusion{};  // [true][predicted]
  std::array<double, 2> precision{};                      // per class, 0 on empty support
  std::array<double, 2> recall{};
  std::size_t evaluated_count = 0;
  std::size_t train_count = 0;
  std::vector<EpochLoss> loss_curve;
  std::vector<std::pair<std::string, double>> attention_means;  // empty for early fusion
};

// Adaptive-moment state over the flat parameter list (walk order).
struct AdamState {
  std::vector<Tensor> m, v;
  std::int64_t t = 0;
};

// One optimizer step; aborts with a NumericError naming the parameter on a
// non-finite gradient.
void adam_step(const std::vector<std::string>& names, std::vector<Tensor*>& params,
               const std::vector<Tensor>& grads, AdamState& state, const AdamConfig& cfg,
               double lr);

struct TrainResult {
  model::ModelBundle bundle;
  MetricsReport metrics;
  std::vector<std::uint64_t> epoch_param_hashes;  // FNV-1a over all tensors per epoch
  std::uint64_t trajectory_hash = 0;              // rolled over every step
};

// Full pipeline on a split cohort: extract + label episodes, fit the
// normalizer on the training split only, run the configured scheme, evaluate
// on the test split. Deterministic given (cohort, config, seed).
TrainResult train(const timeline::Cohort& cohort, const DataConfig& data, const TrainConfig& cfg);

// Metrics over already-normalized labeled episodes. Forward passes run in
// parallel; results do not depend on the thread count.
MetricsReport evaluate(const model::ModelBundle& bundle,
                       const std::vector<timeline::Episode>& episodes);

// Episode preparation shared by train/eval/attention paths: extract, label,
// and split the cohort's episodes (normalization is the caller's step).
struct EpisodeSets {
  std::vector<timeline::Episode> train;
  std::vector<timeline::Episode> test;
};
EpisodeSets prepare_episodes(const timeline::Cohort& cohort, const DataConfig& data);

}  // namespace wearfuse::training
