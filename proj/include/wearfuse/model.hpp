#pragma once

#include <filesystem>
#include <functional>
#include <string>
#include <utility>
#include <vector>

#include "wearfuse/autodiff.hpp"
#include "wearfuse/tensor.hpp"
#include "wearfuse/timeline.hpp"

namespace wearfuse::model {

struct ModelDims {
  std::size_t input_hidden = 32;  // hidden width of the per-timestep projection
  std::size_t embed = 32;         // shared latent width
  std::size_t lstm_hidden = 64;   // per direction
  std::size_t imp_hidden = 16;    // importance head hidden width
  std::size_t proj_hidden = 32;   // similarity projection hidden width
  std::size_t classes = 2;
};

// One modality encoder: per-timestep two-layer projection into the latent
// width, a bi-directional LSTM, and an output projection of the concatenated
// final hidden states. Templated over Tensor (storage) and ad::Var (forward).
template <class T>
struct EncoderParamsT {
  T w_in1, b_in1;  // [(d+1) x input_hidden], [input_hidden]
  T w_in2, b_in2;  // [input_hidden x embed], [embed]
  T fwd_wx, fwd_wh, fwd_b;  // [embed x 4H], [H x 4H], [4H]; gate order i,f,g,o
  T bwd_wx, bwd_wh, bwd_b;
  T w_out, b_out;  // [2H x embed], [embed]
};
using EncoderParams = EncoderParamsT<Tensor>;
using EncoderVars = EncoderParamsT<ad::Var>;

template <class T>
struct LateFusionParamsT {
  std::vector<std::pair<std::string, EncoderParamsT<T>>> encoders;  // schema order
  T imp_w1, imp_b1;    // [embed x imp_hidden], [imp_hidden]
  T imp_w2, imp_b2;    // [imp_hidden x 1], [1]
  T proj_w1, proj_b1;  // [embed x proj_hidden], [proj_hidden]
  T proj_w2, proj_b2;  // [proj_hidden x embed], [embed]
  T cls_w, cls_b;      // [embed x classes], [classes]
};
using LateFusionParams = LateFusionParamsT<Tensor>;
using LateFusionVars = LateFusionParamsT<ad::Var>;

template <class T>
struct EarlyFusionParamsT {
  EncoderParamsT<T> encoder;  // one encoder over the concatenated features
  T cls_w, cls_b;
};
using EarlyFusionParams = EarlyFusionParamsT<Tensor>;
using EarlyFusionVars = EarlyFusionParamsT<ad::Var>;

// Enumeration of every parameter tensor in a fixed order shared by binding,
// optimizer state, checkpoints and gradient checking.
using TensorVisitor = std::function<void(const std::string&, Tensor&)>;
void walk(EncoderParams& p, const std::string& prefix, const TensorVisitor& f);
void walk(LateFusionParams& p, const TensorVisitor& f);
void walk(EarlyFusionParams& p, const TensorVisitor& f);
std::size_t param_count(LateFusionParams& p);
std::size_t param_count(EarlyFusionParams& p);

// Bind parameters onto a tape as tracked leaves (tape != nullptr) or as
// constants (tape == nullptr, for evaluation). `flat`, when given, receives
// the bound vars in walk order.
EncoderVars bind(const EncoderParams& p, ad::Tape* tape, std::vector<ad::Var>* flat = nullptr);
LateFusionVars bind(const LateFusionParams& p, ad::Tape* tape, std::vector<ad::Var>* flat = nullptr);
EarlyFusionVars bind(const EarlyFusionParams& p, ad::Tape* tape, std::vector<ad::Var>* flat = nullptr);

// Rebuild the var mirror from an existing flat var list in walk order (e.g.
// the parameter leaves a gradient-check closure receives).
LateFusionVars vars_from_flat(const LateFusionParams& ref, std::span<const ad::Var> flat);
EarlyFusionVars vars_from_flat(const EarlyFusionParams& ref, std::span<const ad::Var> flat);

// Seeded initialization: weights uniform in +-sqrt(6/(fan_in+fan_out)),
// biases zero except LSTM forget gates at 1.
LateFusionParams init_late_fusion(const std::vector<timeline::ModalitySchema>& schema,
                                  const ModelDims& dims, std::uint64_t seed);
EarlyFusionParams init_early_fusion(const std::vector<timeline::ModalitySchema>& schema,
                                    const ModelDims& dims, std::uint64_t seed);
void reinit_classifier(LateFusionParams& p, const ModelDims& dims, std::uint64_t seed);

// window [L x (d+1)] -> latent [embed]
ad::Var encode_modality(const Tensor& window, const EncoderVars& enc, const ModelDims& dims);

struct SharedLatent {
  std::vector<ad::Var> modality_embeddings;  // schema order
  ad::Var alpha;                             // [M], positive, sums to 1
  ad::Var aggregate;                         // [embed]
};

// Importance scores g(z_m) -> softmax -> convex combination of embeddings.
SharedLatent attention_pool(std::vector<ad::Var> embeddings, const LateFusionVars& params);

struct LateForward {
  SharedLatent latent;
  ad::Var probs;  // [classes]
};

LateForward forward_late_fusion(const timeline::Episode& episode, const LateFusionVars& params,
                                const std::vector<timeline::ModalitySchema>& schema,
                                const ModelDims& dims);

// All modality windows stretched onto the finest grid (coarser rows repeated)
// and concatenated per timestep.
Tensor build_early_window(const timeline::Episode& episode,
                          const std::vector<timeline::ModalitySchema>& schema);
ad::Var forward_early_fusion(const timeline::Episode& episode, const EarlyFusionVars& params,
                             const std::vector<timeline::ModalitySchema>& schema,
                             const ModelDims& dims);

struct AttentionReport {
  std::vector<std::string> modalities;
  // one row per episode: participant, t_start, t_end, alpha values
  struct Instance {
    std::string participant_id;
    double t_start, t_end;
    std::vector<double> alpha;
  };
  std::vector<Instance> instances;
  std::vector<double> mean_alpha;
};

// Per-instance attention weights and their expectation over the given set.
// Episode forwards run in parallel; the report does not depend on the thread
// count.
AttentionReport attention_report(const LateFusionParams& params,
                                 const std::vector<timeline::Episode>& episodes,
                                 const std::vector<timeline::ModalitySchema>& schema,
                                 const ModelDims& dims);

// ---- checkpointing -----------------------------------------------------------

struct ModelBundle {
  std::string kind;  // "late-fusion" | "early-fusion"
  ModelDims dims;
  std::vector<timeline::ModalitySchema> schema;
  timeline::Normalizer normalizer;
  LateFusionParams late;    // populated when kind == "late-fusion"
  EarlyFusionParams early;  // populated when kind == "early-fusion"
};

// Self-describing JSON document; doubles round-trip exactly.
void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path);
ModelBundle load_checkpoint(const std::filesystem::path& path);

}  // namespace wearfuse::model
