#include "wearfuse/model.hpp"

#include <cmath>
#include <fstream>

#include <json.hpp>

#include "wearfuse/errors.hpp"
#include "wearfuse/rng.hpp"

#ifdef _OPENMP
#include <omp.h>
#endif

namespace wearfuse::model {

namespace ad = wearfuse::ad;
using json = nlohmann::json;
using timeline::Episode;
using timeline::ModalitySchema;

// ---- parameter enumeration and binding --------------------------------------

void walk(EncoderParams& p, const std::string& prefix, const TensorVisitor& f) {
  f(prefix + ".w_in1", p.w_in1);
  f(prefix + ".b_in1", p.b_in1);
  f(prefix + ".w_in2", p.w_in2);
  f(prefix + ".b_in2", p.b_in2);
  f(prefix + ".fwd_wx", p.fwd_wx);
  f(prefix + ".fwd_wh", p.fwd_wh);
  f(prefix + ".fwd_b", p.fwd_b);
  f(prefix + ".bwd_wx", p.bwd_wx);
  f(prefix + ".bwd_wh", p.bwd_wh);
  f(prefix + ".bwd_b", p.bwd_b);
  f(prefix + ".w_out", p.w_out);
  f(prefix + ".b_out", p.b_out);
}

void walk(LateFusionParams& p, const TensorVisitor& f) {
  for (auto& [modality, enc] : p.encoders) walk(enc, "enc." + modality, f);
  f("imp.w1", p.imp_w1);
  f("imp.b1", p.imp_b1);
  f("imp.w2", p.imp_w2);
  f("imp.b2", p.imp_b2);
  f("proj.w1", p.proj_w1);
  f("proj.b1", p.proj_b1);
  f("proj.w2", p.proj_w2);
  f("proj.b2", p.proj_b2);
  f("cls.w", p.cls_w);
  f("cls.b", p.cls_b);
}

void walk(EarlyFusionParams& p, const TensorVisitor& f) {
  walk(p.encoder, "enc.early", f);
  f("cls.w", p.cls_w);
  f("cls.b", p.cls_b);
}

namespace {

template <class P>
std::size_t count_params(P& p) {
  std::size_t total = 0;
  walk(p, [&](const std::string&, Tensor& t) { total += t.numel(); });
  return total;
}

ad::Var bind_one(const Tensor& t, ad::Tape* tape, std::vector<ad::Var>* flat) {
  ad::Var v = tape ? tape->leaf(t) : ad::Var{t};
  if (flat) flat->push_back(v);
  return v;
}

}  // namespace

std::size_t param_count(LateFusionParams& p) { return count_params(p); }
std::size_t param_count(EarlyFusionParams& p) { return count_params(p); }

// Field order here must match walk(); gradcheck and the optimizer tests pin it.
EncoderVars bind(const EncoderParams& p, ad::Tape* tape, std::vector<ad::Var>* flat) {
  EncoderVars v;
  v.w_in1 = bind_one(p.w_in1, tape, flat);
  v.b_in1 = bind_one(p.b_in1, tape, flat);
  v.w_in2 = bind_one(p.w_in2, tape, flat);
  v.b_in2 = bind_one(p.b_in2, tape, flat);
  v.fwd_wx = bind_one(p.fwd_wx, tape, flat);
  v.fwd_wh = bind_one(p.fwd_wh, tape, flat);
  v.fwd_b = bind_one(p.fwd_b, tape, flat);
  v.bwd_wx = bind_one(p.bwd_wx, tape, flat);
  v.bwd_wh = bind_one(p.bwd_wh, tape, flat);
  v.bwd_b = bind_one(p.bwd_b, tape, flat);
  v.w_out = bind_one(p.w_out, tape, flat);
  v.b_out = bind_one(p.b_out, tape, flat);
  return v;
}

LateFusionVars bind(const LateFusionParams& p, ad::Tape* tape, std::vector<ad::Var>* flat) {
  LateFusionVars v;
  for (const auto& [modality, enc] : p.encoders)
    v.encoders.emplace_back(modality, bind(enc, tape, flat));
  v.imp_w1 = bind_one(p.imp_w1, tape, flat);
  v.imp_b1 = bind_one(p.imp_b1, tape, flat);
  v.imp_w2 = bind_one(p.imp_w2, tape, flat);
  v.imp_b2 = bind_one(p.imp_b2, tape, flat);
  v.proj_w1 = bind_one(p.proj_w1, tape, flat);
  v.proj_b1 = bind_one(p.proj_b1, tape, flat);
  v.proj_w2 = bind_one(p.proj_w2, tape, flat);
  v.proj_b2 = bind_one(p.proj_b2, tape, flat);
  v.cls_w = bind_one(p.cls_w, tape, flat);
  v.cls_b = bind_one(p.cls_b, tape, flat);
  return v;
}

EarlyFusionVars bind(const EarlyFusionParams& p, ad::Tape* tape, std::vector<ad::Var>* flat) {
  EarlyFusionVars v;
  v.encoder = bind(p.encoder, tape, flat);
  v.cls_w = bind_one(p.cls_w, tape, flat);
  v.cls_b = bind_one(p.cls_b, tape, flat);
  return v;
}

namespace {

// Pointer enumeration in the exact order bind() emits flat vars.
void collect_var_ptrs(EncoderVars& e, std::vector<ad::Var*>& out) {
  out.insert(out.end(), {&e.w_in1, &e.b_in1, &e.w_in2, &e.b_in2, &e.fwd_wx, &e.fwd_wh, &e.fwd_b,
                         &e.bwd_wx, &e.bwd_wh, &e.bwd_b, &e.w_out, &e.b_out});
}

void collect_var_ptrs(LateFusionVars& v, std::vector<ad::Var*>& out) {
  for (auto& [modality, enc] : v.encoders) collect_var_ptrs(enc, out);
  out.insert(out.end(), {&v.imp_w1, &v.imp_b1, &v.imp_w2, &v.imp_b2, &v.proj_w1, &v.proj_b1,
                         &v.proj_w2, &v.proj_b2, &v.cls_w, &v.cls_b});
}

void collect_var_ptrs(EarlyFusionVars& v, std::vector<ad::Var*>& out) {
  collect_var_ptrs(v.encoder, out);
  out.insert(out.end(), {&v.cls_w, &v.cls_b});
}

template <class P, class V>
V assign_from_flat(const P& ref, std::span<const ad::Var> flat) {
  V out = bind(ref, nullptr);  // placeholder constants, replaced below
  std::vector<ad::Var*> targets;
  collect_var_ptrs(out, targets);
  if (flat.size() != targets.size())
    throw ShapeError("vars_from_flat: expected " + std::to_string(targets.size()) +
                     " tensors, got " + std::to_string(flat.size()));
  std::size_t cursor = 0;
  for (ad::Var* t : targets) {
    if (!t->value().same_shape(flat[cursor].value()))
      throw ShapeError("vars_from_flat: shape mismatch at position " + std::to_string(cursor));
    *t = flat[cursor++];
  }
  return out;
}

}  // namespace

LateFusionVars vars_from_flat(const LateFusionParams& ref, std::span<const ad::Var> flat) {
  return assign_from_flat<LateFusionParams, LateFusionVars>(ref, flat);
}

EarlyFusionVars vars_from_flat(const EarlyFusionParams& ref, std::span<const ad::Var> flat) {
  return assign_from_flat<EarlyFusionParams, EarlyFusionVars>(ref, flat);
}

// ---- initialization -----------------------------------------------------------

namespace {

Tensor glorot(std::size_t fan_in, std::size_t fan_out, Rng& rng) {
  const double bound = std::sqrt(6.0 / static_cast<double>(fan_in + fan_out));
  Tensor t{Shape{fan_in, fan_out}};
  for (std::size_t i = 0; i < t.numel(); ++i) t[i] = rng.uniform(-bound, bound);
  return t;
}

Tensor lstm_bias(std::size_t hidden) {
  // gate order i, f, g, o; forget gates start open
  Tensor b{Shape{4 * hidden}};
  for (std::size_t i = hidden; i < 2 * hidden; ++i) b[i] = 1.0;
  return b;
}

EncoderParams init_encoder(std::size_t d_in, const ModelDims& dims, Rng& rng) {
  EncoderParams p;
  const std::size_t h = dims.lstm_hidden;
  p.w_in1 = glorot(d_in, dims.input_hidden, rng);
  p.b_in1 = Tensor{Shape{dims.input_hidden}};
  p.w_in2 = glorot(dims.input_hidden, dims.embed, rng);
  p.b_in2 = Tensor{Shape{dims.embed}};
  p.fwd_wx = glorot(dims.embed, 4 * h, rng);
  p.fwd_wh = glorot(h, 4 * h, rng);
  p.fwd_b = lstm_bias(h);
  p.bwd_wx = glorot(dims.embed, 4 * h, rng);
  p.bwd_wh = glorot(h, 4 * h, rng);
  p.bwd_b = lstm_bias(h);
  p.w_out = glorot(2 * h, dims.embed, rng);
  p.b_out = Tensor{Shape{dims.embed}};
  return p;
}

}  // namespace

LateFusionParams init_late_fusion(const std::vector<ModalitySchema>& schema,
                                  const ModelDims& dims, std::uint64_t seed) {
  Rng rng(Rng::derive(seed, 0x1417ULL));
  LateFusionParams p;
  for (const auto& s : schema)
    p.encoders.emplace_back(s.modality_id, init_encoder(s.feature_count() + 1, dims, rng));
  p.imp_w1 = glorot(dims.embed, dims.imp_hidden, rng);
  p.imp_b1 = Tensor{Shape{dims.imp_hidden}};
  p.imp_w2 = glorot(dims.imp_hidden, 1, rng);
  p.imp_b2 = Tensor{Shape{1}};
  p.proj_w1 = glorot(dims.embed, dims.proj_hidden, rng);
  p.proj_b1 = Tensor{Shape{dims.proj_hidden}};
  p.proj_w2 = glorot(dims.proj_hidden, dims.embed, rng);
  p.proj_b2 = Tensor{Shape{dims.embed}};
  p.cls_w = glorot(dims.embed, dims.classes, rng);
  p.cls_b = Tensor{Shape{dims.classes}};
  return p;
}

EarlyFusionParams init_early_fusion(const std::vector<ModalitySchema>& schema,
                                    const ModelDims& dims, std::uint64_t seed) {
  Rng rng(Rng::derive(seed, 0x3a71ULL));
  std::size_t d_total = 0;
  for (const auto& s : schema) d_total += s.feature_count() + 1;
  EarlyFusionParams p;
  p.encoder = init_encoder(d_total, dims, rng);
  p.cls_w = glorot(dims.embed, dims.classes, rng);
  p.cls_b = Tensor{Shape{dims.classes}};
  return p;
}

void reinit_classifier(LateFusionParams& p, const ModelDims& dims, std::uint64_t seed) {
  Rng rng(Rng::derive(seed, 0xc1a5ULL));
  p.cls_w = glorot(dims.embed, dims.classes, rng);
  p.cls_b = Tensor{Shape{dims.classes}};
}

// ---- forward passes --------------------------------------------------------------

namespace {

struct LstmDir {
  const ad::Var *wx, *wh, *b;
};

// Final hidden state of one direction over the rows of inputs [L x embed].
ad::Var run_lstm(const ad::Var& inputs, const LstmDir& dir, std::size_t hidden, bool reverse) {
  const std::size_t steps = inputs.value().dim(0);
  ad::Var h{Tensor{Shape{hidden}}};
  ad::Var c{Tensor{Shape{hidden}}};
  for (std::size_t s = 0; s < steps; ++s) {
    const std::size_t t = reverse ? steps - 1 - s : s;
    ad::Var x_t = ad::row(inputs, t);
    ad::Var gates = ad::add(ad::add(ad::matmul(x_t, *dir.wx), ad::matmul(h, *dir.wh)), *dir.b);
    ad::Var in_g = ad::sigmoid(ad::segment(gates, 0, hidden));
    ad::Var forget_g = ad::sigmoid(ad::segment(gates, hidden, hidden));
    ad::Var cand = ad::tanh(ad::segment(gates, 2 * hidden, hidden));
    ad::Var out_g = ad::sigmoid(ad::segment(gates, 3 * hidden, hidden));
    c = ad::add(ad::mul(forget_g, c), ad::mul(in_g, cand));
    h = ad::mul(out_g, ad::tanh(c));
  }
  return h;
}

}  // namespace

ad::Var encode_modality(const Tensor& window, const EncoderVars& enc, const ModelDims& dims) {
  if (window.rank() != 2)
    throw ShapeError("encode_modality: window must be rank 2, got " + window.shape_str());
  if (window.dim(1) != enc.w_in1.value().dim(0))
    throw ShapeError("encode_modality: window " + window.shape_str() + " vs input projection " +
                     enc.w_in1.value().shape_str());
  ad::Var x{window};
  ad::Var h1 = ad::tanh(ad::add_row_bias(ad::matmul(x, enc.w_in1), enc.b_in1));
  ad::Var h2 = ad::add_row_bias(ad::matmul(h1, enc.w_in2), enc.b_in2);

  LstmDir fwd{&enc.fwd_wx, &enc.fwd_wh, &enc.fwd_b};
  LstmDir bwd{&enc.bwd_wx, &enc.bwd_wh, &enc.bwd_b};
  ad::Var h_fwd = run_lstm(h2, fwd, dims.lstm_hidden, false);
  ad::Var h_bwd = run_lstm(h2, bwd, dims.lstm_hidden, true);
  ad::Var summary = ad::concat(std::vector<ad::Var>{h_fwd, h_bwd});
  return ad::add(ad::matmul(summary, enc.w_out), enc.b_out);
}

SharedLatent attention_pool(std::vector<ad::Var> embeddings, const LateFusionVars& params) {
  if (embeddings.empty()) throw ShapeError("attention_pool: no modality embeddings");
  std::vector<ad::Var> scores;
  scores.reserve(embeddings.size());
  for (const ad::Var& z : embeddings) {
    ad::Var hidden = ad::tanh(ad::add(ad::matmul(z, params.imp_w1), params.imp_b1));
    scores.push_back(ad::add(ad::matmul(hidden, params.imp_w2), params.imp_b2));
  }
  SharedLatent out;
  out.alpha = ad::softmax_row(ad::concat(scores));
  ad::Var agg = ad::smul(ad::index(out.alpha, 0), embeddings[0]);
  for (std::size_t m = 1; m < embeddings.size(); ++m)
    agg = ad::add(agg, ad::smul(ad::index(out.alpha, m), embeddings[m]));
  out.aggregate = agg;
  out.modality_embeddings = std::move(embeddings);
  return out;
}

LateForward forward_late_fusion(const Episode& episode, const LateFusionVars& params,
                                const std::vector<ModalitySchema>& schema,
                                const ModelDims& dims) {
  if (schema.size() != params.encoders.size())
    throw ShapeError("forward_late_fusion: " + std::to_string(params.encoders.size()) +
                     " encoders vs " + std::to_string(schema.size()) + " schema modalities");
  std::vector<ad::Var> embeddings;
  embeddings.reserve(params.encoders.size());
  for (std::size_t m = 0; m < params.encoders.size(); ++m) {
    const auto& [modality, enc] = params.encoders[m];
    if (schema[m].modality_id != modality)
      throw ShapeError("forward_late_fusion: encoder order (" + modality +
                       ") disagrees with schema order (" + schema[m].modality_id + ")");
    auto it = episode.windows.find(modality);
    if (it == episode.windows.end())
      throw DataError("episode lacks a window for modality '" + modality + "'");
    embeddings.push_back(encode_modality(it->second, enc, dims));
  }
  LateForward out;
  out.latent = attention_pool(std::move(embeddings), params);
  out.probs =
      ad::softmax_row(ad::add(ad::matmul(out.latent.aggregate, params.cls_w), params.cls_b));
  return out;
}

Tensor build_early_window(const Episode& episode, const std::vector<ModalitySchema>& schema) {
  if (schema.empty()) throw ConfigError("empty schema");
  std::size_t l_common = 0;
  std::size_t d_total = 0;
  for (const auto& s : schema) {
    l_common = std::max(l_common, s.window_steps);
    d_total += s.feature_count() + 1;
  }
  Tensor out{Shape{l_common, d_total}};
  std::size_t col = 0;
  for (const auto& s : schema) {
    auto it = episode.windows.find(s.modality_id);
    if (it == episode.windows.end())
      throw DataError("episode lacks a window for modality '" + s.modality_id + "'");
    const Tensor& w = it->second;
    const std::size_t cols = s.feature_count() + 1;
    for (std::size_t r = 0; r < l_common; ++r) {
      const std::size_t src = r * s.window_steps / l_common;  // repeat coarse rows
      for (std::size_t j = 0; j < cols; ++j) out.at2(r, col + j) = w.at2(src, j);
    }
    col += cols;
  }
  return out;
}

ad::Var forward_early_fusion(const Episode& episode, const EarlyFusionVars& params,
                             const std::vector<ModalitySchema>& schema, const ModelDims& dims) {
  Tensor window = build_early_window(episode, schema);
  ad::Var z = encode_modality(window, params.encoder, dims);
  return ad::softmax_row(ad::add(ad::matmul(z, params.cls_w), params.cls_b));
}

AttentionReport attention_report(const LateFusionParams& params,
                                 const std::vector<Episode>& episodes,
                                 const std::vector<ModalitySchema>& schema,
                                 const ModelDims& dims) {
  if (episodes.empty()) throw DataError("attention_report: no episodes");
  LateFusionVars vars = bind(params, nullptr);

  AttentionReport report;
  for (const auto& [modality, enc] : params.encoders) report.modalities.push_back(modality);
  const std::size_t m_count = report.modalities.size();
  report.instances.resize(episodes.size());

#ifdef _OPENMP
#pragma omp parallel for schedule(dynamic, 4)
#endif
  for (long long i = 0; i < static_cast<long long>(episodes.size()); ++i) {
    const Episode& e = episodes[static_cast<std::size_t>(i)];
    auto fwd = forward_late_fusion(e, vars, schema, dims);
    AttentionReport::Instance inst;
    inst.participant_id = e.participant_id;
    inst.t_start = e.t_start;
    inst.t_end = e.t_end;
    inst.alpha = fwd.latent.alpha.value().vec_data();
    report.instances[static_cast<std::size_t>(i)] = std::move(inst);
  }

  report.mean_alpha.assign(m_count, 0.0);
  for (const auto& inst : report.instances)
    for (std::size_t m = 0; m < m_count; ++m) report.mean_alpha[m] += inst.alpha[m];
  for (double& v : report.mean_alpha) v /= static_cast<double>(report.instances.size());
  return report;
}

// ---- checkpointing -----------------------------------------------------------------

namespace {

Tensor tensor_from_json(const json& j) {
  Shape shape = j.at("shape").get<Shape>();
  std::vector<double> data = j.at("data").get<std::vector<double>>();
  return Tensor{std::move(shape), std::move(data)};
}

json schema_to_json(const std::vector<ModalitySchema>& schema) {
  json arr = json::array();
  for (const auto& s : schema) {
    arr.push_back({{"modality", s.modality_id},
                   {"features", s.feature_names},
                   {"resample_step_s", s.resample_step_s},
                   {"window_steps", s.window_steps}});
  }
  return arr;
}

std::vector<ModalitySchema> schema_from_json(const json& arr) {
  std::vector<ModalitySchema> schema;
  for (const auto& j : arr) {
    ModalitySchema s;
    s.modality_id = j.at("modality").get<std::string>();
    s.feature_names = j.at("features").get<std::vector<std::string>>();
    s.resample_step_s = j.at("resample_step_s").get<double>();
    s.window_steps = j.at("window_steps").get<std::size_t>();
    schema.push_back(std::move(s));
  }
  return schema;
}

json dims_to_json(const ModelDims& d) {
  return {{"input_hidden", d.input_hidden}, {"embed", d.embed},
          {"lstm_hidden", d.lstm_hidden},   {"imp_hidden", d.imp_hidden},
          {"proj_hidden", d.proj_hidden},   {"classes", d.classes}};
}

ModelDims dims_from_json(const json& j) {
  ModelDims d;
  d.input_hidden = j.at("input_hidden").get<std::size_t>();
  d.embed = j.at("embed").get<std::size_t>();
  d.lstm_hidden = j.at("lstm_hidden").get<std::size_t>();
  d.imp_hidden = j.at("imp_hidden").get<std::size_t>();
  d.proj_hidden = j.at("proj_hidden").get<std::size_t>();
  d.classes = j.at("classes").get<std::size_t>();
  return d;
}

json normalizer_to_json(const timeline::Normalizer& n) {
  json out = json::object();
  for (const auto& [modality, stats] : n.by_modality) {
    json arr = json::array();
    for (const auto& s : stats) arr.push_back({{"mean", s.mean}, {"std", s.std}});
    out[modality] = std::move(arr);
  }
  return out;
}

timeline::Normalizer normalizer_from_json(const json& j) {
  timeline::Normalizer n;
  for (auto it = j.begin(); it != j.end(); ++it) {
    std::vector<timeline::Normalizer::FeatureStats> stats;
    for (const auto& s : it.value())
      stats.push_back({s.at("mean").get<double>(), s.at("std").get<double>()});
    n.by_modality[it.key()] = std::move(stats);
  }
  return n;
}

}  // namespace

void save_checkpoint(const ModelBundle& bundle, const std::filesystem::path& path) {
  json doc;
  doc["format"] = "wearfuse-checkpoint-v1";
  doc["kind"] = bundle.kind;
  doc["dims"] = dims_to_json(bundle.dims);
  doc["schema"] = schema_to_json(bundle.schema);
  doc["normalizer"] = normalizer_to_json(bundle.normalizer);

  json params = json::array();
  auto dump = [&params](const std::string& name, Tensor& t) {
    params.push_back({{"name", name}, {"shape", t.shape()}, {"data", t.vec_data()}});
  };
  ModelBundle& mut = const_cast<ModelBundle&>(bundle);
  if (bundle.kind == "late-fusion")
    walk(mut.late, dump);
  else if (bundle.kind == "early-fusion")
    walk(mut.early, dump);
  else
    throw Error("save_checkpoint: unknown kind '" + bundle.kind + "'");
  doc["params"] = std::move(params);

  std::ofstream out(path);
  if (!out) throw DataError("cannot write checkpoint: " + path.string());
  out << doc.dump(1) << "\n";
}

ModelBundle load_checkpoint(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw DataError("cannot open checkpoint: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw DataError("checkpoint parse error in " + path.string() + ": " + e.what());
  }
  if (doc.value("format", "") != "wearfuse-checkpoint-v1")
    throw DataError("not a wearfuse checkpoint: " + path.string());

  ModelBundle bundle;
  bundle.kind = doc.at("kind").get<std::string>();
  bundle.dims = dims_from_json(doc.at("dims"));
  bundle.schema = schema_from_json(doc.at("schema"));
  bundle.normalizer = normalizer_from_json(doc.at("normalizer"));

  std::map<std::string, Tensor> by_name;
  for (const auto& p : doc.at("params"))
    by_name.emplace(p.at("name").get<std::string>(), tensor_from_json(p));

  auto fill = [&by_name, &path](const std::string& name, Tensor& t) {
    auto it = by_name.find(name);
    if (it == by_name.end())
      throw DataError("checkpoint " + path.string() + " is missing parameter '" + name + "'");
    t = std::move(it->second);
    by_name.erase(it);
  };
  if (bundle.kind == "late-fusion") {
    // encoder roster comes from the schema
    for (const auto& s : bundle.schema) bundle.late.encoders.emplace_back(s.modality_id, EncoderParams{});
    walk(bundle.late, fill);
  } else if (bundle.kind == "early-fusion") {
    walk(bundle.early, fill);
  } else {
    throw DataError("checkpoint has unknown kind '" + bundle.kind + "'");
  }
  if (!by_name.empty())
    throw DataError("checkpoint has unexpected parameter '" + by_name.begin()->first + "'");
  return bundle;
}

}  // namespace wearfuse::model
