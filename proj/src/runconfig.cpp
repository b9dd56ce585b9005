#include "wearfuse/runconfig.hpp"

#include <fstream>
#include <set>

#include "wearfuse/errors.hpp"

namespace wearfuse::config {

using json = nlohmann::json;

namespace {

void require_keys(const json& obj, const std::string& where, const std::set<std::string>& allowed) {
  if (!obj.is_object()) throw ConfigError(where + ": expected a JSON object");
  for (auto it = obj.begin(); it != obj.end(); ++it) {
    if (!allowed.count(it.key()))
      throw ConfigError(where + ": unknown key '" + it.key() + "'");
  }
}

template <class T>
T get_field(const json& obj, const std::string& where, const std::string& key, const T& fallback) {
  if (!obj.contains(key)) return fallback;
  try {
    return obj.at(key).get<T>();
  } catch (const json::exception& e) {
    throw ConfigError(where + "." + key + ": " + e.what());
  }
}

}  // namespace

RunConfig default_config() {
  RunConfig cfg;
  cfg.schema = {
      {"daily", {"heart_rate", "floors_climbed", "distance", "hrv_avg"}, 240.0, 15},
      {"pulse_ox", {"spo2"}, 360.0, 10},
      {"respiration", {"respiration_rate"}, 360.0, 10},
      {"stress", {"stress_score"}, 360.0, 10},
  };
  cfg.synth = synth::default_synth_config();
  return cfg;
}

json to_json(const RunConfig& cfg) {
  json schema = json::array();
  for (const auto& s : cfg.schema) {
    schema.push_back({{"modality", s.modality_id},
                      {"features", s.feature_names},
                      {"resample_step_s", s.resample_step_s},
                      {"window_steps", s.window_steps}});
  }

  json base = json::object();
  for (const auto& [name, b] : cfg.synth.base)
    base[name] = {{"mean", b.mean}, {"std", b.std}, {"period_s", b.period_s}};

  json doc;
  doc["schema"] = std::move(schema);
  doc["window_s"] = cfg.data.window_s;
  doc["stride_s"] = cfg.data.stride_s;
  doc["test_fraction"] = cfg.data.test_fraction;
  doc["cohort_dir"] = cfg.cohort_dir;
  doc["out_dir"] = cfg.out_dir;
  doc["synth"] = {
      {"participants", cfg.synth.participants},
      {"days", cfg.synth.days},
      {"event_rate_per_day", cfg.synth.event_rate_per_day},
      {"event_duration_min_s", cfg.synth.event_duration_min_s},
      {"event_duration_max_s", cfg.synth.event_duration_max_s},
      {"intensity_weights", cfg.synth.intensity_weights},
      {"report_jitter_s", cfg.synth.report_jitter_s},
      {"ar_coeff", cfg.synth.ar_coeff},
      {"dropout_fraction", cfg.synth.dropout_fraction},
      {"dropout_gap_min_s", cfg.synth.dropout_gap_min_s},
      {"dropout_gap_max_s", cfg.synth.dropout_gap_max_s},
      {"base", std::move(base)},
      {"effect", cfg.synth.effect},
      {"noise_modalities", cfg.synth.noise_modalities},
      {"seed", cfg.synth.seed},
  };
  doc["train"] = {
      {"scheme", training::to_string(cfg.train.scheme)},
      {"epochs", cfg.train.epochs},
      {"pretrain_epochs", cfg.train.pretrain_epochs},
      {"finetune_epochs", cfg.train.finetune_epochs},
      {"batch_size", cfg.train.batch_size},
      {"learning_rate", cfg.train.learning_rate},
      {"seed", cfg.train.seed},
      {"temperature", cfg.train.contrastive.temperature},
      {"lambda_reg", cfg.train.contrastive.lambda_reg},
      {"projection_head",
       cfg.train.contrastive.projection == objectives::ProjectionMode::mlp ? "mlp" : "identity"},
      {"adam",
       {{"beta1", cfg.train.adam.beta1}, {"beta2", cfg.train.adam.beta2}, {"eps", cfg.train.adam.eps}}},
      {"dims",
       {{"input_hidden", cfg.train.dims.input_hidden},
        {"embed", cfg.train.dims.embed},
        {"lstm_hidden", cfg.train.dims.lstm_hidden},
        {"imp_hidden", cfg.train.dims.imp_hidden},
        {"proj_hidden", cfg.train.dims.proj_hidden}}},
  };
  return doc;
}

RunConfig from_json(const json& doc) {
  RunConfig defaults = default_config();
  RunConfig cfg = defaults;
  require_keys(doc, "config",
               {"schema", "window_s", "stride_s", "test_fraction", "cohort_dir", "out_dir",
                "synth", "train"});

  if (doc.contains("schema")) {
    if (!doc.at("schema").is_array()) throw ConfigError("schema: expected an array");
    cfg.schema.clear();
    std::size_t i = 0;
    for (const auto& j : doc.at("schema")) {
      const std::string where = "schema[" + std::to_string(i++) + "]";
      require_keys(j, where, {"modality", "features", "resample_step_s", "window_steps"});
      timeline::ModalitySchema s;
      s.modality_id = get_field<std::string>(j, where, "modality", "");
      if (s.modality_id.empty()) throw ConfigError(where + ": modality name required");
      s.feature_names = get_field<std::vector<std::string>>(j, where, "features", {});
      if (s.feature_names.empty()) throw ConfigError(where + ": at least one feature required");
      s.resample_step_s = get_field<double>(j, where, "resample_step_s", 0.0);
      s.window_steps = get_field<std::size_t>(j, where, "window_steps", 0);
      cfg.schema.push_back(std::move(s));
    }
  }

  cfg.data.window_s = get_field<double>(doc, "config", "window_s", defaults.data.window_s);
  cfg.data.stride_s = get_field<double>(doc, "config", "stride_s", defaults.data.stride_s);
  cfg.data.test_fraction =
      get_field<double>(doc, "config", "test_fraction", defaults.data.test_fraction);
  cfg.cohort_dir = get_field<std::string>(doc, "config", "cohort_dir", defaults.cohort_dir);
  cfg.out_dir = get_field<std::string>(doc, "config", "out_dir", defaults.out_dir);

  if (doc.contains("synth")) {
    const json& s = doc.at("synth");
    require_keys(s, "synth",
                 {"participants", "days", "event_rate_per_day", "event_duration_min_s",
                  "event_duration_max_s", "intensity_weights", "report_jitter_s", "ar_coeff",
                  "dropout_fraction", "dropout_gap_min_s", "dropout_gap_max_s", "base", "effect",
                  "noise_modalities", "seed"});
    auto& sy = cfg.synth;
    sy.participants = get_field<std::size_t>(s, "synth", "participants", sy.participants);
    sy.days = get_field<double>(s, "synth", "days", sy.days);
    sy.event_rate_per_day =
        get_field<double>(s, "synth", "event_rate_per_day", sy.event_rate_per_day);
    sy.event_duration_min_s =
        get_field<double>(s, "synth", "event_duration_min_s", sy.event_duration_min_s);
    sy.event_duration_max_s =
        get_field<double>(s, "synth", "event_duration_max_s", sy.event_duration_max_s);
    if (s.contains("intensity_weights")) {
      require_keys(s.at("intensity_weights"), "synth.intensity_weights", {"low", "medium", "high"});
      sy.intensity_weights =
          s.at("intensity_weights").get<std::map<std::string, double>>();
    }
    sy.report_jitter_s = get_field<double>(s, "synth", "report_jitter_s", sy.report_jitter_s);
    sy.ar_coeff = get_field<double>(s, "synth", "ar_coeff", sy.ar_coeff);
    sy.dropout_fraction = get_field<double>(s, "synth", "dropout_fraction", sy.dropout_fraction);
    sy.dropout_gap_min_s = get_field<double>(s, "synth", "dropout_gap_min_s", sy.dropout_gap_min_s);
    sy.dropout_gap_max_s = get_field<double>(s, "synth", "dropout_gap_max_s", sy.dropout_gap_max_s);
    if (s.contains("base")) {
      sy.base.clear();
      for (auto it = s.at("base").begin(); it != s.at("base").end(); ++it) {
        const std::string where = "synth.base." + it.key();
        require_keys(it.value(), where, {"mean", "std", "period_s"});
        synth::ModalityBase b;
        b.mean = get_field<double>(it.value(), where, "mean", 0.0);
        b.std = get_field<double>(it.value(), where, "std", 1.0);
        b.period_s = get_field<double>(it.value(), where, "period_s", 60.0);
        sy.base[it.key()] = b;
      }
    }
    if (s.contains("effect")) sy.effect = s.at("effect").get<std::map<std::string, double>>();
    sy.noise_modalities = get_field<std::vector<std::string>>(s, "synth", "noise_modalities",
                                                              sy.noise_modalities);
    sy.seed = get_field<std::uint64_t>(s, "synth", "seed", sy.seed);
  }

  if (doc.contains("train")) {
    const json& t = doc.at("train");
    require_keys(t, "train",
                 {"scheme", "epochs", "pretrain_epochs", "finetune_epochs", "batch_size",
                  "learning_rate", "seed", "temperature", "lambda_reg", "projection_head",
                  "adam", "dims"});
    auto& tr = cfg.train;
    if (t.contains("scheme"))
      tr.scheme = training::scheme_from_string(t.at("scheme").get<std::string>());
    tr.epochs = get_field<std::size_t>(t, "train", "epochs", tr.epochs);
    tr.pretrain_epochs = get_field<std::size_t>(t, "train", "pretrain_epochs", tr.pretrain_epochs);
    tr.finetune_epochs = get_field<std::size_t>(t, "train", "finetune_epochs", tr.finetune_epochs);
    tr.batch_size = get_field<std::size_t>(t, "train", "batch_size", tr.batch_size);
    tr.learning_rate = get_field<double>(t, "train", "learning_rate", tr.learning_rate);
    tr.seed = get_field<std::uint64_t>(t, "train", "seed", tr.seed);
    tr.contrastive.temperature =
        get_field<double>(t, "train", "temperature", tr.contrastive.temperature);
    tr.contrastive.lambda_reg =
        get_field<double>(t, "train", "lambda_reg", tr.contrastive.lambda_reg);
    if (t.contains("projection_head")) {
      const std::string mode = t.at("projection_head").get<std::string>();
      if (mode == "mlp")
        tr.contrastive.projection = objectives::ProjectionMode::mlp;
      else if (mode == "identity")
        tr.contrastive.projection = objectives::ProjectionMode::identity;
      else
        throw ConfigError("train.projection_head: expected 'mlp' or 'identity'");
    }
    if (t.contains("adam")) {
      const json& a = t.at("adam");
      require_keys(a, "train.adam", {"beta1", "beta2", "eps"});
      tr.adam.beta1 = get_field<double>(a, "train.adam", "beta1", tr.adam.beta1);
      tr.adam.beta2 = get_field<double>(a, "train.adam", "beta2", tr.adam.beta2);
      tr.adam.eps = get_field<double>(a, "train.adam", "eps", tr.adam.eps);
    }
    if (t.contains("dims")) {
      const json& d = t.at("dims");
      require_keys(d, "train.dims",
                   {"input_hidden", "embed", "lstm_hidden", "imp_hidden", "proj_hidden"});
      tr.dims.input_hidden =
          get_field<std::size_t>(d, "train.dims", "input_hidden", tr.dims.input_hidden);
      tr.dims.embed = get_field<std::size_t>(d, "train.dims", "embed", tr.dims.embed);
      tr.dims.lstm_hidden =
          get_field<std::size_t>(d, "train.dims", "lstm_hidden", tr.dims.lstm_hidden);
      tr.dims.imp_hidden =
          get_field<std::size_t>(d, "train.dims", "imp_hidden", tr.dims.imp_hidden);
      tr.dims.proj_hidden =
          get_field<std::size_t>(d, "train.dims", "proj_hidden", tr.dims.proj_hidden);
    }
  }

  validate(cfg);
  return cfg;
}

RunConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file: " + path.string());
  json doc;
  try {
    in >> doc;
  } catch (const json::exception& e) {
    throw ConfigError("config parse error in " + path.string() + ": " + e.what());
  }
  return from_json(doc);
}

void validate(const RunConfig& cfg) {
  if (cfg.schema.empty()) throw ConfigError("schema: at least one modality required");
  for (const auto& s : cfg.schema) {
    if (!(s.resample_step_s > 0.0))
      throw ConfigError("schema '" + s.modality_id + "': resample_step_s must be positive");
    if (s.window_steps == 0)
      throw ConfigError("schema '" + s.modality_id + "': window_steps must be at least 1");
    const double covered = s.resample_step_s * static_cast<double>(s.window_steps);
    if (std::abs(covered - cfg.data.window_s) > 1e-6)
      throw ConfigError("schema '" + s.modality_id + "': steps cover " + std::to_string(covered) +
                        " s, window is " + std::to_string(cfg.data.window_s) + " s");
  }
  if (!(cfg.data.window_s > 0.0) || !(cfg.data.stride_s > 0.0))
    throw ConfigError("window_s and stride_s must be positive");
  if (cfg.data.test_fraction < 0.0 || cfg.data.test_fraction >= 1.0)
    throw ConfigError("test_fraction must lie in [0, 1)");
  for (const auto& s : cfg.schema) {
    auto it = cfg.synth.base.find(s.modality_id);
    if (it == cfg.synth.base.end())
      throw ConfigError("synth.base: missing statistics for modality '" + s.modality_id + "'");
    if (!(it->second.period_s > 0.0))
      throw ConfigError("synth.base." + s.modality_id + ": period_s must be positive");
  }
  if (cfg.synth.event_rate_per_day < 0.0)
    throw ConfigError("synth.event_rate_per_day must be non-negative");
  if (!(cfg.synth.event_duration_min_s > 0.0) ||
      cfg.synth.event_duration_max_s < cfg.synth.event_duration_min_s)
    throw ConfigError("synth event duration bounds are inverted or non-positive");
  for (const auto& [modality, units] : cfg.synth.effect) {
    if (!std::isfinite(units))
      throw ConfigError("synth.effect." + modality + " must be finite");
  }
  if (cfg.synth.dropout_fraction < 0.0 || cfg.synth.dropout_fraction >= 1.0)
    throw ConfigError("synth.dropout_fraction must lie in [0, 1)");
  if (!(cfg.train.contrastive.temperature > 0.0))
    throw ConfigError("train.temperature must be positive");
  if (cfg.train.contrastive.lambda_reg < 0.0)
    throw ConfigError("train.lambda_reg must be non-negative");
  if (cfg.train.epochs == 0 || cfg.train.pretrain_epochs == 0 || cfg.train.finetune_epochs == 0)
    throw ConfigError("epoch counts must be at least 1");
  if (cfg.train.batch_size < 2) throw ConfigError("train.batch_size must be at least 2");
}

}  // namespace wearfuse::config
