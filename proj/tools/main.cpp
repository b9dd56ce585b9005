#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "wearfuse/artifacts.hpp"
#include "wearfuse/errors.hpp"
#include "wearfuse/gradcheck.hpp"
#include "wearfuse/runconfig.hpp"
#include "wearfuse/synthcohort.hpp"

namespace fs = std::filesystem;
using namespace wearfuse;

namespace {

struct CommonOpts {
  std::string config_path;
  std::string cohort_dir;
  std::string out_dir;
  std::string scheme;
  std::uint64_t seed_value = 0;
  bool seed_set = false;
  double lambda_value = 0.0;
  bool lambda_set = false;
  double temperature_value = 0.0;
  bool temperature_set = false;
};

config::RunConfig resolve_config(const CommonOpts& opts) {
  config::RunConfig cfg =
      opts.config_path.empty() ? config::default_config() : config::load_config(opts.config_path);
  if (!opts.cohort_dir.empty()) cfg.cohort_dir = opts.cohort_dir;
  if (!opts.out_dir.empty()) cfg.out_dir = opts.out_dir;
  if (!opts.scheme.empty()) cfg.train.scheme = training::scheme_from_string(opts.scheme);
  if (opts.seed_set) {
    cfg.train.seed = opts.seed_value;
    cfg.synth.seed = opts.seed_value;
  }
  if (opts.lambda_set) cfg.train.contrastive.lambda_reg = opts.lambda_value;
  if (opts.temperature_set) cfg.train.contrastive.temperature = opts.temperature_value;
  config::validate(cfg);
  return cfg;
}

timeline::Cohort load_split_cohort(const config::RunConfig& cfg) {
  std::vector<std::string> warnings;
  auto cohort = timeline::load_cohort(cfg.cohort_dir, cfg.schema, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  timeline::assign_split(cohort, cfg.data.test_fraction, cfg.train.seed);
  return cohort;
}

int cmd_synth(const CommonOpts& opts) {
  auto cfg = resolve_config(opts);
  auto summary = synth::generate(cfg.synth, cfg.schema, cfg.data.window_s, cfg.data.stride_s,
                                 cfg.cohort_dir);
  std::printf("cohort: %s\n", cfg.cohort_dir.c_str());
  std::printf("participants: %zu\n", summary.participants);
  std::printf("events: %zu\n", summary.events);
  std::printf("episodes scanned: %zu\n", summary.episodes);
  std::printf("stressed fraction: %.4f\n", summary.stressed_fraction);
  if (summary.stressed_fraction < 0.2 || summary.stressed_fraction > 0.6)
    std::cerr << "warning: stressed fraction " << summary.stressed_fraction
              << " falls outside the balanced range [0.2, 0.6]\n";
  return 0;
}

int cmd_labels(const CommonOpts& opts) {
  auto cfg = resolve_config(opts);
  std::vector<std::string> warnings;
  auto cohort = timeline::load_cohort(cfg.cohort_dir, cfg.schema, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  auto episodes = timeline::extract_episodes(cohort, cfg.data.window_s, cfg.data.stride_s);
  const fs::path out = fs::path(cfg.out_dir) / "labels.csv";
  artifacts::write_labels_csv(cohort, episodes, out);
  std::printf("labels: %s (%zu episodes)\n", out.string().c_str(), episodes.size());
  return 0;
}

int cmd_train(const CommonOpts& opts) {
  auto cfg = resolve_config(opts);
  auto cohort = load_split_cohort(cfg);
  auto result = training::train(cohort, cfg.data, cfg.train);

  const fs::path out(cfg.out_dir);
  const std::string scheme = training::to_string(cfg.train.scheme);
  artifacts::write_metrics_json(result.metrics, scheme, cfg.train.seed, out / "metrics.json");
  artifacts::write_loss_curve_csv(result.metrics.loss_curve, out / "loss_curve.csv");
  if (!result.metrics.attention_means.empty())
    artifacts::write_attention_means_csv(result.metrics.attention_means,
                                         out / "attention_means.csv");
  model::save_checkpoint(result.bundle, out / "checkpoint.json");

  std::printf("scheme: %s\n", scheme.c_str());
  std::printf("test accuracy: %.4f (majority baseline %.4f, %zu episodes)\n",
              result.metrics.accuracy, result.metrics.majority_baseline,
              result.metrics.evaluated_count);
  for (const auto& [modality, alpha] : result.metrics.attention_means)
    std::printf("mean alpha[%s]: %.4f\n", modality.c_str(), alpha);
  if (objectives::ce_clamp_count() > 0)
    std::cerr << "warning: cross-entropy clamp engaged " << objectives::ce_clamp_count()
              << " time(s)\n";
  return 0;
}

int cmd_eval(const CommonOpts& opts, const std::string& checkpoint) {
  auto cfg = resolve_config(opts);
  auto bundle = model::load_checkpoint(checkpoint);
  auto cohort = load_split_cohort(cfg);
  auto sets = training::prepare_episodes(cohort, cfg.data);
  timeline::apply_normalizer(sets.test, bundle.normalizer);
  auto metrics = training::evaluate(bundle, sets.test);
  artifacts::write_metrics_json(metrics, bundle.kind, cfg.train.seed,
                                fs::path(cfg.out_dir) / "metrics.json");
  std::printf("test accuracy: %.4f (majority baseline %.4f, %zu episodes)\n", metrics.accuracy,
              metrics.majority_baseline, metrics.evaluated_count);
  return 0;
}

int cmd_attention(const CommonOpts& opts, const std::string& checkpoint) {
  auto cfg = resolve_config(opts);
  auto bundle = model::load_checkpoint(checkpoint);
  if (bundle.kind != "late-fusion")
    throw ConfigError("attention report requires a late-fusion checkpoint");
  std::vector<std::string> warnings;
  auto cohort = timeline::load_cohort(cfg.cohort_dir, cfg.schema, &warnings);
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
  auto episodes = timeline::extract_episodes(cohort, cfg.data.window_s, cfg.data.stride_s);
  timeline::label_episodes(episodes, cohort);
  timeline::apply_normalizer(episodes, bundle.normalizer);

  auto report = model::attention_report(bundle.late, episodes, bundle.schema, bundle.dims);
  const fs::path out(cfg.out_dir);
  std::vector<std::pair<std::string, double>> means;
  for (std::size_t m = 0; m < report.modalities.size(); ++m)
    means.emplace_back(report.modalities[m], report.mean_alpha[m]);
  artifacts::write_attention_means_csv(means, out / "attention_means.csv");
  artifacts::write_attention_instances_csv(report, out / "attention_instances.csv");
  for (const auto& [modality, alpha] : means)
    std::printf("mean alpha[%s]: %.4f\n", modality.c_str(), alpha);
  return 0;
}

int cmd_gradcheck(const std::string& size, std::uint64_t seed) {
  if (size != "small") throw ConfigError("unknown gradcheck size '" + size + "' (valid: small)");
  gradcheck::ReducedSpec spec;
  spec.seed = seed;
  auto report = gradcheck::run_reduced(spec);
  for (const auto& e : report.entries)
    std::printf("%-24s max_rel_err %.3e at [%zu] %s\n", e.name.c_str(), e.max_rel_err,
                e.worst_index, e.pass ? "ok" : "FAIL");
  std::printf("%s (%zu parameter groups, step %.0e, tol %.0e)\n",
              report.all_pass() ? "PASS" : "FAIL", report.entries.size(), report.step, report.tol);
  if (!report.all_pass()) throw NumericError("gradient check failed");
  return 0;
}

int cmd_config(bool print_defaults) {
  if (!print_defaults) throw ConfigError("config: nothing to do (use --print-defaults)");
  std::cout << config::to_json(config::default_config()).dump(1) << "\n";
  return 0;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"wearfuse: multi-modal episode classification for wearable sensor streams"};
  app.require_subcommand(1);

  CommonOpts opts;
  std::string checkpoint;
  std::string gradcheck_size = "small";
  std::uint64_t gradcheck_seed = 1;
  bool print_defaults = false;

  auto add_common = [&](CLI::App* sub, bool with_scheme) {
    sub->add_option("--config", opts.config_path, "JSON run configuration");
    sub->add_option("--cohort", opts.cohort_dir, "cohort directory (overrides config)");
    sub->add_option("--out", opts.out_dir, "output directory (overrides config)");
    sub->add_option("--seed", opts.seed_value, "random seed (overrides config)")
        ->each([&opts](const std::string&) { opts.seed_set = true; });
    if (with_scheme) {
      sub->add_option("--scheme", opts.scheme,
                      "training scheme: supervised-early-fusion | supervised-late-fusion | "
                      "pretrain-finetune | regularized");
      sub->add_option("--lambda-reg", opts.lambda_value, "contrastive regularization weight")
          ->each([&opts](const std::string&) { opts.lambda_set = true; });
      sub->add_option("--temperature", opts.temperature_value, "contrastive temperature")
          ->each([&opts](const std::string&) { opts.temperature_set = true; });
    }
  };

  auto* synth_cmd = app.add_subcommand("synth", "generate a synthetic cohort");
  add_common(synth_cmd, false);
  auto* labels_cmd = app.add_subcommand("labels", "export episode labels from self-reports");
  add_common(labels_cmd, false);
  auto* train_cmd = app.add_subcommand("train", "train a model and write metrics + checkpoint");
  add_common(train_cmd, true);
  auto* eval_cmd = app.add_subcommand("eval", "evaluate a checkpoint on the test split");
  add_common(eval_cmd, false);
  eval_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  auto* attention_cmd =
      app.add_subcommand("attention", "per-instance and mean modality contributions");
  add_common(attention_cmd, false);
  attention_cmd->add_option("--checkpoint", checkpoint, "model checkpoint")->required();
  auto* gradcheck_cmd =
      app.add_subcommand("gradcheck", "reverse-mode vs finite-difference gradient check");
  gradcheck_cmd->add_option("--size", gradcheck_size, "fixture size (small)");
  gradcheck_cmd->add_option("--seed", gradcheck_seed, "fixture seed");
  auto* config_cmd = app.add_subcommand("config", "configuration utilities");
  config_cmd->add_flag("--print-defaults", print_defaults, "print the default configuration");

  try {
    app.parse(argc, argv);
  } catch (const CLI::CallForHelp& e) {
    return app.exit(e);
  } catch (const CLI::CallForAllHelp& e) {
    return app.exit(e);
  } catch (const CLI::ParseError& e) {
    std::cerr << e.what() << "\n";
    return 2;
  }

  try {
    if (synth_cmd->parsed()) return cmd_synth(opts);
    if (labels_cmd->parsed()) return cmd_labels(opts);
    if (train_cmd->parsed()) return cmd_train(opts);
    if (eval_cmd->parsed()) return cmd_eval(opts, checkpoint);
    if (attention_cmd->parsed()) return cmd_attention(opts, checkpoint);
    if (gradcheck_cmd->parsed()) return cmd_gradcheck(gradcheck_size, gradcheck_seed);
    if (config_cmd->parsed()) return cmd_config(print_defaults);
  } catch (const ConfigError& e) {
    std::cerr << "config error: " << e.what() << "\n";
    return 2;
  } catch (const DataError& e) {
    std::cerr << "data error: " << e.what() << "\n";
    return 3;
  } catch (const NumericError& e) {
    std::cerr << "numeric error: " << e.what() << "\n";
    return 4;
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 4;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
