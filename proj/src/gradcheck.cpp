#include "wearfuse/gradcheck.hpp"

#include "wearfuse/rng.hpp"
#include "wearfuse/timeline.hpp"

namespace wearfuse::gradcheck {

namespace ad = wearfuse::ad;
using timeline::Episode;
using timeline::ModalitySchema;

ad::GradCheckReport run_reduced(const ReducedSpec& spec) {
  std::vector<ModalitySchema> schema;
  for (std::size_t m = 0; m < spec.modality_count; ++m) {
    ModalitySchema s;
    s.modality_id = "mod" + std::to_string(m);
    const std::size_t d = m % 2 == 0 ? 2 : 1;
    for (std::size_t j = 0; j < d; ++j) s.feature_names.push_back("f" + std::to_string(j));
    s.resample_step_s = 60.0;
    s.window_steps = spec.window_steps;
    schema.push_back(std::move(s));
  }

  model::ModelDims dims;
  dims.lstm_hidden = spec.hidden;
  dims.input_hidden = spec.hidden;
  dims.embed = spec.hidden;
  dims.imp_hidden = std::max<std::size_t>(2, spec.hidden / 2);
  dims.proj_hidden = spec.hidden;

  Rng rng(Rng::derive(spec.seed, 0x9cadULL));
  std::vector<Episode> episodes;
  for (std::size_t b = 0; b < spec.batch; ++b) {
    Episode e;
    e.participant_id = "gx";
    e.t_start = 0.0;
    e.t_end = 1.0;
    e.label = b % 2 == 1;
    for (const auto& s : schema) {
      Tensor w{Shape{s.window_steps, s.feature_count() + 1}};
      for (std::size_t r = 0; r < s.window_steps; ++r) {
        for (std::size_t j = 0; j < s.feature_count(); ++j) w.at2(r, j) = rng.normal();
        w.at2(r, s.feature_count()) = rng.uniform() < 0.2 ? 1.0 : 0.0;
      }
      e.windows.emplace(s.modality_id, std::move(w));
    }
    episodes.push_back(std::move(e));
  }

  auto params = model::init_late_fusion(schema, dims, spec.seed);
  std::vector<std::pair<std::string, Tensor>> flat;
  model::walk(params, [&flat](const std::string& name, Tensor& t) { flat.emplace_back(name, t); });

  objectives::ContrastiveConfig ccfg;
  ccfg.temperature = spec.temperature;
  ccfg.lambda_reg = spec.lambda_reg;
  ccfg.projection = objectives::ProjectionMode::mlp;

  ad::ScalarFn f = [&](std::span<const ad::Var> vars) {
    model::LateFusionVars bound = model::vars_from_flat(params, vars);
    objectives::BatchOutputs out;
    for (const auto& e : episodes) {
      auto fwd = model::forward_late_fusion(e, bound, schema, dims);
      out.latents.push_back(fwd.latent);
      out.probs.push_back(fwd.probs);
      out.labels.push_back(*e.label ? 1u : 0u);
    }
    return objectives::combined_loss(out, bound, ccfg, objectives::LossKind::regularized);
  };

  return ad::grad_check(f, flat, spec.step, spec.tol);
}

}  // namespace wearfuse::gradcheck
