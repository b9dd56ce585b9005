#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "wearfuse/errors.hpp"
#include "wearfuse/gradcheck.hpp"
#include "wearfuse/model.hpp"
#include "wearfuse/rng.hpp"

using namespace wearfuse;
namespace ad = wearfuse::ad;
using namespace wearfuse::model;
using timeline::Episode;
using timeline::ModalitySchema;

namespace {

std::vector<ModalitySchema> two_mod_schema() {
  return {{"a", {"f0", "f1"}, 60.0, 6}, {"b", {"g0"}, 120.0, 3}};
}

ModelDims small_dims() {
  ModelDims d;
  d.input_hidden = 6;
  d.embed = 6;
  d.lstm_hidden = 5;
  d.imp_hidden = 4;
  d.proj_hidden = 6;
  return d;
}

Episode random_episode(const std::vector<ModalitySchema>& schema, Rng& rng) {
  Episode e;
  e.participant_id = "t";
  e.t_start = 0;
  e.t_end = 360;
  e.label = rng.uniform() < 0.5;
  for (const auto& s : schema) {
    Tensor w{Shape{s.window_steps, s.feature_count() + 1}};
    for (std::size_t r = 0; r < s.window_steps; ++r) {
      for (std::size_t j = 0; j < s.feature_count(); ++j) w.at2(r, j) = rng.normal();
      w.at2(r, s.feature_count()) = rng.uniform() < 0.25 ? 1.0 : 0.0;
    }
    e.windows.emplace(s.modality_id, std::move(w));
  }
  return e;
}

}  // namespace

TEST_CASE("zero window with zero parameters propagates the output bias") {
  auto schema = two_mod_schema();
  auto dims = small_dims();
  auto params = init_late_fusion(schema, dims, 1);
  // zero every tensor of encoder "a", then plant a known output bias
  walk(params.encoders[0].second, "enc.a", [](const std::string&, Tensor& t) {
    for (std::size_t i = 0; i < t.numel(); ++i) t[i] = 0.0;
  });
  for (std::size_t i = 0; i < dims.embed; ++i)
    params.encoders[0].second.b_out[i] = 0.5 + static_cast<double>(i);

  auto vars = bind(params, nullptr);
  Tensor window{Shape{6, 3}};  // all zeros
  auto z = encode_modality(window, vars.encoders[0].second, dims);
  for (std::size_t i = 0; i < dims.embed; ++i)
    CHECK(z.value()[i] == 0.5 + static_cast<double>(i));
}

TEST_CASE("single-step window stays finite") {
  std::vector<ModalitySchema> schema{{"a", {"f0"}, 360.0, 1}};
  auto dims = small_dims();
  auto params = init_late_fusion(schema, dims, 3);
  auto vars = bind(params, nullptr);
  Tensor window = Tensor::mat(1, 2, {1.7, 0.0});
  auto z = encode_modality(window, vars.encoders[0].second, dims);
  CHECK(z.value().numel() == dims.embed);
  CHECK(z.value().all_finite());
}

TEST_CASE("encoding is bit-deterministic") {
  auto schema = two_mod_schema();
  auto dims = small_dims();
  auto params = init_late_fusion(schema, dims, 11);
  auto vars = bind(params, nullptr);
  Rng rng(5);
  auto e = random_episode(schema, rng);
  auto r1 = forward_late_fusion(e, vars, schema, dims);
  auto r2 = forward_late_fusion(e, vars, schema, dims);
  CHECK(std::memcmp(r1.probs.value().data(), r2.probs.value().data(),
                    r1.probs.value().numel() * sizeof(double)) == 0);
  CHECK(std::memcmp(r1.latent.aggregate.value().data(), r2.latent.aggregate.value().data(),
                    dims.embed * sizeof(double)) == 0);
}

TEST_CASE("attention_pool basics") {
  auto schema = two_mod_schema();
  auto dims = small_dims();
  auto params = init_late_fusion(schema, dims, 2);
  auto vars = bind(params, nullptr);

  SUBCASE("single modality gets weight 1") {
    std::vector<ad::Var> embeddings{ad::Var{Tensor::vec({1, 2, 3, 4, 5, 6})}};
    auto latent = attention_pool(embeddings, vars);
    CHECK(latent.alpha.value().numel() == 1);
    CHECK(latent.alpha.value()[0] == 1.0);
    for (std::size_t i = 0; i < 6; ++i)
      CHECK(latent.aggregate.value()[i] == doctest::Approx(1.0 + static_cast<double>(i)));
  }

  SUBCASE("identical embeddings split evenly and reproduce the input") {
    Tensor z = Tensor::vec({0.3, -1, 2, 0.7, 0, 1.1});
    std::vector<ad::Var> embeddings{ad::Var{z}, ad::Var{z}};
    auto latent = attention_pool(embeddings, vars);
    CHECK(latent.alpha.value()[0] == doctest::Approx(0.5).epsilon(1e-12));
    CHECK(latent.alpha.value()[1] == doctest::Approx(0.5).epsilon(1e-12));
    for (std::size_t i = 0; i < 6; ++i)
      CHECK(latent.aggregate.value()[i] == doctest::Approx(z[i]).epsilon(1e-12));
  }

  SUBCASE("hand-built head: scores (ln 3, 0) give alpha (0.75, 0.25)") {
    // importance head reads only embedding[0] through hidden unit 0
    auto p = params;
    for (std::size_t i = 0; i < p.imp_w1.numel(); ++i) p.imp_w1[i] = 0.0;
    for (std::size_t i = 0; i < p.imp_b1.numel(); ++i) p.imp_b1[i] = 0.0;
    for (std::size_t i = 0; i < p.imp_w2.numel(); ++i) p.imp_w2[i] = 0.0;
    p.imp_b2[0] = 0.0;
    p.imp_w1.at2(0, 0) = 1.0;
    p.imp_w2[0] = std::log(3.0) / std::tanh(1.0);
    auto handvars = bind(p, nullptr);

    Tensor z1 = Tensor::vec({1, 0, 0, 0, 0, 0});  // score ln 3
    Tensor z2 = Tensor::vec({0, 1, 1, 1, 1, 1});  // score 0
    std::vector<ad::Var> embeddings{ad::Var{z1}, ad::Var{z2}};
    auto latent = attention_pool(embeddings, handvars);
    CHECK(latent.alpha.value()[0] == doctest::Approx(0.75).epsilon(1e-12));
    CHECK(latent.alpha.value()[1] == doctest::Approx(0.25).epsilon(1e-12));
    for (std::size_t i = 0; i < 6; ++i)
      CHECK(latent.aggregate.value()[i] ==
            doctest::Approx(0.75 * z1[i] + 0.25 * z2[i]).epsilon(1e-12));
  }

  SUBCASE("empty embedding list rejected") {
    std::vector<ad::Var> none;
    CHECK_THROWS_AS(attention_pool(none, vars), ShapeError);
  }
}

TEST_CASE("forward invariants over random passes") {
  auto schema = two_mod_schema();
  auto dims = small_dims();
  Rng rng(23);
  for (int it = 0; it < 50; ++it) {
    auto params = init_late_fusion(schema, dims, 100 + static_cast<std::uint64_t>(it));
    auto vars = bind(params, nullptr);
    auto e = random_episode(schema, rng);
    auto fwd = forward_late_fusion(e, vars, schema, dims);

    // class probabilities sum to 1
    double psum = fwd.probs.value()[0] + fwd.probs.value()[1];
    CHECK(std::abs(psum - 1.0) < 1e-12);

    // alpha right-stochastic
    const Tensor& alpha = fwd.latent.alpha.value();
    double asum = 0.0;
    for (std::size_t m = 0; m < alpha.numel(); ++m) {
      CHECK(alpha[m] > 0.0);
      asum += alpha[m];
    }
    CHECK(std::abs(asum - 1.0) < 1e-9);

    // aggregate is the alpha-weighted combination
    for (std::size_t i = 0; i < dims.embed; ++i) {
      double expect = 0.0;
      for (std::size_t m = 0; m < alpha.numel(); ++m)
        expect += alpha[m] * fwd.latent.modality_embeddings[m].value()[i];
      CHECK(std::abs(fwd.latent.aggregate.value()[i] - expect) < 1e-9);
    }
  }
}

TEST_CASE("duplicated modality with shared parameters gets uniform attention") {
  std::vector<ModalitySchema> schema{{"a", {"f0"}, 60.0, 4}, {"b", {"f0"}, 60.0, 4}};
  auto dims = small_dims();
  auto params = init_late_fusion(schema, dims, 9);
  params.encoders[1].second = params.encoders[0].second;  // identical branches
  auto vars = bind(params, nullptr);

  Episode e;
  e.participant_id = "t";
  e.t_end = 240;
  Tensor w = Tensor::mat(4, 2, {0.5, 0, -0.3, 0, 1.2, 1, 0.0, 0});
  e.windows.emplace("a", w);
  e.windows.emplace("b", w);
  auto fwd = forward_late_fusion(e, vars, schema, dims);
  CHECK(fwd.latent.alpha.value()[0] == doctest::Approx(0.5).epsilon(1e-12));
  for (std::size_t i = 0; i < dims.embed; ++i)
    CHECK(fwd.latent.modality_embeddings[0].value()[i] ==
          doctest::Approx(fwd.latent.modality_embeddings[1].value()[i]).epsilon(1e-12));
}

TEST_CASE("modality permutation equivariance") {
  auto schema = two_mod_schema();
  auto dims = small_dims();
  auto params = init_late_fusion(schema, dims, 31);
  Rng rng(7);
  auto e = random_episode(schema, rng);

  auto vars = bind(params, nullptr);
  auto fwd = forward_late_fusion(e, vars, schema, dims);

  // permute encoder order (parameters travel with their modality)
  auto permuted = params;
  std::swap(permuted.encoders[0], permuted.encoders[1]);
  auto pvars = bind(permuted, nullptr);
  std::vector<ModalitySchema> pschema{schema[1], schema[0]};
  auto pfwd = forward_late_fusion(e, pvars, pschema, dims);

  CHECK(std::abs(fwd.latent.alpha.value()[0] - pfwd.latent.alpha.value()[1]) < 1e-12);
  CHECK(std::abs(fwd.latent.alpha.value()[1] - pfwd.latent.alpha.value()[0]) < 1e-12);
  for (std::size_t i = 0; i < dims.embed; ++i)
    CHECK(std::abs(fwd.latent.aggregate.value()[i] - pfwd.latent.aggregate.value()[i]) < 1e-12);
}

TEST_CASE("adding a constant to importance scores leaves alpha unchanged") {
  auto schema = two_mod_schema();
  auto dims = small_dims();
  auto params = init_late_fusion(schema, dims, 17);
  Rng rng(19);
  auto e = random_episode(schema, rng);
  auto base = forward_late_fusion(e, bind(params, nullptr), schema, dims);

  auto shifted = params;
  shifted.imp_b2[0] += 7.5;  // shifts every modality's score equally
  auto moved = forward_late_fusion(e, bind(shifted, nullptr), schema, dims);
  for (std::size_t m = 0; m < 2; ++m)
    CHECK(std::abs(base.latent.alpha.value()[m] - moved.latent.alpha.value()[m]) < 1e-12);
}

TEST_CASE("early fusion: shapes, probabilities, parameter count") {
  auto schema = two_mod_schema();
  auto dims = small_dims();
  auto late = init_late_fusion(schema, dims, 4);
  auto early = init_early_fusion(schema, dims, 4);
  Rng rng(3);
  auto e = random_episode(schema, rng);

  // common grid: finest step wins, coarse rows repeat
  Tensor w = build_early_window(e, schema);
  CHECK(w.dim(0) == 6);
  CHECK(w.dim(1) == 3 + 2);
  // modality b rows repeat each source row twice
  CHECK(w.at2(0, 3) == w.at2(1, 3));
  CHECK(w.at2(0, 3) == e.windows.at("b").at2(0, 0));
  CHECK(w.at2(2, 3) == e.windows.at("b").at2(1, 0));

  auto probs = forward_early_fusion(e, bind(early, nullptr), schema, dims);
  CHECK(std::abs(probs.value()[0] + probs.value()[1] - 1.0) < 1e-12);

  CHECK(param_count(early) < param_count(late));
}

TEST_CASE("single-modality config gives early and late fusion identical inputs") {
  std::vector<ModalitySchema> schema{{"solo", {"f0", "f1"}, 60.0, 4}};
  Rng rng(8);
  auto e = random_episode(schema, rng);
  Tensor w = build_early_window(e, schema);
  CHECK(w.vec_data() == e.windows.at("solo").vec_data());
}

TEST_CASE("attention_report means are the instance expectation") {
  auto schema = two_mod_schema();
  auto dims = small_dims();
  auto params = init_late_fusion(schema, dims, 21);
  Rng rng(2);
  std::vector<Episode> episodes;
  for (int i = 0; i < 7; ++i) episodes.push_back(random_episode(schema, rng));

  auto report = attention_report(params, episodes, schema, dims);
  REQUIRE(report.instances.size() == 7);
  double total = 0.0;
  for (double v : report.mean_alpha) total += v;
  CHECK(std::abs(total - 1.0) < 1e-9);

  for (std::size_t m = 0; m < 2; ++m) {
    double mean = 0.0;
    for (const auto& inst : report.instances) mean += inst.alpha[m];
    CHECK(report.mean_alpha[m] == doctest::Approx(mean / 7.0).epsilon(1e-12));
  }

  // singleton set: means equal that instance's alpha
  std::vector<Episode> one{episodes[0]};
  auto single = attention_report(params, one, schema, dims);
  CHECK(single.mean_alpha[0] == doctest::Approx(single.instances[0].alpha[0]).epsilon(1e-15));

  std::vector<Episode> none;
  CHECK_THROWS_AS(attention_report(params, none, schema, dims), DataError);
}

TEST_CASE("missing modality window is an error") {
  auto schema = two_mod_schema();
  auto dims = small_dims();
  auto params = init_late_fusion(schema, dims, 1);
  Episode e;
  e.participant_id = "t";
  e.windows.emplace("a", Tensor{Shape{6, 3}});
  CHECK_THROWS_WITH_AS(forward_late_fusion(e, bind(params, nullptr), schema, dims),
                       doctest::Contains("'b'"), DataError);
}

TEST_CASE("full-model gradients pass grad_check on a 2-episode batch") {
  gradcheck::ReducedSpec spec;
  spec.modality_count = 2;
  spec.window_steps = 8;
  spec.hidden = 8;
  spec.seed = 1;
  auto report = gradcheck::run_reduced(spec);
  for (const auto& entry : report.entries) {
    INFO(entry.name, " max_rel_err=", entry.max_rel_err);
    CHECK(entry.pass);
  }
}

TEST_CASE("checkpoint round-trips byte-exactly") {
  auto schema = two_mod_schema();
  auto dims = small_dims();
  ModelBundle bundle;
  bundle.kind = "late-fusion";
  bundle.dims = dims;
  bundle.schema = schema;
  bundle.normalizer.by_modality["a"] = {{0.25, 1.75}, {-3.5, 0.125}};
  bundle.normalizer.by_modality["b"] = {{1e-17, 3.0000000000000004}};
  bundle.late = init_late_fusion(schema, dims, 77);

  namespace fs = std::filesystem;
  const fs::path p1 = fs::temp_directory_path() / "wf_ckpt_1.json";
  const fs::path p2 = fs::temp_directory_path() / "wf_ckpt_2.json";
  save_checkpoint(bundle, p1);
  auto loaded = load_checkpoint(p1);
  save_checkpoint(loaded, p2);

  std::ifstream f1(p1, std::ios::binary), f2(p2, std::ios::binary);
  std::string s1((std::istreambuf_iterator<char>(f1)), std::istreambuf_iterator<char>());
  std::string s2((std::istreambuf_iterator<char>(f2)), std::istreambuf_iterator<char>());
  CHECK(s1 == s2);
  CHECK(!s1.empty());

  // loaded tensors identical bitwise
  std::vector<double> orig, back;
  walk(bundle.late, [&orig](const std::string&, Tensor& t) {
    orig.insert(orig.end(), t.vec_data().begin(), t.vec_data().end());
  });
  walk(loaded.late, [&back](const std::string&, Tensor& t) {
    back.insert(back.end(), t.vec_data().begin(), t.vec_data().end());
  });
  REQUIRE(orig.size() == back.size());
  CHECK(std::memcmp(orig.data(), back.data(), orig.size() * sizeof(double)) == 0);
  fs::remove(p1);
  fs::remove(p2);
}
