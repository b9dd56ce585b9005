#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "wearfuse/labeling.hpp"
#include "wearfuse/rng.hpp"

using namespace wearfuse;
using namespace wearfuse::labeling;

namespace {

// Brute-force re-evaluation of the Gaussian sum, written independently of the
// library path (different factoring, reverse accumulation order).
double oracle_eval(const SupervisionSignal& s, double t) {
  double total = 0.0;
  for (auto it = s.components.rbegin(); it != s.components.rend(); ++it) {
    const double z = (t - it->mu) / it->sigma;
    total += it->amplitude * std::exp(-0.5 * z * z);
  }
  return total;
}

}  // namespace

TEST_CASE("report_to_gaussian mapping") {
  // instantaneous high report: peak at the timestamp, 30 min sigma, amp 3
  auto c = report_to_gaussian({1000.0, std::nullopt, Intensity::high});
  CHECK(c.mu == 1000.0);
  CHECK(c.sigma == 1800.0);
  CHECK(c.amplitude == 3.0);

  // one-hour span keeps the base sigma; peak at the midpoint
  auto c2 = report_to_gaussian({0.0, 3600.0, Intensity::medium});
  CHECK(c2.mu == 1800.0);
  CHECK(c2.sigma == 1800.0);
  CHECK(c2.amplitude == 2.0);

  // two-hour span scales sigma proportionally
  auto c3 = report_to_gaussian({0.0, 7200.0, Intensity::low});
  CHECK(c3.mu == 3600.0);
  CHECK(c3.sigma == 3600.0);
  CHECK(c3.amplitude == 1.0);
}

TEST_CASE("evaluate_signal closed-form points") {
  SupervisionSignal s{"p", {{5000.0, 1800.0, 3.0}}};
  CHECK(evaluate_signal(s, 5000.0) == 3.0);
  CHECK(evaluate_signal(s, 5000.0 + 1800.0) ==
        doctest::Approx(3.0 * std::exp(-0.5)).epsilon(1e-14));
  SupervisionSignal empty{"p", {}};
  CHECK(evaluate_signal(empty, 123.0) == 0.0);
}

TEST_CASE("labeling threshold is strict") {
  // Tune a single component so the value at t is exactly 0.5, then nudge.
  SupervisionSignal s{"p", {{0.0, 1800.0, 0.5}}};
  CHECK(evaluate_signal(s, 0.0) == 0.5);
  CHECK(!label_at(s, 0.0));  // exactly 0.5 -> not stressed
  SupervisionSignal s2{"p", {{0.0, 1800.0, 0.6}}};
  CHECK(label_at(s2, 0.0));

  // none-intensity reports leave the signal identically zero
  auto sig = build_signal("p", {{100.0, std::nullopt, Intensity::none},
                                {500.0, 900.0, Intensity::none}});
  CHECK(evaluate_signal(sig, 100.0) == 0.0);
  CHECK(!label_at(sig, 100.0));
}

TEST_CASE("signal is linear in its components") {
  Rng rng(2);
  std::vector<SelfReport> ra, rb;
  for (int i = 0; i < 6; ++i) {
    double t0 = rng.uniform(0, 86400);
    ra.push_back({t0, t0 + rng.uniform(0, 7200), Intensity::medium});
    double t1 = rng.uniform(0, 86400);
    rb.push_back({t1, std::nullopt, Intensity::high});
  }
  auto sa = build_signal("p", ra);
  auto sb = build_signal("p", rb);
  std::vector<SelfReport> all = ra;
  all.insert(all.end(), rb.begin(), rb.end());
  auto sall = build_signal("p", all);
  for (int i = 0; i < 50; ++i) {
    double t = rng.uniform(-86400, 2 * 86400);
    CHECK(evaluate_signal(sall, t) ==
          doctest::Approx(evaluate_signal(sa, t) + evaluate_signal(sb, t)).epsilon(1e-15));
  }
}

TEST_CASE("time-shifting reports and query points preserves labels") {
  Rng rng(9);
  std::vector<SelfReport> reports;
  for (int i = 0; i < 8; ++i) {
    double t0 = rng.uniform(0, 86400);
    if (rng.uniform() < 0.5)
      reports.push_back({t0, std::nullopt, Intensity::high});
    else
      reports.push_back({t0, t0 + rng.uniform(600, 9000), Intensity::low});
  }
  auto base = build_signal("p", reports);
  const double delta = 12345.678;
  std::vector<SelfReport> shifted;
  for (auto r : reports) {
    r.t_start += delta;
    if (r.t_end) *r.t_end += delta;
    shifted.push_back(r);
  }
  auto moved = build_signal("p", shifted);
  for (int i = 0; i < 200; ++i) {
    double t = rng.uniform(0, 86400);
    CHECK(label_at(base, t) == label_at(moved, t + delta));
  }
}

TEST_CASE("each component peaks at mu and decays monotonically") {
  SupervisionSignal s{"p", {{4000.0, 1200.0, 2.0}}};
  double prev = evaluate_signal(s, 4000.0);
  CHECK(prev == 2.0);
  for (int step = 1; step <= 20; ++step) {
    double v = evaluate_signal(s, 4000.0 + step * 300.0);
    CHECK(v < prev);
    prev = v;
  }
  prev = evaluate_signal(s, 4000.0);
  for (int step = 1; step <= 20; ++step) {
    double v = evaluate_signal(s, 4000.0 - step * 300.0);
    CHECK(v < prev);
    prev = v;
  }
}

TEST_CASE("matches brute-force oracle at 1000 random timestamps") {
  Rng rng(31);
  std::vector<SelfReport> reports;
  for (int i = 0; i < 25; ++i) {
    double t0 = rng.uniform(0, 14 * 86400);
    Intensity in = static_cast<Intensity>(1 + rng.below(3));
    if (rng.uniform() < 0.4)
      reports.push_back({t0, std::nullopt, in});
    else
      reports.push_back({t0, t0 + rng.uniform(300, 10800), in});
  }
  auto s = build_signal("p", reports);
  for (int i = 0; i < 1000; ++i) {
    double t = rng.uniform(-86400, 15 * 86400);
    CHECK(std::abs(evaluate_signal(s, t) - oracle_eval(s, t)) < 1e-12);
  }
}
