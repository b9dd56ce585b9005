// Serial-vs-parallel comparison for the dense kernels and the batch-level
// evaluation loop. Not part of the test suite; run manually:
//   ./build/bench_kernels [repeats]

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <string>
#include <vector>

#include "wearfuse/gradcheck.hpp"
#include "wearfuse/kernels.hpp"
#include "wearfuse/model.hpp"
#include "wearfuse/rng.hpp"
#include "wearfuse/timeline.hpp"

using namespace wearfuse;
namespace k = wearfuse::kernels;

namespace {

double seconds_since(std::chrono::steady_clock::time_point t0) {
  return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

template <class F>
double time_loop(int repeats, F&& f) {
  f();  // warm-up
  auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < repeats; ++r) f();
  return seconds_since(t0) / repeats;
}

void bench_matmul(int repeats) {
  Rng rng(1);
  std::printf("%-34s %12s %12s %8s\n", "kernel", "serial (ms)", "parallel(ms)", "speedup");
  for (auto [m, kk, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{64, 64, 64},
                          {128, 128, 128},
                          {256, 256, 256},
                          {16, 64, 256},
                          {512, 64, 512}}) {
    std::vector<double> a(m * kk), b(kk * n), c(m * n);
    for (auto& v : a) v = rng.uniform(-1, 1);
    for (auto& v : b) v = rng.uniform(-1, 1);
    double ts = time_loop(repeats, [&] { k::matmul_serial(a.data(), b.data(), c.data(), m, kk, n); });
    double tp =
        time_loop(repeats, [&] { k::matmul_parallel(a.data(), b.data(), c.data(), m, kk, n); });
    char label[64];
    std::snprintf(label, sizeof(label), "matmul %zux%zux%zu", m, kk, n);
    std::printf("%-34s %12.3f %12.3f %7.2fx\n", label, ts * 1e3, tp * 1e3, ts / tp);
  }
}

void bench_map(int repeats) {
  Rng rng(2);
  for (std::size_t n : {std::size_t{1} << 16, std::size_t{1} << 20}) {
    std::vector<double> x(n), y(n);
    for (auto& v : x) v = rng.uniform(-1, 1);
    auto f = [](double v) { return v / (1.0 + v * v); };
    double ts = time_loop(repeats, [&] { k::map_serial(x.data(), y.data(), n, f); });
    double tp = time_loop(repeats, [&] { k::map_parallel(x.data(), y.data(), n, f); });
    char label[64];
    std::snprintf(label, sizeof(label), "map n=%zu", n);
    std::printf("%-34s %12.3f %12.3f %7.2fx\n", label, ts * 1e3, tp * 1e3, ts / tp);
  }
}

// Batch evaluation: forward passes over episodes with a shared parameter
// snapshot, the loop the evaluator parallelizes.
void bench_batch_forward(int repeats) {
  std::vector<timeline::ModalitySchema> schema{
      {"a", {"f0", "f1", "f2"}, 60.0, 30}, {"b", {"f0"}, 120.0, 15}};
  model::ModelDims dims;
  auto params = model::init_late_fusion(schema, dims, 7);
  auto vars = model::bind(params, nullptr);

  Rng rng(3);
  std::vector<timeline::Episode> episodes(64);
  for (auto& e : episodes) {
    e.participant_id = "bench";
    e.t_end = 1;
    for (const auto& s : schema) {
      Tensor w{Shape{s.window_steps, s.feature_count() + 1}};
      for (std::size_t i = 0; i < w.numel(); ++i) w[i] = rng.normal();
      e.windows.emplace(s.modality_id, std::move(w));
    }
  }

  auto forward_all_serial = [&] {
    double acc = 0;
    for (const auto& e : episodes)
      acc += model::forward_late_fusion(e, vars, schema, dims).probs.value()[0];
    return acc;
  };
  auto forward_all_parallel = [&] {
    double acc = 0;
#ifdef _OPENMP
#pragma omp parallel for reduction(+ : acc) schedule(dynamic, 4)
#endif
    for (long long i = 0; i < static_cast<long long>(episodes.size()); ++i)
      acc += model::forward_late_fusion(episodes[static_cast<std::size_t>(i)], vars, schema, dims)
                 .probs.value()[0];
    return acc;
  };
  double ts = time_loop(repeats, forward_all_serial);
  double tp = time_loop(repeats, forward_all_parallel);
  std::printf("%-34s %12.3f %12.3f %7.2fx\n", "batch forward (64 episodes)", ts * 1e3, tp * 1e3,
              ts / tp);
}

}  // namespace

int main(int argc, char** argv) {
  const int repeats = argc > 1 ? std::atoi(argv[1]) : 5;
  std::printf("threads: %d\n", k::max_threads());
  bench_matmul(repeats);
  bench_map(repeats);
  bench_batch_forward(repeats);
  return 0;
}
