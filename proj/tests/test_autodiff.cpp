#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>
#include <cstring>
#include <vector>

#include "wearfuse/autodiff.hpp"
#include "wearfuse/errors.hpp"
#include "wearfuse/rng.hpp"

using namespace wearfuse;
namespace ad = wearfuse::ad;
using ad::Var;

namespace {

// Independent finite-difference oracle for single-op checks. Stays clear of
// the library's grad_check so the two can cross-validate each other.
double fd_slope(const std::function<double(double)>& f, double x, double h = 1e-6) {
  return (f(x + h) - f(x - h)) / (2.0 * h);
}

double rel_err(double a, double b) {
  return std::abs(a - b) / std::max({std::abs(a), std::abs(b), 1e-8});
}

}  // namespace

TEST_CASE("matmul examples and backward") {
  ad::Tape tape;
  auto a = tape.leaf(Tensor::mat(2, 2, {1, 2, 3, 4}));
  auto b = tape.leaf(Tensor::mat(2, 1, {5, 6}));
  auto c = ad::matmul(a, b);
  CHECK(c.value()[0] == 17.0);
  CHECK(c.value()[1] == 39.0);

  auto loss = ad::sum(c);
  auto grads = tape.backward(loss);
  // d(sum(A*B))/dA = ones * B^T -> each row [5, 6]
  const Tensor& da = grads.at(a);
  CHECK(da[0] == 5.0);
  CHECK(da[1] == 6.0);
  CHECK(da[2] == 5.0);
  CHECK(da[3] == 6.0);
  // d/dB = A^T * ones -> [4, 6]
  const Tensor& db = grads.at(b);
  CHECK(db[0] == 4.0);
  CHECK(db[1] == 6.0);
}

TEST_CASE("matmul shape errors name both shapes") {
  ad::Tape tape;
  auto a = tape.leaf(Tensor::mat(2, 3, std::vector<double>(6, 1.0)));
  auto b = tape.leaf(Tensor::mat(2, 2, std::vector<double>(4, 1.0)));
  CHECK_THROWS_WITH_AS(ad::matmul(a, b),
                       doctest::Contains("[2x3]"), ShapeError);
}

TEST_CASE("unary examples") {
  CHECK(ad::tanh(Var{Tensor::scalar(0.0)}).value()[0] == 0.0);
  CHECK(ad::sigmoid(Var{Tensor::scalar(0.0)}).value()[0] == 0.5);
  CHECK(ad::exp(Var{Tensor::scalar(1.0)}).value()[0] == doctest::Approx(2.718281828459045).epsilon(1e-15));
  CHECK(ad::apply_unary(Var{Tensor::scalar(2.0)}, ad::UnaryFn::negate).value()[0] == -2.0);
}

TEST_CASE("log rejects non-positive input and names the index") {
  Var x{Tensor::vec({1.0, 2.0, -3.0})};
  CHECK_THROWS_WITH_AS(ad::log(x), doctest::Contains("index 2"), DomainError);
}

TEST_CASE("softmax_row examples") {
  auto same = ad::softmax_row(Var{Tensor::vec({4.2, 4.2})});
  CHECK(same.value()[0] == doctest::Approx(0.5).epsilon(1e-15));
  CHECK(same.value()[1] == doctest::Approx(0.5).epsilon(1e-15));

  auto ln3 = ad::softmax_row(Var{Tensor::vec({std::log(3.0), 0.0})});
  CHECK(ln3.value()[0] == doctest::Approx(0.75).epsilon(1e-14));
  CHECK(ln3.value()[1] == doctest::Approx(0.25).epsilon(1e-14));

  auto one = ad::softmax_row(Var{Tensor::vec({-7.0})});
  CHECK(one.value()[0] == 1.0);
}

TEST_CASE("softmax_row properties over random rows") {
  Rng rng(11);
  for (int it = 0; it < 200; ++it) {
    std::size_t n = 1 + rng.below(9);
    std::vector<double> row(n);
    for (auto& v : row) v = rng.uniform(-50.0, 50.0);
    auto y = ad::softmax_row(Var{Tensor::vec(row)});
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
      CHECK(y.value()[i] > 0.0);
      CHECK(y.value()[i] <= 1.0);
      total += y.value()[i];
    }
    CHECK(std::abs(total - 1.0) < 1e-12);
  }
}

TEST_CASE("reduce examples") {
  CHECK(ad::mean(Var{Tensor::vec({1, 2, 3})}).value()[0] == 2.0);
  CHECK(ad::sum(Var{Tensor::zeros(Shape{3, 2})}).value()[0] == 0.0);
  auto s0 = ad::reduce_axis(Var{Tensor::mat(2, 2, {1, 2, 3, 4})}, ad::Reduce::sum, 0);
  CHECK(s0.value()[0] == 4.0);
  CHECK(s0.value()[1] == 6.0);
  CHECK_THROWS_AS(ad::reduce_axis(Var{Tensor::mat(2, 2, {1, 2, 3, 4})}, ad::Reduce::sum, 2),
                  ShapeError);
}

TEST_CASE("backward basics") {
  // loss = sum(W) -> dW all ones
  ad::Tape tape;
  auto w = tape.leaf(Tensor::mat(2, 3, {1, 2, 3, 4, 5, 6}));
  auto grads = tape.backward(ad::sum(w));
  for (std::size_t i = 0; i < 6; ++i) CHECK(grads.at(w)[i] == 1.0);

  // loss = x^2 at x = 3 -> dx = 6
  ad::Tape tape2;
  auto x = tape2.leaf(Tensor::scalar(3.0));
  auto grads2 = tape2.backward(ad::mul(x, x));
  CHECK(grads2.at(x)[0] == 6.0);

  // non-scalar loss rejected
  ad::Tape tape3;
  auto v = tape3.leaf(Tensor::vec({1, 2}));
  CHECK_THROWS_AS(tape3.backward(v), ShapeError);
}

TEST_CASE("fan-out gradient adds across consumers (diamond)") {
  ad::Tape tape;
  auto x = tape.leaf(Tensor::scalar(1.5));
  auto u = ad::scale(x, 2.0);
  auto v = ad::scale(x, 3.0);
  auto w = ad::add(u, v);
  auto grads = tape.backward(w);
  CHECK(grads.at(x)[0] == 5.0);
}

TEST_CASE("unreachable leaves get zero gradients") {
  ad::Tape tape;
  auto x = tape.leaf(Tensor::scalar(2.0));
  auto orphan = tape.leaf(Tensor::vec({1, 2, 3}));
  auto grads = tape.backward(ad::mul(x, x));
  for (std::size_t i = 0; i < 3; ++i) CHECK(grads.at(orphan)[i] == 0.0);
}

TEST_CASE("forward evaluation is deterministic") {
  Rng rng(5);
  std::vector<double> a(32 * 64), b(64 * 16);
  for (auto& v : a) v = rng.uniform(-1, 1);
  for (auto& v : b) v = rng.uniform(-1, 1);
  auto run = [&] {
    auto c = ad::matmul(Var{Tensor::mat(32, 64, a)}, Var{Tensor::mat(64, 16, b)});
    auto y = ad::tanh(c);
    return y.value().vec_data();
  };
  auto r1 = run();
  auto r2 = run();
  CHECK(std::memcmp(r1.data(), r2.data(), r1.size() * sizeof(double)) == 0);
}

TEST_CASE("per-op gradients agree with the finite-difference oracle") {
  Rng rng(17);
  // Scalar chains through each op, derivative at a random point.
  auto check_unary = [&](auto make, double x0) {
    ad::Tape tape;
    auto x = tape.leaf(Tensor::scalar(x0));
    auto y = make(x);
    auto grads = tape.backward(y);
    double analytic = grads.at(x)[0];
    double numeric = fd_slope(
        [&](double xx) { return make(Var{Tensor::scalar(xx)}).value()[0]; }, x0);
    CHECK(rel_err(analytic, numeric) < 1e-6);
  };
  check_unary([](const Var& v) { return ad::tanh(v); }, 0.37);
  check_unary([](const Var& v) { return ad::sigmoid(v); }, -1.2);
  check_unary([](const Var& v) { return ad::exp(v); }, 0.5);
  check_unary([](const Var& v) { return ad::log(v); }, 1.7);
  check_unary([](const Var& v) { return ad::sqrt(v); }, 2.9);
  check_unary([](const Var& v) { return ad::scale(v, -2.5); }, 0.8);
  check_unary([](const Var& v) { return ad::shift(v, 3.0); }, 0.8);

  // softmax + index, logsumexp, segment/concat/row composite
  for (int it = 0; it < 20; ++it) {
    std::vector<double> vals(4);
    for (auto& v : vals) v = rng.uniform(-2, 2);
    std::size_t pick = rng.below(4);

    ad::Tape tape;
    auto x = tape.leaf(Tensor::vec(vals));
    auto y = ad::index(ad::softmax_row(x), pick);
    auto grads = tape.backward(y);
    for (std::size_t j = 0; j < 4; ++j) {
      double numeric = fd_slope(
          [&](double xx) {
            auto vv = vals;
            vv[j] = xx;
            return ad::index(ad::softmax_row(Var{Tensor::vec(vv)}), pick).value()[0];
          },
          vals[j]);
      CHECK(rel_err(grads.at(x)[j], numeric) < 1e-5);
    }

    ad::Tape tape2;
    auto x2 = tape2.leaf(Tensor::vec(vals));
    auto lse = ad::logsumexp_row(x2);
    auto grads2 = tape2.backward(lse);
    for (std::size_t j = 0; j < 4; ++j) {
      double numeric = fd_slope(
          [&](double xx) {
            auto vv = vals;
            vv[j] = xx;
            return ad::logsumexp_row(Var{Tensor::vec(vv)}).value()[0];
          },
          vals[j]);
      CHECK(rel_err(grads2.at(x2)[j], numeric) < 1e-5);
    }
  }

  // structural composite: row/segment/concat/smul/div/add_row_bias
  {
    std::vector<double> mvals(6), bias(3), svals(1);
    for (auto& v : mvals) v = rng.uniform(-1, 1);
    for (auto& v : bias) v = rng.uniform(-1, 1);
    svals[0] = rng.uniform(0.5, 1.5);

    auto forward = [&](const std::vector<double>& mv, const std::vector<double>& bv,
                       double sv) {
      Var m{Tensor::mat(2, 3, mv)};
      Var b{Tensor::vec(bv)};
      Var s{Tensor::scalar(sv)};
      auto biased = ad::add_row_bias(m, b);
      auto r0 = ad::row(biased, 0);
      auto r1 = ad::row(biased, 1);
      auto joined = ad::concat(std::vector<Var>{r0, ad::segment(r1, 1, 2)});
      auto scaled = ad::smul(s, joined);
      auto q = ad::div(ad::sum(scaled), ad::shift(ad::mul(s, s), 1.0));
      return q;
    };

    ad::Tape tape;
    auto m = tape.leaf(Tensor::mat(2, 3, mvals));
    auto b = tape.leaf(Tensor::vec(bias));
    auto s = tape.leaf(Tensor::scalar(svals[0]));
    // Same composite, but on tracked leaves.
    auto biased = ad::add_row_bias(m, b);
    auto joined = ad::concat(std::vector<Var>{ad::row(biased, 0), ad::segment(ad::row(biased, 1), 1, 2)});
    auto scaled = ad::smul(s, joined);
    auto loss = ad::div(ad::sum(scaled), ad::shift(ad::mul(s, s), 1.0));
    auto grads = tape.backward(loss);

    for (std::size_t j = 0; j < 6; ++j) {
      double numeric = fd_slope(
          [&](double xx) {
            auto vv = mvals;
            vv[j] = xx;
            return forward(vv, bias, svals[0]).value()[0];
          },
          mvals[j]);
      CHECK(rel_err(grads.at(m)[j], numeric) < 1e-5);
    }
    for (std::size_t j = 0; j < 3; ++j) {
      double numeric = fd_slope(
          [&](double xx) {
            auto vv = bias;
            vv[j] = xx;
            return forward(mvals, vv, svals[0]).value()[0];
          },
          bias[j]);
      CHECK(rel_err(grads.at(b)[j], numeric) < 1e-5);
    }
    double numeric = fd_slope([&](double xx) { return forward(mvals, bias, xx).value()[0]; },
                              svals[0]);
    CHECK(rel_err(grads.at(s)[0], numeric) < 1e-5);
  }
}

TEST_CASE("grad_check: quadratic toy function") {
  // f(w) = sum(w * w); analytic gradient 2w, so reverse mode matches central
  // differences essentially exactly.
  std::vector<std::pair<std::string, Tensor>> params{
      {"w", Tensor::vec({0.3, -1.2, 2.0})}};
  auto report = ad::grad_check(
      [](std::span<const Var> p) { return ad::sum(ad::mul(p[0], p[0])); }, params, 1e-5, 1e-4);
  REQUIRE(report.entries.size() == 1);
  CHECK(report.entries[0].max_rel_err < 1e-8);
  CHECK(report.all_pass());
}

TEST_CASE("grad_check: constant function has exactly zero gradients") {
  std::vector<std::pair<std::string, Tensor>> params{
      {"w", Tensor::vec({1.0, 2.0})}};
  ad::Tape tape;
  auto leaf = tape.leaf(Tensor::vec({1.0, 2.0}));
  auto grads = tape.backward(tape.leaf(Tensor::scalar(5.0)));
  CHECK(grads.at(leaf)[0] == 0.0);
  CHECK(grads.at(leaf)[1] == 0.0);

  auto report = ad::grad_check(
      [](std::span<const Var>) { return Var{Tensor::scalar(4.0)}; }, params, 1e-5, 1e-4);
  CHECK(report.all_pass());
}

TEST_CASE("grad_check flags a corrupted backward rule") {
  // Custom node whose pull is wrong by 1%: the report must fail it.
  auto bad_square = [](const Var& x) -> Var {
    Tensor out = Tensor::scalar(x.value()[0] * x.value()[0]);
    if (!x.tracked()) return Var{std::move(out)};
    const double xv = x.value()[0];
    const int xn = x.node();
    return x.tape()->make(std::move(out), [xn, xv](const Tensor& g, ad::Accum& sink) {
      sink.add(xn, Tensor::scalar(g[0] * 2.0 * xv * 1.01));
    });
  };
  std::vector<std::pair<std::string, Tensor>> params{{"x", Tensor::scalar(1.3)}};
  auto report = ad::grad_check(
      [&](std::span<const Var> p) { return bad_square(p[0]); }, params, 1e-5, 1e-4);
  CHECK(!report.all_pass());
}

TEST_CASE("mixing vars from two tapes is rejected") {
  ad::Tape t1, t2;
  auto a = t1.leaf(Tensor::scalar(1.0));
  auto b = t2.leaf(Tensor::scalar(2.0));
  CHECK_THROWS_AS(ad::add(a, b), Error);
}
