#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstring>
#include <vector>

#include "wearfuse/kernels.hpp"
#include "wearfuse/rng.hpp"

using namespace wearfuse;
namespace k = wearfuse::kernels;

namespace {

std::vector<double> random_block(Rng& rng, std::size_t n) {
  std::vector<double> v(n);
  for (auto& x : v) x = rng.uniform(-2.0, 2.0);
  return v;
}

bool bit_equal(const std::vector<double>& a, const std::vector<double>& b) {
  return a.size() == b.size() &&
         std::memcmp(a.data(), b.data(), a.size() * sizeof(double)) == 0;
}

}  // namespace

TEST_CASE("matmul hand cases") {
  // identity * B = B
  std::vector<double> eye{1, 0, 0, 1};
  std::vector<double> b{5, 6, 7, 8};
  std::vector<double> c(4);
  k::matmul_serial(eye.data(), b.data(), c.data(), 2, 2, 2);
  CHECK(c == b);

  // [[1,2],[3,4]] * [[5],[6]] = [[17],[39]]
  std::vector<double> a{1, 2, 3, 4};
  std::vector<double> b2{5, 6};
  std::vector<double> c2(2);
  k::matmul_serial(a.data(), b2.data(), c2.data(), 2, 2, 1);
  CHECK(c2[0] == 17.0);
  CHECK(c2[1] == 39.0);

  // zero * B = zero
  std::vector<double> z{0, 0, 0, 0};
  k::matmul_serial(z.data(), b.data(), c.data(), 2, 2, 2);
  for (double v : c) CHECK(v == 0.0);
}

TEST_CASE("matmul transpose flags against plain layout") {
  Rng rng(7);
  const std::size_t m = 5, kk = 4, n = 3;
  auto a = random_block(rng, m * kk);
  auto b = random_block(rng, kk * n);

  // Store A transposed ([k x m]) and B transposed ([n x k]); results must
  // match the plain product exactly.
  std::vector<double> at(kk * m), bt(n * kk);
  for (std::size_t i = 0; i < m; ++i)
    for (std::size_t j = 0; j < kk; ++j) at[j * m + i] = a[i * kk + j];
  for (std::size_t i = 0; i < kk; ++i)
    for (std::size_t j = 0; j < n; ++j) bt[j * kk + i] = b[i * n + j];

  std::vector<double> c0(m * n), c1(m * n), c2(m * n), c3(m * n);
  k::matmul_serial(a.data(), b.data(), c0.data(), m, kk, n);
  k::matmul_serial(at.data(), b.data(), c1.data(), m, kk, n, true, false);
  k::matmul_serial(a.data(), bt.data(), c2.data(), m, kk, n, false, true);
  k::matmul_serial(at.data(), bt.data(), c3.data(), m, kk, n, true, true);
  for (std::size_t i = 0; i < m * n; ++i) {
    CHECK(c1[i] == doctest::Approx(c0[i]).epsilon(1e-14));
    CHECK(c2[i] == doctest::Approx(c0[i]).epsilon(1e-14));
    CHECK(c3[i] == doctest::Approx(c0[i]).epsilon(1e-14));
  }
}

TEST_CASE("parallel kernels are bit-identical to the serial reference") {
  Rng rng(42);
  for (auto [m, kk, n] : {std::tuple<std::size_t, std::size_t, std::size_t>{1, 33, 256},
                          {16, 64, 256},
                          {60, 9, 32},
                          {128, 128, 128}}) {
    auto a = random_block(rng, m * kk);
    auto b = random_block(rng, kk * n);
    std::vector<double> cs(m * n), cp(m * n);
    k::matmul_serial(a.data(), b.data(), cs.data(), m, kk, n);
    k::matmul_parallel(a.data(), b.data(), cp.data(), m, kk, n);
    CHECK(bit_equal(cs, cp));

    k::matmul_serial(a.data(), b.data(), cs.data(), m, kk, n, false, false);
    k::matmul_parallel(a.data(), b.data(), cp.data(), m, kk, n, false, false);
    CHECK(bit_equal(cs, cp));
  }

  const std::size_t kk = 100, n = 300;
  auto x = random_block(rng, kk);
  auto b = random_block(rng, kk * n);
  auto g = random_block(rng, n);
  std::vector<double> ys(n), yp(n);
  k::vecmat_serial(x.data(), b.data(), ys.data(), kk, n);
  k::vecmat_parallel(x.data(), b.data(), yp.data(), kk, n);
  CHECK(bit_equal(ys, yp));

  std::vector<double> vs(kk), vp(kk);
  k::matvec_serial(b.data(), g.data(), vs.data(), kk, n);
  k::matvec_parallel(b.data(), g.data(), vp.data(), kk, n);
  CHECK(bit_equal(vs, vp));

  std::vector<double> os(kk * n), op(kk * n);
  k::outer_serial(x.data(), g.data(), os.data(), kk, n);
  k::outer_parallel(x.data(), g.data(), op.data(), kk, n);
  CHECK(bit_equal(os, op));

  auto mrows = random_block(rng, kk * n);
  std::vector<double> css(n), csp(n), rss(kk), rsp(kk);
  k::colsum_serial(mrows.data(), css.data(), kk, n);
  k::colsum_parallel(mrows.data(), csp.data(), kk, n);
  CHECK(bit_equal(css, csp));
  k::rowsum_serial(mrows.data(), rss.data(), kk, n);
  k::rowsum_parallel(mrows.data(), rsp.data(), kk, n);
  CHECK(bit_equal(rss, rsp));

  auto big = random_block(rng, 100000);
  std::vector<double> ms(big.size()), mp(big.size());
  k::map_serial(big.data(), ms.data(), big.size(), [](double v) { return v * v + 1.0; });
  k::map_parallel(big.data(), mp.data(), big.size(), [](double v) { return v * v + 1.0; });
  CHECK(bit_equal(ms, mp));

  auto big2 = random_block(rng, 100000);
  std::vector<double> zs(big.size()), zp(big.size());
  k::zip_serial(big.data(), big2.data(), zs.data(), big.size(),
                [](double p, double q) { return p * q - p; });
  k::zip_parallel(big.data(), big2.data(), zp.data(), big.size(),
                  [](double p, double q) { return p * q - p; });
  CHECK(bit_equal(zs, zp));
}

TEST_CASE("dispatcher matches serial on both sides of the grain threshold") {
  Rng rng(3);
  for (std::size_t n : {std::size_t{8}, std::size_t{200000}}) {
    auto x = random_block(rng, n);
    std::vector<double> ys(n), yd(n);
    k::map_serial(x.data(), ys.data(), n, [](double v) { return 3.0 * v; });
    k::map(x.data(), yd.data(), n, [](double v) { return 3.0 * v; });
    CHECK(bit_equal(ys, yd));
  }
}

TEST_CASE("colsum and rowsum hand case") {
  // [[1,2],[3,4]]: column sums [4,6], row sums [3,7]
  std::vector<double> x{1, 2, 3, 4};
  std::vector<double> cs(2), rs(2);
  k::colsum_serial(x.data(), cs.data(), 2, 2);
  k::rowsum_serial(x.data(), rs.data(), 2, 2);
  CHECK(cs == std::vector<double>{4, 6});
  CHECK(rs == std::vector<double>{3, 7});
  CHECK(k::sum_serial(x.data(), 4) == 10.0);
}
