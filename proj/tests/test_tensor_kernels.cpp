#include <doctest.h>

#include <omp.h>

#include "rrid/kernels.hpp"
#include "rrid/rng.hpp"
#include "rrid/tensor.hpp"

using namespace rrid;

namespace {

std::vector<float> random_vec(Rng& rng, std::size_t n) {
  std::vector<float> v(n);
  for (auto& x : v) x = static_cast<float>(rng.normal());
  return v;
}

}  // namespace

TEST_CASE("tensor construction checks the data length") {
  CHECK_THROWS_AS(Tensor({2, 3}, std::vector<float>(5)), DimensionError);
  const Tensor m = Tensor::matrix({{1, 2, 3}, {4, 5, 6}});
  CHECK(m.shape() == Shape{2, 3});
  CHECK(m.at(1, 2) == 6.0f);
  CHECK(shape_str(m.shape()) == "[2x3]");
  CHECK_THROWS_AS(m.reshaped({4, 2}), DimensionError);
  CHECK(m.reshaped({3, 2}).at(2, 1) == 6.0f);
}

TEST_CASE("rng is reproducible and below() stays in range") {
  Rng a(42), b(42);
  for (int i = 0; i < 100; ++i) CHECK(a.next_u64() == b.next_u64());
  CHECK(a.digest() == b.digest());
  Rng c(3);
  for (int i = 0; i < 1000; ++i) CHECK(c.below(7) < 7u);
  std::vector<int> v{0, 1, 2, 3, 4, 5};
  c.shuffle(v);
  std::sort(v.begin(), v.end());
  CHECK(v == std::vector<int>{0, 1, 2, 3, 4, 5});
}

TEST_CASE("serial and OpenMP kernels agree bit for bit") {
  omp_set_num_threads(4);
  Rng rng(11);
  const std::size_t rows = 37, in = 129, out = 65;
  const auto x = random_vec(rng, rows * in), w = random_vec(rng, in * out),
             b = random_vec(rng, out), g = random_vec(rng, rows * out);

  std::vector<float> ys(rows * out), yp(rows * out);
  kernels::serial::affine<float>(x, w, b, ys, rows, in, out);
  kernels::omp::affine<float>(x, w, b, yp, rows, in, out);
  CHECK(ys == yp);

  std::vector<float> gxs(rows * in, 1.0f), gxp(rows * in, 1.0f);
  kernels::serial::affine_grad_input<float>(g, w, gxs, rows, in, out);
  kernels::omp::affine_grad_input<float>(g, w, gxp, rows, in, out);
  CHECK(gxs == gxp);

  std::vector<float> gws(in * out, 0.5f), gwp(in * out, 0.5f);
  kernels::serial::affine_grad_weight<float>(x, g, gws, rows, in, out);
  kernels::omp::affine_grad_weight<float>(x, g, gwp, rows, in, out);
  CHECK(gws == gwp);

  const std::size_t outer = 9, len = 13, inner = 257;
  const auto r = random_vec(rng, outer * len * inner);
  std::vector<float> ms(outer * inner), mp(outer * inner), as(outer * inner), ap(outer * inner);
  std::vector<std::uint32_t> is(outer * inner), ip(outer * inner);
  kernels::serial::reduce_max<float>(r, ms, is, outer, len, inner);
  kernels::omp::reduce_max<float>(r, mp, ip, outer, len, inner);
  CHECK(ms == mp);
  CHECK(is == ip);
  kernels::serial::reduce_mean<float>(r, as, outer, len, inner);
  kernels::omp::reduce_mean<float>(r, ap, outer, len, inner);
  CHECK(as == ap);

  const auto q = random_vec(rng, 23 * 40), gal = random_vec(rng, 71 * 40);
  std::vector<double> ds(23 * 71), dp(23 * 71);
  kernels::serial::euclidean_distances<float>(q, gal, ds, 23, 71, 40);
  kernels::omp::euclidean_distances<float>(q, gal, dp, 23, 71, 40);
  CHECK(ds == dp);
}

TEST_CASE("affine matches the definition") {
  const std::vector<float> x{1, 2}, w{1, 0, 3, 0, 1, -1}, b{0.5f, 0, 1};
  std::vector<float> y(3);
  kernels::affine<float>(x, w, b, y, 1, 2, 3);
  CHECK(y == std::vector<float>{1.5f, 2.0f, 2.0f});
}

TEST_CASE("reduce_max ties go to the lowest index") {
  const std::vector<float> x{2, 5, 5, 1};
  std::vector<float> out(1);
  std::vector<std::uint32_t> arg(1);
  kernels::reduce_max<float>(x, out, arg, 1, 4, 1);
  CHECK(out[0] == 5.0f);
  CHECK(arg[0] == 1u);
}

TEST_CASE("reduce_mean of a constant slice is exact") {
  Rng rng(5);
  for (int t = 0; t < 200; ++t) {
    const float v = static_cast<float>(rng.normal() * 1e3);
    const std::size_t len = 1 + rng.below(40);
    const std::vector<float> x(len, v);
    std::vector<float> out(1);
    kernels::reduce_mean<float>(x, out, 1, len, 1);
    CHECK(out[0] == v);
  }
}

TEST_CASE("euclidean distance 3-4-5") {
  const std::vector<float> q{0, 0}, g{3, 4, 0, 0};
  std::vector<double> d(2);
  kernels::euclidean_distances<float>(q, g, d, 1, 2, 2);
  CHECK(d[0] == 5.0);
  CHECK(d[1] == 0.0);
}

TEST_CASE("reductions match a naive strided loop") {
  Rng rng(12);
  const std::size_t outer = 3, len = 7, inner = 300;
  const auto x = random_vec(rng, outer * len * inner);
  std::vector<float> mx(outer * inner), mean(outer * inner);
  std::vector<std::uint32_t> arg(outer * inner);
  kernels::serial::reduce_max<float>(x, mx, arg, outer, len, inner);
  kernels::serial::reduce_mean<float>(x, mean, outer, len, inner);
  for (std::size_t a = 0; a < outer; ++a) {
    for (std::size_t b = 0; b < inner; ++b) {
      float best = x[a * len * inner + b];
      std::uint32_t best_r = 0;
      double sum = 0;
      for (std::size_t r = 0; r < len; ++r) {
        const float v = x[(a * len + r) * inner + b];
        sum += v;
        if (v > best) best = v, best_r = static_cast<std::uint32_t>(r);
      }
      CHECK(mx[a * inner + b] == best);
      CHECK(arg[a * inner + b] == best_r);
      CHECK(std::abs(mean[a * inner + b] - sum / len) < 1e-5);
    }
  }
}
