#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <cmath>

#include "miassr/kernels.hpp"
#include "miassr/reference.hpp"
#include "miassr/rng.hpp"

using namespace miassr;

namespace {

Tensor random_tensor(Rng& rng, Shape shape, double lo = -1.0, double hi = 1.0) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform(lo, hi);
  return t;
}

}  // namespace

TEST_CASE("matmul agrees with the naive triple loop") {
  Rng rng(1);
  const int64_t sizes[][3] = {{1, 1, 1}, {3, 5, 2}, {17, 9, 23}, {64, 64, 64}, {200, 33, 7}};
  for (const auto& s : sizes) {
    const int64_t M = s[0], K = s[1], N = s[2];
    const Tensor a = random_tensor(rng, {M, K}), b = random_tensor(rng, {K, N});
    Tensor c1({M, N}), c2({M, N});
    kern::matmul(a.data(), b.data(), c1.data(), M, K, N);
    ref::matmul_naive(a.data(), b.data(), c2.data(), M, K, N);
    CHECK(max_abs_diff(c1, c2) < 1e-12);
  }
}

TEST_CASE("bmm batches independent matmuls") {
  Rng rng(2);
  const int64_t P = 4, M = 6, K = 5, N = 7;
  const Tensor a = random_tensor(rng, {P, M, K}), b = random_tensor(rng, {P, K, N});
  Tensor c({P, M, N});
  kern::bmm(a.data(), b.data(), c.data(), P, M, K, N);
  for (int64_t p = 0; p < P; ++p) {
    Tensor single({M, N});
    ref::matmul_naive(a.data() + p * M * K, b.data() + p * K * N, single.data(), M, K, N);
    for (int64_t i = 0; i < M * N; ++i) CHECK(c.data()[p * M * N + i] == doctest::Approx(single.data()[i]).epsilon(1e-12));
  }
}

TEST_CASE("im2col rows hold zero-padded patches") {
  Rng rng(3);
  const auto g = kern::ConvGeom::make(2, 3, 5, 4, 3, 3, 1, 1);
  const Tensor x = random_tensor(rng, {2, 3, 5, 4});
  Tensor cols({g.rows(), g.cols()});
  kern::im2col(x.data(), cols.data(), g);
  // spot check: direct patch extraction at a few output pixels
  for (int64_t n = 0; n < 2; ++n)
    for (int64_t oy = 0; oy < g.oh; oy += 2)
      for (int64_t ox = 0; ox < g.ow; ox += 2) {
        const int64_t row = (n * g.oh + oy) * g.ow + ox;
        for (int64_t c = 0; c < 3; ++c)
          for (int64_t ky = 0; ky < 3; ++ky)
            for (int64_t kx = 0; kx < 3; ++kx) {
              const int64_t iy = oy - 1 + ky, ix = ox - 1 + kx;
              const Scalar want = (iy >= 0 && iy < 5 && ix >= 0 && ix < 4) ? x.at4(n, c, iy, ix) : 0.0;
              CHECK(cols.at2(row, (c * 3 + ky) * 3 + kx) == want);
            }
      }
}

TEST_CASE("col2im is the adjoint of im2col") {
  // <im2col(x), c> == <x, col2im(c)> for random x, c
  Rng rng(4);
  for (int64_t stride : {1, 2}) {
    const auto g = kern::ConvGeom::make(2, 3, 7, 6, 3, 3, stride, 1);
    const Tensor x = random_tensor(rng, {g.N, g.C, g.H, g.W});
    const Tensor c = random_tensor(rng, {g.rows(), g.cols()});
    Tensor ax({g.rows(), g.cols()});
    kern::im2col(x.data(), ax.data(), g);
    Tensor aty(x.shape());
    kern::col2im(c.data(), aty.data(), g);
    Scalar lhs = 0, rhs = 0;
    for (int64_t i = 0; i < ax.numel(); ++i) lhs += ax.data()[i] * c.data()[i];
    for (int64_t i = 0; i < x.numel(); ++i) rhs += x.data()[i] * aty.data()[i];
    CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
  }
}

TEST_CASE("cols_to_image and image_to_cols invert each other") {
  Rng rng(5);
  const int64_t N = 2, K = 4, oh = 3, ow = 5;
  const Tensor y = random_tensor(rng, {N * oh * ow, K});
  Tensor img({N, K, oh, ow}), back({N * oh * ow, K});
  kern::cols_to_image(y.data(), img.data(), N, K, oh, ow);
  kern::image_to_cols(img.data(), back.data(), N, K, oh, ow);
  CHECK(max_abs_diff(y, back) == 0.0);
  // layout: row (n, oy, ox), column k lands at img[n, k, oy, ox]
  CHECK(img.at4(1, 2, 2, 4) == y.at2((1 * oh + 2) * ow + 4, 2));
}

TEST_CASE("gather_neigh / scatter_neigh are adjoint") {
  Rng rng(6);
  kern::NeighTable tbl;
  tbl.H = 6;
  tbl.W = 5;
  tbl.k = 3;
  tbl.P = 8;
  for (int64_t p = 0; p < tbl.P * tbl.k * tbl.k; ++p) tbl.idx.push_back(rng.below(tbl.H * tbl.W));
  const int64_t N = 2, C = 3;
  const Tensor x = random_tensor(rng, {N, C, tbl.H, tbl.W});
  const Tensor g = random_tensor(rng, {N, tbl.P, C * tbl.k * tbl.k});
  Tensor gx({N, tbl.P, C * tbl.k * tbl.k});
  kern::gather_neigh(x.data(), gx.data(), N, C, tbl);
  Tensor sg({N, C, tbl.H, tbl.W});
  kern::scatter_neigh(g.data(), sg.data(), N, C, tbl);
  Scalar lhs = 0, rhs = 0;
  for (int64_t i = 0; i < gx.numel(); ++i) lhs += gx.data()[i] * g.data()[i];
  for (int64_t i = 0; i < x.numel(); ++i) rhs += x.data()[i] * sg.data()[i];
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-10));
}

TEST_CASE("permute3 reorders axes") {
  Rng rng(7);
  const int64_t d[3] = {2, 3, 4};
  const Tensor x = random_tensor(rng, {2, 3, 4});
  Tensor y({3, 4, 2});
  const int p[3] = {1, 2, 0};
  kern::permute3(x.data(), y.data(), d, p);
  for (int64_t a = 0; a < 2; ++a)
    for (int64_t b = 0; b < 3; ++b)
      for (int64_t c = 0; c < 4; ++c) CHECK(y.at3(b, c, a) == x.at3(a, b, c));
}

TEST_CASE("reduce_sum matches serial accumulation exactly in deterministic mode") {
  Rng rng(8);
  const Tensor x = random_tensor(rng, {100001});
  Scalar serial = 0;
  for (int64_t i = 0; i < x.numel(); ++i) serial += x.data()[i];
  CHECK(kern::reduce_sum(x.data(), x.numel()) == serial);
}

TEST_CASE("maxpool2 picks window maxima and records argmax") {
  Rng rng(9);
  const int64_t N = 1, C = 2, H = 5, W = 6;  // odd height exercises the floor
  const Tensor x = random_tensor(rng, {N, C, H, W});
  const int64_t oh = H / 2, ow = W / 2;
  Tensor y({N, C, oh, ow});
  std::vector<int64_t> arg(N * C * oh * ow);
  kern::maxpool2(x.data(), y.data(), arg.data(), N, C, H, W);
  for (int64_t c = 0; c < C; ++c)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        Scalar best = -1e30;
        for (int64_t dy = 0; dy < 2; ++dy)
          for (int64_t dx = 0; dx < 2; ++dx) best = std::max(best, x.at4(0, c, 2 * oy + dy, 2 * ox + dx));
        CHECK(y.at4(0, c, oy, ox) == best);
        CHECK(x.data()[arg[(c * oh + oy) * ow + ox]] == best);
      }
}

TEST_CASE("deterministic mode is on unless explicitly disabled") {
  CHECK(kern::deterministic_mode());
}
