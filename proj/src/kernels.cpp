#include "miassr/kernels.hpp"

#include <algorithm>
#include <cstdlib>
#include <cstring>

namespace miassr::kern {

bool deterministic_mode() {
  static const bool det = [] {
    const char* v = std::getenv("MIASSR_DETERMINISTIC");
    return !(v && std::string(v) == "0");
  }();
  return det;
}

void matmul(const Scalar* a, const Scalar* b, Scalar* c, int64_t M, int64_t K, int64_t N) {
#pragma omp parallel for schedule(static) if (M * K * N > 16384)
  for (int64_t i = 0; i < M; ++i) {
    Scalar* crow = c + i * N;
    std::fill(crow, crow + N, Scalar(0));
    const Scalar* arow = a + i * K;
    for (int64_t k = 0; k < K; ++k) {
      const Scalar av = arow[k];
      const Scalar* brow = b + k * N;
      for (int64_t j = 0; j < N; ++j) crow[j] += av * brow[j];
    }
  }
}

void bmm(const Scalar* a, const Scalar* b, Scalar* c, int64_t P, int64_t M, int64_t K, int64_t N) {
#pragma omp parallel for schedule(static) if (P * M * K * N > 16384)
  for (int64_t p = 0; p < P; ++p) {
    const Scalar* ap = a + p * M * K;
    const Scalar* bp = b + p * K * N;
    Scalar* cp = c + p * M * N;
    for (int64_t i = 0; i < M; ++i) {
      Scalar* crow = cp + i * N;
      std::fill(crow, crow + N, Scalar(0));
      for (int64_t k = 0; k < K; ++k) {
        const Scalar av = ap[i * K + k];
        const Scalar* brow = bp + k * N;
        for (int64_t j = 0; j < N; ++j) crow[j] += av * brow[j];
      }
    }
  }
}

ConvGeom ConvGeom::make(int64_t N, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t stride,
                        int64_t pad) {
  check(stride >= 1, "conv: stride must be >= 1");
  check(pad >= 0, "conv: negative padding");
  ConvGeom g{N, C, H, W, kh, kw, stride, pad, 0, 0};
  g.oh = (H + 2 * pad - kh) / stride + 1;
  g.ow = (W + 2 * pad - kw) / stride + 1;
  check(g.oh >= 1 && g.ow >= 1, "conv: kernel larger than padded input");
  return g;
}

void im2col(const Scalar* x, Scalar* cols, const ConvGeom& g) {
  const int64_t rows = g.rows(), width = g.cols();
  const int64_t ohw = g.oh * g.ow;
#pragma omp parallel for schedule(static) if (rows * width > 8192)
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t n = r / ohw;
    const int64_t oy = (r % ohw) / g.ow;
    const int64_t ox = r % g.ow;
    Scalar* dst = cols + r * width;
    const Scalar* xn = x + n * g.C * g.H * g.W;
    int64_t q = 0;
    for (int64_t c = 0; c < g.C; ++c) {
      const Scalar* xc = xn + c * g.H * g.W;
      for (int64_t ky = 0; ky < g.kh; ++ky) {
        const int64_t iy = oy * g.stride - g.pad + ky;
        for (int64_t kx = 0; kx < g.kw; ++kx, ++q) {
          const int64_t ix = ox * g.stride - g.pad + kx;
          dst[q] = (iy >= 0 && iy < g.H && ix >= 0 && ix < g.W) ? xc[iy * g.W + ix] : Scalar(0);
        }
      }
    }
  }
}

void col2im(const Scalar* cols, Scalar* x, const ConvGeom& g) {
  const int64_t total = g.N * g.C * g.H * g.W;
  const int64_t width = g.cols();
#pragma omp parallel for schedule(static) if (total > 4096)
  for (int64_t t = 0; t < total; ++t) {
    const int64_t n = t / (g.C * g.H * g.W);
    const int64_t c = (t / (g.H * g.W)) % g.C;
    const int64_t y = (t / g.W) % g.H;
    const int64_t xx = t % g.W;
    Scalar acc = 0;
    for (int64_t ky = 0; ky < g.kh; ++ky) {
      const int64_t ty = y + g.pad - ky;
      if (ty < 0 || ty % g.stride != 0) continue;
      const int64_t oy = ty / g.stride;
      if (oy >= g.oh) continue;
      for (int64_t kx = 0; kx < g.kw; ++kx) {
        const int64_t tx = xx + g.pad - kx;
        if (tx < 0 || tx % g.stride != 0) continue;
        const int64_t ox = tx / g.stride;
        if (ox >= g.ow) continue;
        const int64_t r = (n * g.oh + oy) * g.ow + ox;
        acc += cols[r * width + (c * g.kh + ky) * g.kw + kx];
      }
    }
    x[t] = acc;
  }
}

void cols_to_image(const Scalar* y, Scalar* img, int64_t N, int64_t K, int64_t oh, int64_t ow) {
  const int64_t total = N * K * oh * ow;
  const int64_t ohw = oh * ow;
#pragma omp parallel for schedule(static) if (total > 8192)
  for (int64_t t = 0; t < total; ++t) {
    const int64_t n = t / (K * ohw);
    const int64_t k = (t / ohw) % K;
    const int64_t p = t % ohw;
    img[t] = y[(n * ohw + p) * K + k];
  }
}

void image_to_cols(const Scalar* img, Scalar* y, int64_t N, int64_t K, int64_t oh, int64_t ow) {
  const int64_t total = N * K * oh * ow;
  const int64_t ohw = oh * ow;
#pragma omp parallel for schedule(static) if (total > 8192)
  for (int64_t t = 0; t < total; ++t) {
    const int64_t n = t / (ohw * K);
    const int64_t p = (t / K) % ohw;
    const int64_t k = t % K;
    y[t] = img[(n * K + k) * ohw + p];
  }
}

void gather_neigh(const Scalar* x, Scalar* out, int64_t N, int64_t C, const NeighTable& tbl) {
  const int64_t kk = tbl.k * tbl.k;
  const int64_t rows = N * tbl.P;
#pragma omp parallel for schedule(static) if (rows * C * kk > 8192)
  for (int64_t r = 0; r < rows; ++r) {
    const int64_t n = r / tbl.P;
    const int64_t p = r % tbl.P;
    const int64_t* ids = tbl.idx.data() + p * kk;
    Scalar* dst = out + r * C * kk;
    const Scalar* xn = x + n * C * tbl.H * tbl.W;
    for (int64_t c = 0; c < C; ++c) {
      const Scalar* xc = xn + c * tbl.H * tbl.W;
      for (int64_t t = 0; t < kk; ++t) dst[c * kk + t] = xc[ids[t]];
    }
  }
}

void scatter_neigh(const Scalar* g, Scalar* x, int64_t N, int64_t C, const NeighTable& tbl) {
  // Different output pixels can hit the same source pixel, so parallelize over
  // (n, c) slices and keep the per-slice accumulation order fixed.
  const int64_t kk = tbl.k * tbl.k;
  const int64_t hw = tbl.H * tbl.W;
  std::memset(x, 0, sizeof(Scalar) * N * C * hw);
#pragma omp parallel for schedule(static) if (N * C > 1)
  for (int64_t nc = 0; nc < N * C; ++nc) {
    const int64_t n = nc / C;
    const int64_t c = nc % C;
    Scalar* xc = x + nc * hw;
    const Scalar* gn = g + n * tbl.P * C * kk;
    for (int64_t p = 0; p < tbl.P; ++p) {
      const int64_t* ids = tbl.idx.data() + p * kk;
      const Scalar* src = gn + p * C * kk + c * kk;
      for (int64_t t = 0; t < kk; ++t) xc[ids[t]] += src[t];
    }
  }
}

void permute3(const Scalar* in, Scalar* out, const int64_t d[3], const int p[3]) {
  // out has dims (d[p[0]], d[p[1]], d[p[2]]).
  const int64_t od0 = d[p[0]], od1 = d[p[1]], od2 = d[p[2]];
  int64_t istride[3] = {d[1] * d[2], d[2], 1};
  const int64_t s0 = istride[p[0]], s1 = istride[p[1]], s2 = istride[p[2]];
  const int64_t total = od0 * od1 * od2;
#pragma omp parallel for schedule(static) if (total > 8192)
  for (int64_t t = 0; t < total; ++t) {
    const int64_t i = t / (od1 * od2);
    const int64_t j = (t / od2) % od1;
    const int64_t k = t % od2;
    out[t] = in[i * s0 + j * s1 + k * s2];
  }
}

Scalar reduce_sum(const Scalar* x, int64_t n) {
  if (!deterministic_mode() && n > 65536) {
    Scalar s = 0;
#pragma omp parallel for schedule(static) reduction(+ : s)
    for (int64_t i = 0; i < n; ++i) s += x[i];
    return s;
  }
  Scalar s = 0;
  for (int64_t i = 0; i < n; ++i) s += x[i];
  return s;
}

void maxpool2(const Scalar* x, Scalar* y, int64_t* argmax, int64_t N, int64_t C, int64_t H, int64_t W) {
  const int64_t oh = H / 2, ow = W / 2;
  const int64_t total = N * C * oh * ow;
#pragma omp parallel for schedule(static) if (total > 8192)
  for (int64_t t = 0; t < total; ++t) {
    const int64_t nc = t / (oh * ow);
    const int64_t oy = (t / ow) % oh;
    const int64_t ox = t % ow;
    const Scalar* xc = x + nc * H * W;
    int64_t best = (2 * oy) * W + 2 * ox;
    Scalar bv = xc[best];
    for (int64_t dy = 0; dy < 2; ++dy)
      for (int64_t dx = 0; dx < 2; ++dx) {
        const int64_t i = (2 * oy + dy) * W + (2 * ox + dx);
        if (xc[i] > bv) {
          bv = xc[i];
          best = i;
        }
      }
    y[t] = bv;
    argmax[t] = nc * H * W + best;
  }
}

}  // namespace miassr::kern
