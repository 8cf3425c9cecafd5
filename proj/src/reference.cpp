#include "miassr/reference.hpp"

#include <algorithm>
#include <cmath>

namespace miassr::ref {

void matmul_naive(const Scalar* a, const Scalar* b, Scalar* c, int64_t M, int64_t K, int64_t N) {
  for (int64_t i = 0; i < M; ++i)
    for (int64_t j = 0; j < N; ++j) {
      Scalar s = 0;
      for (int64_t k = 0; k < K; ++k) s += a[i * K + k] * b[k * N + j];
      c[i * N + j] = s;
    }
}

void conv2d_naive(const Tensor& x, const Tensor& w, const Tensor* b, int64_t kh, int64_t kw, int64_t stride,
                  int64_t pad, Tensor& out) {
  const int64_t N = x.dim(0), C = x.dim(1), H = x.dim(2), W = x.dim(3);
  const int64_t K = w.dim(0);
  check(w.dim(1) == C * kh * kw, "conv2d_naive: weight width mismatch");
  const int64_t oh = (H + 2 * pad - kh) / stride + 1;
  const int64_t ow = (W + 2 * pad - kw) / stride + 1;
  out = Tensor({N, K, oh, ow});
  for (int64_t n = 0; n < N; ++n)
    for (int64_t k = 0; k < K; ++k)
      for (int64_t oy = 0; oy < oh; ++oy)
        for (int64_t ox = 0; ox < ow; ++ox) {
          Scalar s = b ? (*b)[k] : Scalar(0);
          for (int64_t c = 0; c < C; ++c)
            for (int64_t ky = 0; ky < kh; ++ky)
              for (int64_t kx = 0; kx < kw; ++kx) {
                const int64_t iy = oy * stride - pad + ky;
                const int64_t ix = ox * stride - pad + kx;
                if (iy < 0 || iy >= H || ix < 0 || ix >= W) continue;
                s += w.at2(k, (c * kh + ky) * kw + kx) * x.at4(n, c, iy, ix);
              }
          out.at4(n, k, oy, ox) = s;
        }
}

namespace {

// Cubic convolution weight, a = -0.5 (Catmull-Rom).
double cubic_w(double x) {
  const double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

int64_t clampi(int64_t v, int64_t lo, int64_t hi) { return std::max(lo, std::min(hi, v)); }

// Mirror without repeating the border sample: -1 -> 1, H -> H-2.
int64_t reflect101(int64_t v, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * (n - 1);
  v = std::abs(v) % period;
  return v < n ? v : period - v;
}

}  // namespace

Tensor bicubic_naive(const Tensor& img, int64_t oh, int64_t ow) {
  const int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  check(oh >= 1 && ow >= 1, "bicubic_naive: empty output");
  Tensor out({C, oh, ow});
  const double ry = static_cast<double>(H) / static_cast<double>(oh);
  const double rx = static_cast<double>(W) / static_cast<double>(ow);
  for (int64_t c = 0; c < C; ++c)
    for (int64_t oy = 0; oy < oh; ++oy)
      for (int64_t ox = 0; ox < ow; ++ox) {
        const double sy = (oy + 0.5) * ry - 0.5;
        const double sx = (ox + 0.5) * rx - 0.5;
        const int64_t iy0 = static_cast<int64_t>(std::floor(sy));
        const int64_t ix0 = static_cast<int64_t>(std::floor(sx));
        double acc = 0.0;
        for (int64_t dy = -1; dy <= 2; ++dy)
          for (int64_t dx = -1; dx <= 2; ++dx) {
            const double wgt = cubic_w(sy - (iy0 + dy)) * cubic_w(sx - (ix0 + dx));
            const int64_t yy = clampi(iy0 + dy, 0, H - 1);
            const int64_t xx = clampi(ix0 + dx, 0, W - 1);
            acc += wgt * img.at3(c, yy, xx);
          }
        out.at3(c, oy, ox) = static_cast<Scalar>(acc);
      }
  return out;
}

Tensor gaussian3_naive(const Tensor& img, double sigma) {
  const int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  double w1 = std::exp(-1.0 / (2.0 * sigma * sigma));
  double norm = 1.0 + 2.0 * w1;
  double k[3] = {w1 / norm, 1.0 / norm, w1 / norm};
  Tensor out({C, H, W});
  for (int64_t c = 0; c < C; ++c)
    for (int64_t y = 0; y < H; ++y)
      for (int64_t x = 0; x < W; ++x) {
        double acc = 0.0;
        for (int64_t dy = -1; dy <= 1; ++dy)
          for (int64_t dx = -1; dx <= 1; ++dx) {
            const int64_t yy = reflect101(y + dy, H);
            const int64_t xx = reflect101(x + dx, W);
            acc += k[dy + 1] * k[dx + 1] * img.at3(c, yy, xx);
          }
        out.at3(c, y, x) = static_cast<Scalar>(acc);
      }
  return out;
}

double ssim_naive(const Tensor& x, const Tensor& y, double L) {
  check(x.ndim() == 2 && x.same_shape(y), "ssim_naive: want matching [H,W] inputs");
  const int64_t H = x.dim(0), W = x.dim(1);
  const int64_t win = 11;
  check(H >= win && W >= win, "ssim_naive: image smaller than the 11x11 window");
  double g[11];
  double gsum = 0.0;
  for (int i = 0; i < 11; ++i) {
    g[i] = std::exp(-(i - 5.0) * (i - 5.0) / (2.0 * 1.5 * 1.5));
    gsum += g[i];
  }
  for (int i = 0; i < 11; ++i) g[i] /= gsum;
  const double c1 = (0.01 * L) * (0.01 * L);
  const double c2 = (0.03 * L) * (0.03 * L);
  double total = 0.0;
  int64_t count = 0;
  for (int64_t wy = 0; wy + win <= H; ++wy)
    for (int64_t wx = 0; wx + win <= W; ++wx) {
      double mx = 0, my = 0, mxx = 0, myy = 0, mxy = 0;
      for (int64_t i = 0; i < win; ++i)
        for (int64_t j = 0; j < win; ++j) {
          const double wgt = g[i] * g[j];
          const double a = x.at2(wy + i, wx + j);
          const double b = y.at2(wy + i, wx + j);
          mx += wgt * a;
          my += wgt * b;
          mxx += wgt * a * a;
          myy += wgt * b * b;
          mxy += wgt * a * b;
        }
      const double vx = mxx - mx * mx;
      const double vy = myy - my * my;
      const double cov = mxy - mx * my;
      const double val =
          ((2.0 * mx * my + c1) * (2.0 * cov + c2)) / ((mx * mx + my * my + c1) * (vx + vy + c2));
      total += val;
      ++count;
    }
  return total / count;
}

double mse_naive(const Tensor& a, const Tensor& b) {
  check(a.same_shape(b), "mse_naive: shape mismatch");
  double s = 0.0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    const double d = a[i] - b[i];
    s += d * d;
  }
  return s / a.numel();
}

}  // namespace miassr::ref
