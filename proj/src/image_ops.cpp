#include "miassr/image_ops.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace miassr::img {

int64_t scaled_size(int64_t n, double f) { return static_cast<int64_t>(std::floor(n * f)); }

namespace {

double cubic_w(double x) {
  const double a = -0.5;
  x = std::abs(x);
  if (x <= 1.0) return ((a + 2.0) * x - (a + 3.0)) * x * x + 1.0;
  if (x < 2.0) return ((a * x - 5.0 * a) * x + 8.0 * a) * x - 4.0 * a;
  return 0.0;
}

struct TapTable {
  std::vector<int64_t> base;    // [out] clamped first tap index * 4 entries
  std::vector<double> w;        // [out * 4]
  std::vector<int64_t> tap;     // [out * 4] clamped source indices
};

TapTable make_taps(int64_t in, int64_t out) {
  TapTable t;
  t.w.resize(out * 4);
  t.tap.resize(out * 4);
  const double r = static_cast<double>(in) / static_cast<double>(out);
  for (int64_t o = 0; o < out; ++o) {
    const double s = (o + 0.5) * r - 0.5;
    const int64_t i0 = static_cast<int64_t>(std::floor(s));
    for (int64_t d = -1; d <= 2; ++d) {
      t.w[o * 4 + (d + 1)] = cubic_w(s - (i0 + d));
      t.tap[o * 4 + (d + 1)] = std::clamp(i0 + d, int64_t(0), in - 1);
    }
  }
  return t;
}

int64_t reflect101(int64_t v, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * (n - 1);
  v = std::abs(v) % period;
  return v < n ? v : period - v;
}

}  // namespace

Tensor bicubic_resize_to(const Tensor& img, int64_t oh, int64_t ow) {
  check(img.ndim() == 3, "bicubic_resize: want [C,H,W], got " + shape_str(img.shape()));
  const int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  check(H >= 1 && W >= 1, "bicubic_resize: empty input");
  check(oh >= 1 && ow >= 1, "bicubic_resize: output size would be empty");

  const TapTable tx = make_taps(W, ow);
  Tensor mid({C, H, ow});  // horizontal pass
  {
    const int64_t total = C * H * ow;
    const Scalar* src = img.data();
    Scalar* dst = mid.data();
#pragma omp parallel for schedule(static) if (total > 4096)
    for (int64_t t = 0; t < total; ++t) {
      const int64_t ch = t / ow;
      const int64_t o = t % ow;
      const Scalar* row = src + ch * W;
      double acc = 0.0;
      for (int d = 0; d < 4; ++d) acc += tx.w[o * 4 + d] * row[tx.tap[o * 4 + d]];
      dst[t] = static_cast<Scalar>(acc);
    }
  }

  const TapTable ty = make_taps(H, oh);
  Tensor out({C, oh, ow});
  {
    const int64_t total = C * oh * ow;
    const Scalar* src = mid.data();
    Scalar* dst = out.data();
#pragma omp parallel for schedule(static) if (total > 4096)
    for (int64_t t = 0; t < total; ++t) {
      const int64_t c = t / (oh * ow);
      const int64_t o = (t / ow) % oh;
      const int64_t x = t % ow;
      double acc = 0.0;
      for (int d = 0; d < 4; ++d) acc += ty.w[o * 4 + d] * src[(c * H + ty.tap[o * 4 + d]) * ow + x];
      dst[t] = static_cast<Scalar>(acc);
    }
  }
  return out;
}

Tensor bicubic_resize(const Tensor& img, double factor) {
  check(factor > 0.0, "bicubic_resize: factor must be positive");
  const int64_t oh = scaled_size(img.dim(1), factor);
  const int64_t ow = scaled_size(img.dim(2), factor);
  check(oh >= 1 && ow >= 1, "bicubic_resize: factor shrinks image to nothing");
  return bicubic_resize_to(img, oh, ow);
}

Tensor gaussian3(const Tensor& img, double sigma) {
  check(img.ndim() == 3, "gaussian3: want [C,H,W]");
  const int64_t C = img.dim(0), H = img.dim(1), W = img.dim(2);
  const double w1 = std::exp(-1.0 / (2.0 * sigma * sigma));
  const double norm = 1.0 + 2.0 * w1;
  const double k[3] = {w1 / norm, 1.0 / norm, w1 / norm};

  Tensor mid({C, H, W});
  const Scalar* src = img.data();
  Scalar* dst = mid.data();
#pragma omp parallel for schedule(static) if (C * H * W > 4096)
  for (int64_t t = 0; t < C * H * W; ++t) {
    const int64_t ch = t / W;
    const int64_t x = t % W;
    const Scalar* row = src + ch * W;
    double acc = 0.0;
    for (int64_t d = -1; d <= 1; ++d) acc += k[d + 1] * row[reflect101(x + d, W)];
    dst[t] = static_cast<Scalar>(acc);
  }

  Tensor out({C, H, W});
  const Scalar* src2 = mid.data();
  Scalar* dst2 = out.data();
#pragma omp parallel for schedule(static) if (C * H * W > 4096)
  for (int64_t t = 0; t < C * H * W; ++t) {
    const int64_t c = t / (H * W);
    const int64_t y = (t / W) % H;
    const int64_t x = t % W;
    double acc = 0.0;
    for (int64_t d = -1; d <= 1; ++d) acc += k[d + 1] * src2[(c * H + reflect101(y + d, H)) * W + x];
    dst2[t] = static_cast<Scalar>(acc);
  }
  return out;
}

void clamp01(Tensor& t) {
  Scalar* p = t.data();
  for (int64_t i = 0; i < t.numel(); ++i) p[i] = std::clamp(p[i], Scalar(0), Scalar(1));
}

Tensor degrade(const Tensor& hr, double s) {
  check(s > 1.0 && s <= 4.0, "degrade: scale must lie in (1, 4]");
  return degrade_to(hr, s, scaled_size(hr.dim(1), 1.0 / s), scaled_size(hr.dim(2), 1.0 / s));
}

Tensor degrade_to(const Tensor& hr, double s, int64_t lh, int64_t lw) {
  check(s > 1.0 && s <= 4.0, "degrade: scale must lie in (1, 4]");
  check(hr.ndim() == 3, "degrade: want [C,H,W]");
  check(lh >= 1 && lw >= 1 && lh <= hr.dim(1) && lw <= hr.dim(2), "degrade: bad LR target size");
  Tensor lr = bicubic_resize_to(gaussian3(hr, 0.5), lh, lw);
  clamp01(lr);
  return lr;
}

}  // namespace miassr::img
