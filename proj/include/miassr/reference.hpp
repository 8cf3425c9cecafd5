#pragma once

#include "miassr/tensor.hpp"

// Serial reference implementations. These are deliberately naive, direct-loop
// versions kept independent of the OpenMP kernel path: the tests use them as
// oracles and bench_kernels uses them as the baseline. Don't "optimize" them;
// their value is being obviously correct.

namespace miassr::ref {

// c[M,N] = a[M,K] * b[K,N], textbook triple loop
void matmul_naive(const Scalar* a, const Scalar* b, Scalar* c, int64_t M, int64_t K, int64_t N);

// Direct convolution, zero padding. x[N,C,H,W], w[K][C*kh*kw], b[K] (may be
// null), out[N,K,oh,ow] with oh = (H + 2p - kh)/stride + 1.
void conv2d_naive(const Tensor& x, const Tensor& w, const Tensor* b, int64_t kh, int64_t kw, int64_t stride,
                  int64_t pad, Tensor& out);

// Direct bicubic resampling of img[C,H,W] to [C,oh,ow]: per output pixel, a
// 4x4 weight sum with edge-clamped sampling. Half-pixel coordinate mapping.
Tensor bicubic_naive(const Tensor& img, int64_t oh, int64_t ow);

// Direct 3x3 Gaussian blur, sigma fixed by the caller, mirrored borders
// (reflection without edge repeat).
Tensor gaussian3_naive(const Tensor& img, double sigma);

// Mean SSIM over all fully-contained 11x11 windows, one explicit loop per
// window. x, y are [H,W] single-channel in [0, L].
double ssim_naive(const Tensor& x, const Tensor& y, double L);

double mse_naive(const Tensor& a, const Tensor& b);

}  // namespace miassr::ref
