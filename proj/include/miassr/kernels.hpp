#pragma once

#include <cstdint>
#include <vector>

#include "miassr/tensor.hpp"

// OpenMP-parallel compute kernels. Every kernel here parallelizes over output
// elements only, with a fixed serial accumulation order per element, so results
// are bit-identical for any thread count. The one exception is reduce_sum,
// which switches to an OpenMP reduction (combination order unspecified) only
// when determinism is explicitly turned off via MIASSR_DETERMINISTIC=0.
//
// Serial twins of the interesting kernels live in miassr::ref (reference.hpp)
// and serve as oracles in the tests and as the baseline in bench_kernels.

namespace miassr::kern {

// True unless the environment variable MIASSR_DETERMINISTIC is set to "0".
bool deterministic_mode();

// c[M,N] = a[M,K] * b[K,N]
void matmul(const Scalar* a, const Scalar* b, Scalar* c, int64_t M, int64_t K, int64_t N);

// c[P,M,N] = a[P,M,K] * b[P,K,N], batched over P
void bmm(const Scalar* a, const Scalar* b, Scalar* c, int64_t P, int64_t M, int64_t K, int64_t N);

struct ConvGeom {
  int64_t N, C, H, W;      // input image stack
  int64_t kh, kw;          // kernel size
  int64_t stride, pad;     // zero padding on all sides
  int64_t oh, ow;          // output spatial size

  static ConvGeom make(int64_t N, int64_t C, int64_t H, int64_t W, int64_t kh, int64_t kw, int64_t stride, int64_t pad);
  int64_t rows() const { return N * oh * ow; }
  int64_t cols() const { return C * kh * kw; }
};

// cols[N*oh*ow, C*kh*kw] <- patches of x[N,C,H,W], zero padded
void im2col(const Scalar* x, Scalar* cols, const ConvGeom& g);

// Adjoint of im2col: x[N,C,H,W] <- scatter of cols. Written in gather form
// (loop over image pixels) so it parallelizes without atomics.
void col2im(const Scalar* cols, Scalar* x, const ConvGeom& g);

// y[N*oh*ow, K] -> img[N,K,oh,ow]
void cols_to_image(const Scalar* y, Scalar* img, int64_t N, int64_t K, int64_t oh, int64_t ow);
// inverse of cols_to_image
void image_to_cols(const Scalar* img, Scalar* y, int64_t N, int64_t K, int64_t oh, int64_t ow);

// Index table for per-output-pixel neighborhoods used by the meta upscaler:
// for each output pixel p, the k*k source positions (flattened y*W+x) around
// its source coordinate, with reflected borders (mirror without edge repeat).
struct NeighTable {
  int64_t H, W;          // source feature map size
  int64_t k;             // neighborhood size
  int64_t P;             // number of output pixels
  std::vector<int64_t> idx;  // [P * k*k] flattened source offsets

  // src_of(p) = clamp(floor(p_coord / s)); built by the caller (generator).
};

// out[N, P, C*k*k] <- x[N, C, H, W] gathered through tbl
void gather_neigh(const Scalar* x, Scalar* out, int64_t N, int64_t C, const NeighTable& tbl);
// adjoint: x[N, C, H, W] += contributions of g[N, P, C*k*k]
void scatter_neigh(const Scalar* g, Scalar* x, int64_t N, int64_t C, const NeighTable& tbl);

// 3-d permutation: out[perm of axes] = in. perm is the new order of the old
// axes, e.g. {1,2,0} maps in[a,b,c] to out[b,c,a].
void permute3(const Scalar* in, Scalar* out, const int64_t d[3], const int p[3]);

// Fixed-order serial sum by default; OpenMP reduction when determinism is off.
Scalar reduce_sum(const Scalar* x, int64_t n);

// 2x2 max pool with stride 2 (floor sizes); records flat argmax per output.
void maxpool2(const Scalar* x, Scalar* y, int64_t* argmax, int64_t N, int64_t C, int64_t H, int64_t W);

}  // namespace miassr::kern
