#pragma once

#include "miassr/tensor.hpp"

namespace miassr::img {

// floor(n * f), the output-size rule used everywhere a real scale meets an
// integer extent. Keep all callers on this one definition.
int64_t scaled_size(int64_t n, double f);

// Resample img[C,H,W] to [C,oh,ow] with cubic convolution (a = -0.5),
// half-pixel coordinate mapping and edge-clamped taps. Separable two-pass
// implementation; ref::bicubic_naive is the direct 4x4 oracle for it.
// resize to the same size is an exact identity (weights are exactly {0,1,0,0}).
Tensor bicubic_resize_to(const Tensor& img, int64_t oh, int64_t ow);

// Output dims (floor(H*factor), floor(W*factor)).
Tensor bicubic_resize(const Tensor& img, double factor);

// Separable 3x3 Gaussian, kernel normalized to sum 1, mirrored borders.
Tensor gaussian3(const Tensor& img, double sigma);

void clamp01(Tensor& t);

// Low-resolution counterpart of an HR image: 3x3 Gaussian blur (sigma 0.5)
// followed by bicubic downscale by 1/s, clamped to [0,1]. s in (1, 4].
Tensor degrade(const Tensor& hr, double s);

// Same degradation but resampling to an explicit target size. Needed where
// the LR extent is fixed first (patch sampling, eval): floor(H/s) applied to
// the already-floored HR extent can disagree with floor(H_p/s) at non-integer
// scales, so the caller passes the size it derived.
Tensor degrade_to(const Tensor& hr, double s, int64_t lh, int64_t lw);

}  // namespace miassr::img
