#pragma once

#include <vector>

#include "miassr/features.hpp"
#include "miassr/tensor.hpp"

namespace miassr::metric {

// Images are [H,W] or [C,H,W] in [0, peak].  Multi-channel images are scored
// one modality at a time and the per-modality values are averaged.

double mse(const Tensor& a, const Tensor& b);

// 10 log10(peak^2 / mse); identical inputs give +infinity.
double psnr(const Tensor& a, const Tensor& b, double peak = 1.0);

// Structural similarity over 11x11 Gaussian windows (sigma 1.5), valid-mode:
// only windows fully inside the image contribute.  Stabilizers are
// (0.01 peak)^2 and (0.03 peak)^2.
double ssim(const Tensor& a, const Tensor& b, double peak = 1.0);

// First and second moments of a set of embedding vectors.
struct Moments {
  Tensor mu;   // [F]
  Tensor cov;  // [F,F], sample covariance (n-1 denominator)
  int64_t n = 0;
};

Moments embedding_moments(const std::vector<Tensor>& embeddings);

// Frechet distance between two Gaussians:
//   |mu_a - mu_b|^2 + tr(cov_a + cov_b - 2 (cov_a cov_b)^(1/2)),
// computed through symmetric eigendecompositions.  Eigenvalues below -1e-8
// are rejected; small negatives from roundoff are clamped to zero.
double frechet(const Moments& a, const Moments& b);

// Pooled-feature embedder used for distribution distances.
model::FeatureExtractor fid_embedder();

// Frechet distance between two sets of images under fid_embedder(), one
// modality at a time, averaged.  Each set needs at least two images.
double fid(const model::FeatureExtractor& fx, const std::vector<Tensor>& a,
           const std::vector<Tensor>& b);

}  // namespace miassr::metric
