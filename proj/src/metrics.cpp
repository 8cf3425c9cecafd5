#include "miassr/metrics.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>

#include <Eigen/Dense>

namespace miassr::metric {

namespace {

void check_pair(const Tensor& a, const Tensor& b) {
  check(a.ndim() == 2 || a.ndim() == 3, "metric: want [H,W] or [C,H,W] images");
  check(a.shape() == b.shape(), "metric: image shapes differ, " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

// per-channel view helpers: channels(a) slices of rows*cols scalars
int64_t channel_count(const Tensor& a) { return a.ndim() == 2 ? 1 : a.dim(0); }
int64_t plane_numel(const Tensor& a) { return a.ndim() == 2 ? a.numel() : a.dim(1) * a.dim(2); }

double mse_plane(const Scalar* a, const Scalar* b, int64_t n) {
  double s = 0;
  for (int64_t i = 0; i < n; ++i) {
    const double d = static_cast<double>(a[i]) - static_cast<double>(b[i]);
    s += d * d;
  }
  return s / static_cast<double>(n);
}

constexpr int kWin = 11;
constexpr double kSigma = 1.5;

std::array<double, kWin> ssim_window() {
  std::array<double, kWin> w{};
  double sum = 0;
  for (int i = 0; i < kWin; ++i) {
    const double d = i - (kWin - 1) / 2.0;
    w[i] = std::exp(-d * d / (2.0 * kSigma * kSigma));
    sum += w[i];
  }
  for (double& v : w) v /= sum;
  return w;
}

// valid-mode separable window averages of one plane
std::vector<double> window_means(const std::vector<double>& img, int64_t H, int64_t W) {
  const auto w = ssim_window();
  const int64_t oh = H - kWin + 1, ow = W - kWin + 1;
  std::vector<double> tmp(static_cast<size_t>(H) * ow), out(static_cast<size_t>(oh) * ow);
  for (int64_t y = 0; y < H; ++y)
    for (int64_t x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < kWin; ++k) s += w[k] * img[y * W + x + k];
      tmp[y * ow + x] = s;
    }
  for (int64_t y = 0; y < oh; ++y)
    for (int64_t x = 0; x < ow; ++x) {
      double s = 0;
      for (int k = 0; k < kWin; ++k) s += w[k] * tmp[(y + k) * ow + x];
      out[y * ow + x] = s;
    }
  return out;
}

double ssim_plane(const Scalar* pa, const Scalar* pb, int64_t H, int64_t W, double peak) {
  check(H >= kWin && W >= kWin, "ssim: image smaller than the 11x11 window");
  const int64_t n = H * W;
  std::vector<double> a(n), b(n), aa(n), bb(n), ab(n);
  for (int64_t i = 0; i < n; ++i) {
    a[i] = static_cast<double>(pa[i]);
    b[i] = static_cast<double>(pb[i]);
    aa[i] = a[i] * a[i];
    bb[i] = b[i] * b[i];
    ab[i] = a[i] * b[i];
  }
  const auto mu_a = window_means(a, H, W);
  const auto mu_b = window_means(b, H, W);
  const auto m_aa = window_means(aa, H, W);
  const auto m_bb = window_means(bb, H, W);
  const auto m_ab = window_means(ab, H, W);
  const double c1 = (0.01 * peak) * (0.01 * peak);
  const double c2 = (0.03 * peak) * (0.03 * peak);
  double acc = 0;
  for (size_t i = 0; i < mu_a.size(); ++i) {
    const double ma = mu_a[i], mb = mu_b[i];
    const double va = m_aa[i] - ma * ma;
    const double vb = m_bb[i] - mb * mb;
    const double cab = m_ab[i] - ma * mb;
    acc += ((2 * ma * mb + c1) * (2 * cab + c2)) / ((ma * ma + mb * mb + c1) * (va + vb + c2));
  }
  return acc / static_cast<double>(mu_a.size());
}

}  // namespace

double mse(const Tensor& a, const Tensor& b) {
  check_pair(a, b);
  return mse_plane(a.data(), b.data(), a.numel());
}

double psnr(const Tensor& a, const Tensor& b, double peak) {
  check_pair(a, b);
  check(peak > 0, "psnr: peak must be positive");
  const int64_t C = channel_count(a), n = plane_numel(a);
  double acc = 0;
  for (int64_t c = 0; c < C; ++c) {
    const double m = mse_plane(a.data() + c * n, b.data() + c * n, n);
    if (m == 0) return std::numeric_limits<double>::infinity();
    acc += 10.0 * std::log10(peak * peak / m);
  }
  return acc / static_cast<double>(C);
}

double ssim(const Tensor& a, const Tensor& b, double peak) {
  check_pair(a, b);
  check(peak > 0, "ssim: peak must be positive");
  const int64_t C = channel_count(a), n = plane_numel(a);
  const int64_t H = a.ndim() == 2 ? a.dim(0) : a.dim(1);
  const int64_t W = a.ndim() == 2 ? a.dim(1) : a.dim(2);
  double acc = 0;
  for (int64_t c = 0; c < C; ++c) acc += ssim_plane(a.data() + c * n, b.data() + c * n, H, W, peak);
  return acc / static_cast<double>(C);
}

Moments embedding_moments(const std::vector<Tensor>& embeddings) {
  check(embeddings.size() >= 2, "moments: need at least two embeddings");
  const int64_t F = embeddings[0].numel();
  check(F >= 1, "moments: empty embedding");
  for (const Tensor& e : embeddings)
    check(e.numel() == F, "moments: embeddings have mixed sizes");
  const int64_t n = static_cast<int64_t>(embeddings.size());
  Moments m;
  m.n = n;
  m.mu = Tensor({F});
  for (const Tensor& e : embeddings)
    for (int64_t i = 0; i < F; ++i) m.mu.data()[i] += e.data()[i];
  for (int64_t i = 0; i < F; ++i) m.mu.data()[i] /= static_cast<Scalar>(n);
  m.cov = Tensor({F, F});
  for (const Tensor& e : embeddings)
    for (int64_t i = 0; i < F; ++i) {
      const Scalar di = e.data()[i] - m.mu.data()[i];
      for (int64_t j = 0; j < F; ++j) m.cov.data()[i * F + j] += di * (e.data()[j] - m.mu.data()[j]);
    }
  for (int64_t i = 0; i < F * F; ++i) m.cov.data()[i] /= static_cast<Scalar>(n - 1);
  return m;
}

namespace {

Eigen::MatrixXd to_eigen(const Tensor& t) {
  const int64_t F = t.dim(0);
  Eigen::MatrixXd m(F, F);
  for (int64_t i = 0; i < F; ++i)
    for (int64_t j = 0; j < F; ++j) m(i, j) = static_cast<double>(t.data()[i * F + j]);
  return m;
}

// eigenvalues of a covariance-like matrix, validated against real negativity
Eigen::VectorXd psd_eigenvalues(const Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd>& es, const char* what) {
  Eigen::VectorXd ev = es.eigenvalues();
  for (Eigen::Index i = 0; i < ev.size(); ++i) {
    check(ev[i] >= -1e-8, std::string("frechet: ") + what + " has a negative eigenvalue beyond roundoff");
    if (ev[i] < 0) ev[i] = 0;
  }
  return ev;
}

}  // namespace

double frechet(const Moments& a, const Moments& b) {
  check(a.mu.numel() == b.mu.numel(), "frechet: embedding sizes differ");
  const int64_t F = a.mu.numel();
  double diff2 = 0;
  for (int64_t i = 0; i < F; ++i) {
    const double d = static_cast<double>(a.mu.data()[i]) - static_cast<double>(b.mu.data()[i]);
    diff2 += d * d;
  }
  const Eigen::MatrixXd ca = to_eigen(a.cov);
  const Eigen::MatrixXd cb = to_eigen(b.cov);

  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_b(cb);
  check(es_b.info() == Eigen::Success, "frechet: eigendecomposition failed");
  const Eigen::VectorXd ev_b = psd_eigenvalues(es_b, "covariance");
  const Eigen::MatrixXd sqrt_b =
      es_b.eigenvectors() * ev_b.cwiseSqrt().asDiagonal() * es_b.eigenvectors().transpose();

  Eigen::MatrixXd prod = sqrt_b * ca * sqrt_b;
  prod = 0.5 * (prod + prod.transpose().eval());  // symmetrize roundoff
  Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es_p(prod);
  check(es_p.info() == Eigen::Success, "frechet: eigendecomposition failed");
  const Eigen::VectorXd ev_p = psd_eigenvalues(es_p, "cross term");

  double r = diff2 + ca.trace() + cb.trace() - 2.0 * ev_p.cwiseSqrt().sum();
  if (r < 0 && r > -1e-6) r = 0;  // roundoff on identical distributions
  return r;
}

model::FeatureExtractor fid_embedder() {
  model::FeatureExtractor fx = model::FeatureExtractor::desk("desk-deep");
  fx.id = "seeded-small-conv";
  return fx;
}

double fid(const model::FeatureExtractor& fx, const std::vector<Tensor>& a,
           const std::vector<Tensor>& b) {
  check(a.size() >= 2 && b.size() >= 2, "fid: each image set needs at least two images");
  auto channels_of = [](const Tensor& t) { return t.ndim() == 2 ? int64_t(1) : t.dim(0); };
  const int64_t C = channels_of(a[0]);
  for (const Tensor& t : a) check(channels_of(t) == C, "fid: mixed channel counts");
  for (const Tensor& t : b) check(channels_of(t) == C, "fid: mixed channel counts");

  auto embed_channel = [&](const Tensor& img, int64_t c) {
    if (img.ndim() == 2) return model::embed_slice(fx, img);
    const int64_t H = img.dim(1), W = img.dim(2);
    Tensor plane({H, W});
    std::copy(img.data() + c * H * W, img.data() + (c + 1) * H * W, plane.data());
    return model::embed_slice(fx, plane);
  };

  double acc = 0;
  for (int64_t c = 0; c < C; ++c) {
    std::vector<Tensor> ea, eb;
    ea.reserve(a.size());
    eb.reserve(b.size());
    for (const Tensor& t : a) ea.push_back(embed_channel(t, c));
    for (const Tensor& t : b) eb.push_back(embed_channel(t, c));
    acc += frechet(embedding_moments(ea), embedding_moments(eb));
  }
  return acc / static_cast<double>(C);
}

}  // namespace miassr::metric
