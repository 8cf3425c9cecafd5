// Timings for the OpenMP kernel path against the serial reference loops.
// Both sides compute the same quantity; the max |diff| column shows it.

#include <chrono>
#include <cstdio>
#include <functional>

#include "miassr/image_ops.hpp"
#include "miassr/kernels.hpp"
#include "miassr/metrics.hpp"
#include "miassr/reference.hpp"
#include "miassr/rng.hpp"

using namespace miassr;

namespace {

Tensor random_tensor(Rng& rng, Shape shape) {
  Tensor t(std::move(shape));
  for (int64_t i = 0; i < t.numel(); ++i) t.data()[i] = rng.uniform();
  return t;
}

double time_ms(const std::function<void()>& fn, int reps) {
  fn();  // warm cache
  const auto t0 = std::chrono::steady_clock::now();
  for (int r = 0; r < reps; ++r) fn();
  const auto t1 = std::chrono::steady_clock::now();
  return std::chrono::duration<double, std::milli>(t1 - t0).count() / reps;
}

void row(const char* name, double kern_ms, double ref_ms, double diff) {
  std::printf("%-28s %10.3f %10.3f %8.2fx %12.3e\n", name, kern_ms, ref_ms, ref_ms / kern_ms, diff);
}

}  // namespace

int main() {
  Rng rng(42);
  std::printf("%-28s %10s %10s %9s %12s\n", "kernel", "kern ms", "ref ms", "speedup", "max |diff|");

  {
    const int64_t M = 256, K = 256, N = 256;
    const Tensor a = random_tensor(rng, {M, K}), b = random_tensor(rng, {K, N});
    Tensor ck({M, N}), cr({M, N});
    const double tk = time_ms([&] { kern::matmul(a.data(), b.data(), ck.data(), M, K, N); }, 5);
    const double tr = time_ms([&] { ref::matmul_naive(a.data(), b.data(), cr.data(), M, K, N); }, 5);
    row("matmul 256^3", tk, tr, max_abs_diff(ck, cr));
  }

  {
    // conv: im2col + matmul + cols_to_image vs the direct loop
    const int64_t N = 2, C = 32, H = 48, W = 48, K = 32, k = 3;
    const Tensor x = random_tensor(rng, {N, C, H, W});
    const Tensor w = random_tensor(rng, {K, C * k * k});
    const Tensor b = random_tensor(rng, {K});
    const auto g = kern::ConvGeom::make(N, C, H, W, k, k, 1, 1);
    Tensor yk({N, K, g.oh, g.ow}), yr({N, K, g.oh, g.ow});
    const double tk = time_ms(
        [&] {
          Tensor cols({g.rows(), C * k * k});
          kern::im2col(x.data(), cols.data(), g);
          Tensor wt({C * k * k, K});
          for (int64_t i = 0; i < K; ++i)
            for (int64_t j = 0; j < C * k * k; ++j) wt.data()[j * K + i] = w.data()[i * C * k * k + j];
          Tensor prod({g.rows(), K});
          kern::matmul(cols.data(), wt.data(), prod.data(), g.rows(), C * k * k, K);
          for (int64_t r = 0; r < g.rows(); ++r)
            for (int64_t i = 0; i < K; ++i) prod.data()[r * K + i] += b.data()[i];
          kern::cols_to_image(prod.data(), yk.data(), N, K, g.oh, g.ow);
        },
        3);
    const double tr = time_ms([&] { ref::conv2d_naive(x, w, &b, k, k, 1, 1, yr); }, 3);
    row("conv 2x32x48x48 k3", tk, tr, max_abs_diff(yk, yr));
  }

  {
    const Tensor img = random_tensor(rng, {1, 128, 128});
    const int64_t oh = 293, ow = 293;
    Tensor yk, yr;
    const double tk = time_ms([&] { yk = img::bicubic_resize_to(img, oh, ow); }, 5);
    const double tr = time_ms([&] { yr = ref::bicubic_naive(img, oh, ow); }, 5);
    row("bicubic 128 -> 293", tk, tr, max_abs_diff(yk, yr));
  }

  {
    const Tensor img = random_tensor(rng, {1, 256, 256});
    Tensor yk, yr;
    const double tk = time_ms([&] { yk = img::gaussian3(img, 0.5); }, 10);
    const double tr = time_ms([&] { yr = ref::gaussian3_naive(img, 0.5); }, 10);
    row("gaussian3 256^2", tk, tr, max_abs_diff(yk, yr));
  }

  {
    const Tensor a = random_tensor(rng, {96, 96});
    Tensor b = a;
    for (int64_t i = 0; i < b.numel(); ++i) b.data()[i] = std::min(1.0, b.data()[i] + 0.01 * rng.uniform());
    double vk = 0, vr = 0;
    const double tk = time_ms([&] { vk = metric::ssim(a, b, 1.0); }, 5);
    const double tr = time_ms([&] { vr = ref::ssim_naive(a, b, 1.0); }, 5);
    row("ssim 96^2", tk, tr, std::abs(vk - vr));
  }

  return 0;
}
