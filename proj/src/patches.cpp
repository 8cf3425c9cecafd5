#include "miassr/patches.hpp"

#include <cstring>

#include "miassr/image_ops.hpp"
#include "miassr/rng.hpp"

namespace miassr::data {

int64_t lr_patch_size(int64_t hp, double s) { return img::scaled_size(hp, 1.0 / s); }

int64_t hr_patch_size(int64_t hp, double s) { return img::scaled_size(lr_patch_size(hp, s), s); }

PatchBatch sample_patch_batch(const std::vector<Volume>& volumes, double s, int64_t hp, int64_t B,
                              uint64_t seed) {
  check(s > 1.0 && s <= 4.0, "sample_patch_batch: scale must lie in (1, 4]");
  check(B >= 1, "sample_patch_batch: batch size must be positive");
  check(!volumes.empty(), "sample_patch_batch: no volumes");
  const int64_t hl = lr_patch_size(hp, s);
  const int64_t wl = hl;
  const int64_t hh = hr_patch_size(hp, s);
  const int64_t wh = hh;
  check(hl >= 2, "sample_patch_batch: patch size " + std::to_string(hp) + " too small at scale for a usable LR patch");

  const int64_t C = volumes.front().channels();
  for (const Volume& v : volumes) {
    check(v.channels() == C, "sample_patch_batch: mixed channel counts in corpus");
    check(v.height() >= hh && v.width() >= wh,
          "sample_patch_batch: volume '" + v.id + "' (" + std::to_string(v.height()) + "x" +
              std::to_string(v.width()) + ") smaller than the " + std::to_string(hh) + "x" + std::to_string(wh) +
              " HR patch");
  }

  Rng rng(seed);
  PatchBatch batch;
  batch.s = s;
  batch.patch = hp;
  batch.lr = Tensor({B, C, hl, wl});
  batch.hr = Tensor({B, C, hh, wh});
  for (int64_t b = 0; b < B; ++b) {
    const Volume& v = volumes[rng.below(static_cast<int64_t>(volumes.size()))];
    const int64_t sl = rng.below(v.slices());
    const int64_t y0 = rng.below(v.height() - hh + 1);
    const int64_t x0 = rng.below(v.width() - wh + 1);
    Tensor hr({C, hh, wh});
    for (int64_t c = 0; c < C; ++c)
      for (int64_t y = 0; y < hh; ++y)
        std::memcpy(hr.data() + (c * hh + y) * wh,
                    v.voxels.data() + ((sl * C + c) * v.height() + y0 + y) * v.width() + x0,
                    sizeof(Scalar) * wh);
    const Tensor lr = img::degrade_to(hr, s, hl, wl);
    std::memcpy(batch.hr.data() + b * C * hh * wh, hr.data(), sizeof(Scalar) * C * hh * wh);
    std::memcpy(batch.lr.data() + b * C * hl * wl, lr.data(), sizeof(Scalar) * C * hl * wl);
  }
  return batch;
}

}  // namespace miassr::data
