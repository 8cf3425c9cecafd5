#pragma once

#include "miassr/volume.hpp"

namespace miassr::data {

// Patch extents for logical patch size hp at scale s. The LR extent is fixed
// first, then the HR extent follows from it, so the HR patch never exceeds hp:
//   h_lr = floor(hp / s),  h_hr = floor(s * h_lr)
int64_t lr_patch_size(int64_t hp, double s);
int64_t hr_patch_size(int64_t hp, double s);

struct PatchBatch {
  Tensor lr;  // [B, C, h_lr, w_lr]
  Tensor hr;  // [B, C, h_hr, w_hr]
  double s = 0;
  int64_t patch = 0;
};

// B random HR crops from random (volume, slice, position), each degraded to
// its LR counterpart at scale s. Fully determined by seed; sampling is serial
// so thread count cannot change the draw sequence.
PatchBatch sample_patch_batch(const std::vector<Volume>& volumes, double s, int64_t hp, int64_t B,
                              uint64_t seed);

}  // namespace miassr::data
