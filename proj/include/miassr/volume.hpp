#pragma once

#include <string>
#include <vector>

#include "miassr/tensor.hpp"

namespace miassr::data {

// A stack of 2-d slices, one or more modalities per slice, values normalized
// to [0,1]. voxels is [S, C, H, W].
struct Volume {
  Tensor voxels;
  std::vector<std::string> modalities;
  std::string id;

  int64_t slices() const { return voxels.dim(0); }
  int64_t channels() const { return voxels.dim(1); }
  int64_t height() const { return voxels.dim(2); }
  int64_t width() const { return voxels.dim(3); }

  // One slice as [C,H,W].
  Tensor slice(int64_t s) const;
};

// Fixed per-dataset slice geometry: which plane to slice along and the
// central crop that removes the empty background frame.
struct DatasetProfile {
  std::string name;
  int64_t crop_h = 0, crop_w = 0;
  int64_t channels = 1;
  std::string plane = "axial";
};

// Built-ins: "oasis" (144x180, 1ch), "brats" (180x170, 4ch),
// "acdc" (128x128, 1ch), "covid_ct" (412x332, 1ch).
DatasetProfile profile_by_name(const std::string& name);

// Load one volume file (.mvol, .nii, .nii.gz), slice it along the profile
// plane, center-crop to the profile size, validate that the crop loses no
// non-zero voxels, and min-max normalize to [0,1].
Volume load_volume(const std::string& path, const DatasetProfile& profile);

// Multi-modal variant: one single-channel file per modality, stacked on the
// channel axis; each modality is normalized independently.
Volume load_volume_multi(const std::vector<std::string>& paths, const DatasetProfile& profile);

// Portable container: u64-LE header length, JSON header
// {"shape":[S,C,H,W],"modalities":[...],"dtype":"float32"}, float32-LE payload.
void write_mvol(const std::string& path, const Volume& v);

// Read a prepared .mvol as-is, no crop or re-normalization; the payload must
// already lie in [0,1].
Volume load_mvol(const std::string& path);

// In-place min-max normalization to [0,1]. Identity when the data already
// spans exactly [0,1]. Constant non-empty volumes are rejected.
void normalize_minmax(Tensor& t);

// Deterministic synthetic volume: overlapping smooth ellipses whose centers
// and intensities drift across slices, black margin, values in [0,1].
// Same seed -> bit-identical voxels. H, W >= 32.
Volume synth_phantom(uint64_t seed, int64_t S, int64_t H, int64_t W, int64_t channels = 1);

// count phantom volumes with consecutive seeds starting at seed.
std::vector<Volume> phantom_corpus(uint64_t seed, int64_t count, int64_t S, int64_t H, int64_t W,
                                   int64_t channels = 1);

}  // namespace miassr::data
