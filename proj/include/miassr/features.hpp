#pragma once

#include <string>
#include <utility>
#include <vector>

#include "miassr/graph.hpp"
#include "miassr/tensor.hpp"

namespace miassr::model {

// A frozen convolutional feature stack.  Two roles:
//   - perceptual loss: distance between tagged-layer activations of two images
//   - distribution metrics: pooled activations as a compact image embedding
//
// The tag names a conv layer; the stack's output is that layer's
// pre-activation response (the activation that follows it is not applied).
struct FeatureExtractor {
  struct Layer {
    enum class Kind { Conv, LRelu, Relu, MaxPool };
    Kind kind = Kind::Conv;
    std::string name;  // conv layers only
    Tensor w;          // [K, C*k*k]
    Tensor b;          // [K]
    int64_t kernel = 3;
    int64_t stride = 1;
    int64_t pad = 1;
    double slope = 0.2;
  };

  std::string id;            // how reports refer to this extractor
  std::string tag;           // conv layer whose output is returned
  int64_t in_channels = 1;
  std::vector<Layer> layers;

  // Built-in stack with seeded weights; needs no external files.  Valid tags,
  // from cheapest to deepest: "desk-shallow", "desk-mid", "desk-deep".
  static FeatureExtractor desk(const std::string& tag, uint64_t seed = 7);

  // Loads a conv stack from an archive.  The archive metadata key "layers"
  // holds the JSON layer list and "in_channels" the expected input width;
  // tensors are named "<layer>.weight" / "<layer>.bias".
  static FeatureExtractor from_archive(const std::string& path, const std::string& tag);

  int64_t feature_channels() const;  // output channels of the tagged conv
  void validate() const;
};

// Binds an extractor's weights onto a tape once (as constants); features()
// can then run several inputs through the same bound stack.  Single-channel
// inputs are replicated up to in_channels; other mismatches are errors.
class FeatureGraph {
 public:
  FeatureGraph(ad::Tape& tape, const FeatureExtractor& fx);
  int features(int x);  // [N,C,H,W] -> [N,F,h,w] at the tagged layer

 private:
  ad::Tape& tape_;
  const FeatureExtractor& fx_;
  std::vector<std::pair<int, int>> params_;  // (weight, bias) leaf per layer
};

Tensor run_features(const FeatureExtractor& fx, const Tensor& x);

// [H,W] or [1,H,W] slice -> [F] vector of spatially averaged features.
Tensor embed_slice(const FeatureExtractor& fx, const Tensor& slice);

}  // namespace miassr::model
