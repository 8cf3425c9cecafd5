#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "miassr/graph.hpp"
#include "miassr/rng.hpp"
#include "miassr/tensor.hpp"

namespace miassr::model {

// Convolutional score network. Each block is a stride-1 "expand" conv followed
// by a stride-2 "down" conv (both 3x3, zero pad 1, leaky-relu 0.2); channel
// widths double every second block: 64,64,128,128,256,256,512 for 7 blocks.
// Stride-2 output sizes follow ceil(n/2), so 96 -> 48,24,12,6,3,2,1.
// Head: global average pool + linear layer to one score per image.
//
// mode "critic"     : raw (linear) score, for Wasserstein losses
// mode "classifier" : sigmoid probability, for the cross-entropy loss;
//                     relativistic losses read the pre-sigmoid logits.
struct CriticConfig {
  int64_t blocks = 7;
  int64_t base_channels = 64;
  int64_t kernel = 3;
  int64_t channels = 1;
  std::string mode = "critic";

  void validate() const;
  int64_t block_channels(int64_t i) const;
};

struct CriticState {
  CriticConfig cfg;
  std::vector<std::pair<std::string, Tensor>> params;

  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;
};

std::vector<std::pair<std::string, Shape>> critic_param_shapes(const CriticConfig& cfg);
int64_t count_critic_params(const CriticConfig& cfg);
CriticState init_critic(const CriticConfig& cfg, Rng& rng, const std::string& scheme = "kaiming-uniform");

// Spatial size after each block for input (H, W); throws if some down conv
// would receive a dimension below 2 (input too small for the chain).
std::vector<std::pair<int64_t, int64_t>> critic_spatial_trace(const CriticConfig& cfg, int64_t H, int64_t W);

class CriticGraph {
 public:
  CriticGraph(ad::Tape& tape, const CriticState& st, bool params_require_grad);

  int logits(int x);  // [N,C,H,W] -> [N] pre-sigmoid scores
  int scores(int x);  // mode-dependent: sigmoid(logits) or raw

  int param_node(const std::string& name) const;
  const std::vector<std::pair<std::string, int>>& param_nodes() const { return nodes_; }

 private:
  int conv(int x, const std::string& prefix, int64_t stride);

  ad::Tape& t_;
  const CriticState& st_;
  std::vector<std::pair<std::string, int>> nodes_;
  std::map<std::string, int> by_name_;
};

// Eager score pass, [C,H,W] or [N,C,H,W] -> [N].
Tensor run_critic(const CriticState& st, const Tensor& images);

// Per-sample L2 norm of d(score)/d(input), [N].
Tensor critic_gradient_norm(const CriticState& st, const Tensor& images);

}  // namespace miassr::model
