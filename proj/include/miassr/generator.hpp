#pragma once

#include <map>
#include <string>
#include <utility>
#include <vector>

#include "miassr/graph.hpp"
#include "miassr/rng.hpp"
#include "miassr/tensor.hpp"

namespace miassr::model {

// Generator = feature extractor + meta upscaler.
//
// Features: head conv (m -> w), `depth` residual blocks
//   y = x + res_scale * conv_out(lrelu(conv_in(x))),
// tail conv (w -> w), plus a global skip from the head output. All convs are
// 3x3 (configurable), stride 1, zero-padded to keep the spatial size.
//
// Upscale: for every output pixel (i,j) at scale s, a two-layer meta network
// maps (i/s - floor(i/s), j/s - floor(j/s), 1/s) to a k*k kernel over all w
// feature channels per output image channel; the kernel is applied at source
// pixel (floor(i/s), floor(j/s)) with mirrored borders. One state serves any
// s in (1, 4]; output extent is (floor(s*H), floor(s*W)).
struct GeneratorConfig {
  int64_t depth = 16;
  int64_t width = 64;
  int64_t kernel = 3;
  double res_scale = 1.0;
  int64_t channels = 1;
  int64_t meta_hidden = 256;

  void validate() const;
};

struct GeneratorState {
  GeneratorConfig cfg;
  std::vector<std::pair<std::string, Tensor>> params;  // fixed order

  Tensor& param(const std::string& name);
  const Tensor& param(const std::string& name) const;
  bool has_param(const std::string& name) const;
};

std::vector<std::pair<std::string, Shape>> generator_param_shapes(const GeneratorConfig& cfg);
int64_t count_params(const GeneratorConfig& cfg);

// "kaiming-uniform" (default) or "kaiming-normal"; fan-in mode with the
// leaky-relu gain for slope 0.2, biases zero.
GeneratorState init_generator(const GeneratorConfig& cfg, Rng& rng,
                              const std::string& scheme = "kaiming-uniform");

// Non-empty warning text for init schemes that are accepted but known to be
// fragile in adversarial training (kaiming-normal).
std::string init_scheme_warning(const std::string& scheme);

bool scale_supported(double s);  // (1, 4]

// Eager per-pixel meta kernels, also the building block of the dense route.
struct MetaWeights {
  int64_t oh = 0, ow = 0;
  double s = 0;
  Tensor inputs;             // [P, 3]
  Tensor kernels;            // [P, m*w*k*k], flat (out_ch, in_ch, ky, kx)
  std::vector<int64_t> src;  // [P*2] clamped (y, x) source coords
};
MetaWeights predict_weights(const GeneratorState& st, double s, int64_t oh, int64_t ow, int64_t in_h,
                            int64_t in_w);

// Tape-side forward. Binds the state's parameters as leaves once.
class GeneratorGraph {
 public:
  GeneratorGraph(ad::Tape& tape, const GeneratorState& st, bool params_require_grad);

  int features(int x);                    // [N,m,H,W] -> [N,w,H,W]
  int upscale_local(int feat, double s);  // [N,w,H,W] -> [N,m,oh,ow]
  int generate(int lr, double s);         // unclamped

  int param_node(const std::string& name) const;
  const std::vector<std::pair<std::string, int>>& param_nodes() const { return nodes_; }

 private:
  int conv(int x, const std::string& prefix, int64_t pad);

  ad::Tape& t_;
  const GeneratorState& st_;
  std::vector<std::pair<std::string, int>> nodes_;
  std::map<std::string, int> by_name_;
};

// Eager wrappers. run_generate clamps to [0,1] (inference contract); the
// training path reads the unclamped graph output instead.
Tensor run_features(const GeneratorState& st, const Tensor& x);
Tensor run_generate(const GeneratorState& st, const Tensor& lr, double s);

// Dense-operator route: materializes the full [m*P x w*H*W] linear operator
// the per-pixel kernels induce and applies it to the flattened features.
// Diagnostic / oracle path; refuses to build operators above max_elems.
Tensor meta_upscale_dense(const GeneratorState& st, const Tensor& feat, double s,
                          int64_t max_elems = int64_t(1) << 26);

}  // namespace miassr::model
