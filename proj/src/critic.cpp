#include "miassr/critic.hpp"

#include <cmath>

namespace miassr::model {

namespace {
constexpr double kSlope = 0.2;
}

void CriticConfig::validate() const {
  check(blocks >= 1, "critic: need at least one block");
  check(base_channels >= 1, "critic: base_channels must be positive");
  check(kernel >= 1 && kernel % 2 == 1, "critic: kernel must be odd");
  check(channels >= 1, "critic: channels must be positive");
  check(mode == "critic" || mode == "classifier", "critic: mode must be 'critic' or 'classifier'");
}

int64_t CriticConfig::block_channels(int64_t i) const { return base_channels << (i / 2); }

Tensor& CriticState::param(const std::string& name) {
  for (auto& [n, t] : params)
    if (n == name) return t;
  fail("critic: no parameter named '" + name + "'");
}

const Tensor& CriticState::param(const std::string& name) const {
  for (const auto& [n, t] : params)
    if (n == name) return t;
  fail("critic: no parameter named '" + name + "'");
}

std::vector<std::pair<std::string, Shape>> critic_param_shapes(const CriticConfig& cfg) {
  cfg.validate();
  const int64_t k = cfg.kernel;
  std::vector<std::pair<std::string, Shape>> out;
  int64_t in_ch = cfg.channels;
  for (int64_t i = 0; i < cfg.blocks; ++i) {
    const int64_t ch = cfg.block_channels(i);
    const std::string p = "critic.block." + std::to_string(i) + ".";
    out.push_back({p + "expand.weight", {ch, in_ch * k * k}});
    out.push_back({p + "expand.bias", {ch}});
    out.push_back({p + "down.weight", {ch, ch * k * k}});
    out.push_back({p + "down.bias", {ch}});
    in_ch = ch;
  }
  out.push_back({"critic.head.weight", {1, in_ch}});
  out.push_back({"critic.head.bias", {1}});
  return out;
}

int64_t count_critic_params(const CriticConfig& cfg) {
  int64_t n = 0;
  for (const auto& [name, shape] : critic_param_shapes(cfg)) n += shape_numel(shape);
  return n;
}

CriticState init_critic(const CriticConfig& cfg, Rng& rng, const std::string& scheme) {
  const double gain = std::sqrt(2.0 / (1.0 + kSlope * kSlope));
  CriticState st;
  st.cfg = cfg;
  for (const auto& [name, shape] : critic_param_shapes(cfg)) {
    Tensor t(shape);
    if (shape.size() == 2) {
      const int64_t fan_in = shape[1];
      if (scheme == "kaiming-uniform") {
        const double bound = gain * std::sqrt(3.0 / fan_in);
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
      } else if (scheme == "kaiming-normal") {
        const double stddev = gain / std::sqrt(static_cast<double>(fan_in));
        for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<Scalar>(stddev * rng.normal());
      } else {
        fail("unknown init scheme '" + scheme + "'");
      }
    }
    st.params.push_back({name, std::move(t)});
  }
  return st;
}

std::vector<std::pair<int64_t, int64_t>> critic_spatial_trace(const CriticConfig& cfg, int64_t H, int64_t W) {
  cfg.validate();
  std::vector<std::pair<int64_t, int64_t>> trace;
  int64_t h = H, w = W;
  for (int64_t i = 0; i < cfg.blocks; ++i) {
    check(h >= 2 && w >= 2, "critic: input " + std::to_string(H) + "x" + std::to_string(W) +
                                " collapses to a single pixel before block " + std::to_string(i) +
                                " — too small for " + std::to_string(cfg.blocks) + " halvings");
    h = (h + 1) / 2;
    w = (w + 1) / 2;
    trace.push_back({h, w});
  }
  return trace;
}

CriticGraph::CriticGraph(ad::Tape& tape, const CriticState& st, bool params_require_grad)
    : t_(tape), st_(st) {
  st.cfg.validate();
  for (const auto& [name, tensor] : st.params) {
    const int id = t_.leaf(tensor, params_require_grad);
    nodes_.push_back({name, id});
    by_name_[name] = id;
  }
}

int CriticGraph::param_node(const std::string& name) const {
  auto it = by_name_.find(name);
  check(it != by_name_.end(), "critic graph: no parameter '" + name + "'");
  return it->second;
}

int CriticGraph::conv(int x, const std::string& prefix, int64_t stride) {
  const Tensor& xv = t_.val(x);
  const int w_id = param_node(prefix + ".weight");
  const int b_id = param_node(prefix + ".bias");
  const int64_t K = t_.val(w_id).dim(0);
  const int64_t k = st_.cfg.kernel;
  const auto g = kern::ConvGeom::make(xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), k, k, stride, k / 2);
  const int cols = t_.im2col(x, g);
  int y = t_.matmul(cols, t_.transpose(w_id));
  y = t_.add(y, t_.tile_rows(b_id, g.rows()));
  return t_.cols_to_image(y, g.N, K, g.oh, g.ow);
}

int CriticGraph::logits(int x) {
  const Tensor& xv = t_.val(x);
  check(xv.ndim() == 4, "critic: want [N,C,H,W]");
  check(xv.dim(1) == st_.cfg.channels, "critic: input has " + std::to_string(xv.dim(1)) +
                                           " channels, model wants " + std::to_string(st_.cfg.channels));
  critic_spatial_trace(st_.cfg, xv.dim(2), xv.dim(3));  // size check
  int t = x;
  for (int64_t i = 0; i < st_.cfg.blocks; ++i) {
    const std::string p = "critic.block." + std::to_string(i);
    t = t_.leaky_relu(conv(t, p + ".expand", 1), kSlope);
    t = t_.leaky_relu(conv(t, p + ".down", 2), kSlope);
  }
  const Tensor& tv = t_.val(t);
  const int64_t hw = tv.dim(2) * tv.dim(3);
  int pooled = t_.scale(t_.sum_spatial(t), 1.0 / static_cast<double>(hw));  // [N, C_last]
  int out = t_.add(t_.matmul(pooled, t_.transpose(param_node("critic.head.weight"))),
                   t_.tile_rows(param_node("critic.head.bias"), tv.dim(0)));
  return t_.reshape(out, {tv.dim(0)});
}

int CriticGraph::scores(int x) {
  const int l = logits(x);
  return st_.cfg.mode == "classifier" ? t_.sigmoid(l) : l;
}

Tensor run_critic(const CriticState& st, const Tensor& images) {
  ad::Tape t;
  CriticGraph g(t, st, false);
  const bool batched = images.ndim() == 4;
  const int in = t.leaf(batched ? images : images.reshaped({1, images.dim(0), images.dim(1), images.dim(2)}));
  return t.val(g.scores(in));
}

Tensor critic_gradient_norm(const CriticState& st, const Tensor& images) {
  check(images.ndim() == 4, "critic_gradient_norm: want [N,C,H,W]");
  ad::Tape t;
  CriticGraph g(t, st, false);
  const int in = t.leaf(images, /*requires_grad=*/true);
  // Scores decouple across samples, so the gradient of the batch sum is the
  // stack of per-sample input gradients.
  const int total = t.sum_all(g.scores(in));
  const int gin = t.gradients(total, {in})[0];
  if (gin < 0) return Tensor::zeros({images.dim(0)});
  const int norms = t.sqrt_(t.sum_per_sample(t.mul(gin, gin)));
  return t.val(norms);
}

}  // namespace miassr::model
