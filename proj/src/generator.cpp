#include "miassr/generator.hpp"

#include <cmath>

#include "miassr/image_ops.hpp"

namespace miassr::model {

namespace {
constexpr double kSlope = 0.2;  // leaky-relu negative slope, used throughout

int64_t reflect101(int64_t v, int64_t n) {
  if (n == 1) return 0;
  const int64_t period = 2 * (n - 1);
  v = std::abs(v) % period;
  return v < n ? v : period - v;
}
}  // namespace

void GeneratorConfig::validate() const {
  check(depth >= 0, "generator: depth must be non-negative");
  check(width >= 1, "generator: width must be positive");
  check(kernel >= 1 && kernel % 2 == 1, "generator: kernel must be odd and positive");
  check(channels >= 1, "generator: channels must be positive");
  check(meta_hidden >= 1, "generator: meta_hidden must be positive");
  check(res_scale > 0.0, "generator: res_scale must be positive");
}

Tensor& GeneratorState::param(const std::string& name) {
  for (auto& [n, t] : params)
    if (n == name) return t;
  fail("generator: no parameter named '" + name + "'");
}

const Tensor& GeneratorState::param(const std::string& name) const {
  for (const auto& [n, t] : params)
    if (n == name) return t;
  fail("generator: no parameter named '" + name + "'");
}

bool GeneratorState::has_param(const std::string& name) const {
  for (const auto& [n, t] : params)
    if (n == name) return true;
  return false;
}

std::vector<std::pair<std::string, Shape>> generator_param_shapes(const GeneratorConfig& cfg) {
  cfg.validate();
  const int64_t m = cfg.channels, w = cfg.width, k = cfg.kernel, h = cfg.meta_hidden;
  std::vector<std::pair<std::string, Shape>> out;
  out.push_back({"head.weight", {w, m * k * k}});
  out.push_back({"head.bias", {w}});
  for (int64_t i = 0; i < cfg.depth; ++i) {
    const std::string p = "body." + std::to_string(i) + ".";
    out.push_back({p + "conv_in.weight", {w, w * k * k}});
    out.push_back({p + "conv_in.bias", {w}});
    out.push_back({p + "conv_out.weight", {w, w * k * k}});
    out.push_back({p + "conv_out.bias", {w}});
  }
  out.push_back({"tail.weight", {w, w * k * k}});
  out.push_back({"tail.bias", {w}});
  out.push_back({"meta_net.fc1.weight", {h, 3}});
  out.push_back({"meta_net.fc1.bias", {h}});
  out.push_back({"meta_net.fc2.weight", {m * w * k * k, h}});
  out.push_back({"meta_net.fc2.bias", {m * w * k * k}});
  return out;
}

int64_t count_params(const GeneratorConfig& cfg) {
  int64_t n = 0;
  for (const auto& [name, shape] : generator_param_shapes(cfg)) n += shape_numel(shape);
  return n;
}

std::string init_scheme_warning(const std::string& scheme) {
  if (scheme == "kaiming-normal")
    return "kaiming-normal init has destabilized adversarial runs of this model; kaiming-uniform is the "
           "supported default";
  return "";
}

namespace {

void init_tensor(Tensor& t, bool is_weight, Rng& rng, const std::string& scheme) {
  if (!is_weight) return;  // biases stay zero
  const int64_t fan_in = t.dim(1);
  const double gain = std::sqrt(2.0 / (1.0 + kSlope * kSlope));
  if (scheme == "kaiming-uniform") {
    const double bound = gain * std::sqrt(3.0 / fan_in);
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<Scalar>(rng.uniform(-bound, bound));
  } else if (scheme == "kaiming-normal") {
    const double stddev = gain / std::sqrt(static_cast<double>(fan_in));
    for (int64_t i = 0; i < t.numel(); ++i) t[i] = static_cast<Scalar>(stddev * rng.normal());
  } else {
    fail("unknown init scheme '" + scheme + "' (expected kaiming-uniform or kaiming-normal)");
  }
}

}  // namespace

GeneratorState init_generator(const GeneratorConfig& cfg, Rng& rng, const std::string& scheme) {
  GeneratorState st;
  st.cfg = cfg;
  for (const auto& [name, shape] : generator_param_shapes(cfg)) {
    Tensor t(shape);
    init_tensor(t, shape.size() == 2, rng, scheme);
    st.params.push_back({name, std::move(t)});
  }
  return st;
}

bool scale_supported(double s) { return s > 1.0 && s <= 4.0; }

namespace {

// Mirrors the meta-net definition: fractional offsets of the source mapping
// plus the inverse scale.
Tensor meta_inputs(double s, int64_t oh, int64_t ow) {
  Tensor mi({oh * ow, 3});
  for (int64_t i = 0; i < oh; ++i) {
    const double fy = i / s - std::floor(i / s);
    for (int64_t j = 0; j < ow; ++j) {
      const double fx = j / s - std::floor(j / s);
      const int64_t p = i * ow + j;
      mi.at2(p, 0) = static_cast<Scalar>(fy);
      mi.at2(p, 1) = static_cast<Scalar>(fx);
      mi.at2(p, 2) = static_cast<Scalar>(1.0 / s);
    }
  }
  return mi;
}

std::vector<int64_t> source_coords(double s, int64_t oh, int64_t ow, int64_t in_h, int64_t in_w) {
  std::vector<int64_t> src(oh * ow * 2);
  for (int64_t i = 0; i < oh; ++i) {
    const int64_t sy = std::min<int64_t>(static_cast<int64_t>(std::floor(i / s)), in_h - 1);
    for (int64_t j = 0; j < ow; ++j) {
      const int64_t sx = std::min<int64_t>(static_cast<int64_t>(std::floor(j / s)), in_w - 1);
      src[(i * ow + j) * 2] = sy;
      src[(i * ow + j) * 2 + 1] = sx;
    }
  }
  return src;
}

std::shared_ptr<kern::NeighTable> neigh_table(double s, int64_t oh, int64_t ow, int64_t in_h, int64_t in_w,
                                              int64_t k) {
  check(in_h >= 2 && in_w >= 2, "meta upscale: input must be at least 2x2 for mirrored borders");
  auto tbl = std::make_shared<kern::NeighTable>();
  tbl->H = in_h;
  tbl->W = in_w;
  tbl->k = k;
  tbl->P = oh * ow;
  tbl->idx.resize(tbl->P * k * k);
  const std::vector<int64_t> src = source_coords(s, oh, ow, in_h, in_w);
  const int64_t r = k / 2;
  for (int64_t p = 0; p < tbl->P; ++p) {
    const int64_t sy = src[p * 2], sx = src[p * 2 + 1];
    int64_t q = 0;
    for (int64_t dy = -r; dy <= r; ++dy)
      for (int64_t dx = -r; dx <= r; ++dx, ++q) {
        const int64_t y = reflect101(sy + dy, in_h);
        const int64_t x = reflect101(sx + dx, in_w);
        tbl->idx[p * k * k + q] = y * in_w + x;
      }
  }
  return tbl;
}

}  // namespace

MetaWeights predict_weights(const GeneratorState& st, double s, int64_t oh, int64_t ow, int64_t in_h,
                            int64_t in_w) {
  check(scale_supported(s), "predict_weights: scale outside (1, 4]");
  check(oh >= 1 && ow >= 1, "predict_weights: empty output grid");
  const int64_t P = oh * ow;
  MetaWeights mw;
  mw.oh = oh;
  mw.ow = ow;
  mw.s = s;
  mw.inputs = meta_inputs(s, oh, ow);
  mw.src = source_coords(s, oh, ow, in_h, in_w);

  const Tensor& w1 = st.param("meta_net.fc1.weight");  // [h, 3]
  const Tensor& b1 = st.param("meta_net.fc1.bias");
  const Tensor& w2 = st.param("meta_net.fc2.weight");  // [out, h]
  const Tensor& b2 = st.param("meta_net.fc2.bias");
  const int64_t h = w1.dim(0), out = w2.dim(0);

  Tensor hidden({P, h});
  for (int64_t p = 0; p < P; ++p)
    for (int64_t j = 0; j < h; ++j) {
      Scalar acc = b1[j];
      for (int64_t c = 0; c < 3; ++c) acc += w1.at2(j, c) * mw.inputs.at2(p, c);
      hidden.at2(p, j) = acc >= 0 ? acc : static_cast<Scalar>(kSlope) * acc;
    }
  mw.kernels = Tensor({P, out});
  for (int64_t p = 0; p < P; ++p)
    for (int64_t o = 0; o < out; ++o) {
      Scalar acc = b2[o];
      for (int64_t j = 0; j < h; ++j) acc += w2.at2(o, j) * hidden.at2(p, j);
      mw.kernels.at2(p, o) = acc;
    }
  return mw;
}

GeneratorGraph::GeneratorGraph(ad::Tape& tape, const GeneratorState& st, bool params_require_grad)
    : t_(tape), st_(st) {
  st.cfg.validate();
  for (const auto& [name, tensor] : st.params) {
    const int id = t_.leaf(tensor, params_require_grad);
    nodes_.push_back({name, id});
    by_name_[name] = id;
  }
}

int GeneratorGraph::param_node(const std::string& name) const {
  auto it = by_name_.find(name);
  check(it != by_name_.end(), "generator graph: no parameter '" + name + "'");
  return it->second;
}

int GeneratorGraph::conv(int x, const std::string& prefix, int64_t pad) {
  const Tensor& xv = t_.val(x);
  const int w_id = param_node(prefix + ".weight");
  const int b_id = param_node(prefix + ".bias");
  const int64_t K = t_.val(w_id).dim(0);
  const int64_t k = st_.cfg.kernel;
  const auto g = kern::ConvGeom::make(xv.dim(0), xv.dim(1), xv.dim(2), xv.dim(3), k, k, 1, pad);
  const int cols = t_.im2col(x, g);
  int y = t_.matmul(cols, t_.transpose(w_id));
  y = t_.add(y, t_.tile_rows(b_id, g.rows()));
  return t_.cols_to_image(y, g.N, K, g.oh, g.ow);
}

int GeneratorGraph::features(int x) {
  const Tensor& xv = t_.val(x);
  check(xv.ndim() == 4, "features: want [N,C,H,W]");
  check(xv.dim(1) == st_.cfg.channels, "features: input has " + std::to_string(xv.dim(1)) +
                                           " channels, model wants " + std::to_string(st_.cfg.channels));
  const int64_t pad = st_.cfg.kernel / 2;
  const int head = conv(x, "head", pad);
  int t = head;
  for (int64_t i = 0; i < st_.cfg.depth; ++i) {
    const std::string p = "body." + std::to_string(i);
    const int inner = conv(t, p + ".conv_in", pad);
    const int act = t_.leaky_relu(inner, kSlope);
    const int outer = conv(act, p + ".conv_out", pad);
    t = t_.add(t, t_.scale(outer, st_.cfg.res_scale));
  }
  const int tail = conv(t, "tail", pad);
  return t_.add(tail, head);
}

int GeneratorGraph::upscale_local(int feat, double s) {
  check(scale_supported(s), "upscale: scale outside (1, 4]");
  const Tensor& fv = t_.val(feat);
  check(fv.ndim() == 4 && fv.dim(1) == st_.cfg.width, "upscale: want [N,w,H,W] features");
  const int64_t N = fv.dim(0), H = fv.dim(2), W = fv.dim(3);
  const int64_t oh = img::scaled_size(H, s), ow = img::scaled_size(W, s);
  check(oh >= 1 && ow >= 1, "upscale: empty output grid");
  const int64_t P = oh * ow;
  const int64_t m = st_.cfg.channels, w = st_.cfg.width, k = st_.cfg.kernel;

  const int mi = t_.leaf(meta_inputs(s, oh, ow));
  int hidden = t_.add(t_.matmul(mi, t_.transpose(param_node("meta_net.fc1.weight"))),
                      t_.tile_rows(param_node("meta_net.fc1.bias"), P));
  hidden = t_.leaky_relu(hidden, kSlope);
  int kernels = t_.add(t_.matmul(hidden, t_.transpose(param_node("meta_net.fc2.weight"))),
                       t_.tile_rows(param_node("meta_net.fc2.bias"), P));
  const int v3 = t_.reshape(kernels, {P, m, w * k * k});

  auto tbl = neigh_table(s, oh, ow, H, W, k);
  const int neigh = t_.gather_neigh(feat, tbl);        // [N, P, w*k*k]
  const int neigh_p = t_.permute3(neigh, 1, 2, 0);     // [P, w*k*k, N]
  const int prod = t_.bmm(v3, neigh_p);                // [P, m, N]
  const int out3 = t_.permute3(prod, 2, 1, 0);         // [N, m, P]
  return t_.reshape(out3, {N, m, oh, ow});
}

int GeneratorGraph::generate(int lr, double s) { return upscale_local(features(lr), s); }

Tensor run_features(const GeneratorState& st, const Tensor& x) {
  ad::Tape t;
  GeneratorGraph g(t, st, false);
  const bool batched = x.ndim() == 4;
  const int in = t.leaf(batched ? x : x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)}));
  const int out = g.features(in);
  Tensor r = t.val(out);
  if (!batched) r = r.reshaped({r.dim(1), r.dim(2), r.dim(3)});
  return r;
}

Tensor run_generate(const GeneratorState& st, const Tensor& lr, double s) {
  ad::Tape t;
  GeneratorGraph g(t, st, false);
  const bool batched = lr.ndim() == 4;
  const int in = t.leaf(batched ? lr : lr.reshaped({1, lr.dim(0), lr.dim(1), lr.dim(2)}));
  const int out = g.generate(in, s);
  Tensor r = t.val(out);
  if (!batched) r = r.reshaped({r.dim(1), r.dim(2), r.dim(3)});
  img::clamp01(r);
  return r;
}

Tensor meta_upscale_dense(const GeneratorState& st, const Tensor& feat, double s, int64_t max_elems) {
  check(feat.ndim() == 3 && feat.dim(0) == st.cfg.width, "dense upscale: want [w,H,W] features");
  check(scale_supported(s), "dense upscale: scale outside (1, 4]");
  const int64_t w = st.cfg.width, H = feat.dim(1), W = feat.dim(2);
  const int64_t k = st.cfg.kernel, m = st.cfg.channels;
  const int64_t oh = img::scaled_size(H, s), ow = img::scaled_size(W, s);
  const int64_t P = oh * ow;
  const int64_t rows = m * P, cols = w * H * W;
  check(rows * cols <= max_elems, "dense upscale: operator of " + std::to_string(rows * cols) +
                                      " elements exceeds the budget of " + std::to_string(max_elems));

  const MetaWeights mw = predict_weights(st, s, oh, ow, H, W);
  Tensor dense({rows, cols});
  const int64_t r = k / 2;
  for (int64_t p = 0; p < P; ++p) {
    const int64_t sy = mw.src[p * 2], sx = mw.src[p * 2 + 1];
    for (int64_t co = 0; co < m; ++co) {
      Scalar* row = dense.data() + (co * P + p) * cols;
      int64_t q = 0;
      for (int64_t c = 0; c < w; ++c)
        for (int64_t dy = -r; dy <= r; ++dy)
          for (int64_t dx = -r; dx <= r; ++dx, ++q) {
            const int64_t y = reflect101(sy + dy, H);
            const int64_t x = reflect101(sx + dx, W);
            row[c * H * W + y * W + x] += mw.kernels.at2(p, co * (w * k * k) + q);
          }
    }
  }
  Tensor out({rows});
  kern::matmul(dense.data(), feat.data(), out.data(), rows, cols, 1);
  return out.reshaped({m, oh, ow});
}

}  // namespace miassr::model
