#include "miassr/features.hpp"

#include <cmath>

#include <json.hpp>

#include "miassr/checkpoint.hpp"
#include "miassr/kernels.hpp"
#include "miassr/rng.hpp"

namespace miassr::model {

using Layer = FeatureExtractor::Layer;

namespace {

Tensor seeded_conv_weight(Rng& rng, int64_t out_ch, int64_t in_ch, int64_t k) {
  Tensor w({out_ch, in_ch * k * k});
  const double sigma = std::sqrt(2.0 / static_cast<double>(in_ch * k * k));
  for (int64_t i = 0; i < w.numel(); ++i) w.data()[i] = static_cast<Scalar>(sigma * rng.normal());
  return w;
}

Layer conv_layer(const std::string& name, Tensor w, Tensor b, int64_t k, int64_t stride, int64_t pad) {
  Layer l;
  l.kind = Layer::Kind::Conv;
  l.name = name;
  l.w = std::move(w);
  l.b = std::move(b);
  l.kernel = k;
  l.stride = stride;
  l.pad = pad;
  return l;
}

Layer act_layer(Layer::Kind kind, double slope = 0.2) {
  Layer l;
  l.kind = kind;
  l.slope = slope;
  return l;
}

}  // namespace

FeatureExtractor FeatureExtractor::desk(const std::string& tag, uint64_t seed) {
  check(tag == "desk-shallow" || tag == "desk-mid" || tag == "desk-deep",
        "feature extractor: unknown desk tag '" + tag + "'");
  Rng rng(seed ^ 0x5eedfacedeadbeefULL);
  FeatureExtractor fx;
  fx.id = "desk";
  fx.tag = tag;
  fx.in_channels = 1;
  fx.layers.push_back(conv_layer("desk-shallow", seeded_conv_weight(rng, 16, 1, 3), Tensor({16}), 3, 1, 1));
  fx.layers.push_back(act_layer(Layer::Kind::LRelu));
  fx.layers.push_back(conv_layer("desk-mid", seeded_conv_weight(rng, 32, 16, 3), Tensor({32}), 3, 2, 1));
  fx.layers.push_back(act_layer(Layer::Kind::LRelu));
  fx.layers.push_back(conv_layer("desk-deep", seeded_conv_weight(rng, 32, 32, 3), Tensor({32}), 3, 1, 1));
  fx.validate();
  return fx;
}

FeatureExtractor FeatureExtractor::from_archive(const std::string& path, const std::string& tag) {
  const io::Archive a = io::read_archive(path);
  const std::string layers_json = a.meta("layers");
  check(!layers_json.empty(), "feature extractor: archive '" + path + "' has no 'layers' metadata");
  nlohmann::json spec;
  try {
    spec = nlohmann::json::parse(layers_json);
  } catch (const std::exception& e) {
    fail("feature extractor: archive '" + path + "' has malformed 'layers' metadata: " + e.what());
  }
  check(spec.is_array(), "feature extractor: 'layers' metadata must be a JSON array");

  FeatureExtractor fx;
  fx.id = a.meta("id", path);
  fx.tag = tag;
  fx.in_channels = std::stoll(a.meta("in_channels", "1"));
  for (const auto& e : spec) {
    const std::string op = e.at("op").get<std::string>();
    if (op == "conv") {
      const std::string name = e.at("name").get<std::string>();
      Tensor w = a.require(name + ".weight");
      Tensor b = a.require(name + ".bias");
      const int64_t k = e.value("kernel", 3);
      fx.layers.push_back(conv_layer(name, std::move(w), std::move(b), k,
                                     e.value("stride", 1), e.value("pad", (k - 1) / 2)));
    } else if (op == "lrelu") {
      fx.layers.push_back(act_layer(Layer::Kind::LRelu, e.value("slope", 0.2)));
    } else if (op == "relu") {
      fx.layers.push_back(act_layer(Layer::Kind::Relu));
    } else if (op == "maxpool") {
      fx.layers.push_back(act_layer(Layer::Kind::MaxPool));
    } else {
      fail("feature extractor: archive '" + path + "' has unknown layer op '" + op + "'");
    }
  }
  fx.validate();
  return fx;
}

int64_t FeatureExtractor::feature_channels() const {
  for (const Layer& l : layers)
    if (l.kind == Layer::Kind::Conv && l.name == tag) return l.w.dim(0);
  fail("feature extractor: tag '" + tag + "' does not name a conv layer");
}

void FeatureExtractor::validate() const {
  check(in_channels >= 1, "feature extractor: in_channels must be positive");
  check(!layers.empty(), "feature extractor: empty layer list");
  int64_t ch = in_channels;
  bool seen_tag = false;
  for (const Layer& l : layers) {
    if (l.kind != Layer::Kind::Conv) continue;
    check(l.w.ndim() == 2 && l.b.ndim() == 1 && l.b.dim(0) == l.w.dim(0),
          "feature extractor: conv '" + l.name + "' has inconsistent weight/bias shapes");
    check(l.w.dim(1) == ch * l.kernel * l.kernel,
          "feature extractor: conv '" + l.name + "' expects " + std::to_string(l.w.dim(1) / (l.kernel * l.kernel)) +
              " input channels but gets " + std::to_string(ch));
    check(l.stride >= 1 && l.pad >= 0 && l.kernel >= 1, "feature extractor: conv '" + l.name + "' has bad geometry");
    ch = l.w.dim(0);
    if (l.name == tag) seen_tag = true;
  }
  check(seen_tag, "feature extractor: tag '" + tag + "' does not name a conv layer");
}

FeatureGraph::FeatureGraph(ad::Tape& tape, const FeatureExtractor& fx) : tape_(tape), fx_(fx) {
  fx_.validate();
  for (const Layer& l : fx_.layers) {
    if (l.kind == Layer::Kind::Conv)
      params_.emplace_back(tape_.leaf(l.w), tape_.leaf(l.b));
    else
      params_.emplace_back(-1, -1);
  }
}

int FeatureGraph::features(int x) {
  const Tensor& xv = tape_.val(x);
  check(xv.ndim() == 4, "feature graph: want [N,C,H,W]");
  int cur = x;
  if (xv.dim(1) != fx_.in_channels) {
    check(xv.dim(1) == 1, "feature graph: input has " + std::to_string(xv.dim(1)) +
                              " channels, extractor wants " + std::to_string(fx_.in_channels));
    cur = tape_.repeat_ch(cur, fx_.in_channels);
  }
  for (size_t i = 0; i < fx_.layers.size(); ++i) {
    const Layer& l = fx_.layers[i];
    switch (l.kind) {
      case Layer::Kind::Conv: {
        const Tensor& v = tape_.val(cur);
        const auto g = kern::ConvGeom::make(v.dim(0), v.dim(1), v.dim(2), v.dim(3),
                                            l.kernel, l.kernel, l.stride, l.pad);
        const int cols = tape_.im2col(cur, g);
        int y = tape_.matmul(cols, tape_.transpose(params_[i].first));
        y = tape_.add(y, tape_.tile_rows(params_[i].second, g.rows()));
        cur = tape_.cols_to_image(y, g.N, l.w.dim(0), g.oh, g.ow);
        if (l.name == fx_.tag) return cur;
        break;
      }
      case Layer::Kind::LRelu:
        cur = tape_.leaky_relu(cur, l.slope);
        break;
      case Layer::Kind::Relu:
        cur = tape_.leaky_relu(cur, 0.0);
        break;
      case Layer::Kind::MaxPool:
        cur = tape_.maxpool2(cur);
        break;
    }
  }
  fail("feature graph: tag '" + fx_.tag + "' not reached");
}

Tensor run_features(const FeatureExtractor& fx, const Tensor& x) {
  Tensor x4 = x;
  if (x.ndim() == 3) x4 = x.reshaped({1, x.dim(0), x.dim(1), x.dim(2)});
  ad::Tape tape;
  FeatureGraph fg(tape, fx);
  const int out = fg.features(tape.leaf(x4));
  Tensor r = tape.val(out);
  if (x.ndim() == 3) r = r.reshaped({r.dim(1), r.dim(2), r.dim(3)});
  return r;
}

Tensor embed_slice(const FeatureExtractor& fx, const Tensor& slice) {
  Tensor x = slice;
  if (x.ndim() == 2) x = x.reshaped({1, x.dim(0), x.dim(1)});
  check(x.ndim() == 3 && x.dim(0) == 1, "embed_slice: want a single-channel [H,W] slice");
  const Tensor f = run_features(fx, x);  // [F,h,w]
  Tensor out({f.dim(0)});
  const int64_t hw = f.dim(1) * f.dim(2);
  for (int64_t c = 0; c < f.dim(0); ++c) {
    Scalar s = 0;
    for (int64_t j = 0; j < hw; ++j) s += f.data()[c * hw + j];
    out.data()[c] = s / static_cast<Scalar>(hw);
  }
  return out;
}

}  // namespace miassr::model
