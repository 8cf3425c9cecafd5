#include "miassr/graph.hpp"

#include <cmath>

namespace miassr::ad {

namespace {

template <class F>
void ew_loop(int64_t n, F&& f) {
#pragma omp parallel for schedule(static) if (n > 16384)
  for (int64_t i = 0; i < n; ++i) f(i);
}

}  // namespace

int Tape::push(Node n) {
  nodes_.push_back(std::move(n));
  return static_cast<int>(nodes_.size()) - 1;
}

int Tape::leaf(Tensor v, bool requires_grad) {
  Node n;
  n.op = Op::Leaf;
  n.rg = requires_grad;
  n.value = std::move(v);
  return push(std::move(n));
}

int Tape::binary_same_shape(Op op, int a, int b) {
  const Tensor& ta = nodes_[a].value;
  const Tensor& tb = nodes_[b].value;
  check(ta.same_shape(tb), "tape: elementwise op on mismatched shapes " + shape_str(ta.shape()) + " vs " +
                               shape_str(tb.shape()));
  Node n;
  n.op = op;
  n.in = {a, b};
  n.rg = nodes_[a].rg || nodes_[b].rg;
  n.value = Tensor(ta.shape());
  Scalar* o = n.value.data();
  const Scalar* x = ta.data();
  const Scalar* y = tb.data();
  const int64_t cnt = ta.numel();
  switch (op) {
    case Op::Add: ew_loop(cnt, [&](int64_t i) { o[i] = x[i] + y[i]; }); break;
    case Op::Sub: ew_loop(cnt, [&](int64_t i) { o[i] = x[i] - y[i]; }); break;
    case Op::Mul: ew_loop(cnt, [&](int64_t i) { o[i] = x[i] * y[i]; }); break;
    case Op::Div: ew_loop(cnt, [&](int64_t i) { o[i] = x[i] / y[i]; }); break;
    default: fail("tape: bad binary op");
  }
  return push(std::move(n));
}

int Tape::add(int a, int b) { return binary_same_shape(Op::Add, a, b); }
int Tape::sub(int a, int b) { return binary_same_shape(Op::Sub, a, b); }
int Tape::mul(int a, int b) { return binary_same_shape(Op::Mul, a, b); }
int Tape::div(int a, int b) { return binary_same_shape(Op::Div, a, b); }

int Tape::unary_like(Op op, int a, double c0) {
  const Tensor& ta = nodes_[a].value;
  Node n;
  n.op = op;
  n.in = {a, -1};
  n.c0 = c0;
  n.rg = nodes_[a].rg;
  n.value = Tensor(ta.shape());
  Scalar* o = n.value.data();
  const Scalar* x = ta.data();
  const int64_t cnt = ta.numel();
  switch (op) {
    case Op::Neg: ew_loop(cnt, [&](int64_t i) { o[i] = -x[i]; }); break;
    case Op::Scale: ew_loop(cnt, [&](int64_t i) { o[i] = static_cast<Scalar>(c0) * x[i]; }); break;
    case Op::AddC: ew_loop(cnt, [&](int64_t i) { o[i] = x[i] + static_cast<Scalar>(c0); }); break;
    case Op::LeakyRelu:
      ew_loop(cnt, [&](int64_t i) { o[i] = x[i] >= 0 ? x[i] : static_cast<Scalar>(c0) * x[i]; });
      break;
    case Op::LreluGate:
      ew_loop(cnt, [&](int64_t i) { o[i] = x[i] >= 0 ? Scalar(1) : static_cast<Scalar>(c0); });
      n.rg = false;
      break;
    case Op::Sigmoid: ew_loop(cnt, [&](int64_t i) { o[i] = Scalar(1) / (Scalar(1) + std::exp(-x[i])); }); break;
    case Op::Log: ew_loop(cnt, [&](int64_t i) { o[i] = std::log(x[i]); }); break;
    case Op::ClampMin:
      ew_loop(cnt, [&](int64_t i) { o[i] = x[i] > static_cast<Scalar>(c0) ? x[i] : static_cast<Scalar>(c0); });
      break;
    case Op::StepGate:
      ew_loop(cnt, [&](int64_t i) { o[i] = x[i] > static_cast<Scalar>(c0) ? Scalar(1) : Scalar(0); });
      n.rg = false;
      break;
    case Op::Abs: ew_loop(cnt, [&](int64_t i) { o[i] = std::abs(x[i]); }); break;
    case Op::SignGate:
      ew_loop(cnt, [&](int64_t i) { o[i] = x[i] > 0 ? Scalar(1) : (x[i] < 0 ? Scalar(-1) : Scalar(0)); });
      n.rg = false;
      break;
    case Op::Sqrt: ew_loop(cnt, [&](int64_t i) { o[i] = std::sqrt(x[i]); }); break;
    default: fail("tape: bad unary op");
  }
  return push(std::move(n));
}

int Tape::neg(int a) { return unary_like(Op::Neg, a); }
int Tape::scale(int a, double c) { return unary_like(Op::Scale, a, c); }
int Tape::add_const(int a, double c) { return unary_like(Op::AddC, a, c); }
int Tape::leaky_relu(int x, double slope) { return unary_like(Op::LeakyRelu, x, slope); }
int Tape::sigmoid(int x) { return unary_like(Op::Sigmoid, x); }
int Tape::clamp_min(int x, double c) { return unary_like(Op::ClampMin, x, c); }
int Tape::abs_(int x) { return unary_like(Op::Abs, x); }
int Tape::sqrt_(int x) { return unary_like(Op::Sqrt, x); }

int Tape::log_clamped(int x, double eps) { return unary_like(Op::Log, clamp_min(x, eps)); }

int Tape::matmul(int a, int b) {
  const Tensor& ta = nodes_[a].value;
  const Tensor& tb = nodes_[b].value;
  check(ta.ndim() == 2 && tb.ndim() == 2 && ta.dim(1) == tb.dim(0),
        "tape: matmul shape mismatch " + shape_str(ta.shape()) + " x " + shape_str(tb.shape()));
  Node n;
  n.op = Op::Matmul;
  n.in = {a, b};
  n.rg = nodes_[a].rg || nodes_[b].rg;
  n.value = Tensor({ta.dim(0), tb.dim(1)});
  kern::matmul(ta.data(), tb.data(), n.value.data(), ta.dim(0), ta.dim(1), tb.dim(1));
  return push(std::move(n));
}

int Tape::transpose(int a) {
  const Tensor& ta = nodes_[a].value;
  check(ta.ndim() == 2, "tape: transpose wants a 2-d tensor");
  Node n;
  n.op = Op::Transpose;
  n.in = {a, -1};
  n.rg = nodes_[a].rg;
  n.value = Tensor({ta.dim(1), ta.dim(0)});
  const int64_t R = ta.dim(0), C = ta.dim(1);
  Scalar* o = n.value.data();
  const Scalar* x = ta.data();
  ew_loop(R * C, [&](int64_t t) {
    const int64_t i = t / R, j = t % R;  // out index [C,R]
    o[t] = x[j * C + i];
  });
  return push(std::move(n));
}

int Tape::bmm(int a, int b) {
  const Tensor& ta = nodes_[a].value;
  const Tensor& tb = nodes_[b].value;
  check(ta.ndim() == 3 && tb.ndim() == 3 && ta.dim(0) == tb.dim(0) && ta.dim(2) == tb.dim(1),
        "tape: bmm shape mismatch " + shape_str(ta.shape()) + " x " + shape_str(tb.shape()));
  Node n;
  n.op = Op::Bmm;
  n.in = {a, b};
  n.rg = nodes_[a].rg || nodes_[b].rg;
  n.value = Tensor({ta.dim(0), ta.dim(1), tb.dim(2)});
  kern::bmm(ta.data(), tb.data(), n.value.data(), ta.dim(0), ta.dim(1), ta.dim(2), tb.dim(2));
  return push(std::move(n));
}

int Tape::permute3(int a, int p0, int p1, int p2) {
  const Tensor& ta = nodes_[a].value;
  check(ta.ndim() == 3, "tape: permute3 wants a 3-d tensor");
  Node n;
  n.op = Op::Permute3;
  n.in = {a, -1};
  n.perm = {p0, p1, p2};
  n.rg = nodes_[a].rg;
  const int64_t d[3] = {ta.dim(0), ta.dim(1), ta.dim(2)};
  n.value = Tensor({d[p0], d[p1], d[p2]});
  const int p[3] = {p0, p1, p2};
  kern::permute3(ta.data(), n.value.data(), d, p);
  return push(std::move(n));
}

int Tape::reshape(int a, Shape s) {
  const Tensor& ta = nodes_[a].value;
  Node n;
  n.op = Op::Reshape;
  n.in = {a, -1};
  n.aux_shape = ta.shape();
  n.rg = nodes_[a].rg;
  n.value = ta.reshaped(std::move(s));
  return push(std::move(n));
}

int Tape::im2col(int x, const kern::ConvGeom& g) {
  const Tensor& tx = nodes_[x].value;
  check(tx.ndim() == 4 && tx.dim(0) == g.N && tx.dim(1) == g.C && tx.dim(2) == g.H && tx.dim(3) == g.W,
        "tape: im2col input shape does not match geometry");
  Node n;
  n.op = Op::Im2col;
  n.in = {x, -1};
  n.geom = g;
  n.rg = nodes_[x].rg;
  n.value = Tensor({g.rows(), g.cols()});
  kern::im2col(tx.data(), n.value.data(), g);
  return push(std::move(n));
}

int Tape::col2im_adj(int cols, const kern::ConvGeom& g) {
  const Tensor& tc = nodes_[cols].value;
  check(tc.ndim() == 2 && tc.dim(0) == g.rows() && tc.dim(1) == g.cols(),
        "tape: col2im input shape does not match geometry");
  Node n;
  n.op = Op::Col2imAdj;
  n.in = {cols, -1};
  n.geom = g;
  n.rg = nodes_[cols].rg;
  n.value = Tensor({g.N, g.C, g.H, g.W});
  kern::col2im(tc.data(), n.value.data(), g);
  return push(std::move(n));
}

int Tape::cols_to_image(int y, int64_t N, int64_t K, int64_t oh, int64_t ow) {
  const Tensor& ty = nodes_[y].value;
  check(ty.ndim() == 2 && ty.dim(0) == N * oh * ow && ty.dim(1) == K, "tape: cols_to_image shape mismatch");
  Node n;
  n.op = Op::ColsToImage;
  n.in = {y, -1};
  n.rg = nodes_[y].rg;
  n.value = Tensor({N, K, oh, ow});
  kern::cols_to_image(ty.data(), n.value.data(), N, K, oh, ow);
  return push(std::move(n));
}

int Tape::image_to_cols(int img) {
  const Tensor& ti = nodes_[img].value;
  check(ti.ndim() == 4, "tape: image_to_cols wants [N,K,oh,ow]");
  const int64_t N = ti.dim(0), K = ti.dim(1), oh = ti.dim(2), ow = ti.dim(3);
  Node n;
  n.op = Op::ImageToCols;
  n.in = {img, -1};
  n.aux_shape = ti.shape();
  n.rg = nodes_[img].rg;
  n.value = Tensor({N * oh * ow, K});
  kern::image_to_cols(ti.data(), n.value.data(), N, K, oh, ow);
  return push(std::move(n));
}

int Tape::gather_neigh(int x, std::shared_ptr<const kern::NeighTable> tbl) {
  const Tensor& tx = nodes_[x].value;
  check(tx.ndim() == 4 && tx.dim(2) == tbl->H && tx.dim(3) == tbl->W, "tape: gather_neigh shape mismatch");
  const int64_t N = tx.dim(0), C = tx.dim(1);
  Node n;
  n.op = Op::GatherNeigh;
  n.in = {x, -1};
  n.tbl = tbl;
  n.aux_shape = tx.shape();
  n.rg = nodes_[x].rg;
  n.value = Tensor({N, tbl->P, C * tbl->k * tbl->k});
  kern::gather_neigh(tx.data(), n.value.data(), N, C, *tbl);
  return push(std::move(n));
}

int Tape::scatter_neigh_adj(int q, std::shared_ptr<const kern::NeighTable> tbl, Shape out_shape) {
  const Tensor& tq = nodes_[q].value;
  check(out_shape.size() == 4, "tape: scatter_neigh wants a 4-d output shape");
  const int64_t N = out_shape[0], C = out_shape[1];
  check(tq.ndim() == 3 && tq.dim(0) == N && tq.dim(1) == tbl->P && tq.dim(2) == C * tbl->k * tbl->k,
        "tape: scatter_neigh shape mismatch");
  Node n;
  n.op = Op::ScatterNeighAdj;
  n.in = {q, -1};
  n.tbl = tbl;
  n.aux_shape = out_shape;
  n.rg = nodes_[q].rg;
  n.value = Tensor(out_shape);
  kern::scatter_neigh(tq.data(), n.value.data(), N, C, *tbl);
  return push(std::move(n));
}

int Tape::sum_all(int x) {
  const Tensor& tx = nodes_[x].value;
  Node n;
  n.op = Op::SumAll;
  n.in = {x, -1};
  n.aux_shape = tx.shape();
  n.rg = nodes_[x].rg;
  n.value = Tensor::scalar(kern::reduce_sum(tx.data(), tx.numel()));
  return push(std::move(n));
}

int Tape::mean_all(int x) {
  const int64_t cnt = nodes_[x].value.numel();
  return scale(sum_all(x), 1.0 / static_cast<double>(cnt));
}

int Tape::fill_like(int s, Shape shape) {
  const Tensor& ts = nodes_[s].value;
  check(ts.numel() == 1, "tape: fill_like wants a scalar source");
  Node n;
  n.op = Op::FillLike;
  n.in = {s, -1};
  n.rg = nodes_[s].rg;
  n.value = Tensor::full(shape, ts[0]);
  return push(std::move(n));
}

int Tape::sum_cols(int x) {
  const Tensor& tx = nodes_[x].value;
  check(tx.ndim() == 2, "tape: sum_cols wants [R,C]");
  const int64_t R = tx.dim(0), C = tx.dim(1);
  Node n;
  n.op = Op::SumCols;
  n.in = {x, -1};
  n.c0 = static_cast<double>(R);
  n.rg = nodes_[x].rg;
  n.value = Tensor({C});
  Scalar* o = n.value.data();
  const Scalar* p = tx.data();
  for (int64_t c = 0; c < C; ++c) {
    Scalar s = 0;
    for (int64_t r = 0; r < R; ++r) s += p[r * C + c];
    o[c] = s;
  }
  return push(std::move(n));
}

int Tape::tile_rows(int v, int64_t R) {
  const Tensor& tv = nodes_[v].value;
  check(tv.ndim() == 1, "tape: tile_rows wants [C]");
  const int64_t C = tv.dim(0);
  Node n;
  n.op = Op::TileRows;
  n.in = {v, -1};
  n.rg = nodes_[v].rg;
  n.value = Tensor({R, C});
  Scalar* o = n.value.data();
  const Scalar* p = tv.data();
  ew_loop(R * C, [&](int64_t t) { o[t] = p[t % C]; });
  return push(std::move(n));
}

int Tape::sum_per_sample(int x) {
  const Tensor& tx = nodes_[x].value;
  check(tx.ndim() >= 2, "tape: sum_per_sample wants [N, ...]");
  const int64_t N = tx.dim(0);
  const int64_t rest = tx.numel() / N;
  Node n;
  n.op = Op::SumPerSample;
  n.in = {x, -1};
  n.aux_shape = tx.shape();
  n.rg = nodes_[x].rg;
  n.value = Tensor({N});
  Scalar* o = n.value.data();
  const Scalar* p = tx.data();
#pragma omp parallel for schedule(static) if (N > 1 && rest > 4096)
  for (int64_t i = 0; i < N; ++i) {
    Scalar s = 0;
    for (int64_t j = 0; j < rest; ++j) s += p[i * rest + j];
    o[i] = s;
  }
  return push(std::move(n));
}

int Tape::tile_per_sample(int v, Shape shape) {
  const Tensor& tv = nodes_[v].value;
  check(tv.ndim() == 1 && !shape.empty() && shape[0] == tv.dim(0), "tape: tile_per_sample shape mismatch");
  Node n;
  n.op = Op::TilePerSample;
  n.in = {v, -1};
  n.rg = nodes_[v].rg;
  n.value = Tensor(shape);
  const int64_t rest = n.value.numel() / shape[0];
  Scalar* o = n.value.data();
  const Scalar* p = tv.data();
  ew_loop(n.value.numel(), [&](int64_t t) { o[t] = p[t / rest]; });
  return push(std::move(n));
}

int Tape::sum_spatial(int x) {
  const Tensor& tx = nodes_[x].value;
  check(tx.ndim() == 4, "tape: sum_spatial wants [N,C,H,W]");
  const int64_t N = tx.dim(0), C = tx.dim(1), HW = tx.dim(2) * tx.dim(3);
  Node n;
  n.op = Op::SumSpatial;
  n.in = {x, -1};
  n.aux_shape = tx.shape();
  n.rg = nodes_[x].rg;
  n.value = Tensor({N, C});
  Scalar* o = n.value.data();
  const Scalar* p = tx.data();
#pragma omp parallel for schedule(static) if (N * C > 1 && HW > 4096)
  for (int64_t t = 0; t < N * C; ++t) {
    Scalar s = 0;
    for (int64_t j = 0; j < HW; ++j) s += p[t * HW + j];
    o[t] = s;
  }
  return push(std::move(n));
}

int Tape::tile_spatial(int v, int64_t H, int64_t W) {
  const Tensor& tv = nodes_[v].value;
  check(tv.ndim() == 2, "tape: tile_spatial wants [N,C]");
  Node n;
  n.op = Op::TileSpatial;
  n.in = {v, -1};
  n.rg = nodes_[v].rg;
  n.value = Tensor({tv.dim(0), tv.dim(1), H, W});
  const int64_t HW = H * W;
  Scalar* o = n.value.data();
  const Scalar* p = tv.data();
  ew_loop(n.value.numel(), [&](int64_t t) { o[t] = p[t / HW]; });
  return push(std::move(n));
}

int Tape::repeat_ch(int x, int64_t r) {
  const Tensor& tx = nodes_[x].value;
  check(tx.ndim() == 4 && r >= 1, "tape: repeat_ch wants [N,C,H,W]");
  const int64_t N = tx.dim(0), C = tx.dim(1), HW = tx.dim(2) * tx.dim(3);
  Node n;
  n.op = Op::RepeatCh;
  n.in = {x, -1};
  n.c0 = static_cast<double>(r);
  n.rg = nodes_[x].rg;
  n.value = Tensor({N, C * r, tx.dim(2), tx.dim(3)});
  Scalar* o = n.value.data();
  const Scalar* p = tx.data();
  ew_loop(n.value.numel(), [&](int64_t t) {
    const int64_t nrc = t / HW;
    const int64_t j = t % HW;
    const int64_t nn = nrc / (C * r);
    const int64_t c = (nrc % (C * r)) / r;
    o[t] = p[(nn * C + c) * HW + j];
  });
  return push(std::move(n));
}

int Tape::slice_ch(int x, int64_t c0, int64_t count) {
  const Tensor& tx = nodes_[x].value;
  check(tx.ndim() == 4, "tape: slice_ch wants [N,C,H,W]");
  check(c0 >= 0 && count >= 1 && c0 + count <= tx.dim(1), "tape: slice_ch channel range out of bounds");
  const int64_t N = tx.dim(0), C = tx.dim(1), HW = tx.dim(2) * tx.dim(3);
  Node n;
  n.op = Op::SliceCh;
  n.in = {x, -1};
  n.c0 = static_cast<double>(c0);
  n.aux_shape = tx.shape();
  n.rg = nodes_[x].rg;
  n.value = Tensor({N, count, tx.dim(2), tx.dim(3)});
  Scalar* o = n.value.data();
  const Scalar* p = tx.data();
  ew_loop(n.value.numel(), [&](int64_t t) {
    const int64_t ncc = t / HW;
    const int64_t j = t % HW;
    const int64_t nn = ncc / count;
    const int64_t c = ncc % count;
    o[t] = p[(nn * C + c0 + c) * HW + j];
  });
  return push(std::move(n));
}

int Tape::maxpool2(int x) {
  const Tensor& tx = nodes_[x].value;
  check(tx.ndim() == 4 && tx.dim(2) >= 2 && tx.dim(3) >= 2, "tape: maxpool2 wants [N,C,H>=2,W>=2]");
  const int64_t N = tx.dim(0), C = tx.dim(1), H = tx.dim(2), W = tx.dim(3);
  Node n;
  n.op = Op::MaxPool2;
  n.in = {x, -1};
  n.aux_shape = tx.shape();
  n.rg = nodes_[x].rg;
  n.value = Tensor({N, C, H / 2, W / 2});
  auto am = std::make_shared<std::vector<int64_t>>(n.value.numel());
  kern::maxpool2(tx.data(), n.value.data(), am->data(), N, C, H, W);
  n.idx = std::move(am);
  return push(std::move(n));
}

std::vector<int> Tape::gradients(int root, const std::vector<int>& wrt) {
  check(root >= 0 && root < static_cast<int>(nodes_.size()), "gradients: bad root id");
  check(nodes_[root].value.numel() == 1, "gradients: root must be scalar");
  const size_t n0 = nodes_.size();
  std::vector<uint8_t> reach(n0, 0);
  for (int w : wrt) {
    check(w >= 0 && w < static_cast<int>(n0), "gradients: bad wrt id");
    check(nodes_[w].rg, "gradients: wrt node is not differentiable (requires_grad is off)");
    reach[w] = 1;
  }
  for (size_t i = 0; i < n0; ++i) {
    if (reach[i]) continue;
    for (int inp : nodes_[i].in)
      if (inp >= 0 && reach[inp]) {
        reach[i] = 1;
        break;
      }
  }
  std::vector<int> out(wrt.size(), -1);
  if (!reach[root]) return out;

  std::vector<std::vector<int>> contrib(n0);
  std::vector<int> gid(n0, -1);
  contrib[root].push_back(leaf(Tensor::full(nodes_[root].value.shape(), 1.0)));
  for (int i = root; i >= 0; --i) {
    if (contrib[i].empty()) continue;
    int g = contrib[i][0];
    for (size_t j = 1; j < contrib[i].size(); ++j) g = add(g, contrib[i][j]);
    gid[i] = g;
    emit_backward(i, g, reach, contrib);
  }
  for (size_t k = 0; k < wrt.size(); ++k) out[k] = gid[wrt[k]];
  return out;
}

void Tape::emit_backward(int i, int g, const std::vector<uint8_t>& reach, std::vector<std::vector<int>>& contrib) {
  // Copy the descriptor fields (not the value tensor): nodes_ may reallocate
  // while we emit new ops.
  struct Desc {
    Op op;
    std::array<int, 2> in;
    double c0;
    Shape aux_shape;
    kern::ConvGeom geom;
    std::shared_ptr<const kern::NeighTable> tbl;
    std::shared_ptr<const std::vector<int64_t>> idx;
    std::array<int, 3> perm;
  };
  const Desc n{nodes_[i].op,  nodes_[i].in,  nodes_[i].c0,  nodes_[i].aux_shape,
               nodes_[i].geom, nodes_[i].tbl, nodes_[i].idx, nodes_[i].perm};
  auto want = [&](int inp) { return inp >= 0 && static_cast<size_t>(inp) < reach.size() && reach[inp]; };
  auto give = [&](int inp, int grad_node) { contrib[inp].push_back(grad_node); };

  switch (n.op) {
    case Op::Leaf:
    case Op::LreluGate:
    case Op::StepGate:
    case Op::SignGate:
      break;  // no inputs / constant gates
    case Op::Add:
      if (want(n.in[0])) give(n.in[0], g);
      if (want(n.in[1])) give(n.in[1], g);
      break;
    case Op::Sub:
      if (want(n.in[0])) give(n.in[0], g);
      if (want(n.in[1])) give(n.in[1], neg(g));
      break;
    case Op::Mul:
      if (want(n.in[0])) give(n.in[0], mul(g, n.in[1]));
      if (want(n.in[1])) give(n.in[1], mul(g, n.in[0]));
      break;
    case Op::Div:
      // y = a / b ; da = g / b ; db = -g * a / b^2
      if (want(n.in[0])) give(n.in[0], div(g, n.in[1]));
      if (want(n.in[1])) give(n.in[1], neg(div(mul(g, n.in[0]), mul(n.in[1], n.in[1]))));
      break;
    case Op::Neg:
      if (want(n.in[0])) give(n.in[0], neg(g));
      break;
    case Op::Scale:
      if (want(n.in[0])) give(n.in[0], scale(g, n.c0));
      break;
    case Op::AddC:
      if (want(n.in[0])) give(n.in[0], g);
      break;
    case Op::Matmul:
      if (want(n.in[0])) give(n.in[0], matmul(g, transpose(n.in[1])));
      if (want(n.in[1])) give(n.in[1], matmul(transpose(n.in[0]), g));
      break;
    case Op::Transpose:
      if (want(n.in[0])) give(n.in[0], transpose(g));
      break;
    case Op::Bmm:
      if (want(n.in[0])) give(n.in[0], bmm(g, permute3(n.in[1], 0, 2, 1)));
      if (want(n.in[1])) give(n.in[1], bmm(permute3(n.in[0], 0, 2, 1), g));
      break;
    case Op::Permute3:
      if (want(n.in[0])) {
        int inv[3];
        inv[n.perm[0]] = 0;
        inv[n.perm[1]] = 1;
        inv[n.perm[2]] = 2;
        give(n.in[0], permute3(g, inv[0], inv[1], inv[2]));
      }
      break;
    case Op::Reshape:
      if (want(n.in[0])) give(n.in[0], reshape(g, n.aux_shape));
      break;
    case Op::Im2col:
      if (want(n.in[0])) give(n.in[0], col2im_adj(g, n.geom));
      break;
    case Op::Col2imAdj:
      if (want(n.in[0])) give(n.in[0], im2col(g, n.geom));
      break;
    case Op::ColsToImage:
      if (want(n.in[0])) give(n.in[0], image_to_cols(g));
      break;
    case Op::ImageToCols:
      if (want(n.in[0]))
        give(n.in[0], cols_to_image(g, n.aux_shape[0], n.aux_shape[1], n.aux_shape[2], n.aux_shape[3]));
      break;
    case Op::GatherNeigh:
      if (want(n.in[0])) give(n.in[0], scatter_neigh_adj(g, n.tbl, n.aux_shape));
      break;
    case Op::ScatterNeighAdj:
      if (want(n.in[0])) give(n.in[0], gather_neigh(g, n.tbl));
      break;
    case Op::LeakyRelu:
      if (want(n.in[0])) give(n.in[0], mul(g, unary_like(Op::LreluGate, n.in[0], n.c0)));
      break;
    case Op::Sigmoid:
      // dy/dx = y (1 - y), with y this node's own output
      if (want(n.in[0])) give(n.in[0], mul(g, mul(i, add_const(neg(i), 1.0))));
      break;
    case Op::Log:
      if (want(n.in[0])) give(n.in[0], div(g, n.in[0]));
      break;
    case Op::ClampMin:
      if (want(n.in[0])) give(n.in[0], mul(g, unary_like(Op::StepGate, n.in[0], n.c0)));
      break;
    case Op::Abs:
      if (want(n.in[0])) give(n.in[0], mul(g, unary_like(Op::SignGate, n.in[0])));
      break;
    case Op::Sqrt:
      // dy/dx = 1 / (2 sqrt(x)) = 1 / (2 y)
      if (want(n.in[0])) give(n.in[0], div(g, scale(i, 2.0)));
      break;
    case Op::SumAll:
      if (want(n.in[0])) give(n.in[0], fill_like(g, n.aux_shape));
      break;
    case Op::FillLike:
      if (want(n.in[0])) give(n.in[0], sum_all(g));
      break;
    case Op::SumCols:
      if (want(n.in[0])) give(n.in[0], tile_rows(g, static_cast<int64_t>(n.c0)));
      break;
    case Op::TileRows:
      if (want(n.in[0])) give(n.in[0], sum_cols(g));
      break;
    case Op::SumPerSample:
      if (want(n.in[0])) give(n.in[0], tile_per_sample(g, n.aux_shape));
      break;
    case Op::TilePerSample:
      if (want(n.in[0])) give(n.in[0], sum_per_sample(g));
      break;
    case Op::SumSpatial:
      if (want(n.in[0])) give(n.in[0], tile_spatial(g, n.aux_shape[2], n.aux_shape[3]));
      break;
    case Op::TileSpatial:
      if (want(n.in[0])) give(n.in[0], sum_spatial(g));
      break;
    case Op::RepeatCh: {
      if (want(n.in[0])) {
        Node a;
        a.op = Op::SumChGroupsAdj;
        a.in = {g, -1};
        a.c0 = n.c0;
        a.rg = nodes_[g].rg;
        const Tensor& tg = nodes_[g].value;
        const int64_t r = static_cast<int64_t>(n.c0);
        const int64_t N = tg.dim(0), Cr = tg.dim(1), HW = tg.dim(2) * tg.dim(3);
        const int64_t C = Cr / r;
        a.value = Tensor({N, C, tg.dim(2), tg.dim(3)});
        Scalar* o = a.value.data();
        const Scalar* p = tg.data();
        for (int64_t t = 0; t < a.value.numel(); ++t) {
          const int64_t nn = t / (C * HW);
          const int64_t c = (t / HW) % C;
          const int64_t j = t % HW;
          Scalar s = 0;
          for (int64_t q = 0; q < r; ++q) s += p[((nn * Cr) + c * r + q) * HW + j];
          o[t] = s;
        }
        give(n.in[0], push(std::move(a)));
      }
      break;
    }
    case Op::SumChGroupsAdj:
      if (want(n.in[0])) give(n.in[0], repeat_ch(g, static_cast<int64_t>(n.c0)));
      break;
    case Op::SliceCh: {
      if (want(n.in[0])) {
        Node a;
        a.op = Op::PadChAdj;
        a.in = {g, -1};
        a.c0 = n.c0;
        a.aux_shape = n.aux_shape;
        a.rg = nodes_[g].rg;
        const Tensor& tg = nodes_[g].value;
        const int64_t c0 = static_cast<int64_t>(n.c0);
        const int64_t N = tg.dim(0), count = tg.dim(1), HW = tg.dim(2) * tg.dim(3);
        const int64_t C = n.aux_shape[1];
        a.value = Tensor(n.aux_shape);
        Scalar* o = a.value.data();
        const Scalar* p = tg.data();
        ew_loop(N * count * HW, [&](int64_t t) {
          const int64_t ncc = t / HW;
          const int64_t j = t % HW;
          const int64_t nn = ncc / count;
          const int64_t c = ncc % count;
          o[(nn * C + c0 + c) * HW + j] = p[t];
        });
        give(n.in[0], push(std::move(a)));
      }
      break;
    }
    case Op::PadChAdj:
      if (want(n.in[0])) {
        const int64_t count = nodes_[n.in[0]].value.dim(1);
        give(n.in[0], slice_ch(g, static_cast<int64_t>(n.c0), count));
      }
      break;
    case Op::MaxPool2: {
      if (want(n.in[0])) {
        Node a;
        a.op = Op::MaxUnpool2Adj;
        a.in = {g, -1};
        a.idx = n.idx;
        a.aux_shape = n.aux_shape;
        a.rg = nodes_[g].rg;
        a.value = Tensor(n.aux_shape);
        const Tensor& tg = nodes_[g].value;
        Scalar* o = a.value.data();
        for (int64_t t = 0; t < tg.numel(); ++t) o[(*n.idx)[t]] += tg[t];
        give(n.in[0], push(std::move(a)));
      }
      break;
    }
    case Op::MaxUnpool2Adj: {
      if (want(n.in[0])) {
        Node a;
        a.op = Op::MaxGather;
        a.in = {g, -1};
        a.idx = n.idx;
        a.rg = nodes_[g].rg;
        a.value = Tensor(nodes_[n.in[0]].value.shape());
        const Tensor& tg = nodes_[g].value;
        Scalar* o = a.value.data();
        for (int64_t t = 0; t < a.value.numel(); ++t) o[t] = tg[(*n.idx)[t]];
        give(n.in[0], push(std::move(a)));
      }
      break;
    }
    case Op::MaxGather:
      if (want(n.in[0])) {
        Node a;
        a.op = Op::MaxUnpool2Adj;
        a.in = {g, -1};
        a.idx = n.idx;
        a.aux_shape = nodes_[n.in[0]].value.shape();
        a.rg = nodes_[g].rg;
        a.value = Tensor(a.aux_shape);
        const Tensor& tg = nodes_[g].value;
        Scalar* o = a.value.data();
        for (int64_t t = 0; t < tg.numel(); ++t) o[(*n.idx)[t]] += tg[t];
        give(n.in[0], push(std::move(a)));
      }
      break;
  }
}

}  // namespace miassr::ad
