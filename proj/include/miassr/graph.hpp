#pragma once

#include <array>
#include <memory>
#include <vector>

#include "miassr/kernels.hpp"
#include "miassr/tensor.hpp"

namespace miassr::ad {

// Define-by-run reverse-mode autodiff over Tensors.
//
// Every operation executes eagerly and records a node on the tape. The
// backward pass does not write raw gradient buffers: it *emits further tape
// operations*, so a gradient is itself a differentiable function of the tape.
// That closure property is what makes the gradient-penalty term of the
// Wasserstein critic trainable — its loss contains the norm of an input
// gradient, and differentiating it w.r.t. the critic weights means
// backpropagating through the first backward pass.
//
// The primitive set is deliberately small and closed under differentiation:
// convolution is im2col + matmul, the meta upscaler is a neighborhood gather
// + batched matmul, and each linear data-movement op has its adjoint as a
// first-class op. Piecewise-linear gates (leaky-relu slope masks, sign masks,
// clamp masks) are emitted as constant nodes: their a.e.-zero derivative is
// the usual convention.

enum class Op {
  Leaf,
  Add, Sub, Mul, Div, Neg, Scale, AddC,
  Matmul, Transpose, Bmm, Permute3, Reshape,
  Im2col, Col2imAdj, ColsToImage, ImageToCols,
  GatherNeigh, ScatterNeighAdj,
  LeakyRelu, LreluGate, Sigmoid, Log, ClampMin, StepGate, Abs, SignGate, Sqrt,
  SumAll, FillLike, SumCols, TileRows, SumPerSample, TilePerSample, SumSpatial, TileSpatial,
  RepeatCh, SumChGroupsAdj, SliceCh, PadChAdj,
  MaxPool2, MaxUnpool2Adj, MaxGather,
};

struct Node {
  Op op = Op::Leaf;
  std::array<int, 2> in{-1, -1};
  double c0 = 0.0;  // slope / scale / clamp bound / repeat count, op dependent
  Shape aux_shape;  // input shape for ops whose adjoint needs it
  kern::ConvGeom geom{};
  std::shared_ptr<const kern::NeighTable> tbl;
  std::shared_ptr<const std::vector<int64_t>> idx;  // maxpool argmax
  std::array<int, 3> perm{0, 1, 2};
  bool rg = false;  // participates in some gradient
  Tensor value;
};

class Tape {
 public:
  int leaf(Tensor v, bool requires_grad = false);

  // elementwise; shapes must match exactly (broadcast via the tile ops)
  int add(int a, int b);
  int sub(int a, int b);
  int mul(int a, int b);
  int div(int a, int b);
  int neg(int a);
  int scale(int a, double c);
  int add_const(int a, double c);

  int matmul(int a, int b);      // [M,K] x [K,N]
  int transpose(int a);          // [M,N] -> [N,M]
  int bmm(int a, int b);         // [P,M,K] x [P,K,N]
  int permute3(int a, int p0, int p1, int p2);
  int reshape(int a, Shape s);

  int im2col(int x, const kern::ConvGeom& g);
  int col2im_adj(int cols, const kern::ConvGeom& g);
  int cols_to_image(int y, int64_t N, int64_t K, int64_t oh, int64_t ow);
  int image_to_cols(int img);

  int gather_neigh(int x, std::shared_ptr<const kern::NeighTable> tbl);
  int scatter_neigh_adj(int q, std::shared_ptr<const kern::NeighTable> tbl, Shape out_shape);

  int leaky_relu(int x, double slope);
  int sigmoid(int x);
  int clamp_min(int x, double c);
  int log_clamped(int x, double eps);  // log(max(x, eps))
  int abs_(int x);
  int sqrt_(int x);

  int sum_all(int x);                       // -> [1]
  int mean_all(int x);                      // -> [1]
  int fill_like(int s, Shape shape);        // [1] -> shape
  int sum_cols(int x);                      // [R,C] -> [C]
  int tile_rows(int v, int64_t R);          // [C] -> [R,C]
  int sum_per_sample(int x);                // [N, ...] -> [N]
  int tile_per_sample(int v, Shape shape);  // [N] -> [N, ...]
  int sum_spatial(int x);                   // [N,C,H,W] -> [N,C]
  int tile_spatial(int v, int64_t H, int64_t W);
  int repeat_ch(int x, int64_t r);          // [N,C,H,W] -> [N,C*r,H,W]
  int slice_ch(int x, int64_t c0, int64_t count);  // channel range [c0, c0+count)
  int maxpool2(int x);                      // 2x2 stride 2

  const Tensor& val(int id) const { return nodes_[id].value; }
  bool requires_grad(int id) const { return nodes_[id].rg; }
  size_t size() const { return nodes_.size(); }

  // d(root)/d(wrt[i]) for a scalar root. Returns node ids; -1 where root does
  // not depend on the node. The returned nodes are ordinary tape nodes, so
  // they can feed further ops and be differentiated again.
  std::vector<int> gradients(int root, const std::vector<int>& wrt);

 private:
  int push(Node n);
  int binary_same_shape(Op op, int a, int b);
  int unary_like(Op op, int a, double c0 = 0.0);
  void emit_backward(int i, int g, const std::vector<uint8_t>& reach,
                     std::vector<std::vector<int>>& contrib);

  std::vector<Node> nodes_;
};

}  // namespace miassr::ad
