#include "miassr/tensor.hpp"

#include <cmath>
#include <sstream>

namespace miassr {

void fail(const std::string& msg) { throw std::runtime_error(msg); }

int64_t shape_numel(const Shape& s) {
  int64_t n = 1;
  for (int64_t d : s) {
    check(d >= 0, "tensor: negative dimension in shape " + shape_str(s));
    n *= d;
  }
  return n;
}

std::string shape_str(const Shape& s) {
  std::ostringstream os;
  os << "[";
  for (size_t i = 0; i < s.size(); ++i) os << (i ? ", " : "") << s[i];
  os << "]";
  return os.str();
}

bool Tensor::all_finite() const {
  for (Scalar v : data_)
    if (!std::isfinite(v)) return false;
  return true;
}

Scalar Tensor::min() const {
  check(numel() > 0, "tensor: min of empty tensor");
  Scalar m = data_[0];
  for (Scalar v : data_) m = std::min(m, v);
  return m;
}

Scalar Tensor::max() const {
  check(numel() > 0, "tensor: max of empty tensor");
  Scalar m = data_[0];
  for (Scalar v : data_) m = std::max(m, v);
  return m;
}

Scalar Tensor::abs_max() const {
  Scalar m = 0;
  for (Scalar v : data_) m = std::max(m, std::abs(v));
  return m;
}

Scalar max_abs_diff(const Tensor& a, const Tensor& b) {
  check(a.same_shape(b), "max_abs_diff: shape mismatch " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
  Scalar m = 0;
  for (int64_t i = 0; i < a.numel(); ++i) m = std::max(m, std::abs(a[i] - b[i]));
  return m;
}

Scalar max_rel_diff(const Tensor& a, const Tensor& b, Scalar eps) {
  check(a.same_shape(b), "max_rel_diff: shape mismatch");
  Scalar m = 0;
  for (int64_t i = 0; i < a.numel(); ++i) {
    Scalar d = std::abs(a[i] - b[i]) / (std::abs(b[i]) + eps);
    m = std::max(m, d);
  }
  return m;
}

}  // namespace miassr
