#pragma once

#include <cstdint>
#include <stdexcept>
#include <string>
#include <vector>

namespace miassr {

// Compile-time precision switch. The test suite and its tolerances target the
// double build; the float build exists for speed experiments.
#ifdef MIASSR_SCALAR_FLOAT
using Scalar = float;
#else
using Scalar = double;
#endif

using Shape = std::vector<int64_t>;

[[noreturn]] void fail(const std::string& msg);

inline void check(bool ok, const std::string& msg) {
  if (!ok) fail(msg);
}

int64_t shape_numel(const Shape& s);
std::string shape_str(const Shape& s);

// Dense row-major n-d array. Plain value type: copying copies the buffer.
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), data_(shape_numel(shape_), Scalar(0)) {}
  Tensor(Shape shape, std::vector<Scalar> data) : shape_(std::move(shape)), data_(std::move(data)) {
    check(static_cast<int64_t>(data_.size()) == shape_numel(shape_), "tensor: data size does not match shape " + shape_str(shape_));
  }

  static Tensor zeros(Shape shape) { return Tensor(std::move(shape)); }
  static Tensor full(Shape shape, Scalar v) {
    Tensor t(std::move(shape));
    for (auto& x : t.data_) x = v;
    return t;
  }
  static Tensor scalar(Scalar v) { return full({1}, v); }

  const Shape& shape() const { return shape_; }
  size_t ndim() const { return shape_.size(); }
  int64_t dim(size_t i) const {
    check(i < shape_.size(), "tensor: dim index out of range");
    return shape_[i];
  }
  int64_t numel() const { return static_cast<int64_t>(data_.size()); }
  bool same_shape(const Tensor& o) const { return shape_ == o.shape_; }

  Scalar* data() { return data_.data(); }
  const Scalar* data() const { return data_.data(); }
  Scalar& operator[](int64_t i) { return data_[i]; }
  Scalar operator[](int64_t i) const { return data_[i]; }

  Scalar& at2(int64_t i, int64_t j) { return data_[i * shape_[1] + j]; }
  Scalar at2(int64_t i, int64_t j) const { return data_[i * shape_[1] + j]; }
  Scalar& at3(int64_t i, int64_t j, int64_t k) { return data_[(i * shape_[1] + j) * shape_[2] + k]; }
  Scalar at3(int64_t i, int64_t j, int64_t k) const { return data_[(i * shape_[1] + j) * shape_[2] + k]; }
  Scalar& at4(int64_t i, int64_t j, int64_t k, int64_t l) {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }
  Scalar at4(int64_t i, int64_t j, int64_t k, int64_t l) const {
    return data_[((i * shape_[1] + j) * shape_[2] + k) * shape_[3] + l];
  }

  Tensor reshaped(Shape s) const {
    check(shape_numel(s) == numel(), "tensor: reshape from " + shape_str(shape_) + " to " + shape_str(s) + " changes element count");
    return Tensor(std::move(s), data_);
  }

  bool all_finite() const;
  Scalar min() const;
  Scalar max() const;
  Scalar abs_max() const;

  bool operator==(const Tensor& o) const { return shape_ == o.shape_ && data_ == o.data_; }

 private:
  Shape shape_;
  std::vector<Scalar> data_;
};

// Largest |a-b| over all elements; shapes must match.
Scalar max_abs_diff(const Tensor& a, const Tensor& b);

// max |a-b| / (|b| + eps) over all elements.
Scalar max_rel_diff(const Tensor& a, const Tensor& b, Scalar eps = 1e-12);

}  // namespace miassr
