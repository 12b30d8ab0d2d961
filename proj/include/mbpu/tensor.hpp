// Dense row-major tensor of 64-bit floats with shape metadata.
#ifndef MBPU_TENSOR_HPP
#define MBPU_TENSOR_HPP

#include <cstddef>
#include <memory>
#include <numeric>
#include <vector>

#include "mbpu/common.hpp"

namespace mbpu {

class Tape;

using Shape = std::vector<std::size_t>;

inline std::size_t shape_numel(const Shape& s) {
  std::size_t n = 1;
  for (std::size_t d : s) n *= d;
  return n;
}

inline std::string shape_str(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) {
    if (i) out += "x";
    out += std::to_string(s[i]);
  }
  return out + "]";
}

/// Value-semantic tensor. The data buffer is shared between copies; every op
/// allocates a fresh output buffer, so tensors behave as immutable values once
/// they participate in taped computation. A rank-0 tensor is a scalar.
class Tensor {
 public:
  Tensor() : data_(std::make_shared<std::vector<double>>()) {}

  explicit Tensor(Shape shape)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(shape_numel(shape_), 0.0)) {}

  Tensor(Shape shape, std::vector<double> values)
      : shape_(std::move(shape)),
        data_(std::make_shared<std::vector<double>>(std::move(values))) {
    require(data_->size() == shape_numel(shape_), "tensor: data length ",
            data_->size(), " does not match shape ", shape_str(shape_));
  }

  static Tensor scalar(double v) { return Tensor({}, {v}); }

  static Tensor full(Shape shape, double v) {
    Tensor t(std::move(shape));
    for (double& x : *t.data_) x = v;
    return t;
  }

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t size() const { return data_->size(); }
  std::size_t dim(std::size_t i) const { return shape_.at(i); }

  double* data() { return data_->data(); }
  const double* data() const { return data_->data(); }
  const std::shared_ptr<std::vector<double>>& buffer() const { return data_; }

  double operator[](std::size_t i) const { return (*data_)[i]; }
  double& operator[](std::size_t i) { return (*data_)[i]; }

  /// Scalar read; errors unless the tensor holds exactly one value.
  double value() const {
    require(size() == 1, "tensor: value() called on shape ", shape_str(shape_));
    return (*data_)[0];
  }

  bool finite() const {
    for (double v : *data_)
      if (!std::isfinite(v)) return false;
    return true;
  }

  bool on_tape() const { return tape_ != nullptr; }
  Tape* tape() const { return tape_; }
  int slot() const { return slot_; }

  /// Same values, detached from any tape.
  Tensor detached() const {
    Tensor t;
    t.shape_ = shape_;
    t.data_ = std::make_shared<std::vector<double>>(*data_);
    return t;
  }

 private:
  friend class Tape;
  Shape shape_;
  std::shared_ptr<std::vector<double>> data_;
  Tape* tape_ = nullptr;
  int slot_ = -1;
};

}  // namespace mbpu

#endif  // MBPU_TENSOR_HPP
