#ifndef ACFNET_NN_TENSOR_HPP
#define ACFNET_NN_TENSOR_HPP

#include <functional>
#include <numeric>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "acfnet/core.hpp"

namespace acfnet::nn {

using Index = Eigen::Index;
using Shape = std::vector<Index>;

inline Index shape_size(const Shape& s) {
  return std::accumulate(s.begin(), s.end(), Index{1}, std::multiplies<>());
}

inline std::string shape_string(const Shape& s) {
  std::string out = "[";
  for (std::size_t i = 0; i < s.size(); ++i) out += (i ? "," : "") + std::to_string(s[i]);
  return out + "]";
}

// Dense row-major tensor. Activations are [B, C, H, W] or [B, F].
template <typename Scalar>
class Tensor {
 public:
  using Vector = Eigen::Matrix<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  Tensor() = default;
  explicit Tensor(Shape shape) : shape_(std::move(shape)), values_(Vector::Zero(shape_size(shape_))) {}
  Tensor(Shape shape, Vector values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_size(shape_)) throw ShapeError("tensor data does not match shape");
  }

  const Shape& shape() const { return shape_; }
  Index dim(std::size_t axis) const { return shape_.at(axis); }
  Index rank() const { return static_cast<Index>(shape_.size()); }
  Index size() const { return values_.size(); }

  Vector& values() { return values_; }
  const Vector& values() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }

  Scalar& at(Index b, Index c, Index h, Index w) {
    return values_[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }
  Scalar at(Index b, Index c, Index h, Index w) const {
    return values_[((b * shape_[1] + c) * shape_[2] + h) * shape_[3] + w];
  }

  // First axis as rows, everything else flattened into columns.
  MatrixMap matrix() { return MatrixMap(values_.data(), shape_.at(0), size() / shape_.at(0)); }
  ConstMatrixMap matrix() const { return ConstMatrixMap(values_.data(), shape_.at(0), size() / shape_.at(0)); }

  void reshape(Shape shape) {
    if (shape_size(shape) != size()) throw ShapeError("reshape changes element count");
    shape_ = std::move(shape);
  }
  void set_zero() { values_.setZero(); }

  template <typename Other>
  Tensor<Other> cast() const {
    return Tensor<Other>(shape_, values_.template cast<Other>());
  }

 private:
  Shape shape_;
  Vector values_;
};

inline void require_shape(const Shape& got, const Shape& want, const char* what) {
  if (got != want) {
    throw ShapeError(std::string(what) + ": expected " + shape_string(want) + ", got " + shape_string(got));
  }
}

}  // namespace acfnet::nn

#endif  // ACFNET_NN_TENSOR_HPP
