#pragma once

#include <Eigen/Core>

#include <array>
#include <cstdint>
#include <string>

#include "ltc/error.hpp"

namespace ltc {

// Extents of a 4-D tensor in (batch, channels, height, width) order.
// Lower-rank data uses unit extents.
struct Shape {
  Eigen::Index n = 1;
  Eigen::Index c = 1;
  Eigen::Index h = 1;
  Eigen::Index w = 1;

  constexpr Eigen::Index size() const { return n * c * h * w; }
  constexpr Eigen::Index plane() const { return h * w; }
  constexpr Eigen::Index sample() const { return c * h * w; }

  friend constexpr bool operator==(const Shape&, const Shape&) = default;

  std::string str() const {
    return "(" + std::to_string(n) + "," + std::to_string(c) + "," +
           std::to_string(h) + "," + std::to_string(w) + ")";
  }
};

// Dense row-major NCHW array. Storage is a flat Eigen array so that the
// usual coefficient-wise expressions apply directly to data().
template <typename Scalar>
class BasicTensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix =
      Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape) : shape_(shape), data_(Array::Zero(shape.size())) {}
  BasicTensor(Shape shape, Scalar fill)
      : shape_(shape), data_(Array::Constant(shape.size(), fill)) {}
  BasicTensor(Shape shape, Array data) : shape_(shape), data_(std::move(data)) {
    if (data_.size() != shape_.size()) {
      fail(ErrorKind::kDimension, "tensor data length " + std::to_string(data_.size()) +
                                      " does not match shape " + shape_.str());
    }
  }

  static BasicTensor scalar(Scalar v) { return BasicTensor(Shape{}, v); }
  // (1, c, 1, 1): one value per channel.
  static BasicTensor per_channel(const Eigen::Ref<const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>>& v) {
    BasicTensor t(Shape{1, v.size(), 1, 1});
    t.data_ = v.array();
    return t;
  }

  const Shape& shape() const { return shape_; }
  Eigen::Index size() const { return data_.size(); }

  Array& data() { return data_; }
  const Array& data() const { return data_; }

  Scalar& operator[](Eigen::Index i) { return data_[i]; }
  Scalar operator[](Eigen::Index i) const { return data_[i]; }

  Eigen::Index index(Eigen::Index n, Eigen::Index c, Eigen::Index y, Eigen::Index x) const {
    return ((n * shape_.c + c) * shape_.h + y) * shape_.w + x;
  }
  Scalar& operator()(Eigen::Index n, Eigen::Index c, Eigen::Index y, Eigen::Index x) {
    return data_[index(n, c, y, x)];
  }
  Scalar operator()(Eigen::Index n, Eigen::Index c, Eigen::Index y, Eigen::Index x) const {
    return data_[index(n, c, y, x)];
  }

  // Sample n viewed as a (channels x pixels) matrix.
  MatrixMap sample(Eigen::Index n) {
    return MatrixMap(data_.data() + n * shape_.sample(), shape_.c, shape_.plane());
  }
  ConstMatrixMap sample(Eigen::Index n) const {
    return ConstMatrixMap(data_.data() + n * shape_.sample(), shape_.c, shape_.plane());
  }

  // One (height x width) plane.
  MatrixMap plane(Eigen::Index n, Eigen::Index c) {
    return MatrixMap(data_.data() + (n * shape_.c + c) * shape_.plane(), shape_.h, shape_.w);
  }
  ConstMatrixMap plane(Eigen::Index n, Eigen::Index c) const {
    return ConstMatrixMap(data_.data() + (n * shape_.c + c) * shape_.plane(), shape_.h,
                          shape_.w);
  }

  bool all_finite() const { return data_.allFinite(); }

  void reshape(Shape shape) {
    if (shape.size() != shape_.size()) {
      fail(ErrorKind::kDimension, "cannot reshape " + shape_.str() + " to " + shape.str());
    }
    shape_ = shape;
  }

  template <typename Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_, data_.template cast<Other>());
  }

 private:
  Shape shape_{0, 0, 0, 0};
  Array data_;
};

using Tensor = BasicTensor<double>;
using SymbolTensor = BasicTensor<std::int32_t>;

inline void require_shape(const Shape& actual, const Shape& expected, const char* what) {
  if (!(actual == expected)) {
    fail(ErrorKind::kDimension, std::string(what) + ": expected shape " + expected.str() +
                                    ", got " + actual.str());
  }
}

}  // namespace ltc
