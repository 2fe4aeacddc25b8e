#ifndef UAPR_TENSOR_HPP_
#define UAPR_TENSOR_HPP_

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <initializer_list>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include "uapr/errors.hpp"

namespace uapr {

using Index = Eigen::Index;

// Extents of a dense row-major array. An empty shape denotes a scalar.
class Shape {
 public:
  Shape() = default;
  Shape(std::initializer_list<Index> dims) : dims_(dims) { validate(); }
  explicit Shape(std::vector<Index> dims) : dims_(std::move(dims)) { validate(); }

  int rank() const { return static_cast<int>(dims_.size()); }
  Index operator[](int axis) const { return dims_.at(static_cast<std::size_t>(axis)); }
  Index numel() const {
    return std::accumulate(dims_.begin(), dims_.end(), Index{1}, std::multiplies<>());
  }
  const std::vector<Index>& dims() const { return dims_; }

  bool operator==(const Shape& other) const { return dims_ == other.dims_; }
  bool operator!=(const Shape& other) const { return !(*this == other); }

  std::string str() const {
    std::ostringstream os;
    os << '[';
    for (std::size_t i = 0; i < dims_.size(); ++i) os << (i ? "," : "") << dims_[i];
    os << ']';
    return os.str();
  }

 private:
  void validate() const {
    for (Index d : dims_) {
      if (d <= 0) throw DimensionError("shape extents must be positive, got " + str());
    }
  }

  std::vector<Index> dims_;
};

// Dense multi-dimensional array stored contiguously in row-major order.
template <typename Scalar>
class BasicTensor {
 public:
  using Array = Eigen::Array<Scalar, Eigen::Dynamic, 1>;
  using RowMatrix = Eigen::Matrix<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;
  using MatrixMap = Eigen::Map<RowMatrix>;
  using ConstMatrixMap = Eigen::Map<const RowMatrix>;

  BasicTensor() : values_(Array::Zero(1)) {}
  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0))
      : shape_(std::move(shape)), values_(Array::Constant(shape_.numel(), fill)) {}
  BasicTensor(Shape shape, Array values) : shape_(std::move(shape)), values_(std::move(values)) {
    if (values_.size() != shape_.numel()) {
      throw DimensionError("value count " + std::to_string(values_.size()) +
                           " does not match shape " + shape_.str());
    }
  }
  BasicTensor(Shape shape, std::initializer_list<Scalar> values)
      : BasicTensor(std::move(shape), Array(Eigen::Map<const Array>(
                                          values.begin(), static_cast<Index>(values.size())))) {}

  static BasicTensor scalar(Scalar v) { return BasicTensor(Shape{}, v); }
  static BasicTensor from_vector(const Eigen::Matrix<Scalar, Eigen::Dynamic, 1>& v) {
    return BasicTensor(Shape{v.size()}, Array(v.array()));
  }

  const Shape& shape() const { return shape_; }
  Index size() const { return values_.size(); }
  int rank() const { return shape_.rank(); }
  Index dim(int axis) const { return shape_[axis]; }

  Array& values() { return values_; }
  const Array& values() const { return values_; }
  Scalar* data() { return values_.data(); }
  const Scalar* data() const { return values_.data(); }

  Scalar& operator[](Index i) { return values_[i]; }
  Scalar operator[](Index i) const { return values_[i]; }

  Scalar item() const {
    if (size() != 1) throw DimensionError("item() on tensor of shape " + shape_.str());
    return values_[0];
  }

  // View the trailing two axes as a matrix; leading axes are folded into rows.
  MatrixMap matrix(Index rows, Index cols) {
    check_fold(rows, cols);
    return MatrixMap(values_.data(), rows, cols);
  }
  ConstMatrixMap matrix(Index rows, Index cols) const {
    check_fold(rows, cols);
    return ConstMatrixMap(values_.data(), rows, cols);
  }

  Eigen::Matrix<Scalar, Eigen::Dynamic, 1> vector() const { return values_.matrix(); }

  BasicTensor reshaped(Shape shape) const {
    if (shape.numel() != size()) {
      throw DimensionError("cannot reshape " + shape_.str() + " to " + shape.str());
    }
    return BasicTensor(std::move(shape), values_);
  }

  bool all_finite() const { return values_.isFinite().all(); }

 private:
  void check_fold(Index rows, Index cols) const {
    if (rows * cols != size()) {
      throw DimensionError("cannot view " + shape_.str() + " as " + std::to_string(rows) + "x" +
                           std::to_string(cols));
    }
  }

  Shape shape_;
  Array values_;
};

using Tensor = BasicTensor<double>;

}  // namespace uapr

#endif  // UAPR_TENSOR_HPP_
