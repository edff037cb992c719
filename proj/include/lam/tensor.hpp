#pragma once

#include <Eigen/Core>

#include <cstddef>
#include <initializer_list>
#include <optional>
#include <string>
#include <vector>

#include "lam/errors.hpp"

namespace lam {

using Shape = std::vector<int>;

std::string shape_string(const Shape& shape);
Eigen::Index shape_size(const Shape& shape);

/// Row-major single-channel map, the working type for reduced attribution maps
/// and everything the analysis module produces.
using Map2D = Eigen::Array<float, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

/// Dense row-major n-d array with optional gradient buffer. Images and feature
/// maps are rank 3 (channels, height, width).
template <typename Scalar>
class BasicTensor {
 public:
  using Storage = Eigen::Array<Scalar, Eigen::Dynamic, 1>;

  BasicTensor() = default;
  explicit BasicTensor(Shape shape, Scalar fill = Scalar(0));
  BasicTensor(Shape shape, Storage data);
  BasicTensor(Shape shape, std::initializer_list<Scalar> values);

  const Shape& shape() const noexcept { return shape_; }
  int rank() const noexcept { return static_cast<int>(shape_.size()); }
  int dim(int axis) const { return shape_.at(static_cast<std::size_t>(axis)); }
  Eigen::Index size() const noexcept { return data_.size(); }

  Storage& data() noexcept { return data_; }
  const Storage& data() const noexcept { return data_; }

  Scalar& operator[](Eigen::Index i) { return data_[i]; }
  Scalar operator[](Eigen::Index i) const { return data_[i]; }

  // (channel, row, column) access for rank-3 tensors.
  Scalar& operator()(int c, int y, int x) {
    return data_[(static_cast<Eigen::Index>(c) * shape_[1] + y) * shape_[2] + x];
  }
  Scalar operator()(int c, int y, int x) const {
    return data_[(static_cast<Eigen::Index>(c) * shape_[1] + y) * shape_[2] + x];
  }

  bool requires_grad() const noexcept { return requires_grad_; }
  BasicTensor& set_requires_grad(bool flag) {
    requires_grad_ = flag;
    return *this;
  }

  bool has_grad() const noexcept { return grad_.has_value(); }
  const Storage& grad() const;
  void set_grad(Storage grad);
  void clear_grad() { grad_.reset(); }

  bool all_finite() const { return data_.isFinite().all(); }

  template <typename Other>
  BasicTensor<Other> cast() const {
    return BasicTensor<Other>(shape_, data_.template cast<Other>().eval());
  }

  /// Channel `c` of a rank-3 tensor as a 2-D map.
  Eigen::Map<const Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> channel(int c) const {
    const Eigen::Index plane = static_cast<Eigen::Index>(shape_[1]) * shape_[2];
    return {data_.data() + c * plane, shape_[1], shape_[2]};
  }
  Eigen::Map<Eigen::Array<Scalar, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>> channel(int c) {
    const Eigen::Index plane = static_cast<Eigen::Index>(shape_[1]) * shape_[2];
    return {data_.data() + c * plane, shape_[1], shape_[2]};
  }

  friend bool operator==(const BasicTensor& a, const BasicTensor& b) {
    return a.shape_ == b.shape_ && (a.data_ == b.data_).all();
  }

 private:
  Shape shape_;
  Storage data_;
  bool requires_grad_ = false;
  std::optional<Storage> grad_;
};

using Tensor = BasicTensor<float>;

/// Throws a dimension error unless `t` has rank 3.
template <typename Scalar>
void require_image(const BasicTensor<Scalar>& t, const char* what);

/// Sum over channels of a rank-3 tensor.
template <typename Scalar>
Map2D channel_sum(const BasicTensor<Scalar>& t);

extern template class BasicTensor<float>;
extern template class BasicTensor<double>;

}  // namespace lam
