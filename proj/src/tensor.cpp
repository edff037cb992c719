#include "lam/tensor.hpp"

#include <numeric>
#include <sstream>

namespace lam {

std::string shape_string(const Shape& shape) {
  std::ostringstream out;
  out << '(';
  for (std::size_t i = 0; i < shape.size(); ++i) out << (i ? "," : "") << shape[i];
  out << ')';
  return out.str();
}

Eigen::Index shape_size(const Shape& shape) {
  Eigen::Index n = 1;
  for (int d : shape) {
    if (d <= 0) raise(ErrorKind::dimension, "non-positive dimension in shape " + shape_string(shape));
    n *= d;
  }
  return n;
}

template <typename Scalar>
BasicTensor<Scalar>::BasicTensor(Shape shape, Scalar fill)
    : shape_(std::move(shape)), data_(Storage::Constant(shape_size(shape_), fill)) {}

template <typename Scalar>
BasicTensor<Scalar>::BasicTensor(Shape shape, Storage data) : shape_(std::move(shape)), data_(std::move(data)) {
  if (shape_size(shape_) != data_.size())
    raise(ErrorKind::dimension, "shape " + shape_string(shape_) + " does not match " +
                                    std::to_string(data_.size()) + " values");
}

template <typename Scalar>
BasicTensor<Scalar>::BasicTensor(Shape shape, std::initializer_list<Scalar> values) : shape_(std::move(shape)) {
  data_.resize(static_cast<Eigen::Index>(values.size()));
  std::copy(values.begin(), values.end(), data_.data());
  if (shape_size(shape_) != data_.size())
    raise(ErrorKind::dimension, "shape " + shape_string(shape_) + " does not match " +
                                    std::to_string(data_.size()) + " values");
}

template <typename Scalar>
const typename BasicTensor<Scalar>::Storage& BasicTensor<Scalar>::grad() const {
  if (!grad_) raise(ErrorKind::contract, "tensor has no gradient");
  return *grad_;
}

template <typename Scalar>
void BasicTensor<Scalar>::set_grad(Storage grad) {
  if (grad.size() != data_.size()) raise(ErrorKind::dimension, "gradient size does not match tensor");
  grad_ = std::move(grad);
}

template <typename Scalar>
void require_image(const BasicTensor<Scalar>& t, const char* what) {
  if (t.rank() != 3)
    raise(ErrorKind::dimension, std::string(what) + " must be (c,h,w), got " + shape_string(t.shape()));
}

template <typename Scalar>
Map2D channel_sum(const BasicTensor<Scalar>& t) {
  require_image(t, "channel_sum input");
  Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor> acc =
      Eigen::Array<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>::Zero(t.dim(1), t.dim(2));
  for (int c = 0; c < t.dim(0); ++c) acc += t.channel(c).template cast<double>();
  return acc.cast<float>();
}

template class BasicTensor<float>;
template class BasicTensor<double>;
template void require_image(const BasicTensor<float>&, const char*);
template void require_image(const BasicTensor<double>&, const char*);
template Map2D channel_sum(const BasicTensor<float>&);
template Map2D channel_sum(const BasicTensor<double>&);

}  // namespace lam
