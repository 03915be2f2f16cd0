#include "metaccent/numerics/tensor.hpp"

#include <cmath>

#include "metaccent/error.hpp"

namespace metaccent::numerics {

std::size_t numel(const Shape& shape) {
  std::size_t n = 1;
  for (std::size_t e : shape) n *= e;
  return n;
}

std::string shape_str(const Shape& shape) {
  std::string s = "[";
  for (std::size_t i = 0; i < shape.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(shape[i]);
  }
  return s + "]";
}

template <typename T>
Tensor<T>::Tensor(Shape shape, T fill) : shape_(std::move(shape)) {
  for (std::size_t e : shape_) {
    if (e == 0)
      throw ShapeError("numerics.tensor: zero extent in " + shape_str(shape_));
  }
  data_ = std::make_shared<std::vector<T>>(numel(shape_), fill);
}

template <typename T>
Tensor<T>::Tensor(Shape shape, std::vector<T> values) : shape_(std::move(shape)) {
  if (numel(shape_) != values.size()) {
    throw ShapeError("numerics.tensor: " + shape_str(shape_) + " needs " +
                     std::to_string(numel(shape_)) + " values, got " +
                     std::to_string(values.size()));
  }
  data_ = std::make_shared<std::vector<T>>(std::move(values));
}

template <typename T>
Tensor<T> Tensor<T>::from_vector(std::vector<T> v) {
  Shape s{v.size()};
  return Tensor(std::move(s), std::move(v));
}

template <typename T>
T Tensor<T>::item() const {
  if (!data_ || data_->size() != 1)
    throw ShapeError("numerics.tensor: item() requires a single-element tensor, got " +
                     shape_str(shape_));
  return (*data_)[0];
}

template <typename T>
Tensor<T> Tensor<T>::clone() const {
  Tensor t(shape_, std::vector<T>(*data_));
  t.set_requires_grad(requires_grad_);
  return t;
}

template <typename T>
Tensor<T> Tensor<T>::reshaped(Shape new_shape) const {
  if (numel(new_shape) != size()) {
    throw ShapeError("numerics.reshape: cannot view " + shape_str(shape_) +
                     " as " + shape_str(new_shape));
  }
  Tensor t;
  t.shape_ = std::move(new_shape);
  t.data_ = data_;
  t.requires_grad_ = requires_grad_;
  return t;
}

template <typename T>
bool Tensor<T>::all_finite() const {
  for (T v : *data_)
    if (!std::isfinite(v)) return false;
  return true;
}

template class Tensor<float>;
template class Tensor<double>;

}  // namespace metaccent::numerics
