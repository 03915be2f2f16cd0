#pragma once

#include <cstddef>
#include <memory>
#include <string>
#include <vector>

namespace metaccent::numerics {

using Shape = std::vector<std::size_t>;

std::size_t numel(const Shape& shape);
std::string shape_str(const Shape& shape);

// Dense row-major tensor of float or double. Rank 0 is a scalar with one
// element. Copies share the underlying buffer (clone() deep-copies); a
// buffer is never written after construction except through the optimizer
// entry points, which allocate fresh storage.
template <typename T>
class Tensor {
 public:
  Tensor() = default;
  explicit Tensor(Shape shape, T fill = T{0});
  Tensor(Shape shape, std::vector<T> values);

  static Tensor scalar(T v) { return Tensor({}, std::vector<T>{v}); }
  static Tensor from_vector(std::vector<T> v);

  const Shape& shape() const { return shape_; }
  std::size_t rank() const { return shape_.size(); }
  std::size_t extent(std::size_t axis) const { return shape_.at(axis); }
  std::size_t size() const { return data_ ? data_->size() : 0; }
  bool defined() const { return static_cast<bool>(data_); }

  const T* data() const { return data_->data(); }
  // For filling freshly allocated tensors and optimizer buffers only;
  // buffers already visible to a tape or another copy must stay untouched.
  T* mutable_data() { return data_->data(); }
  const std::vector<T>& values() const { return *data_; }
  T item() const;  // scalar value; throws on rank > 0

  bool requires_grad() const { return requires_grad_; }
  Tensor& set_requires_grad(bool v) {
    requires_grad_ = v;
    return *this;
  }

  Tensor clone() const;
  Tensor reshaped(Shape new_shape) const;  // shares the buffer

  template <typename U>
  Tensor<U> cast() const {
    std::vector<U> out(size());
    for (std::size_t i = 0; i < out.size(); ++i)
      out[i] = static_cast<U>((*data_)[i]);
    Tensor<U> t(shape_, std::move(out));
    t.set_requires_grad(requires_grad_);
    return t;
  }

  bool all_finite() const;

  // Identity key used by tapes: two tensors sharing a buffer are the same
  // autodiff node.
  const void* buffer_id() const { return data_.get(); }
  std::shared_ptr<const std::vector<T>> buffer() const { return data_; }

 private:
  Shape shape_;
  std::shared_ptr<std::vector<T>> data_;
  bool requires_grad_ = false;
};

using TensorF = Tensor<float>;
using TensorD = Tensor<double>;

}  // namespace metaccent::numerics
