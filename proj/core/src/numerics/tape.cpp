#include "metaccent/numerics/tape.hpp"

#include "metaccent/error.hpp"

namespace metaccent::numerics {

template <typename T>
int Tape<T>::track(const Tensor<T>& t) {
  if (!t.defined())
    throw UsageError("numerics.tape: cannot track an undefined tensor");
  auto it = index_.find(t.buffer_id());
  if (it != index_.end()) return it->second;
  const int id = static_cast<int>(grads_.size());
  index_.emplace(t.buffer_id(), id);
  keepalive_.push_back(t.buffer());
  grads_.emplace_back(t.size(), T{0});
  return id;
}

template <typename T>
int Tape<T>::id_of(const Tensor<T>& t) const {
  auto it = index_.find(t.buffer_id());
  return it == index_.end() ? -1 : it->second;
}

template <typename T>
const std::vector<T>* Tape<T>::grad_of(const Tensor<T>& t) const {
  const int id = id_of(t);
  return id < 0 ? nullptr : &grads_[static_cast<std::size_t>(id)];
}

template <typename T>
void Tape<T>::backward(const Tensor<T>& loss) {
  if (consumed_)
    throw UsageError("numerics.backward: tape already consumed by a backward pass");
  if (loss.size() != 1)
    throw UsageError("numerics.backward: loss must be a scalar, got " +
                     shape_str(loss.shape()));
  const int id = id_of(loss);
  if (id < 0)
    throw UsageError("numerics.backward: loss was not produced under this tape");
  consumed_ = true;
  grads_[static_cast<std::size_t>(id)][0] = T{1};
  for (auto it = records_.rbegin(); it != records_.rend(); ++it) (*it)(*this);
}

template class Tape<float>;
template class Tape<double>;

}  // namespace metaccent::numerics
