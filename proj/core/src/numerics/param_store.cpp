#include "metaccent/numerics/param_store.hpp"

#include "metaccent/error.hpp"

namespace metaccent::numerics {

template <typename T>
void ParamStore<T>::insert(const std::string& name, Tensor<T> t) {
  if (!t.defined())
    throw UsageError("numerics.param_store: undefined tensor for '" + name + "'");
  if (!entries_.emplace(name, std::move(t)).second)
    throw UsageError("numerics.param_store: duplicate parameter '" + name + "'");
}

template <typename T>
const Tensor<T>& ParamStore<T>::at(const std::string& name) const {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw CongruenceError("numerics.param_store: no parameter named '" + name +
                          "'");
  return it->second;
}

template <typename T>
Tensor<T>& ParamStore<T>::at_mut(const std::string& name) {
  auto it = entries_.find(name);
  if (it == entries_.end())
    throw CongruenceError("numerics.param_store: no parameter named '" + name +
                          "'");
  return it->second;
}

template <typename T>
std::size_t ParamStore<T>::total_elements() const {
  std::size_t n = 0;
  for (const auto& [name, t] : entries_) n += t.size();
  return n;
}

template <typename T>
std::vector<std::string> ParamStore<T>::names() const {
  std::vector<std::string> out;
  out.reserve(entries_.size());
  for (const auto& [name, t] : entries_) out.push_back(name);
  return out;
}

template <typename T>
bool ParamStore<T>::congruent_with(const ParamStore& other) const {
  if (entries_.size() != other.entries_.size()) return false;
  auto it = other.entries_.begin();
  for (const auto& [name, t] : entries_) {
    if (name != it->first || t.shape() != it->second.shape()) return false;
    ++it;
  }
  return true;
}

template <typename T>
void ParamStore<T>::require_congruent(const ParamStore& a, const ParamStore& b,
                                      const char* context) {
  if (a.size() != b.size())
    throw CongruenceError(std::string(context) + ": stores hold " +
                          std::to_string(a.size()) + " vs " +
                          std::to_string(b.size()) + " parameters");
  auto ib = b.begin();
  for (auto ia = a.begin(); ia != a.end(); ++ia, ++ib) {
    if (ia->first != ib->first)
      throw CongruenceError(std::string(context) + ": name mismatch '" +
                            ia->first + "' vs '" + ib->first + "'");
    if (ia->second.shape() != ib->second.shape())
      throw CongruenceError(std::string(context) + ": shape mismatch for '" +
                            ia->first + "': " + shape_str(ia->second.shape()) +
                            " vs " + shape_str(ib->second.shape()));
  }
}

template <typename T>
ParamStore<T> ParamStore<T>::clone() const {
  ParamStore out;
  for (const auto& [name, t] : entries_) out.insert(name, t.clone());
  return out;
}

template <typename T>
void ParamStore<T>::set_requires_grad(bool v) {
  for (auto& [name, t] : entries_) t.set_requires_grad(v);
}

template <typename T>
bool ParamStore<T>::all_finite() const {
  for (const auto& [name, t] : entries_)
    if (!t.all_finite()) return false;
  return true;
}

template <typename T>
ParamStore<T> gradients_for(const Tape<T>& tape, const ParamStore<T>& params) {
  ParamStore<T> grads;
  for (const auto& [name, t] : params) {
    if (const std::vector<T>* g = tape.grad_of(t)) {
      grads.insert(name, Tensor<T>(t.shape(), std::vector<T>(*g)));
    } else {
      grads.insert(name, Tensor<T>(t.shape(), T{0}));
    }
  }
  return grads;
}

template class ParamStore<float>;
template class ParamStore<double>;
template ParamStore<float> gradients_for(const Tape<float>&,
                                         const ParamStore<float>&);
template ParamStore<double> gradients_for(const Tape<double>&,
                                          const ParamStore<double>&);

}  // namespace metaccent::numerics
