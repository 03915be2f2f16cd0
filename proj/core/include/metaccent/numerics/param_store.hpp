#pragma once

#include <map>
#include <string>
#include <vector>

#include "metaccent/numerics/tape.hpp"
#include "metaccent/numerics/tensor.hpp"

namespace metaccent::numerics {

// Ordered map from dot-separated parameter path to tensor. Iteration is
// lexicographic by name, which fixes serialization order and the reduction
// order of gradient accumulation.
template <typename T>
class ParamStore {
 public:
  using Map = std::map<std::string, Tensor<T>>;

  void insert(const std::string& name, Tensor<T> t);
  const Tensor<T>& at(const std::string& name) const;
  // Optimizer-internal mutable access; see Tensor::mutable_data().
  Tensor<T>& at_mut(const std::string& name);
  bool contains(const std::string& name) const {
    return entries_.count(name) != 0;
  }

  std::size_t size() const { return entries_.size(); }
  bool empty() const { return entries_.empty(); }
  std::size_t total_elements() const;

  typename Map::const_iterator begin() const { return entries_.begin(); }
  typename Map::const_iterator end() const { return entries_.end(); }

  std::vector<std::string> names() const;

  // Congruent: identical names and shapes. Required by every optimizer op.
  bool congruent_with(const ParamStore& other) const;
  static void require_congruent(const ParamStore& a, const ParamStore& b,
                                const char* context);

  ParamStore clone() const;  // deep copy of every tensor

  template <typename U>
  ParamStore<U> cast() const {
    ParamStore<U> out;
    for (const auto& [name, t] : entries_) out.insert(name, t.template cast<U>());
    return out;
  }

  void set_requires_grad(bool v);
  bool all_finite() const;

 private:
  Map entries_;
};

// Gradients of `params` accumulated on the tape, aligned name-for-name.
// Parameters the loss never reached get zero tensors of the right shape.
template <typename T>
ParamStore<T> gradients_for(const Tape<T>& tape, const ParamStore<T>& params);

using ParamStoreF = ParamStore<float>;
using ParamStoreD = ParamStore<double>;

}  // namespace metaccent::numerics
