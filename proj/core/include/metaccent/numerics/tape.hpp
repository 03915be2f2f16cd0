#pragma once

#include <functional>
#include <memory>
#include <unordered_map>
#include <vector>

#include "metaccent/numerics/tensor.hpp"

namespace metaccent::numerics {

// Wengert list for one forward pass. Operations append a backward record as
// they execute; backward() replays the records in exact reverse order of
// creation, then the tape counts as consumed.
//
// Nodes are keyed by tensor buffer identity, so the same parameter used
// twice accumulates both gradient contributions into one slot. The tape
// keeps every registered buffer alive, which also guarantees the identity
// keys stay unique for its lifetime.
template <typename T>
class Tape {
 public:
  using BackwardFn = std::function<void(Tape&)>;

  Tape() = default;
  Tape(const Tape&) = delete;
  Tape& operator=(const Tape&) = delete;

  // Registers a tensor as a node; idempotent per buffer. Returns its id.
  int track(const Tensor<T>& t);

  // Id of a previously tracked buffer, or -1.
  int id_of(const Tensor<T>& t) const;

  // Appends one primitive's backward record.
  void record(BackwardFn fn) { records_.push_back(std::move(fn)); }

  // Gradient accumulator of a node (same flat layout as the node's buffer).
  std::vector<T>& grad(int node) { return grads_[static_cast<std::size_t>(node)]; }

  // Gradient of a tracked tensor after backward(); nullptr when untracked.
  const std::vector<T>* grad_of(const Tensor<T>& t) const;

  // Seeds d(loss)/d(loss) = 1 and replays the records once.
  void backward(const Tensor<T>& loss);

  bool consumed() const { return consumed_; }
  std::size_t num_records() const { return records_.size(); }
  std::size_t num_nodes() const { return grads_.size(); }

 private:
  std::unordered_map<const void*, int> index_;
  std::vector<std::shared_ptr<const std::vector<T>>> keepalive_;
  std::vector<std::vector<T>> grads_;
  std::vector<BackwardFn> records_;
  bool consumed_ = false;
};

}  // namespace metaccent::numerics
