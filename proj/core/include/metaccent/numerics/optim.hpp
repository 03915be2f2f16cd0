#pragma once

#include <cstdint>

#include "metaccent/numerics/param_store.hpp"

namespace metaccent::numerics {

// Returns a fresh store with p - lr * g per entry. The input store is never
// written: adaptation must leave the initialization intact.
template <typename T>
ParamStore<T> sgd_step(const ParamStore<T>& params, const ParamStore<T>& grads,
                       double lr);

struct AdamConfig {
  double lr = 1e-3;
  double beta1 = 0.9;
  double beta2 = 0.98;
  double eps = 1e-9;
};

template <typename T>
struct AdamState {
  ParamStore<T> m;
  ParamStore<T> v;
  std::int64_t step = 0;

  static AdamState zeros_like(const ParamStore<T>& params);
  bool initialized() const { return !m.empty(); }
};

// Standard Adam with bias correction. The state advances in place (step
// count incremented); params are returned as a new store.
template <typename T>
ParamStore<T> adam_step(AdamState<T>& state, const ParamStore<T>& params,
                        const ParamStore<T>& grads, const AdamConfig& cfg);

// grads_acc += grads (both congruent); used for the fixed-order episode
// reduction of the outer loop.
template <typename T>
void accumulate(ParamStore<T>& grads_acc, const ParamStore<T>& grads);

template <typename T>
ParamStore<T> zeros_like(const ParamStore<T>& params);

}  // namespace metaccent::numerics
