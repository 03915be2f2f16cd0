#include "metaccent/numerics/optim.hpp"

#include <cmath>

#include "metaccent/error.hpp"

namespace metaccent::numerics {

template <typename T>
ParamStore<T> sgd_step(const ParamStore<T>& params, const ParamStore<T>& grads,
                       double lr) {
  ParamStore<T>::require_congruent(params, grads, "numerics.sgd_step");
  const T tlr = static_cast<T>(lr);
  ParamStore<T> out;
  for (const auto& [name, p] : params) {
    const Tensor<T>& g = grads.at(name);
    Tensor<T> next(p.shape());
    T* d = next.mutable_data();
    const T* pv = p.data();
    const T* gv = g.data();
    for (std::size_t i = 0; i < p.size(); ++i) d[i] = pv[i] - tlr * gv[i];
    out.insert(name, std::move(next));
  }
  return out;
}

template <typename T>
AdamState<T> AdamState<T>::zeros_like(const ParamStore<T>& params) {
  AdamState<T> st;
  st.m = numerics::zeros_like(params);
  st.v = numerics::zeros_like(params);
  st.step = 0;
  return st;
}

template <typename T>
ParamStore<T> adam_step(AdamState<T>& state, const ParamStore<T>& params,
                        const ParamStore<T>& grads, const AdamConfig& cfg) {
  ParamStore<T>::require_congruent(params, grads, "numerics.adam_step");
  if (!state.initialized()) state = AdamState<T>::zeros_like(params);
  ParamStore<T>::require_congruent(params, state.m, "numerics.adam_step(state)");

  state.step += 1;
  const double b1t = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.step));
  const double b2t = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.step));

  ParamStore<T> out;
  for (const auto& [name, p] : params) {
    const T* gv = grads.at(name).data();
    const T* pv = p.data();
    // state buffers are owned exclusively by this optimizer
    T* mv = state.m.at_mut(name).mutable_data();
    T* vv = state.v.at_mut(name).mutable_data();
    Tensor<T> next(p.shape());
    T* d = next.mutable_data();
    for (std::size_t i = 0; i < p.size(); ++i) {
      const double g = static_cast<double>(gv[i]);
      const double m = cfg.beta1 * static_cast<double>(mv[i]) +
                       (1.0 - cfg.beta1) * g;
      const double v = cfg.beta2 * static_cast<double>(vv[i]) +
                       (1.0 - cfg.beta2) * g * g;
      mv[i] = static_cast<T>(m);
      vv[i] = static_cast<T>(v);
      const double mhat = m / b1t;
      const double vhat = v / b2t;
      d[i] = static_cast<T>(static_cast<double>(pv[i]) -
                            cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps));
    }
    out.insert(name, std::move(next));
  }
  return out;
}

template <typename T>
void accumulate(ParamStore<T>& grads_acc, const ParamStore<T>& grads) {
  ParamStore<T>::require_congruent(grads_acc, grads, "numerics.accumulate");
  for (const auto& [name, g] : grads) {
    T* acc = grads_acc.at_mut(name).mutable_data();
    const T* gv = g.data();
    for (std::size_t i = 0; i < g.size(); ++i) acc[i] += gv[i];
  }
}

template <typename T>
ParamStore<T> zeros_like(const ParamStore<T>& params) {
  ParamStore<T> out;
  for (const auto& [name, p] : params) out.insert(name, Tensor<T>(p.shape(), T{0}));
  return out;
}

#define METACCENT_INSTANTIATE_OPTIM(T)                                        \
  template ParamStore<T> sgd_step(const ParamStore<T>&, const ParamStore<T>&, \
                                  double);                                    \
  template struct AdamState<T>;                                               \
  template ParamStore<T> adam_step(AdamState<T>&, const ParamStore<T>&,       \
                                   const ParamStore<T>&, const AdamConfig&);  \
  template void accumulate(ParamStore<T>&, const ParamStore<T>&);             \
  template ParamStore<T> zeros_like(const ParamStore<T>&);

METACCENT_INSTANTIATE_OPTIM(float)
METACCENT_INSTANTIATE_OPTIM(double)

#undef METACCENT_INSTANTIATE_OPTIM

}  // namespace metaccent::numerics
