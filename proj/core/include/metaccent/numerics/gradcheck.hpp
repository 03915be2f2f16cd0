#pragma once

#include <functional>
#include <string>
#include <vector>

#include "metaccent/numerics/optim.hpp"
#include "metaccent/numerics/param_store.hpp"

namespace metaccent::numerics {

// Scalar loss under an optional tape; gradcheck calls it with a tape once
// for the analytic pass and without one for every finite-difference probe.
using CheckedLoss =
    std::function<Tensor<double>(Tape<double>*, const ParamStore<double>&)>;

struct GradCheckEntry {
  std::string param;
  std::size_t index = 0;
  double analytic = 0;
  double numeric = 0;
  double rel_err = 0;
};

struct GradCheckReport {
  double max_rel_err = 0;
  std::size_t coords_checked = 0;
  std::vector<GradCheckEntry> worst;  // descending by rel_err, capped at 16

  bool passed(double tolerance) const { return max_rel_err < tolerance; }
  std::string summary() const;
};

// Central finite differences against tape gradients, in 64-bit.
// max_coords_per_param == 0 checks every coordinate; otherwise that many
// coordinates are sampled per parameter with the given seed.
GradCheckReport finite_diff_check(const CheckedLoss& f,
                                  const ParamStore<double>& params,
                                  double step = 1e-5,
                                  double tolerance = 1e-4,
                                  std::size_t max_coords_per_param = 0,
                                  std::uint64_t seed = 0);

}  // namespace metaccent::numerics
