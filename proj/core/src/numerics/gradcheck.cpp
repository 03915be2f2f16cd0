#include "metaccent/numerics/gradcheck.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>

#include "metaccent/error.hpp"
#include "metaccent/rng.hpp"

namespace metaccent::numerics {

namespace {

// Clone of `params` with one coordinate nudged by delta.
ParamStore<double> nudged(const ParamStore<double>& params,
                          const std::string& name, std::size_t index,
                          double delta) {
  ParamStore<double> out;
  for (const auto& [n, t] : params) {
    if (n == name) {
      Tensor<double> bumped = t.clone();
      bumped.mutable_data()[index] += delta;
      out.insert(n, std::move(bumped));
    } else {
      out.insert(n, t);
    }
  }
  return out;
}

}  // namespace

std::string GradCheckReport::summary() const {
  char line[160];
  std::snprintf(line, sizeof(line),
                "gradcheck: %zu coordinates, max rel err %.3e", coords_checked,
                max_rel_err);
  std::string s = line;
  for (const auto& e : worst) {
    std::snprintf(line, sizeof(line),
                  "\n  %-40s [%zu] analytic %.9e numeric %.9e rel %.3e",
                  e.param.c_str(), e.index, e.analytic, e.numeric, e.rel_err);
    s += line;
  }
  return s;
}

GradCheckReport finite_diff_check(const CheckedLoss& f,
                                  const ParamStore<double>& params,
                                  double step, double tolerance,
                                  std::size_t max_coords_per_param,
                                  std::uint64_t seed) {
  if (step <= 0) throw ConfigError("numerics.finite_diff_check: step must be > 0");
  ParamStore<double> tracked = params.clone();
  tracked.set_requires_grad(true);

  Tape<double> tape;
  Tensor<double> loss = f(&tape, tracked);
  tape.backward(loss);
  const ParamStore<double> analytic = gradients_for(tape, tracked);

  GradCheckReport report;
  Rng rng(seed);
  for (const auto& [name, t] : tracked) {
    std::vector<std::size_t> coords;
    if (max_coords_per_param == 0 || t.size() <= max_coords_per_param) {
      coords.resize(t.size());
      for (std::size_t i = 0; i < t.size(); ++i) coords[i] = i;
    } else {
      coords = rng.split(name).sample_indices(t.size(), max_coords_per_param);
      std::sort(coords.begin(), coords.end());
    }
    const Tensor<double>& g = analytic.at(name);
    for (std::size_t i : coords) {
      const double lp = f(nullptr, nudged(tracked, name, i, step)).item();
      const double lm = f(nullptr, nudged(tracked, name, i, -step)).item();
      const double numeric = (lp - lm) / (2.0 * step);
      const double a = g.data()[i];
      const double denom = std::max({std::abs(a), std::abs(numeric), 1e-3});
      const double rel = std::abs(a - numeric) / denom;
      ++report.coords_checked;
      if (rel > report.max_rel_err) report.max_rel_err = rel;
      if (rel >= tolerance || report.worst.size() < 4) {
        report.worst.push_back({name, i, a, numeric, rel});
      }
    }
  }
  std::sort(report.worst.begin(), report.worst.end(),
            [](const auto& a, const auto& b) { return a.rel_err > b.rel_err; });
  if (report.worst.size() > 16) report.worst.resize(16);
  return report;
}

}  // namespace metaccent::numerics
