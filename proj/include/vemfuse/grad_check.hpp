#pragma once
// Central finite-difference gradient checker. The loss callback must be
// deterministic for fixed parameter values; the checker perturbs a random
// coordinate subset of each parameter and compares against analytic grads.

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "vemfuse/rng.hpp"
#include "vemfuse/tensor.hpp"

namespace vemfuse {

struct GradCheckResult {
  double max_rel_error = 0.0;
  std::string worst_param;
  int64_t worst_coord = -1;
  double analytic = 0.0;
  double numeric = 0.0;
  int64_t coords_checked = 0;
};

// loss_fn() -> double: evaluates the loss at the current parameter values.
// Analytic gradients must already be populated in each Parameter::grad
// (typically: zero_grad, forward, backward) before calling.
template <typename LossFn>
GradCheckResult finite_diff_check(LossFn&& loss_fn, const std::vector<Parameter<double>*>& params,
                                  double step, int max_coords_per_param, Rng& rng) {
  if (!(step > 0.0)) throw std::invalid_argument("finite_diff_check: step must be > 0");
  GradCheckResult res;
  for (Parameter<double>* p : params) {
    const int64_t n = p->value.size();
    std::vector<int64_t> coords;
    if (max_coords_per_param <= 0 || n <= max_coords_per_param) {
      coords.resize(static_cast<size_t>(n));
      for (int64_t i = 0; i < n; ++i) coords[static_cast<size_t>(i)] = i;
    } else {
      for (int k = 0; k < max_coords_per_param; ++k)
        coords.push_back(static_cast<int64_t>(rng.uniform_int(static_cast<uint64_t>(n))));
    }
    for (int64_t c : coords) {
      const double orig = p->value.data[static_cast<size_t>(c)];
      p->value.data[static_cast<size_t>(c)] = orig + step;
      const double f_plus = loss_fn();
      p->value.data[static_cast<size_t>(c)] = orig - step;
      const double f_minus = loss_fn();
      p->value.data[static_cast<size_t>(c)] = orig;
      const double numeric = (f_plus - f_minus) / (2.0 * step);
      const double analytic = p->grad.data[static_cast<size_t>(c)];
      const double denom = std::max({std::fabs(numeric), std::fabs(analytic), 1e-6});
      const double rel = std::fabs(numeric - analytic) / denom;
      ++res.coords_checked;
      if (rel > res.max_rel_error) {
        res.max_rel_error = rel;
        res.worst_param = p->name;
        res.worst_coord = c;
        res.analytic = analytic;
        res.numeric = numeric;
      }
    }
  }
  return res;
}

}  // namespace vemfuse
