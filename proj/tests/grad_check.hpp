#pragma once

#include <algorithm>
#include <cmath>
#include <functional>

#include "ireg/nn/parameters.hpp"
#include "ireg/random.hpp"

namespace ireg::testing {

struct GradCheckResult {
  double max_relative_error = 0.0;
  int checked = 0;
  double worst_analytic = 0.0;
  double worst_numeric = 0.0;
};

/// Compares analytic gradients of `loss` with central differences on up to
/// `per_tensor` random entries of every parameter. `loss` must accumulate its
/// gradient into the buffer when one is passed. Relative errors are taken
/// against max(|analytic|, |numeric|, 1e-5), so entries that are zero up to
/// rounding compare on an absolute 1e-9 scale.
inline GradCheckResult gradient_check(nn::ParameterSet& params, const std::function<double(nn::Gradients*)>& loss,
                                      int per_tensor = 4, std::uint64_t seed = 3, double step = 1e-5) {
  nn::Gradients analytic(params);
  loss(&analytic);
  Rng rng(seed);
  GradCheckResult out;
  for (std::size_t p = 0; p < params.size(); ++p) {
    nn::Matrix& value = params[p].value;
    const auto n = static_cast<std::size_t>(value.size());
    for (int k = 0; k < per_tensor && k < static_cast<int>(n); ++k) {
      const std::size_t i = rng.below(n);
      double* x = value.data() + i;
      const double orig = *x;
      *x = orig + step;
      const double up = loss(nullptr);
      *x = orig - step;
      const double down = loss(nullptr);
      *x = orig;
      const double numeric = (up - down) / (2.0 * step);
      const double a = analytic[p].data()[i];
      const double scale = std::max({std::abs(a), std::abs(numeric), 1e-5});
      const double rel = std::abs(a - numeric) / scale;
      if (rel > out.max_relative_error) {
        out.max_relative_error = rel;
        out.worst_analytic = a;
        out.worst_numeric = numeric;
      }
      ++out.checked;
    }
  }
  return out;
}

}  // namespace ireg::testing
