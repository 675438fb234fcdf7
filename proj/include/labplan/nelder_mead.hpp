#pragma once

#include <functional>
#include <vector>

namespace labplan {

struct NelderMeadOptions {
  int max_iterations = 5000;
  /// Stop when the spread of simplex values and the simplex size fall below these.
  double f_tolerance = 1e-12;
  double x_tolerance = 1e-10;
};

struct NelderMeadResult {
  std::vector<double> x;
  double value = 0;
  int iterations = 0;
  bool converged = false;
};

/// Minimizes f starting from a simplex around x0 with per-coordinate steps.
NelderMeadResult nelder_mead(const std::function<double(const std::vector<double>&)>& f, std::vector<double> x0,
                             const std::vector<double>& step, const NelderMeadOptions& opts = {});

}  // namespace labplan
