#pragma once

#include <functional>

#include "cascade/model.hpp"

namespace cascade {

/// Smooth convex objective with analytic derivatives.
struct SmoothObjective {
  int dim = 0;
  std::function<double(const Vector&)> value;
  std::function<void(const Vector& x, Vector& grad, Matrix& hess)> derivatives;
};

struct OptimizerOptions {
  double grad_tol = 1e-10;
  int max_iter = 500;
};

struct OptimizerResult {
  Vector x;
  double value = 0.0;
  int iterations = 0;
  double grad_norm = 0.0;  // projected for boxes
};

/// Damped (projected) Newton from 0 over an unconstrained set or a box; scans finite sets.
OptimizerResult minimize_convex(const SmoothObjective& f, const ConstraintSet& set, const OptimizerOptions& opt = {});

/// Golden-section search on [lo, hi]; returns the minimizer.
double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol = 1e-12);

/// Sub-problem over the coordinates listed in `keep`, other coordinates fixed at 0.
/// Finite sets keep only points that vanish off `keep`.
ConstraintSet restrict_set(const ConstraintSet& set, const std::vector<int>& keep);

}  // namespace cascade
