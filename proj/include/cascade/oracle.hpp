#pragma once

#include <vector>

#include "cascade/density.hpp"
#include "cascade/engine.hpp"
#include "cascade/model.hpp"
#include "cascade/pricing.hpp"

namespace cascade {

/// Size limits for the enumeration oracle.
struct OracleCaps {
  int max_steps = 3;
  int max_level = 1;
  int max_actions = 3;
  int max_marks = 2;
  /// Decision points x choices allowed in pure strategy enumeration.
  double max_strategy_profiles = 1 << 22;
};

/// E[Z_tau] summed over every Brownian path and every default outcome.
double direct_expectation(const IndexedProcess& Z, const StoppingPolicy& policy, const DensityModel& density);

/// Optimum over G-adapted controls and stopping times by exhaustive recursion on the
/// non-recombining global history tree, with conditional transition probabilities.
double enumerate_value(const ControllerStopperProblem& problem, const DensityModel& density, GameMode mode,
                       const OracleCaps& caps = {});

/// Pure strategy enumeration: every assignment of (action, stop) to every global history,
/// expectations by full path summation. Only for micro instances.
double enumerate_strategies(const ControllerStopperProblem& problem, const DensityModel& density, GameMode mode,
                            const OracleCaps& caps = {});

/// Indifference price implied by enumerate_value on the wealth problem (finite action sets).
double enumerate_price(const ProblemSpec& spec, const DensityModel& density, Side side, const OracleCaps& caps = {});

struct PhiTable {
  Side side = Side::buyer;
  std::vector<NodeSeries> phi;  // per scenario id, steps start..M; NaN at zero-probability states
  double root = 0.0;
  double price = 0.0;
};

/// Global-filtration dynamic program for V(x, state) = U(x) Phi(state).
PhiTable phi_recursion(const ProblemSpec& spec, const DensityModel& density, Side side, const OptimizerOptions& opt = {});

}  // namespace cascade
