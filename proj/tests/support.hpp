#pragma once

#include <cmath>
#include <memory>
#include <random>
#include <vector>

#include "cascade/density.hpp"
#include "cascade/engine.hpp"
#include "cascade/error.hpp"
#include "cascade/model.hpp"
#include "cascade/oracle.hpp"
#include "cascade/pricing.hpp"

namespace support {

using namespace cascade;

/// One asset, one Brownian component, constant coefficients at every level.
struct SpecBuilder {
  double T = 1.0;
  int M = 2;
  int n = 1;
  double b = 0.0;
  double sigma = 0.3;
  std::vector<double> gamma{0.0};  // per mark
  std::vector<double> eta;         // empty: uniform
  double hazard = 0.5;
  double p = 1.0;
  ScalarField payoff = [](const NodePoint&) { return 0.0; };
  double bound = 10.0;
  ConstraintSet A = ConstraintSet::unconstrained(1);

  ProblemSpec build() const {
    ProblemSpec s;
    s.horizon = T;
    s.steps = M;
    s.n_defaults = n;
    s.assets = 1;
    s.brownian_dims = 1;
    for (std::size_t e = 0; e < gamma.size(); ++e) s.defaults.marks.push_back(static_cast<double>(e + 1));
    if (!eta.empty()) {
      const auto w = eta;
      s.defaults.mark_weights = [w](const Scenario&) { return w; };
    }
    s.defaults.density.hazard = hazard;
    const double bb = b, ss = sigma;
    const auto gg = gamma;
    for (int k = 0; k <= n; ++k) {
      s.market.drift.push_back([bb](const NodePoint&) { return Vector::Constant(1, bb); });
      s.market.vol.push_back([ss](const NodePoint&) { return Matrix::Constant(1, 1, ss); });
      s.market.jump.push_back([gg](const NodePoint&, int e) { return Vector::Constant(1, gg[static_cast<std::size_t>(e)]); });
      s.market.traded.push_back({true});
      s.constraints.push_back(A);
    }
    s.payoff.value = payoff;
    s.payoff.bound = bound;
    s.payoff.description = "test";
    s.utility.risk_aversion = p;
    return s;
  }
};

/// Uniform table over (scenario, step, node) for every step, read through NodePoint.
inline ScalarField random_field(const BrownianLattice& lat, const ScenarioSet& sc, std::mt19937_64& rng, double lo,
                                double hi) {
  std::uniform_real_distribution<double> u(lo, hi);
  auto t = std::make_shared<std::vector<std::vector<std::vector<double>>>>(sc.size());
  for (auto& per_s : *t) {
    for (int i = 0; i <= lat.steps(); ++i) {
      std::vector<double> row(lat.node_count(i));
      for (auto& v : row) v = u(rng);
      per_s.push_back(std::move(row));
    }
  }
  return [t](const NodePoint& at) { return (*t)[at.scenario][static_cast<std::size_t>(at.step)][at.node]; };
}

/// Random positive W-independent masses summing to 1.
inline DensityModel random_independent(const BrownianLattice& lat, const ScenarioSet& sc, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  std::vector<double> m(sc.size());
  double total = 0.0;
  for (auto& v : m) total += (v = u(rng));
  for (auto& v : m) v /= total;
  return DensityModel::independent(lat, sc, m);
}

/// Random node-dependent masses: independent draws at step M, conditional averages below.
inline DensityModel random_node_dependent(const BrownianLattice& lat, const ScenarioSet& sc, std::mt19937_64& rng) {
  std::uniform_real_distribution<double> u(0.05, 1.0);
  const int M = lat.steps();
  std::vector<std::vector<std::vector<double>>> t(static_cast<std::size_t>(M + 1),
                                                  std::vector<std::vector<double>>(sc.size()));
  for (std::size_t s = 0; s < sc.size(); ++s) t[static_cast<std::size_t>(M)][s].assign(lat.node_count(M), 0.0);
  for (std::size_t n = 0; n < lat.node_count(M); ++n) {
    double total = 0.0;
    for (std::size_t s = 0; s < sc.size(); ++s) total += (t[static_cast<std::size_t>(M)][s][n] = u(rng));
    for (std::size_t s = 0; s < sc.size(); ++s) t[static_cast<std::size_t>(M)][s][n] /= total;
  }
  for (int i = M - 1; i >= 0; --i) {
    for (std::size_t s = 0; s < sc.size(); ++s) {
      auto& row = t[static_cast<std::size_t>(i)][s];
      row.assign(lat.node_count(i), 0.0);
      for (std::size_t n = 0; n < row.size(); ++n) {
        for (int b = 0; b < lat.branches(); ++b) {
          row[n] += lat.branch_prob() * t[static_cast<std::size_t>(i + 1)][s][lat.child(i, n, b)];
        }
      }
    }
  }
  return DensityModel::node_table(lat, sc, std::move(t));
}

/// Stop flags drawn with probability q on every node at or after each scenario's start.
inline StoppingPolicy random_policy(const BrownianLattice& lat, const ScenarioSet& sc, std::mt19937_64& rng, double q) {
  std::bernoulli_distribution flip(q);
  StoppingPolicy pol(lat, sc);
  for (std::size_t s = 0; s < sc.size(); ++s) {
    for (int i = sc[s].start(); i < lat.steps(); ++i) {
      for (std::size_t n = 0; n < lat.node_count(i); ++n) pol.set(s, i, n, flip(rng));
    }
  }
  return pol;
}

/// Generic controlled problem: x moves by a * (+-1) * scale on branches and by a * mark on defaults,
/// payoff c(at) + tanh(x) with a random table c.
inline ControllerStopperProblem random_problem(const BrownianLattice& lat, const ScenarioSet& sc, std::mt19937_64& rng,
                                               int actions) {
  ControllerStopperProblem prob;
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  for (int k = 0; k <= sc.max_level(); ++k) {
    std::vector<Action> acts;
    for (int a = 0; a < actions; ++a) acts.push_back(Vector::Constant(1, u(rng)));
    prob.actions.push_back(std::move(acts));
  }
  const double scale = 0.5 + 0.5 * (u(rng) + 1.0);
  std::vector<double> marks;
  for (int e = 0; e < sc.num_marks(); ++e) marks.push_back(u(rng));
  prob.dynamics.flow = [scale](const NodePoint&, double x, const Action& a, int branch) {
    return x + a[0] * scale * ((branch & 1) ? 1.0 : -1.0);
  };
  prob.dynamics.jump = [marks](const NodePoint&, double x, const Action& a, int mark) {
    return x + a[0] * marks[static_cast<std::size_t>(mark)];
  };
  const ScalarField c = random_field(lat, sc, rng, -1.0, 1.0);
  prob.payoff = [c](const NodePoint& at, double x) { return c(at) + std::tanh(x); };
  prob.x0 = u(rng);
  return prob;
}

}  // namespace support
