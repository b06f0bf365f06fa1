#pragma once

#include <bit>
#include <cstdint>
#include <functional>
#include <string>
#include <unordered_map>
#include <vector>

#include "cascade/density.hpp"
#include "cascade/lattice.hpp"
#include "cascade/model.hpp"

namespace cascade {

/// Stop flags per scenario, step and node. tau^k is the first step >= theta_k
/// whose flag is set along the path; stopping at t_M is forced.
class StoppingPolicy {
 public:
  StoppingPolicy() = default;
  /// Continue everywhere (stop at the horizon).
  StoppingPolicy(const BrownianLattice& lattice, const ScenarioSet& scenarios);

  void set(std::size_t s, int i, std::size_t node, bool stop) { flags_[s][static_cast<std::size_t>(i)][node] = stop ? 1 : 0; }
  bool flag(std::size_t s, int i, std::size_t node) const { return flags_[s][static_cast<std::size_t>(i)][node] != 0; }
  bool stops(std::size_t s, int i, std::size_t node) const { return i == steps_ || flag(s, i, node); }
  int steps() const { return steps_; }
  std::size_t size() const { return flags_.size(); }

  /// Flags set before theta_k (tau^k >= theta_k violated).
  std::vector<std::string> violations(const ScenarioSet& scenarios) const;
  /// tau^k along a branch sequence, starting at theta_k.
  int hitting_step(std::size_t s, int start, const std::vector<int>& path, const BrownianLattice& lattice) const;

 private:
  int steps_ = 0;
  std::vector<std::vector<std::vector<char>>> flags_;  // [s][i][node], i = 0..M
};

/// One global outcome: a Brownian branch sequence of length M and a terminal default outcome.
struct GlobalOutcome {
  std::vector<int> path;
  std::size_t outcome = 0;  // scenario id: these defaults and no further one by T
};

struct ComposedStop {
  int step = 0;
  int level = 0;
  std::size_t scenario = 0;  // prefix scenario active at the stop
};

/// tau = tau^0 1{tau^0 < zeta_1} + sum_k tau^k 1{...}; a default at the stop step preempts it.
ComposedStop compose_stopping(const StoppingPolicy& policy, const BrownianLattice& lattice, const ScenarioSet& scenarios,
                              const GlobalOutcome& outcome);

struct DecompositionReport {
  std::size_t outcomes_checked = 0;
  std::vector<std::string> violations;
};

/// Checks the partition identities on every path x outcome. Throws if the policy itself is invalid.
DecompositionReport verify_decomposition_uniqueness(const StoppingPolicy& policy, const DensityModel& density);

/// All Brownian branch sequences of length M (2^{mM} of them).
std::vector<std::vector<int>> enumerate_paths(const BrownianLattice& lattice);

struct ExpectationReport {
  double value = 0.0;
  /// J_k(scenario) over the nodes at theta_k.
  std::vector<std::vector<double>> J;
};

/// E[Z_tau] by backward induction over default levels.
ExpectationReport backward_expectation(const IndexedProcess& Z, const StoppingPolicy& policy, const DensityModel& density);

using Action = Vector;
using ActionSets = std::vector<std::vector<Action>>;  // per level
using ControlPolicy = std::function<Action(const NodePoint&)>;
using StatePayoff = std::function<double(const NodePoint&, double x)>;

struct ControlledDynamics {
  /// State at t_{i+1} on a branch, from state x at `at` = (s, t_i, node) under action a.
  std::function<double(const NodePoint& at, double x, const Action& a, int branch)> flow;
  /// Post-jump state for a default at t_{i+1} with mark e. `at` is the decision point
  /// (pre-jump scenario, t_i, node) and x the state after the Brownian move.
  std::function<double(const NodePoint& at, double x, const Action& a, int mark)> jump;
};

struct ControllerStopperProblem {
  ControlledDynamics dynamics;
  StatePayoff payoff;  // U^k at (node, t_i) as a function of the state
  ActionSets actions;
  double x0 = 0.0;
};

enum class GameMode { supsup, supinf };

struct StateKey {
  std::size_t scenario;
  int step;
  std::size_t node;
  double x;
  bool operator==(const StateKey& o) const {
    return scenario == o.scenario && step == o.step && node == o.node && std::bit_cast<std::uint64_t>(x) == std::bit_cast<std::uint64_t>(o.x);
  }
};

struct StateKeyHash {
  std::size_t operator()(const StateKey& k) const noexcept {
    std::uint64_t h = std::bit_cast<std::uint64_t>(k.x);
    h ^= k.scenario * 0x9E3779B97F4A7C15ULL + (h << 6) + (h >> 2);
    h ^= static_cast<std::uint64_t>(k.step) * 0xC2B2AE3D27D4EB4FULL + (h << 6) + (h >> 2);
    h ^= k.node * 0x165667B19E3779F9ULL + (h << 6) + (h >> 2);
    return static_cast<std::size_t>(h);
  }
};

struct Decision {
  double value = 0.0;  // Vbar^k including the alpha^k weight
  bool stop = false;
  int action = -1;     // index into the level's action set; -1 when stopping at T
};

/// Value tables over reachable states and the maximizing feedback decisions.
struct ControllerStopperResult {
  double value = 0.0;
  std::unordered_map<StateKey, Decision, StateKeyHash> decisions;
  const Decision* find(const NodePoint& at, double x) const;
};

ControllerStopperResult solve_supsup(const ControllerStopperProblem& problem, const DensityModel& density,
                                     std::size_t max_states = 5'000'000);
ControllerStopperResult solve_supinf(const ControllerStopperProblem& problem, const DensityModel& density,
                                     std::size_t max_states = 5'000'000);
ControllerStopperResult solve_controller_stopper(GameMode mode, const ControllerStopperProblem& problem,
                                                 const DensityModel& density, std::size_t max_states = 5'000'000);

/// E[U(X_tau)] for a node-based control and stopping policy, by the same level decomposition.
double evaluate_strategy(const ControllerStopperProblem& problem, const DensityModel& density,
                         const ControlPolicy& control, const StoppingPolicy& stopping);

}  // namespace cascade
