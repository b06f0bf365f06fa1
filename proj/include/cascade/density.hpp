#pragma once

#include <string>
#include <vector>

#include "cascade/lattice.hpp"
#include "cascade/model.hpp"

namespace cascade {

/// Grid masses over terminal default outcomes plus the derived survival masses.
///
/// An outcome is identified with a scenario id: the listed defaults occur and
/// no further default happens by T. Masses may be node-dependent, in which case
/// mass(s, i, node) is the F_{t_i}-conditional probability of outcome s.
class DensityModel {
 public:
  DensityModel() = default;

  /// W-independent masses, one per scenario id.
  static DensityModel independent(const BrownianLattice& lattice, const ScenarioSet& scenarios,
                                  std::vector<double> terminal);
  /// Node-dependent masses: terminal[i][s][node] for i = 0..M.
  static DensityModel node_table(const BrownianLattice& lattice, const ScenarioSet& scenarios,
                                 std::vector<std::vector<std::vector<double>>> terminal);

  const BrownianLattice& lattice() const { return lattice_; }
  const ScenarioSet& scenarios() const { return scenarios_; }
  bool node_dependent() const { return node_dependent_; }

  /// Mass of outcome s.
  double terminal_mass(std::size_t s, int i, std::size_t node) const;
  /// Mass of all outcomes extending s.
  double prefix_mass(std::size_t s, int i, std::size_t node) const;
  /// alpha^k: mass of outcomes extending s with no further default up to t_i (t_i >= theta_k).
  double survival(std::size_t s, int i, std::size_t node) const;

  /// Survival mass vanishes on every node of the scenario's domain.
  bool null_scenario(std::size_t s) const { return null_[s] != 0; }
  /// Survival mass vanishes somewhere on the domain.
  bool touches_zero(std::size_t s) const { return touches_zero_[s] != 0; }

 private:
  void derive();
  std::size_t col(std::size_t node) const { return node_dependent_ ? node : 0; }

  BrownianLattice lattice_;
  ScenarioSet scenarios_;
  bool node_dependent_ = false;
  // [s][i][node or 0]
  std::vector<std::vector<std::vector<double>>> terminal_;
  std::vector<std::vector<std::vector<double>>> prefix_;
  std::vector<std::vector<std::vector<double>>> survival_;  // empty slices before start
  std::vector<char> null_;
  std::vector<char> touches_zero_;
};

/// alpha^k for every level-k scenario: values[j][i - start][node] for ids[j].
struct SurvivalTable {
  int level = 0;
  std::vector<std::size_t> ids;
  std::vector<std::vector<std::vector<double>>> values;
  std::vector<char> excluded;  // zero mass everywhere
};

SurvivalTable marginalize(const DensityModel& density, int k);
/// Same table summed straight from terminal masses, without the level recursion.
SurvivalTable marginalize_direct(const DensityModel& density, int k);

struct NormalizationReport {
  double residual = 0.0;             // max(normalization, martingale residual)
  double normalization = 0.0;        // max |total mass - 1|
  double martingale = 0.0;           // max |mass - mean of children|
  double min_mass = 0.0;
  int step = 0;                      // location of the worst violation
  std::size_t node = 0;
  std::size_t scenario = 0;
  std::string describe() const;
};

NormalizationReport check_normalization(const DensityModel& density);

/// Conditional one-step default probabilities given survival to t_i at a node.
struct StepProbabilities {
  double survive = 0.0;
  std::vector<double> by_mark;
};

StepProbabilities step_default_prob(const DensityModel& density, std::size_t s, std::size_t node, int i);

/// Joint law of (Brownian branch, default outcome at t_{i+1}) given survival to t_i.
struct JointStep {
  std::vector<double> survive;                // [branch]
  std::vector<std::vector<double>> by_mark;   // [branch][mark]
};

JointStep joint_step(const DensityModel& density, std::size_t s, std::size_t node, int i);

/// Builds the density described in the spec on its grid.
DensityModel build_density(const ProblemSpec& spec, const BrownianLattice& lattice, const ScenarioSet& scenarios);

}  // namespace cascade
