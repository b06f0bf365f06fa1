#pragma once

#include <cstddef>
#include <functional>
#include <map>
#include <vector>

namespace cascade {

/// Recombining product binomial tree for an m-dimensional Brownian motion.
///
/// A node at step i is identified by its up-move count per component; the
/// flat index is the mixed-radix number sum_c u_c (i+1)^c. Every branch has
/// probability 2^-m and moves each component by +-sqrt(dt).
class BrownianLattice {
 public:
  BrownianLattice() = default;
  BrownianLattice(double horizon, int steps, int dims, std::size_t max_nodes = default_node_cap());

  double horizon() const { return horizon_; }
  int steps() const { return steps_; }
  int dims() const { return dims_; }
  double dt() const { return dt_; }
  double sqrt_dt() const { return sqrt_dt_; }
  double time(int i) const { return horizon_ * static_cast<double>(i) / steps_; }

  std::size_t node_count(int i) const;
  std::size_t total_nodes() const;
  int branches() const { return 1 << dims_; }
  double branch_prob() const { return branch_prob_; }

  std::size_t child(int i, std::size_t node, int branch) const;
  std::vector<int> up_counts(int i, std::size_t node) const;
  std::size_t index(int i, const std::vector<int>& ups) const;

  /// Brownian coordinate W_c at a node.
  double brownian(int i, std::size_t node, int c) const;
  /// Increment of component c on a branch: +sqrt(dt) if bit c is set.
  double increment(int branch, int c) const { return (branch >> c) & 1 ? sqrt_dt_ : -sqrt_dt_; }

  /// Node reached after the first i moves of a branch sequence.
  std::size_t node_along(const std::vector<int>& path, int i) const;

  /// Node cap from CASCADE_MAX_NODES, or 4'000'000.
  static std::size_t default_node_cap();

 private:
  double horizon_ = 1.0;
  int steps_ = 1;
  int dims_ = 1;
  double dt_ = 1.0;
  double sqrt_dt_ = 1.0;
  double branch_prob_ = 0.5;
};

/// A default scenario: k jump steps (strictly increasing, in 1..M) and their marks.
struct Scenario {
  std::vector<int> steps;
  std::vector<int> marks;

  int level() const { return static_cast<int>(steps.size()); }
  /// Grid step of the last jump, 0 for the empty scenario.
  int start() const { return steps.empty() ? 0 : steps.back(); }
  bool operator==(const Scenario&) const = default;
  auto operator<=>(const Scenario&) const = default;
};

/// All scenarios of level 0..n, level-major and lexicographic in
/// (theta_1, e_1, theta_2, e_2, ...) within a level.
std::vector<Scenario> enumerate_scenarios(int n, int steps, int num_marks);

/// Indexed scenario collection with O(1) extension lookups.
class ScenarioSet {
 public:
  static constexpr std::size_t npos = static_cast<std::size_t>(-1);

  ScenarioSet() = default;
  ScenarioSet(int n, int steps, int num_marks, std::size_t max_scenarios = 1'000'000);

  std::size_t size() const { return items_.size(); }
  const Scenario& operator[](std::size_t id) const { return items_[id]; }
  const std::vector<Scenario>& all() const { return items_; }
  const std::vector<std::size_t>& level(int k) const { return levels_[k]; }
  int max_level() const { return n_; }
  int steps() const { return steps_; }
  int num_marks() const { return marks_; }

  std::size_t find(const Scenario& s) const;
  /// Id of the scenario extended by a jump at `step` with `mark`; npos if not a valid extension.
  std::size_t extend(std::size_t id, int step, int mark) const;
  std::size_t parent(std::size_t id) const { return parents_[id]; }
  /// Prefix of `id` with its first k jumps.
  std::size_t prefix(std::size_t id, int k) const;

 private:
  int n_ = 0;
  int steps_ = 1;
  int marks_ = 1;
  std::vector<Scenario> items_;
  std::vector<std::vector<std::size_t>> levels_;
  std::vector<std::size_t> parents_;
  std::vector<std::vector<std::size_t>> children_;  // [id][(step-1)*marks + mark]
  std::map<Scenario, std::size_t> lookup_;
};

/// Evaluation point of an indexed process: scenario id, grid step, lattice node.
struct NodePoint {
  std::size_t scenario = 0;
  int step = 0;
  std::size_t node = 0;
};

/// Z^k(theta_k, e_k) at (node, t_i) for t_i >= theta_k.
using IndexedProcess = std::function<double(const NodePoint&)>;

/// Values per scenario on steps start..M, one vector per step over that step's nodes.
class ScenarioTable {
 public:
  ScenarioTable() = default;
  ScenarioTable(const BrownianLattice& lattice, const ScenarioSet& scenarios, double fill = 0.0);

  double& at(std::size_t s, int i, std::size_t node) { return data_[s][i - start_[s]][node]; }
  double at(std::size_t s, int i, std::size_t node) const { return data_[s][i - start_[s]][node]; }
  std::vector<double>& slice(std::size_t s, int i) { return data_[s][i - start_[s]]; }
  const std::vector<double>& slice(std::size_t s, int i) const { return data_[s][i - start_[s]]; }
  int start(std::size_t s) const { return start_[s]; }

 private:
  std::vector<int> start_;
  std::vector<std::vector<std::vector<double>>> data_;
};

}  // namespace cascade
