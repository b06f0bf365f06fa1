#pragma once

#include <Eigen/Dense>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "cascade/lattice.hpp"

namespace cascade {

using Vector = Eigen::VectorXd;
using Matrix = Eigen::MatrixXd;

using ScalarField = std::function<double(const NodePoint&)>;
using VectorField = std::function<Vector(const NodePoint&)>;
using MatrixField = std::function<Matrix(const NodePoint&)>;
/// gamma^k at a node for a given mark: relative jump of each asset at the (k+1)-th default.
using JumpField = std::function<Vector(const NodePoint&, int mark)>;

/// Per-level market coefficients, index k = number of defaults observed.
struct MarketSpec {
  std::vector<VectorField> drift;         // b^k, length d
  std::vector<MatrixField> vol;           // sigma^k, d x m
  std::vector<JumpField> jump;            // gamma^k, length d
  std::vector<std::vector<bool>> traded;  // traded_mask^k, length d
};

/// Grid mass of one terminal outcome: the listed jump times (years) and marks, then no further default by T.
struct MassEntry {
  std::vector<double> times;
  std::vector<int> marks;
  double mass = 0.0;
};

/// One row of a node-dependent mass table.
struct NodeMassRow {
  std::size_t node = 0;
  int step = 0;
  std::vector<int> jump_steps;
  std::vector<int> marks;
  double mass = 0.0;
};

/// How to build the density once the grid is known.
struct DensitySource {
  enum class Kind { independent, node_table };
  Kind kind = Kind::independent;
  /// Independent family with a constant default intensity between defaults; marks drawn from eta.
  std::optional<double> hazard;
  /// Independent family given by explicit terminal masses (eta folded in).
  std::vector<MassEntry> masses;
  /// Node-dependent family.
  std::vector<NodeMassRow> rows;
};

struct DefaultModel {
  std::vector<double> marks;
  /// eta for the next mark given the history so far; empty function means uniform weights.
  std::function<std::vector<double>(const Scenario&)> mark_weights;
  DensitySource density;
};

struct PayoffSpec {
  ScalarField value;  // R^k(theta_k, e_k) at (node, t_i)
  std::optional<double> bound;  // declared sup |R|
  std::string description;
};

struct UtilitySpec {
  double risk_aversion = 1.0;
};

class ConstraintSet {
 public:
  enum class Kind { zero, box, finite, unconstrained };

  static ConstraintSet zero(int d);
  static ConstraintSet box(Vector lo, Vector hi);
  static ConstraintSet finite(std::vector<Vector> points);
  static ConstraintSet unconstrained(int d);

  Kind kind() const { return kind_; }
  int dim() const { return dim_; }
  const Vector& lo() const { return lo_; }
  const Vector& hi() const { return hi_; }
  const std::vector<Vector>& points() const { return points_; }

  bool contains(const Vector& x, double tol = 0.0) const;
  bool contains_zero() const { return contains(Vector::Zero(dim_)); }
  /// Finite sets return their points; {0} returns the zero vector; others throw.
  std::vector<Vector> enumerate() const;
  std::string describe() const;

 private:
  Kind kind_ = Kind::unconstrained;
  int dim_ = 1;
  Vector lo_, hi_;
  std::vector<Vector> points_;
};

struct ProblemSpec {
  double horizon = 1.0;
  int steps = 1;
  int n_defaults = 0;
  int assets = 1;
  int brownian_dims = 1;
  MarketSpec market;
  DefaultModel defaults;
  PayoffSpec payoff;
  UtilitySpec utility;
  std::vector<ConstraintSet> constraints;
  double initial_wealth = 0.0;
};

struct ValidationReport {
  std::vector<std::string> issues;
  bool ok() const { return issues.empty(); }
};

/// Lists every violated structural assumption; throws only for malformed coefficient functions.
ValidationReport validate_spec(const ProblemSpec& spec);

/// lambda with sigma lambda = b on the traded block, minimum norm.
Vector risk_premium(const ProblemSpec& spec, int k, const NodePoint& at);

/// b dt + sigma dW on a branch, evaluated at t_i.
Vector asset_increment(const ProblemSpec& spec, int k, const NodePoint& at, const BrownianLattice& lattice, int branch);

/// eta for the next default given a history (uniform when unset).
std::vector<double> mark_weights(const DefaultModel& defaults, const Scenario& history);

BrownianLattice make_lattice(const ProblemSpec& spec);
ScenarioSet make_scenarios(const ProblemSpec& spec);

}  // namespace cascade
