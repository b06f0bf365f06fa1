#pragma once

#include <string>
#include <vector>

#include "cascade/density.hpp"
#include "cascade/engine.hpp"
#include "cascade/model.hpp"
#include "cascade/optimize.hpp"
#include "cascade/rbsde.hpp"

namespace cascade {

enum class Side { buyer, seller };

inline const char* to_string(Side s) { return s == Side::buyer ? "buyer" : "seller"; }
inline Convention convention_of(Side s) { return s == Side::buyer ? Convention::buyer : Convention::seller; }

/// Buyer: H^k = R^k - (1/p) ln alpha^k. Seller: R^k + (1/p) ln alpha^k.
struct Obstacle {
  Side side = Side::buyer;
  std::vector<NodeSeries> table;  // per scenario id, steps start..M; empty when excluded
  std::vector<char> included;
  double max_abs = 0.0;
};

Obstacle build_obstacles(const ProblemSpec& spec, const DensityModel& density, Side side);

/// One mark's contribution to the jump integral.
struct JumpTerm {
  Vector gamma;          // gamma^k at the node for this mark
  double y_next = 0.0;   // Y^{k+1} for the scenario extended by this mark
  double weight = 1.0;   // eta(e), or 1/dt in mass form
};

/// Everything the level-k generator needs at one node.
struct GeneratorInputs {
  double p = 1.0;
  Vector drift;                 // b, length d
  Matrix vol;                   // sigma, d x m
  std::vector<bool> traded;     // empty means all traded
  Vector z;                     // length m
  double y = 0.0;
  std::vector<JumpTerm> jumps;  // empty at level n
};

/// g^k (buyer) or its seller analog at pi, with the jump integral as a weighted mark sum.
double generator_g(Side side, const GeneratorInputs& in, const Vector& pi);

/// Per-step form used by the scheme: the jump sum J enters as ln(1 + dt p J)/(p dt).
double step_generator(Side side, const GeneratorInputs& in, const Vector& pi, double dt);

struct GeneratorMin {
  double value = 0.0;
  Vector pi;
  int iterations = 0;
};

/// inf over A of generator_g; non-traded coordinates stay at 0.
GeneratorMin minimize_generator(Side side, const GeneratorInputs& in, const ConstraintSet& A,
                                const OptimizerOptions& opt = {});
GeneratorMin minimize_step_generator(Side side, const GeneratorInputs& in, const ConstraintSet& A, double dt,
                                     const OptimizerOptions& opt = {});

/// Gathers b, sigma, gamma and the traded mask of level k at a node.
GeneratorInputs generator_inputs(const ProblemSpec& spec, int k, const NodePoint& at);

struct SolveOptions {
  int jobs = 1;
  OptimizerOptions optimizer;
  bool strict_step = false;
};

struct ScenarioSolution {
  bool included = false;
  RbsdeSolution rbsde;
  std::vector<std::vector<Vector>> pi;  // [i - start][node], steps start..M-1
  RbsdeInvariants invariants;
};

struct SystemSolution {
  Side side = Side::buyer;
  Obstacle obstacle;
  std::vector<ScenarioSolution> scenarios;  // by scenario id
  double root = 0.0;                        // Y^0 at the root
  double driver_bound = 0.0;                // max |f| over all solved nodes
};

/// Solves the reflected system from level n down to 0.
SystemSolution solve_recursive_system(const ProblemSpec& spec, const DensityModel& density, Side side,
                                      const SolveOptions& opt = {});

struct PriceReport {
  double buy_price = 0.0;
  double sell_price = 0.0;
  double root_buyer = 0.0;
  double root_seller = 0.0;
  /// |U(x) - U(x - c + Y)| and |U(x) - U(x + c - Y)| at the initial wealth.
  double buyer_equation_residual = 0.0;
  double seller_equation_residual = 0.0;
  SystemSolution buyer;
  SystemSolution seller;
};

PriceReport indifference_prices(const ProblemSpec& spec, const DensityModel& density, const SolveOptions& opt = {});

/// First hitting of {Y = obstacle} for every included scenario.
StoppingPolicy optimal_stop(const SystemSolution& sol, const DensityModel& density, double tol = 1e-10);

/// pi-hat read from the solution tables (zero where undefined).
ControlPolicy optimal_control(const SystemSolution& sol, int assets);

double utility(double p, double x);

/// E[U(X_tau + R_tau)] (buyer) or E[U(X_tau - R_tau)] (seller), exact over all paths and default outcomes.
double simulate_strategy(const ProblemSpec& spec, const DensityModel& density, const ControlPolicy& control,
                         const StoppingPolicy& stopping, Side side);

/// Certainty equivalent of an expected utility from simulate_strategy:
/// buyer v with U(x0 + v) = EU, seller v with U(x0 - v) = EU.
double certainty_equivalent(double expected_utility, double p, double x0, Side side);

/// Unilateral deviations from the seller's (pi-hat, tau-hat), scored in certainty-equivalent units.
/// A control deviation must not raise E[U(X - R)]; a stop deviation must not lower it.
struct SaddleReport {
  double value = 0.0;               // certainty equivalent of (pi-hat, tau-hat)
  double tolerance = 0.0;
  std::size_t control_deviations = 0;
  std::size_t stop_deviations = 0;
  std::size_t violations = 0;
  double max_control_excess = 0.0;  // largest gain found by a control deviation
  double max_stop_excess = 0.0;     // largest gain found by a stop deviation
};

/// Every single-node action change over the finite grid of A^k, every constant control per
/// scenario, every single-node stop flip and every stop-now / never-stop rule per scenario.
SaddleReport check_saddle_point(const ProblemSpec& spec, const DensityModel& density, const SystemSolution& seller,
                                double tolerance);

/// Wealth problem on a finite action grid, as a generic controller-stopper problem.
ControllerStopperProblem wealth_problem(const ProblemSpec& spec, Side side);

/// Wealth along one global outcome under a node-based control, stopped at `stop_step`.
struct WealthPath {
  std::vector<double> wealth;  // steps 0..stop_step
  std::vector<std::size_t> scenario;
};

WealthPath wealth_path(const ProblemSpec& spec, const BrownianLattice& lattice, const ScenarioSet& scenarios,
                       const ControlPolicy& control, const GlobalOutcome& outcome, int stop_step);

}  // namespace cascade
