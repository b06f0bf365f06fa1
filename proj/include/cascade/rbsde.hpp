#pragma once

#include <functional>
#include <span>
#include <string>
#include <vector>

#include "cascade/lattice.hpp"

namespace cascade {

/// buyer: dY = f dt - Z dW - dK (driver enters the backward step with a minus);
/// seller: dY = -f dt + Z dW - dK (plus sign).
enum class Convention { buyer, seller };

struct DriverInput {
  std::size_t scenario;
  int step;
  std::size_t node;
  double y;                     // conditional expectation of Y_{i+1}
  std::span<const double> z;    // Z at the node, in the convention's sign
};

struct DriverSpec {
  std::function<double(const DriverInput&)> evaluate;
  Convention convention = Convention::buyer;
  double lipschitz_y = 0.0;  // bound on |df/dy|; 0 when unknown
  bool strict_step = false;  // escalate the step-size warning to an error
};

/// Obstacle on steps start..M: [i - start][node].
using NodeSeries = std::vector<std::vector<double>>;

struct RbsdeSolution {
  std::size_t scenario = 0;
  int start = 0;
  int dims = 1;
  Convention convention = Convention::buyer;
  NodeSeries Y;                 // steps start..M
  NodeSeries Z;                 // steps start..M-1, node * dims + c
  NodeSeries dK;                // K_{i+1} - K_i, steps start..M-1
  NodeSeries driver;            // f used at each node, steps start..M-1
  std::vector<std::string> warnings;

  double y(int i, std::size_t node) const { return Y[static_cast<std::size_t>(i - start)][node]; }
};

RbsdeSolution solve_reflected(const DriverSpec& driver, const NodeSeries& obstacle, const BrownianLattice& lattice,
                              std::size_t scenario, int start);

/// max over paths of sum_i (Y_i - H_i) dK_i.
double skorokhod_residual(const RbsdeSolution& sol, const NodeSeries& obstacle, const BrownianLattice& lattice);

struct RbsdeInvariants {
  double obstacle_gap = 0.0;       // max(H - Y, 0)
  double terminal_gap = 0.0;       // max |Y_M - H_M|
  double min_dK = 0.0;             // most negative reflection increment
  double skorokhod = 0.0;
  double martingale = 0.0;         // max |Y_i - dK_i -+ f dt - E[Y_{i+1}]|
  double covariance = 0.0;         // max |E[(Y_{i+1} - E) dW_c] -+ Z_c dt|
  bool exact() const { return obstacle_gap == 0.0 && terminal_gap == 0.0 && min_dK >= 0.0; }
  bool ok(double skorokhod_tol = 1e-14, double identity_tol = 1e-12) const {
    return exact() && skorokhod <= skorokhod_tol && martingale <= identity_tol && covariance <= identity_tol;
  }
};

RbsdeInvariants check_invariants(const RbsdeSolution& sol, const NodeSeries& obstacle, const BrownianLattice& lattice);

/// Nodes with Y within tol of the obstacle: [i - start][node].
std::vector<std::vector<char>> exercise_region(const RbsdeSolution& sol, const NodeSeries& obstacle, double tol = 1e-10);

}  // namespace cascade
