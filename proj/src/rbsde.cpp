#include "cascade/rbsde.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <sstream>

#include "cascade/error.hpp"

namespace cascade {

RbsdeSolution solve_reflected(const DriverSpec& driver, const NodeSeries& obstacle, const BrownianLattice& lattice,
                              std::size_t scenario, int start) {
  const int M = lattice.steps();
  const int m = lattice.dims();
  if (obstacle.size() != static_cast<std::size_t>(M - start + 1)) {
    throw Error(ErrorKind::configuration, "obstacle does not cover steps " + std::to_string(start) + ".." + std::to_string(M));
  }
  RbsdeSolution sol;
  sol.scenario = scenario;
  sol.start = start;
  sol.dims = m;
  sol.convention = driver.convention;
  const auto span = static_cast<std::size_t>(M - start);
  sol.Y.resize(span + 1);
  sol.Z.resize(span);
  sol.dK.resize(span);
  sol.driver.resize(span);

  if (driver.lipschitz_y * lattice.dt() >= 1.0) {
    std::ostringstream os;
    os << "step-size check failed: |df/dy| dt = " << driver.lipschitz_y * lattice.dt() << " >= 1";
    if (driver.strict_step) throw Error(ErrorKind::numeric, os.str());
    sol.warnings.push_back(os.str());
  }

  sol.Y[span] = obstacle[span];
  const double sign = driver.convention == Convention::buyer ? -1.0 : 1.0;
  const double zsign = driver.convention == Convention::buyer ? -1.0 : 1.0;
  std::vector<double> z(static_cast<std::size_t>(m));
  for (int i = M - 1; i >= start; --i) {
    const auto r = static_cast<std::size_t>(i - start);
    const auto& next = sol.Y[r + 1];
    const auto& H = obstacle[r];
    const std::size_t nodes = lattice.node_count(i);
    auto& Y = sol.Y[r];
    auto& Z = sol.Z[r];
    auto& dK = sol.dK[r];
    auto& F = sol.driver[r];
    Y.resize(nodes);
    Z.resize(nodes * static_cast<std::size_t>(m));
    dK.resize(nodes);
    F.resize(nodes);
    for (std::size_t n = 0; n < nodes; ++n) {
      double e = 0.0;
      std::fill(z.begin(), z.end(), 0.0);
      for (int b = 0; b < lattice.branches(); ++b) {
        const double v = next[lattice.child(i, n, b)];
        e += lattice.branch_prob() * v;
        for (int c = 0; c < m; ++c) z[static_cast<std::size_t>(c)] += lattice.branch_prob() * v * lattice.increment(b, c);
      }
      for (int c = 0; c < m; ++c) {
        z[static_cast<std::size_t>(c)] *= zsign / lattice.dt();
        Z[n * static_cast<std::size_t>(m) + static_cast<std::size_t>(c)] = z[static_cast<std::size_t>(c)];
      }
      const double f = driver.evaluate({scenario, i, n, e, std::span<const double>(z)});
      if (!std::isfinite(f)) {
        throw Error(ErrorKind::numeric, "non-finite driver value in scenario " + std::to_string(scenario) + " at step " +
                                            std::to_string(i) + ", node " + std::to_string(n));
      }
      const double tilde = e + sign * f * lattice.dt();
      F[n] = f;
      if (H[n] >= tilde) {
        Y[n] = H[n];
        dK[n] = H[n] - tilde;
      } else {
        Y[n] = tilde;
        dK[n] = 0.0;
      }
    }
  }
  return sol;
}

double skorokhod_residual(const RbsdeSolution& sol, const NodeSeries& obstacle, const BrownianLattice& lattice) {
  const int M = lattice.steps();
  // Max over paths of a sum of node terms: backward max recursion.
  std::vector<double> best(lattice.node_count(M), 0.0);
  for (int i = M - 1; i >= sol.start; --i) {
    const auto r = static_cast<std::size_t>(i - sol.start);
    std::vector<double> cur(lattice.node_count(i));
    for (std::size_t n = 0; n < cur.size(); ++n) {
      double tail = -std::numeric_limits<double>::infinity();
      for (int b = 0; b < lattice.branches(); ++b) tail = std::max(tail, best[lattice.child(i, n, b)]);
      cur[n] = (sol.Y[r][n] - obstacle[r][n]) * sol.dK[r][n] + tail;
    }
    best = std::move(cur);
  }
  return best.empty() ? 0.0 : *std::max_element(best.begin(), best.end());
}

RbsdeInvariants check_invariants(const RbsdeSolution& sol, const NodeSeries& obstacle, const BrownianLattice& lattice) {
  RbsdeInvariants inv;
  const int M = lattice.steps();
  const int m = lattice.dims();
  const double sign = sol.convention == Convention::buyer ? -1.0 : 1.0;
  for (int i = sol.start; i <= M; ++i) {
    const auto r = static_cast<std::size_t>(i - sol.start);
    for (std::size_t n = 0; n < lattice.node_count(i); ++n) {
      inv.obstacle_gap = std::max(inv.obstacle_gap, obstacle[r][n] - sol.Y[r][n]);
      if (i == M) {
        inv.terminal_gap = std::max(inv.terminal_gap, std::abs(sol.Y[r][n] - obstacle[r][n]));
        continue;
      }
      inv.min_dK = std::min(inv.min_dK, sol.dK[r][n]);
      double e = 0.0;
      for (int b = 0; b < lattice.branches(); ++b) e += lattice.branch_prob() * sol.Y[r + 1][lattice.child(i, n, b)];
      const double lhs = sol.Y[r][n] - sol.dK[r][n] - sign * sol.driver[r][n] * lattice.dt();
      inv.martingale = std::max(inv.martingale, std::abs(lhs - e));
      for (int c = 0; c < m; ++c) {
        double cov = 0.0;
        for (int b = 0; b < lattice.branches(); ++b) {
          cov += lattice.branch_prob() * (sol.Y[r + 1][lattice.child(i, n, b)] - e) * lattice.increment(b, c);
        }
        const double zc = sol.Z[r][n * static_cast<std::size_t>(m) + static_cast<std::size_t>(c)];
        inv.covariance = std::max(inv.covariance, std::abs(cov - sign * zc * lattice.dt()));
      }
    }
  }
  inv.obstacle_gap = std::max(inv.obstacle_gap, 0.0);
  inv.skorokhod = skorokhod_residual(sol, obstacle, lattice);
  return inv;
}

std::vector<std::vector<char>> exercise_region(const RbsdeSolution& sol, const NodeSeries& obstacle, double tol) {
  std::vector<std::vector<char>> out(sol.Y.size());
  for (std::size_t r = 0; r < sol.Y.size(); ++r) {
    out[r].resize(sol.Y[r].size());
    for (std::size_t n = 0; n < sol.Y[r].size(); ++n) out[r][n] = std::abs(sol.Y[r][n] - obstacle[r][n]) <= tol ? 1 : 0;
  }
  return out;
}

}  // namespace cascade
