#include "cascade/model.hpp"

#include <cmath>
#include <set>
#include <sstream>

#include "cascade/error.hpp"

namespace cascade {

ConstraintSet ConstraintSet::zero(int d) {
  ConstraintSet c;
  c.kind_ = Kind::zero;
  c.dim_ = d;
  return c;
}

ConstraintSet ConstraintSet::box(Vector lo, Vector hi) {
  if (lo.size() != hi.size()) throw Error(ErrorKind::validation, "box bounds differ in dimension");
  ConstraintSet c;
  c.kind_ = Kind::box;
  c.dim_ = static_cast<int>(lo.size());
  c.lo_ = std::move(lo);
  c.hi_ = std::move(hi);
  return c;
}

ConstraintSet ConstraintSet::finite(std::vector<Vector> points) {
  if (points.empty()) throw Error(ErrorKind::validation, "finite action set is empty");
  ConstraintSet c;
  c.kind_ = Kind::finite;
  c.dim_ = static_cast<int>(points.front().size());
  for (const auto& p : points) {
    if (p.size() != c.dim_) throw Error(ErrorKind::validation, "finite action set mixes dimensions");
  }
  c.points_ = std::move(points);
  return c;
}

ConstraintSet ConstraintSet::unconstrained(int d) {
  ConstraintSet c;
  c.kind_ = Kind::unconstrained;
  c.dim_ = d;
  return c;
}

bool ConstraintSet::contains(const Vector& x, double tol) const {
  if (x.size() != dim_) return false;
  switch (kind_) {
    case Kind::zero:
      return x.cwiseAbs().maxCoeff() <= tol;
    case Kind::box:
      for (int j = 0; j < dim_; ++j) {
        if (x[j] < lo_[j] - tol || x[j] > hi_[j] + tol) return false;
      }
      return true;
    case Kind::finite:
      for (const auto& p : points_) {
        if ((p - x).cwiseAbs().maxCoeff() <= tol) return true;
      }
      return false;
    case Kind::unconstrained:
      return x.allFinite();
  }
  return false;
}

std::vector<Vector> ConstraintSet::enumerate() const {
  if (kind_ == Kind::finite) return points_;
  if (kind_ == Kind::zero) return {Vector::Zero(dim_)};
  throw Error(ErrorKind::configuration, "constraint set " + describe() + " is not finite");
}

std::string ConstraintSet::describe() const {
  switch (kind_) {
    case Kind::zero:
      return "singleton-zero";
    case Kind::box:
      return "box";
    case Kind::finite:
      return "finite-set(" + std::to_string(points_.size()) + ")";
    case Kind::unconstrained:
      return "unconstrained";
  }
  return "?";
}

std::vector<double> mark_weights(const DefaultModel& defaults, const Scenario& history) {
  if (defaults.mark_weights) return defaults.mark_weights(history);
  const auto n = defaults.marks.size();
  return std::vector<double>(n, 1.0 / static_cast<double>(n));
}

BrownianLattice make_lattice(const ProblemSpec& spec) {
  return BrownianLattice(spec.horizon, spec.steps, spec.brownian_dims);
}

ScenarioSet make_scenarios(const ProblemSpec& spec) {
  return ScenarioSet(spec.n_defaults, spec.steps, static_cast<int>(spec.defaults.marks.size()));
}

namespace {

std::string where(const NodePoint& at) {
  std::ostringstream os;
  os << "scenario " << at.scenario << ", step " << at.step << ", node " << at.node;
  return os.str();
}

std::vector<int> traded_rows(const ProblemSpec& spec, int k) {
  std::vector<int> rows;
  const auto& mask = spec.market.traded[static_cast<std::size_t>(k)];
  for (int j = 0; j < spec.assets; ++j) {
    if (mask.empty() || mask[static_cast<std::size_t>(j)]) rows.push_back(j);
  }
  return rows;
}

// Smallest eigenvalue of sigma_bar sigma_bar' relative to the largest.
bool full_row_rank(const Matrix& sigma_bar) {
  if (sigma_bar.rows() == 0) return true;
  const Matrix gram = sigma_bar * sigma_bar.transpose();
  Eigen::SelfAdjointEigenSolver<Matrix> eig(gram, Eigen::EigenvaluesOnly);
  const double hi = eig.eigenvalues().cwiseAbs().maxCoeff();
  return hi > 0.0 && eig.eigenvalues().minCoeff() > 1e-12 * hi;
}

Matrix select_rows(const Matrix& m, const std::vector<int>& rows) {
  Matrix out(static_cast<Eigen::Index>(rows.size()), m.cols());
  for (std::size_t r = 0; r < rows.size(); ++r) out.row(static_cast<Eigen::Index>(r)) = m.row(rows[r]);
  return out;
}

}  // namespace

ValidationReport validate_spec(const ProblemSpec& spec) {
  ValidationReport report;
  std::set<std::string> seen;
  auto flag = [&](const std::string& key, const std::string& message) {
    if (seen.insert(key).second) report.issues.push_back(message);
  };

  if (!(spec.horizon > 0.0)) flag("T", "horizon T must be positive");
  if (spec.steps < 1) flag("M", "steps M must be at least 1");
  if (spec.n_defaults < 0) flag("n", "number of defaults n must be nonnegative");
  if (spec.assets < 1 || spec.assets > spec.brownian_dims) flag("d", "need 1 <= d <= m");
  if (!(spec.utility.risk_aversion > 0.0)) flag("p", "risk aversion p must be positive");
  if (spec.defaults.marks.empty()) flag("E", "mark space is empty");
  if (!spec.payoff.bound || !(*spec.payoff.bound >= 0.0) || !std::isfinite(*spec.payoff.bound)) {
    flag("bound", "payoff bound not declared (need a finite nonnegative bound)");
  }
  if (!spec.payoff.value) flag("payoff", "payoff function missing");
  const auto levels = static_cast<std::size_t>(spec.n_defaults + 1);
  if (spec.constraints.size() != levels) {
    flag("A", "constraints must have exactly n+1 entries");
  }
  for (std::size_t k = 0; k < spec.constraints.size(); ++k) {
    const auto& a = spec.constraints[k];
    if (a.dim() != spec.assets) flag("Adim" + std::to_string(k), "constraint set at level " + std::to_string(k) + " has wrong dimension");
    else if (!a.contains_zero()) flag("A0" + std::to_string(k), "constraint set at level " + std::to_string(k) + " does not contain 0");
  }
  const auto& mk = spec.market;
  if (mk.drift.size() != levels || mk.vol.size() != levels || mk.jump.size() != levels || mk.traded.size() != levels) {
    flag("market", "market coefficients must be given for each level 0..n");
  }
  if (!report.ok()) return report;

  // eta normalization for every conditioning history below level n.
  const ScenarioSet scenarios = make_scenarios(spec);
  for (int k = 0; k < spec.n_defaults; ++k) {
    for (std::size_t id : scenarios.level(k)) {
      const auto w = mark_weights(spec.defaults, scenarios[id]);
      double sum = 0.0;
      bool negative = false;
      for (double v : w) {
        sum += v;
        negative = negative || v < 0.0;
      }
      if (w.size() != spec.defaults.marks.size() || negative || std::abs(sum - 1.0) > 1e-12) {
        flag("eta", "mark weights not normalized (history scenario " + std::to_string(id) + ", sum " +
                        std::to_string(sum) + ")");
      }
    }
  }

  const BrownianLattice lattice = make_lattice(spec);
  try {
    for (std::size_t id = 0; id < scenarios.size(); ++id) {
      const int k = scenarios[id].level();
      const auto rows = traded_rows(spec, k);
      for (int i = scenarios[id].start(); i <= spec.steps; ++i) {
        for (std::size_t node = 0; node < lattice.node_count(i); ++node) {
          const NodePoint at{id, i, node};
          const double r = spec.payoff.value(at);
          if (!std::isfinite(r)) flag("Rfin", "payoff not finite at " + where(at));
          else if (std::abs(r) > *spec.payoff.bound) flag("Rbound", "payoff exceeds declared bound at " + where(at));
          if (i == spec.steps) continue;  // coefficients act on (t_i, t_{i+1}]
          const Vector b = mk.drift[k](at);
          const Matrix sigma = mk.vol[k](at);
          if (b.size() != spec.assets || sigma.rows() != spec.assets || sigma.cols() != spec.brownian_dims) {
            flag("shape" + std::to_string(k), "coefficient shapes wrong at level " + std::to_string(k));
            continue;
          }
          if (!b.allFinite() || !sigma.allFinite()) flag("fin" + std::to_string(k), "non-finite coefficient at " + where(at));
          if (!full_row_rank(select_rows(sigma, rows))) {
            flag("rank" + std::to_string(k), "volatility not of full rank on traded assets at level " +
                                                 std::to_string(k) + " (" + where(at) + ")");
          }
          if (k >= spec.n_defaults) continue;
          for (int e = 0; e < static_cast<int>(spec.defaults.marks.size()); ++e) {
            const Vector g = mk.jump[k](at, e);
            if (g.size() != spec.assets) {
              flag("gshape" + std::to_string(k), "jump size vector has wrong length at level " + std::to_string(k));
            } else if (g.minCoeff() < -1.0) {
              flag("gamma", "jump size below -1 at level " + std::to_string(k) + " (" + where(at) + ", mark " +
                                std::to_string(e) + ")");
            }
          }
        }
      }
    }
  } catch (const Error&) {
    throw;
  } catch (const std::exception& ex) {
    throw Error(ErrorKind::validation, std::string("malformed coefficient function: ") + ex.what());
  }
  return report;
}

Vector risk_premium(const ProblemSpec& spec, int k, const NodePoint& at) {
  const auto rows = traded_rows(spec, k);
  const Matrix sigma = spec.market.vol[static_cast<std::size_t>(k)](at);
  const Vector b = spec.market.drift[static_cast<std::size_t>(k)](at);
  if (rows.empty()) return Vector::Zero(sigma.cols());
  const Matrix sbar = select_rows(sigma, rows);
  Vector bbar(static_cast<Eigen::Index>(rows.size()));
  for (std::size_t r = 0; r < rows.size(); ++r) bbar[static_cast<Eigen::Index>(r)] = b[rows[r]];
  if (!full_row_rank(sbar)) {
    throw Error(ErrorKind::validation, "rank-deficient volatility at level " + std::to_string(k) + ", " + where(at));
  }
  const Matrix gram = sbar * sbar.transpose();
  return sbar.transpose() * gram.ldlt().solve(bbar);
}

Vector asset_increment(const ProblemSpec& spec, int k, const NodePoint& at, const BrownianLattice& lattice, int branch) {
  const Vector b = spec.market.drift[static_cast<std::size_t>(k)](at);
  const Matrix sigma = spec.market.vol[static_cast<std::size_t>(k)](at);
  Vector dw(lattice.dims());
  for (int c = 0; c < lattice.dims(); ++c) dw[c] = lattice.increment(branch, c);
  return b * lattice.dt() + sigma * dw;
}

}  // namespace cascade
