#include "cascade/optimize.hpp"

#include <cmath>
#include <limits>
#include <sstream>

#include "cascade/error.hpp"

namespace cascade {

namespace {

Vector project(const ConstraintSet& set, Vector x) {
  if (set.kind() != ConstraintSet::Kind::box) return x;
  return x.cwiseMax(set.lo()).cwiseMin(set.hi());
}

double stationarity(const ConstraintSet& set, const Vector& x, const Vector& g) {
  if (g.size() == 0) return 0.0;
  if (set.kind() != ConstraintSet::Kind::box) return g.cwiseAbs().maxCoeff();
  return (x - project(set, x - g)).cwiseAbs().maxCoeff();
}

// Newton direction on the free coordinates; coordinates pinned at a bound stay put.
Vector direction(const ConstraintSet& set, const Vector& x, const Vector& g, const Matrix& H, double eps) {
  const auto n = x.size();
  std::vector<Eigen::Index> free;
  Vector d = Vector::Zero(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    bool active = false;
    if (set.kind() == ConstraintSet::Kind::box) {
      active = (x[j] <= set.lo()[j] + eps && g[j] > 0.0) || (x[j] >= set.hi()[j] - eps && g[j] < 0.0);
    }
    if (!active) free.push_back(j);
  }
  if (free.empty()) return d;
  const auto nf = static_cast<Eigen::Index>(free.size());
  Matrix Hf(nf, nf);
  Vector gf(nf);
  for (Eigen::Index a = 0; a < nf; ++a) {
    gf[a] = g[free[static_cast<std::size_t>(a)]];
    for (Eigen::Index b = 0; b < nf; ++b) Hf(a, b) = H(free[static_cast<std::size_t>(a)], free[static_cast<std::size_t>(b)]);
  }
  Eigen::LDLT<Matrix> ldlt(Hf);
  Vector df;
  const bool pd = ldlt.info() == Eigen::Success && ldlt.isPositive() && (ldlt.vectorD().array() > 0.0).all();
  if (pd) df = ldlt.solve(-gf);
  if (!pd || !df.allFinite() || df.dot(gf) >= 0.0) {
    // Singular curvature: regularize with a scaled identity.
    const double mu = 1e-8 * std::max(1.0, Hf.cwiseAbs().maxCoeff());
    Matrix R = Hf + mu * Matrix::Identity(nf, nf);
    df = R.ldlt().solve(-gf);
    if (!df.allFinite() || df.dot(gf) >= 0.0) df = -gf;
  }
  for (Eigen::Index a = 0; a < nf; ++a) d[free[static_cast<std::size_t>(a)]] = df[a];
  return d;
}

}  // namespace

OptimizerResult minimize_convex(const SmoothObjective& f, const ConstraintSet& set, const OptimizerOptions& opt) {
  OptimizerResult r;
  if (set.kind() == ConstraintSet::Kind::finite || set.kind() == ConstraintSet::Kind::zero) {
    const auto pts = set.enumerate();
    r.value = std::numeric_limits<double>::infinity();
    for (const auto& p : pts) {
      const double v = f.value(p);
      if (v < r.value) {
        r.value = v;
        r.x = p;
      }
    }
    if (r.x.size() == 0) {
      throw Error(ErrorKind::numeric, "objective is not finite at any point of the finite action set");
    }
    return r;
  }
  r.x = Vector::Zero(f.dim);
  r.value = f.value(r.x);
  if (f.dim == 0) return r;
  Vector g(f.dim);
  Matrix H(f.dim, f.dim);
  for (r.iterations = 0; r.iterations < opt.max_iter; ++r.iterations) {
    f.derivatives(r.x, g, H);
    r.grad_norm = stationarity(set, r.x, g);
    if (r.grad_norm <= opt.grad_tol) return r;
    const Vector d = direction(set, r.x, g, H, std::min(1e-12, r.grad_norm));
    // Newton decrement below rounding of the objective: nothing left to gain.
    if (-g.dot(d) <= 1e-18 * std::max(1.0, std::abs(r.value))) return r;
    double t = 1.0;
    bool moved = false;
    for (int ls = 0; ls < 80; ++ls, t *= 0.5) {
      const Vector trial = project(set, r.x + t * d);
      const double v = f.value(trial);
      if (std::isfinite(v) && v <= r.value + 1e-4 * g.dot(trial - r.x)) {
        moved = (trial - r.x).cwiseAbs().maxCoeff() > 0.0;
        r.x = trial;
        r.value = v;
        break;
      }
    }
    if (!moved) {
      // No representable descent: accept if the predicted decrease is at rounding level.
      const double decrease = -g.dot(d);
      if (decrease <= 1e-12 * std::max(1.0, std::abs(r.value))) return r;
      break;
    }
  }
  std::ostringstream os;
  os.precision(17);
  os << "optimizer did not converge after " << r.iterations << " iterations (stationarity " << r.grad_norm << ", value "
     << r.value << ")";
  throw Error(ErrorKind::numeric, os.str());
}

double golden_section(const std::function<double(double)>& f, double lo, double hi, double tol) {
  const double invphi = (std::sqrt(5.0) - 1.0) / 2.0;
  double a = lo, b = hi;
  double c = b - invphi * (b - a), d = a + invphi * (b - a);
  double fc = f(c), fd = f(d);
  while (b - a > tol) {
    if (fc < fd) {
      b = d;
      d = c;
      fd = fc;
      c = b - invphi * (b - a);
      fc = f(c);
    } else {
      a = c;
      c = d;
      fc = fd;
      d = a + invphi * (b - a);
      fd = f(d);
    }
  }
  return 0.5 * (a + b);
}

ConstraintSet restrict_set(const ConstraintSet& set, const std::vector<int>& keep) {
  const auto n = static_cast<Eigen::Index>(keep.size());
  auto sub = [&](const Vector& v) {
    Vector out(n);
    for (Eigen::Index j = 0; j < n; ++j) out[j] = v[keep[static_cast<std::size_t>(j)]];
    return out;
  };
  switch (set.kind()) {
    case ConstraintSet::Kind::zero:
      return ConstraintSet::zero(static_cast<int>(n));
    case ConstraintSet::Kind::unconstrained:
      return ConstraintSet::unconstrained(static_cast<int>(n));
    case ConstraintSet::Kind::box:
      return ConstraintSet::box(sub(set.lo()), sub(set.hi()));
    case ConstraintSet::Kind::finite: {
      std::vector<Vector> pts;
      for (const auto& p : set.points()) {
        Vector rest = p;
        for (int j : keep) rest[j] = 0.0;
        if (rest.size() == 0 || rest.cwiseAbs().maxCoeff() == 0.0) pts.push_back(sub(p));
      }
      return ConstraintSet::finite(std::move(pts));
    }
  }
  return set;
}

}  // namespace cascade
