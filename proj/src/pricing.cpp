#include "cascade/pricing.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "cascade/error.hpp"
#include "cascade/parallel.hpp"

namespace cascade {

double utility(double p, double x) { return -std::exp(-p * x); }

Obstacle build_obstacles(const ProblemSpec& spec, const DensityModel& density, Side side) {
  const auto& lat = density.lattice();
  const auto& sc = density.scenarios();
  const double p = spec.utility.risk_aversion;
  const double sign = side == Side::buyer ? -1.0 : 1.0;
  Obstacle ob;
  ob.side = side;
  ob.table.resize(sc.size());
  ob.included.assign(sc.size(), 0);
  for (std::size_t s = 0; s < sc.size(); ++s) {
    if (density.null_scenario(s)) continue;
    if (density.touches_zero(s)) {
      throw Error(ErrorKind::conditioning, "survival mass of included scenario " + std::to_string(s) +
                                               " vanishes on part of its domain; exclusion not possible");
    }
    ob.included[s] = 1;
    for (int i = sc[s].start(); i <= lat.steps(); ++i) {
      std::vector<double> row(lat.node_count(i));
      for (std::size_t n = 0; n < row.size(); ++n) {
        row[n] = spec.payoff.value({s, i, n}) + sign * std::log(density.survival(s, i, n)) / p;
        ob.max_abs = std::max(ob.max_abs, std::abs(row[n]));
      }
      ob.table[s].push_back(std::move(row));
    }
  }
  return ob;
}

namespace {

// Generator restricted to traded coordinates u, with pi = embed(u).
struct ReducedGenerator {
  double p;
  Matrix sigma;                  // dbar x m
  Vector drift;                  // dbar
  Vector z;
  std::vector<Vector> gamma;     // dbar per term
  std::vector<double> log_coef;  // log weight + exponent offset per term
  bool fitted = false;
  double dt = 0.0;

  double quad(const Vector& u) const {
    const Vector r = z - sigma.transpose() * u;
    return 0.5 * p * r.squaredNorm() - drift.dot(u);
  }

  double value(const Vector& u) const {
    double v = quad(u);
    if (gamma.empty()) return v;
    if (!fitted) {
      double j = 0.0;
      for (std::size_t e = 0; e < gamma.size(); ++e) j += std::exp(log_coef[e] - p * gamma[e].dot(u));
      return v + j / p;
    }
    const double A = lse(u, nullptr);
    return v + softplus(A) / (p * dt);
  }

  void derivatives(const Vector& u, Vector& g, Matrix& H) const {
    const Vector r = z - sigma.transpose() * u;
    g = -p * sigma * r - drift;
    H = p * sigma * sigma.transpose();
    if (gamma.empty()) return;
    if (!fitted) {
      for (std::size_t e = 0; e < gamma.size(); ++e) {
        const double w = std::exp(log_coef[e] - p * gamma[e].dot(u));
        g -= w * gamma[e];
        H += p * w * gamma[e] * gamma[e].transpose();
      }
      return;
    }
    std::vector<double> soft;
    const double A = lse(u, &soft);
    Vector mu = Vector::Zero(u.size());
    Matrix second = Matrix::Zero(u.size(), u.size());
    for (std::size_t e = 0; e < gamma.size(); ++e) {
      mu += soft[e] * gamma[e];
      second += soft[e] * gamma[e] * gamma[e].transpose();
    }
    const Vector dA = -p * mu;
    const Matrix d2A = p * p * (second - mu * mu.transpose());
    const double sig = 1.0 / (1.0 + std::exp(-A));
    g += sig * dA / (p * dt);
    H += (sig * d2A + sig * (1.0 - sig) * dA * dA.transpose()) / (p * dt);
  }

  // log sum_e exp(a_e) with a_e = log_coef_e - p gamma_e.u; fills the softmax weights.
  double lse(const Vector& u, std::vector<double>* soft) const {
    std::vector<double> a(gamma.size());
    double hi = -std::numeric_limits<double>::infinity();
    for (std::size_t e = 0; e < gamma.size(); ++e) {
      a[e] = log_coef[e] - p * gamma[e].dot(u);
      hi = std::max(hi, a[e]);
    }
    double sum = 0.0;
    for (double& v : a) {
      v = std::exp(v - hi);
      sum += v;
    }
    if (soft) {
      soft->resize(a.size());
      for (std::size_t e = 0; e < a.size(); ++e) (*soft)[e] = a[e] / sum;
    }
    return hi + std::log(sum);
  }

  static double softplus(double A) { return A > 0.0 ? A + std::log1p(std::exp(-A)) : std::log1p(std::exp(A)); }
};

std::vector<int> kept(const GeneratorInputs& in) {
  std::vector<int> keep;
  for (int j = 0; j < static_cast<int>(in.drift.size()); ++j) {
    if (in.traded.empty() || in.traded[static_cast<std::size_t>(j)]) keep.push_back(j);
  }
  return keep;
}

ReducedGenerator reduce(Side side, const GeneratorInputs& in, const std::vector<int>& keep, bool fitted, double dt) {
  ReducedGenerator r;
  r.p = in.p;
  r.fitted = fitted;
  r.dt = dt;
  r.z = in.z;
  const auto n = static_cast<Eigen::Index>(keep.size());
  r.sigma.resize(n, in.vol.cols());
  r.drift.resize(n);
  for (Eigen::Index j = 0; j < n; ++j) {
    r.sigma.row(j) = in.vol.row(keep[static_cast<std::size_t>(j)]);
    r.drift[j] = in.drift[keep[static_cast<std::size_t>(j)]];
  }
  const double sign = side == Side::buyer ? 1.0 : -1.0;
  for (const JumpTerm& t : in.jumps) {
    if (!(t.weight > 0.0)) continue;
    Vector g(n);
    for (Eigen::Index j = 0; j < n; ++j) g[j] = t.gamma[keep[static_cast<std::size_t>(j)]];
    r.gamma.push_back(std::move(g));
    double c = std::log(t.weight) + sign * in.p * (in.y - t.y_next);
    if (fitted) c += std::log(dt);
    r.log_coef.push_back(c);
  }
  return r;
}

Vector embed(const Vector& u, const std::vector<int>& keep, Eigen::Index d) {
  Vector pi = Vector::Zero(d);
  for (std::size_t j = 0; j < keep.size(); ++j) pi[keep[j]] = u[static_cast<Eigen::Index>(j)];
  return pi;
}

Vector restrict_vec(const Vector& pi, const std::vector<int>& keep) {
  Vector u(static_cast<Eigen::Index>(keep.size()));
  for (std::size_t j = 0; j < keep.size(); ++j) u[static_cast<Eigen::Index>(j)] = pi[keep[j]];
  return u;
}

double evaluate_full(Side side, const GeneratorInputs& in, const Vector& pi, bool fitted, double dt) {
  const auto keep = kept(in);
  for (Eigen::Index j = 0; j < pi.size(); ++j) {
    if (pi[j] != 0.0 && std::find(keep.begin(), keep.end(), static_cast<int>(j)) == keep.end()) {
      throw Error(ErrorKind::configuration, "position in a non-traded asset");
    }
  }
  return reduce(side, in, keep, fitted, dt).value(restrict_vec(pi, keep));
}

GeneratorMin minimize(Side side, const GeneratorInputs& in, const ConstraintSet& A, bool fitted, double dt,
                      const OptimizerOptions& opt) {
  const auto keep = kept(in);
  const ReducedGenerator r = reduce(side, in, keep, fitted, dt);
  SmoothObjective obj;
  obj.dim = static_cast<int>(keep.size());
  obj.value = [&](const Vector& u) { return r.value(u); };
  obj.derivatives = [&](const Vector& u, Vector& g, Matrix& H) { r.derivatives(u, g, H); };
  const OptimizerResult res = minimize_convex(obj, restrict_set(A, keep), opt);
  return {res.value, embed(res.x, keep, in.drift.size()), res.iterations};
}

}  // namespace

double generator_g(Side side, const GeneratorInputs& in, const Vector& pi) { return evaluate_full(side, in, pi, false, 0.0); }

double step_generator(Side side, const GeneratorInputs& in, const Vector& pi, double dt) {
  return evaluate_full(side, in, pi, true, dt);
}

GeneratorMin minimize_generator(Side side, const GeneratorInputs& in, const ConstraintSet& A, const OptimizerOptions& opt) {
  return minimize(side, in, A, false, 0.0, opt);
}

GeneratorMin minimize_step_generator(Side side, const GeneratorInputs& in, const ConstraintSet& A, double dt,
                                     const OptimizerOptions& opt) {
  return minimize(side, in, A, true, dt, opt);
}

GeneratorInputs generator_inputs(const ProblemSpec& spec, int k, const NodePoint& at) {
  const auto kk = static_cast<std::size_t>(k);
  GeneratorInputs in;
  in.p = spec.utility.risk_aversion;
  in.drift = spec.market.drift[kk](at);
  in.vol = spec.market.vol[kk](at);
  in.traded = spec.market.traded[kk];
  return in;
}

SystemSolution solve_recursive_system(const ProblemSpec& spec, const DensityModel& density, Side side,
                                      const SolveOptions& opt) {
  const auto& lat = density.lattice();
  const auto& sc = density.scenarios();
  if (lat.steps() != spec.steps || sc.max_level() != spec.n_defaults) {
    throw Error(ErrorKind::configuration, "density grid does not match the problem spec");
  }
  SystemSolution out;
  out.side = side;
  out.obstacle = build_obstacles(spec, density, side);
  out.scenarios.resize(sc.size());
  std::vector<char> solved(sc.size(), 0);
  const double dt = lat.dt();
  const int marks = sc.num_marks();

  for (int k = sc.max_level(); k >= 0; --k) {
    const auto& ids = sc.level(k);
    const ConstraintSet& A = spec.constraints[static_cast<std::size_t>(k)];
    parallel_for(ids.size(), opt.jobs, [&](std::size_t j) {
      const std::size_t s = ids[j];
      ScenarioSolution& slot = out.scenarios[s];
      if (!out.obstacle.included[s]) return;
      const int start = sc[s].start();
      slot.pi.resize(static_cast<std::size_t>(lat.steps() - start));
      for (int i = start; i < lat.steps(); ++i) slot.pi[static_cast<std::size_t>(i - start)].resize(lat.node_count(i));

      DriverSpec drv;
      drv.convention = convention_of(side);
      drv.strict_step = opt.strict_step;
      // y enters only through ln(1 + c e^{+-p y})/(p dt), whose slope stays below 1/dt.
      drv.lipschitz_y = 0.0;
      drv.evaluate = [&, s, k, start](const DriverInput& x) -> double {
        const NodePoint at{s, x.step, x.node};
        GeneratorInputs in = generator_inputs(spec, k, at);
        in.y = x.y;
        in.z = Eigen::Map<const Vector>(x.z.data(), static_cast<Eigen::Index>(x.z.size()));
        for (int e = 0; e < marks; ++e) {
          const std::size_t next = sc.extend(s, x.step + 1, e);
          if (next == ScenarioSet::npos) break;
          if (!out.obstacle.included[next]) continue;
          if (!solved[next]) {
            throw Error(ErrorKind::recursion, "level " + std::to_string(k + 1) + " scenario " + std::to_string(next) +
                                                  " not solved before scenario " + std::to_string(s));
          }
          const RbsdeSolution& child = out.scenarios[next].rbsde;
          double yhat = 0.0;
          for (int b = 0; b < lat.branches(); ++b) yhat += lat.branch_prob() * child.y(x.step + 1, lat.child(x.step, x.node, b));
          in.jumps.push_back({spec.market.jump[static_cast<std::size_t>(k)](at, e), yhat, 1.0 / dt});
        }
        const GeneratorMin m = minimize_step_generator(side, in, A, dt, opt.optimizer);
        slot.pi[static_cast<std::size_t>(x.step - start)][x.node] = m.pi;
        return m.value;
      };
      slot.rbsde = solve_reflected(drv, out.obstacle.table[s], lat, s, start);
      slot.invariants = check_invariants(slot.rbsde, out.obstacle.table[s], lat);
      slot.included = true;
    });
    for (std::size_t s : ids) solved[s] = out.scenarios[s].included ? 1 : 0;
  }
  if (!out.scenarios[0].included) throw Error(ErrorKind::conditioning, "root scenario has zero mass");
  out.root = out.scenarios[0].rbsde.y(0, 0);
  for (const auto& slot : out.scenarios) {
    for (const auto& row : slot.rbsde.driver) {
      for (double f : row) out.driver_bound = std::max(out.driver_bound, std::abs(f));
    }
  }
  return out;
}

PriceReport indifference_prices(const ProblemSpec& spec, const DensityModel& density, const SolveOptions& opt) {
  PriceReport r;
  r.buyer = solve_recursive_system(spec, density, Side::buyer, opt);
  r.seller = solve_recursive_system(spec, density, Side::seller, opt);
  r.root_buyer = r.buyer.root;
  r.root_seller = r.seller.root;
  // U(x) = V^0(x - c) with V^0(x) = U(x + Y^0_0) gives c = Y^0_0; likewise for the seller.
  r.buy_price = r.root_buyer;
  r.sell_price = r.root_seller;
  const double p = spec.utility.risk_aversion;
  const double x = spec.initial_wealth;
  r.buyer_equation_residual = std::abs(utility(p, x) - utility(p, x - r.buy_price + r.root_buyer));
  r.seller_equation_residual = std::abs(utility(p, x) - utility(p, x + r.sell_price - r.root_seller));
  return r;
}

StoppingPolicy optimal_stop(const SystemSolution& sol, const DensityModel& density, double tol) {
  const auto& lat = density.lattice();
  const auto& sc = density.scenarios();
  StoppingPolicy pol(lat, sc);
  for (std::size_t s = 0; s < sc.size(); ++s) {
    const int start = sc[s].start();
    if (!sol.scenarios[s].included) {
      for (std::size_t n = 0; n < lat.node_count(start); ++n) pol.set(s, start, n, true);
      continue;
    }
    const auto region = exercise_region(sol.scenarios[s].rbsde, sol.obstacle.table[s], tol);
    for (int i = start; i < lat.steps(); ++i) {
      for (std::size_t n = 0; n < lat.node_count(i); ++n) pol.set(s, i, n, region[static_cast<std::size_t>(i - start)][n] != 0);
    }
  }
  return pol;
}

ControlPolicy optimal_control(const SystemSolution& sol, int assets) {
  return [&sol, assets](const NodePoint& at) -> Vector {
    const ScenarioSolution& slot = sol.scenarios[at.scenario];
    const int r = at.step - slot.rbsde.start;
    if (!slot.included || r < 0 || r >= static_cast<int>(slot.pi.size())) return Vector::Zero(assets);
    const Vector& v = slot.pi[static_cast<std::size_t>(r)][at.node];
    return v.size() == assets ? v : Vector::Zero(assets);
  };
}

double simulate_strategy(const ProblemSpec& spec, const DensityModel& density, const ControlPolicy& control,
                         const StoppingPolicy& stopping, Side side) {
  const auto& lat = density.lattice();
  const auto& sc = density.scenarios();
  const double p = spec.utility.risk_aversion;
  const double rsign = side == Side::buyer ? -1.0 : 1.0;
  const int M = lat.steps();
  // U(x + w + R) factorizes as U(x) exp(-p w -+ p R): carry the factor per state.
  std::vector<std::vector<double>> psi_start(sc.size());
  for (int k = sc.max_level(); k >= 0; --k) {
    const auto kk = static_cast<std::size_t>(k);
    for (std::size_t s : sc.level(k)) {
      const int start = sc[s].start();
      std::vector<double> V(lat.node_count(M));
      for (std::size_t n = 0; n < V.size(); ++n) {
        V[n] = std::exp(rsign * p * spec.payoff.value({s, M, n})) * density.survival(s, M, n);
      }
      for (int i = M - 1; i >= start; --i) {
        std::vector<double> W(lat.node_count(i));
        for (std::size_t n = 0; n < W.size(); ++n) {
          const NodePoint at{s, i, n};
          const double alpha = density.survival(s, i, n);
          if (stopping.flag(s, i, n)) {
            W[n] = std::exp(rsign * p * spec.payoff.value(at)) * alpha;
            continue;
          }
          const Vector pi = control(at);
          double acc = 0.0;
          for (int b = 0; b < lat.branches(); ++b) {
            const std::size_t c = lat.child(i, n, b);
            const double flow = std::exp(-p * pi.dot(asset_increment(spec, k, at, lat, b)));
            double term = V[c];
            for (int e = 0; e < sc.num_marks(); ++e) {
              const std::size_t next = sc.extend(s, i + 1, e);
              if (next == ScenarioSet::npos) continue;
              term += std::exp(-p * pi.dot(spec.market.jump[kk](at, e))) * psi_start[next][c];
            }
            acc += lat.branch_prob() * flow * term;
          }
          W[n] = acc;
        }
        V = std::move(W);
      }
      psi_start[s] = std::move(V);
    }
  }
  return utility(p, spec.initial_wealth) * psi_start[0][0];
}

double certainty_equivalent(double expected_utility, double p, double x0, Side side) {
  const double psi = -expected_utility * std::exp(p * x0);
  return side == Side::buyer ? -std::log(psi) / p : std::log(psi) / p;
}

SaddleReport check_saddle_point(const ProblemSpec& spec, const DensityModel& density, const SystemSolution& seller,
                                double tolerance) {
  if (seller.side != Side::seller) throw Error(ErrorKind::configuration, "saddle point check needs the seller solution");
  const auto& lat = density.lattice();
  const auto& sc = density.scenarios();
  const double p = spec.utility.risk_aversion;
  const double x0 = spec.initial_wealth;
  const int M = lat.steps();
  std::vector<std::vector<Vector>> grid;
  for (const auto& A : spec.constraints) grid.push_back(A.enumerate());

  const ControlPolicy hat = optimal_control(seller, spec.assets);
  const StoppingPolicy tau = optimal_stop(seller, density);
  auto ce = [&](const ControlPolicy& c, const StoppingPolicy& t) {
    return certainty_equivalent(simulate_strategy(spec, density, c, t, Side::seller), p, x0, Side::seller);
  };
  SaddleReport r;
  r.tolerance = tolerance;
  r.value = ce(hat, tau);
  // Seller CE v solves U(x0 - v) = EU, so a higher EU means a lower v.
  auto control_dev = [&](const ControlPolicy& c) {
    ++r.control_deviations;
    const double gain = r.value - ce(c, tau);
    r.max_control_excess = std::max(r.max_control_excess, gain);
    if (gain > tolerance) ++r.violations;
  };
  auto stop_dev = [&](const StoppingPolicy& t) {
    ++r.stop_deviations;
    const double gain = ce(hat, t) - r.value;
    r.max_stop_excess = std::max(r.max_stop_excess, gain);
    if (gain > tolerance) ++r.violations;
  };

  for (std::size_t s = 0; s < sc.size(); ++s) {
    if (!seller.scenarios[s].included) continue;
    const int start = sc[s].start();
    const auto& actions = grid[static_cast<std::size_t>(sc[s].level())];
    for (int i = start; i < M; ++i) {
      for (std::size_t n = 0; n < lat.node_count(i); ++n) {
        for (const Vector& a : actions) {
          if ((a - hat({s, i, n})).cwiseAbs().maxCoeff() == 0.0) continue;
          control_dev([&, s, i, n](const NodePoint& at) -> Vector {
            return at.scenario == s && at.step == i && at.node == n ? a : hat(at);
          });
        }
        StoppingPolicy flipped = tau;
        flipped.set(s, i, n, !tau.flag(s, i, n));
        stop_dev(flipped);
      }
    }
    if (start < M) {
      for (const Vector& a : actions) {
        control_dev([&, s](const NodePoint& at) -> Vector { return at.scenario == s ? a : hat(at); });
      }
      StoppingPolicy now = tau;
      StoppingPolicy never = tau;
      for (int i = start; i < M; ++i) {
        for (std::size_t n = 0; n < lat.node_count(i); ++n) {
          now.set(s, i, n, i == start);
          never.set(s, i, n, false);
        }
      }
      stop_dev(now);
      stop_dev(never);
    }
  }
  return r;
}

ControllerStopperProblem wealth_problem(const ProblemSpec& spec, Side side) {
  ControllerStopperProblem prob;
  const BrownianLattice lat = make_lattice(spec);
  const double p = spec.utility.risk_aversion;
  const double rsign = side == Side::buyer ? 1.0 : -1.0;
  prob.x0 = spec.initial_wealth;
  for (const auto& A : spec.constraints) prob.actions.push_back(A.enumerate());
  const ScenarioSet sc = make_scenarios(spec);
  std::vector<int> level(sc.size());
  for (std::size_t s = 0; s < sc.size(); ++s) level[s] = sc[s].level();
  prob.dynamics.flow = [&spec, lat, level](const NodePoint& at, double x, const Action& a, int branch) {
    return x + a.dot(asset_increment(spec, level[at.scenario], at, lat, branch));
  };
  prob.dynamics.jump = [&spec, level](const NodePoint& at, double x, const Action& a, int mark) {
    return x + a.dot(spec.market.jump[static_cast<std::size_t>(level[at.scenario])](at, mark));
  };
  prob.payoff = [&spec, p, rsign](const NodePoint& at, double x) { return utility(p, x + rsign * spec.payoff.value(at)); };
  return prob;
}

WealthPath wealth_path(const ProblemSpec& spec, const BrownianLattice& lattice, const ScenarioSet& scenarios,
                       const ControlPolicy& control, const GlobalOutcome& outcome, int stop_step) {
  WealthPath w;
  const Scenario& o = scenarios[outcome.outcome];
  std::size_t s = 0;
  int k = 0;
  std::size_t node = 0;
  double x = spec.initial_wealth;
  w.wealth.push_back(x);
  w.scenario.push_back(s);
  for (int i = 0; i < stop_step; ++i) {
    const NodePoint at{s, i, node};
    const Vector pi = control(at);
    const int b = outcome.path[static_cast<std::size_t>(i)];
    x += pi.dot(asset_increment(spec, k, at, lattice, b));
    if (k < o.level() && o.steps[static_cast<std::size_t>(k)] == i + 1) {
      const int e = o.marks[static_cast<std::size_t>(k)];
      x += pi.dot(spec.market.jump[static_cast<std::size_t>(k)](at, e));
      s = scenarios.extend(s, i + 1, e);
      ++k;
    }
    node = lattice.child(i, node, b);
    w.wealth.push_back(x);
    w.scenario.push_back(s);
  }
  return w;
}

}  // namespace cascade
