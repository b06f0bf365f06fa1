#include "cascade/oracle.hpp"

#include <cmath>
#include <limits>
#include <map>
#include <tuple>

#include "cascade/error.hpp"

namespace cascade {

double direct_expectation(const IndexedProcess& Z, const StoppingPolicy& policy, const DensityModel& density) {
  const auto& lat = density.lattice();
  const auto& sc = density.scenarios();
  const double path_prob = std::pow(lat.branch_prob(), lat.steps());
  double total = 0.0;
  for (const auto& path : enumerate_paths(lat)) {
    const std::size_t terminal = lat.node_along(path, lat.steps());
    for (std::size_t o = 0; o < sc.size(); ++o) {
      const double w = path_prob * density.terminal_mass(o, lat.steps(), terminal);
      if (w == 0.0) continue;
      const ComposedStop tau = compose_stopping(policy, lat, sc, {path, o});
      total += w * Z({tau.scenario, tau.step, lat.node_along(path, tau.step)});
    }
  }
  return total;
}

namespace {

void check_caps(const ControllerStopperProblem& problem, const DensityModel& density, const OracleCaps& caps) {
  const auto& lat = density.lattice();
  const auto& sc = density.scenarios();
  std::string why;
  if (lat.steps() > caps.max_steps) why = "M = " + std::to_string(lat.steps());
  if (sc.max_level() > caps.max_level) why = "n = " + std::to_string(sc.max_level());
  if (sc.num_marks() > caps.max_marks) why = "|E| = " + std::to_string(sc.num_marks());
  for (const auto& a : problem.actions) {
    if (static_cast<int>(a.size()) > caps.max_actions) why = "|A| = " + std::to_string(a.size());
  }
  if (problem.actions.size() < static_cast<std::size_t>(sc.max_level() + 1)) {
    throw Error(ErrorKind::configuration, "action sets missing for some level");
  }
  if (!why.empty()) throw Error(ErrorKind::capacity, "instance outside oracle caps (" + why + ")");
}

class HistoryRecursion {
 public:
  HistoryRecursion(const ControllerStopperProblem& p, const DensityModel& d, GameMode mode)
      : p_(p), d_(d), lat_(d.lattice()), sc_(d.scenarios()), mode_(mode) {}

  // Conditional value E[U(X_tau) | G_i] at a history ending in (s, node) with state x.
  double value(std::size_t s, int i, std::size_t node, double x) const {
    const NodePoint at{s, i, node};
    const double stop = p_.payoff(at, x);
    if (i == lat_.steps()) return stop;
    const JointStep js = joint_step(d_, s, node, i);
    const auto& acts = p_.actions[static_cast<std::size_t>(sc_[s].level())];
    double best = -std::numeric_limits<double>::infinity();
    for (const Action& a : acts) {
      double cont = 0.0;
      for (int b = 0; b < lat_.branches(); ++b) {
        const std::size_t c = lat_.child(i, node, b);
        const double x1 = p_.dynamics.flow(at, x, a, b);
        const double qs = js.survive[static_cast<std::size_t>(b)];
        if (qs > 0.0) cont += qs * value(s, i + 1, c, x1);
        for (int e = 0; e < sc_.num_marks(); ++e) {
          const double q = js.by_mark[static_cast<std::size_t>(b)][static_cast<std::size_t>(e)];
          if (q <= 0.0) continue;
          cont += q * value(sc_.extend(s, i + 1, e), i + 1, c, p_.dynamics.jump(at, x1, a, e));
        }
      }
      best = std::max(best, cont);
    }
    return mode_ == GameMode::supsup ? std::max(stop, best) : std::min(stop, best);
  }

 private:
  const ControllerStopperProblem& p_;
  const DensityModel& d_;
  const BrownianLattice& lat_;
  const ScenarioSet& sc_;
  GameMode mode_;
};

}  // namespace

double enumerate_value(const ControllerStopperProblem& problem, const DensityModel& density, GameMode mode,
                       const OracleCaps& caps) {
  check_caps(problem, density, caps);
  return HistoryRecursion(problem, density, mode).value(0, 0, 0, problem.x0);
}

double enumerate_strategies(const ControllerStopperProblem& problem, const DensityModel& density, GameMode mode,
                            const OracleCaps& caps) {
  check_caps(problem, density, caps);
  const auto& lat = density.lattice();
  const auto& sc = density.scenarios();
  const int M = lat.steps();
  const int B = lat.branches();

  // Global histories before T: (scenario, step, Brownian prefix code).
  using Key = std::tuple<std::size_t, int, std::uint64_t>;
  std::map<Key, int> index;
  std::vector<int> level_of;
  {
    std::vector<std::pair<std::size_t, std::uint64_t>> frontier{{0, 0}};
    for (int i = 0; i < M; ++i) {
      std::vector<std::pair<std::size_t, std::uint64_t>> next;
      for (const auto& [s, code] : frontier) {
        index.emplace(Key{s, i, code}, static_cast<int>(level_of.size()));
        level_of.push_back(sc[s].level());
        for (int b = 0; b < B; ++b) {
          const std::uint64_t c = code * static_cast<std::uint64_t>(B) + static_cast<std::uint64_t>(b);
          next.emplace_back(s, c);
          for (int e = 0; e < sc.num_marks(); ++e) {
            const std::size_t ns = sc.extend(s, i + 1, e);
            if (ns != ScenarioSet::npos) next.emplace_back(ns, c);
          }
        }
      }
      frontier = std::move(next);
    }
  }
  const auto H = level_of.size();
  double log_profiles = 0.0;
  for (int k : level_of) log_profiles += std::log2(2.0 * static_cast<double>(problem.actions[static_cast<std::size_t>(k)].size()));
  if (log_profiles > std::log2(caps.max_strategy_profiles)) {
    throw Error(ErrorKind::capacity, "pure strategy enumeration needs 2^" + std::to_string(log_profiles) + " profiles");
  }

  const auto paths = enumerate_paths(lat);
  const double path_prob = std::pow(lat.branch_prob(), M);
  std::vector<std::size_t> terminal(paths.size());
  for (std::size_t j = 0; j < paths.size(); ++j) terminal[j] = lat.node_along(paths[j], M);

  std::vector<int> act(H, 0);
  std::vector<char> stop(H, 0);
  auto evaluate = [&]() {
    double total = 0.0;
    for (std::size_t j = 0; j < paths.size(); ++j) {
      for (std::size_t o = 0; o < sc.size(); ++o) {
        const double w = path_prob * density.terminal_mass(o, M, terminal[j]);
        if (w == 0.0) continue;
        const Scenario& out = sc[o];
        std::size_t s = 0;
        int k = 0;
        std::size_t node = 0;
        std::uint64_t code = 0;
        double x = problem.x0;
        int i = 0;
        for (; i < M; ++i) {
          const int h = index.at(Key{s, i, code});
          if (stop[static_cast<std::size_t>(h)]) break;
          const NodePoint at{s, i, node};
          const Action& a = problem.actions[static_cast<std::size_t>(k)][static_cast<std::size_t>(act[static_cast<std::size_t>(h)])];
          const int b = paths[j][static_cast<std::size_t>(i)];
          x = problem.dynamics.flow(at, x, a, b);
          if (k < out.level() && out.steps[static_cast<std::size_t>(k)] == i + 1) {
            const int e = out.marks[static_cast<std::size_t>(k)];
            x = problem.dynamics.jump(at, x, a, e);
            s = sc.extend(s, i + 1, e);
            ++k;
          }
          node = lat.child(i, node, b);
          code = code * static_cast<std::uint64_t>(B) + static_cast<std::uint64_t>(b);
        }
        total += w * problem.payoff({s, i, node}, x);
      }
    }
    return total;
  };
  // Mixed-radix counters over action and stop profiles.
  auto next_act = [&]() {
    for (std::size_t h = 0; h < H; ++h) {
      if (++act[h] < static_cast<int>(problem.actions[static_cast<std::size_t>(level_of[h])].size())) return true;
      act[h] = 0;
    }
    return false;
  };
  auto next_stop = [&]() {
    for (std::size_t h = 0; h < H; ++h) {
      if (!stop[h]) {
        stop[h] = 1;
        return true;
      }
      stop[h] = 0;
    }
    return false;
  };

  double outer = -std::numeric_limits<double>::infinity();
  do {
    double inner = mode == GameMode::supsup ? -std::numeric_limits<double>::infinity()
                                            : std::numeric_limits<double>::infinity();
    std::fill(stop.begin(), stop.end(), 0);
    do {
      const double v = evaluate();
      inner = mode == GameMode::supsup ? std::max(inner, v) : std::min(inner, v);
    } while (next_stop());
    outer = std::max(outer, inner);
  } while (next_act());
  return outer;
}

double enumerate_price(const ProblemSpec& spec, const DensityModel& density, Side side, const OracleCaps& caps) {
  const ControllerStopperProblem prob = wealth_problem(spec, side);
  const double v = enumerate_value(prob, density, side == Side::buyer ? GameMode::supsup : GameMode::supinf, caps);
  const double p = spec.utility.risk_aversion;
  const double phi = v / utility(p, spec.initial_wealth);
  return side == Side::buyer ? -std::log(phi) / p : std::log(phi) / p;
}

PhiTable phi_recursion(const ProblemSpec& spec, const DensityModel& density, Side side, const OptimizerOptions& opt) {
  const auto& lat = density.lattice();
  const auto& sc = density.scenarios();
  const int M = lat.steps();
  const double p = spec.utility.risk_aversion;
  const double rsign = side == Side::buyer ? -1.0 : 1.0;
  PhiTable out;
  out.side = side;
  out.phi.resize(sc.size());
  const double nan = std::numeric_limits<double>::quiet_NaN();

  for (int k = sc.max_level(); k >= 0; --k) {
    const auto kk = static_cast<std::size_t>(k);
    std::vector<int> keep;
    for (int j = 0; j < spec.assets; ++j) {
      if (spec.market.traded[kk].empty() || spec.market.traded[kk][static_cast<std::size_t>(j)]) keep.push_back(j);
    }
    const ConstraintSet A = restrict_set(spec.constraints[kk], keep);
    const auto dbar = static_cast<Eigen::Index>(keep.size());
    auto reduce = [&](const Vector& v) {
      Vector r(dbar);
      for (Eigen::Index j = 0; j < dbar; ++j) r[j] = v[keep[static_cast<std::size_t>(j)]];
      return r;
    };
    for (std::size_t s : sc.level(k)) {
      if (density.null_scenario(s)) continue;
      const int start = sc[s].start();
      NodeSeries& table = out.phi[s];
      table.resize(static_cast<std::size_t>(M - start + 1));
      for (int i = M; i >= start; --i) {
        auto& row = table[static_cast<std::size_t>(i - start)];
        row.assign(lat.node_count(i), nan);
        for (std::size_t n = 0; n < row.size(); ++n) {
          if (!(density.survival(s, i, n) > 0.0)) continue;
          const NodePoint at{s, i, n};
          const double stop = std::exp(rsign * p * spec.payoff.value(at));
          if (i == M) {
            row[n] = stop;
            continue;
          }
          const JointStep js = joint_step(density, s, n, i);
          std::vector<double> coef;
          std::vector<Vector> dir;
          for (int b = 0; b < lat.branches(); ++b) {
            const std::size_t c = lat.child(i, n, b);
            const Vector ds = reduce(asset_increment(spec, k, at, lat, b));
            const double qs = js.survive[static_cast<std::size_t>(b)];
            if (qs > 0.0) {
              coef.push_back(qs * table[static_cast<std::size_t>(i + 1 - start)][c]);
              dir.push_back(ds);
            }
            for (int e = 0; e < sc.num_marks(); ++e) {
              const double q = js.by_mark[static_cast<std::size_t>(b)][static_cast<std::size_t>(e)];
              if (q <= 0.0) continue;
              const std::size_t next = sc.extend(s, i + 1, e);
              coef.push_back(q * out.phi[next][0][c]);
              dir.push_back(ds + reduce(spec.market.jump[kk](at, e)));
            }
          }
          SmoothObjective obj;
          obj.dim = static_cast<int>(dbar);
          obj.value = [&](const Vector& u) {
            double v = 0.0;
            for (std::size_t j = 0; j < coef.size(); ++j) v += coef[j] * std::exp(-p * dir[j].dot(u));
            return v;
          };
          obj.derivatives = [&](const Vector& u, Vector& g, Matrix& H) {
            g = Vector::Zero(dbar);
            H = Matrix::Zero(dbar, dbar);
            for (std::size_t j = 0; j < coef.size(); ++j) {
              const double w = coef[j] * std::exp(-p * dir[j].dot(u));
              g -= p * w * dir[j];
              H += p * p * w * dir[j] * dir[j].transpose();
            }
          };
          double inner;
          try {
            inner = minimize_convex(obj, A, opt).value;
          } catch (const Error& ex) {
            throw Error(ex.kind(), "phi recursion at scenario " + std::to_string(s) + ", step " + std::to_string(i) +
                                       ", node " + std::to_string(n) + ": " + ex.what());
          }
          row[n] = side == Side::buyer ? std::min(stop, inner) : std::max(stop, inner);
        }
      }
    }
  }
  out.root = out.phi[0][0][0];
  out.price = side == Side::buyer ? -std::log(out.root) / p : std::log(out.root) / p;
  return out;
}

}  // namespace cascade
