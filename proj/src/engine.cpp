#include "cascade/engine.hpp"

#include <limits>
#include <sstream>

#include "cascade/error.hpp"

namespace cascade {

StoppingPolicy::StoppingPolicy(const BrownianLattice& lattice, const ScenarioSet& scenarios) : steps_(lattice.steps()) {
  flags_.resize(scenarios.size());
  for (auto& per : flags_) {
    for (int i = 0; i <= steps_; ++i) per.emplace_back(lattice.node_count(i), 0);
  }
}

std::vector<std::string> StoppingPolicy::violations(const ScenarioSet& scenarios) const {
  std::vector<std::string> out;
  if (flags_.size() != scenarios.size()) {
    out.push_back("policy covers " + std::to_string(flags_.size()) + " scenarios, grid has " +
                  std::to_string(scenarios.size()));
    return out;
  }
  for (std::size_t s = 0; s < flags_.size(); ++s) {
    for (int i = 0; i < scenarios[s].start(); ++i) {
      for (char f : flags_[s][static_cast<std::size_t>(i)]) {
        if (f) {
          out.push_back("scenario " + std::to_string(s) + " stops at step " + std::to_string(i) +
                        " before its last jump at step " + std::to_string(scenarios[s].start()));
          break;
        }
      }
    }
  }
  return out;
}

int StoppingPolicy::hitting_step(std::size_t s, int start, const std::vector<int>& path,
                                 const BrownianLattice& lattice) const {
  std::size_t node = lattice.node_along(path, start);
  for (int i = start; i < steps_; ++i) {
    if (flag(s, i, node)) return i;
    node = lattice.child(i, node, path[static_cast<std::size_t>(i)]);
  }
  return steps_;
}

ComposedStop compose_stopping(const StoppingPolicy& policy, const BrownianLattice& lattice, const ScenarioSet& scenarios,
                              const GlobalOutcome& outcome) {
  const Scenario& o = scenarios[outcome.outcome];
  for (int k = 0; k <= o.level(); ++k) {
    const std::size_t sk = scenarios.prefix(outcome.outcome, k);
    const int tau = policy.hitting_step(sk, scenarios[sk].start(), outcome.path, lattice);
    const int next_jump = k < o.level() ? o.steps[static_cast<std::size_t>(k)] : std::numeric_limits<int>::max();
    if (tau < next_jump) return {tau, k, sk};
  }
  throw Error(ErrorKind::configuration, "stopping policy never stops");  // unreachable: tau^k <= M
}

std::vector<std::vector<int>> enumerate_paths(const BrownianLattice& lattice) {
  const int M = lattice.steps();
  const int B = lattice.branches();
  std::vector<std::vector<int>> out;
  std::vector<int> path(static_cast<std::size_t>(M), 0);
  while (true) {
    out.push_back(path);
    int j = M - 1;
    while (j >= 0 && path[static_cast<std::size_t>(j)] == B - 1) path[static_cast<std::size_t>(j--)] = 0;
    if (j < 0) break;
    ++path[static_cast<std::size_t>(j)];
  }
  return out;
}

DecompositionReport verify_decomposition_uniqueness(const StoppingPolicy& policy, const DensityModel& density) {
  const auto& lat = density.lattice();
  const auto& sc = density.scenarios();
  if (const auto bad = policy.violations(sc); !bad.empty()) {
    throw Error(ErrorKind::validation, "invalid stopping policy: " + bad.front());
  }
  DecompositionReport report;
  for (const auto& path : enumerate_paths(lat)) {
    for (std::size_t o = 0; o < sc.size(); ++o) {
      const Scenario& out = sc[o];
      const ComposedStop tau = compose_stopping(policy, lat, sc, {path, o});
      ++report.outcomes_checked;
      bool earlier_passed = true;
      for (int k = 0; k <= out.level(); ++k) {
        const std::size_t sk = sc.prefix(o, k);
        const int tk = policy.hitting_step(sk, sc[sk].start(), path, lat);
        const int zk = k == 0 ? 0 : out.steps[static_cast<std::size_t>(k - 1)];
        const int zk1 = k < out.level() ? out.steps[static_cast<std::size_t>(k)] : std::numeric_limits<int>::max();
        const bool indicator = earlier_passed && tk < zk1;
        const bool partition = zk <= tau.step && tau.step < zk1;
        if (indicator != partition) {
          std::ostringstream os;
          os << "outcome " << o << ", level " << k << ": indicator " << indicator << " vs partition " << partition;
          report.violations.push_back(os.str());
        }
        earlier_passed = earlier_passed && tk >= zk1;
      }
    }
  }
  return report;
}

ExpectationReport backward_expectation(const IndexedProcess& Z, const StoppingPolicy& policy, const DensityModel& density) {
  const auto& lat = density.lattice();
  const auto& sc = density.scenarios();
  if (policy.size() != sc.size() || policy.steps() != lat.steps()) {
    throw Error(ErrorKind::configuration, "stopping policy and density live on different grids");
  }
  const int M = lat.steps();
  ExpectationReport rep;
  rep.J.assign(sc.size(), {});
  for (int k = sc.max_level(); k >= 0; --k) {
    for (std::size_t s : sc.level(k)) {
      const int start = sc[s].start();
      std::vector<double> V(lat.node_count(M));
      for (std::size_t n = 0; n < V.size(); ++n) V[n] = Z({s, M, n}) * density.survival(s, M, n);
      for (int i = M - 1; i >= start; --i) {
        std::vector<double> W(lat.node_count(i));
        for (std::size_t n = 0; n < W.size(); ++n) {
          if (policy.flag(s, i, n)) {
            W[n] = Z({s, i, n}) * density.survival(s, i, n);
            continue;
          }
          double acc = 0.0;
          for (int b = 0; b < lat.branches(); ++b) {
            const std::size_t c = lat.child(i, n, b);
            double term = V[c];
            for (int e = 0; e < sc.num_marks(); ++e) {
              const std::size_t next = sc.extend(s, i + 1, e);
              if (next != ScenarioSet::npos) term += rep.J[next][c];
            }
            acc += lat.branch_prob() * term;
          }
          W[n] = acc;
        }
        V = std::move(W);
      }
      rep.J[s] = std::move(V);
    }
  }
  rep.value = rep.J[0][0];
  return rep;
}

const Decision* ControllerStopperResult::find(const NodePoint& at, double x) const {
  auto it = decisions.find(StateKey{at.scenario, at.step, at.node, x});
  return it == decisions.end() ? nullptr : &it->second;
}

namespace {

class StateDp {
 public:
  StateDp(GameMode mode, const ControllerStopperProblem& p, const DensityModel& d, std::size_t cap)
      : mode_(mode), p_(p), d_(d), lat_(d.lattice()), sc_(d.scenarios()), cap_(cap) {
    if (p.actions.size() < static_cast<std::size_t>(sc_.max_level() + 1)) {
      throw Error(ErrorKind::configuration, "action sets missing for some level");
    }
    for (const auto& a : p.actions) {
      if (a.empty()) throw Error(ErrorKind::configuration, "empty action set");
    }
  }

  double value(std::size_t s, int i, std::size_t node, double x) {
    const StateKey key{s, i, node, x};
    if (auto it = out_.decisions.find(key); it != out_.decisions.end()) return it->second.value;
    if (out_.decisions.size() >= cap_) {
      throw Error(ErrorKind::capacity, "reachable state count exceeds " + std::to_string(cap_));
    }
    const NodePoint at{s, i, node};
    const double stop_value = p_.payoff(at, x) * d_.survival(s, i, node);
    Decision dec{stop_value, true, -1};
    if (i < lat_.steps()) {
      const auto& acts = p_.actions[static_cast<std::size_t>(sc_[s].level())];
      double best = -std::numeric_limits<double>::infinity();
      int arg = 0;
      for (std::size_t a = 0; a < acts.size(); ++a) {
        double cont = 0.0;
        for (int b = 0; b < lat_.branches(); ++b) {
          const std::size_t c = lat_.child(i, node, b);
          const double x1 = p_.dynamics.flow(at, x, acts[a], b);
          double term = value(s, i + 1, c, x1);
          for (int e = 0; e < sc_.num_marks(); ++e) {
            const std::size_t next = sc_.extend(s, i + 1, e);
            if (next == ScenarioSet::npos) continue;
            const double xj = p_.dynamics.jump(at, x1, acts[a], e);
            term += value(next, i + 1, c, xj);
          }
          cont += lat_.branch_prob() * term;
        }
        if (cont > best) {
          best = cont;
          arg = static_cast<int>(a);
        }
      }
      const bool stop = mode_ == GameMode::supsup ? stop_value >= best : stop_value <= best;
      dec = stop ? Decision{stop_value, true, arg} : Decision{best, false, arg};
    }
    out_.decisions.emplace(key, dec);
    return dec.value;
  }

  ControllerStopperResult take() { return std::move(out_); }

 private:
  GameMode mode_;
  const ControllerStopperProblem& p_;
  const DensityModel& d_;
  const BrownianLattice& lat_;
  const ScenarioSet& sc_;
  std::size_t cap_;
  ControllerStopperResult out_;
};

}  // namespace

ControllerStopperResult solve_controller_stopper(GameMode mode, const ControllerStopperProblem& problem,
                                                 const DensityModel& density, std::size_t max_states) {
  StateDp dp(mode, problem, density, max_states);
  const double v = dp.value(0, 0, 0, problem.x0);
  ControllerStopperResult r = dp.take();
  r.value = v;
  return r;
}

ControllerStopperResult solve_supsup(const ControllerStopperProblem& problem, const DensityModel& density,
                                     std::size_t max_states) {
  return solve_controller_stopper(GameMode::supsup, problem, density, max_states);
}

ControllerStopperResult solve_supinf(const ControllerStopperProblem& problem, const DensityModel& density,
                                     std::size_t max_states) {
  return solve_controller_stopper(GameMode::supinf, problem, density, max_states);
}

double evaluate_strategy(const ControllerStopperProblem& problem, const DensityModel& density,
                         const ControlPolicy& control, const StoppingPolicy& stopping) {
  const auto& lat = density.lattice();
  const auto& sc = density.scenarios();
  std::unordered_map<StateKey, double, StateKeyHash> memo;
  std::function<double(std::size_t, int, std::size_t, double)> value = [&](std::size_t s, int i, std::size_t node,
                                                                           double x) -> double {
    const StateKey key{s, i, node, x};
    if (auto it = memo.find(key); it != memo.end()) return it->second;
    const NodePoint at{s, i, node};
    double v;
    if (stopping.stops(s, i, node)) {
      v = problem.payoff(at, x) * density.survival(s, i, node);
    } else {
      const Action a = control(at);
      v = 0.0;
      for (int b = 0; b < lat.branches(); ++b) {
        const std::size_t c = lat.child(i, node, b);
        const double x1 = problem.dynamics.flow(at, x, a, b);
        double term = value(s, i + 1, c, x1);
        for (int e = 0; e < sc.num_marks(); ++e) {
          const std::size_t next = sc.extend(s, i + 1, e);
          if (next == ScenarioSet::npos) continue;
          term += value(next, i + 1, c, problem.dynamics.jump(at, x1, a, e));
        }
        v += lat.branch_prob() * term;
      }
    }
    memo.emplace(key, v);
    return v;
  };
  return value(0, 0, 0, problem.x0);
}

}  // namespace cascade
