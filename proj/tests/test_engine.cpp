#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <limits>

#include "support.hpp"

using namespace cascade;

namespace {

struct Tree {
  BrownianLattice lat;
  ScenarioSet sc;
  DensityModel d;
};

Tree textbook() {
  Tree t{BrownianLattice(1.0, 2, 1), ScenarioSet(1, 2, 1), {}};
  t.d = DensityModel::independent(t.lat, t.sc, {0.5, 0.3, 0.2});
  return t;
}

// Stop step from the cascade of per-scenario rules, written out directly.
int reference_stop(const StoppingPolicy& pol, const BrownianLattice& lat, const ScenarioSet& sc, const GlobalOutcome& o) {
  const Scenario& out = sc[o.outcome];
  std::size_t s = 0;
  for (int k = 0;; ++k) {
    const int from = sc[s].start();
    const int next_jump = k < out.level() ? out.steps[static_cast<std::size_t>(k)] : std::numeric_limits<int>::max();
    int tau = lat.steps();
    for (int i = from; i <= lat.steps(); ++i) {
      if (pol.stops(s, i, lat.node_along(o.path, i))) {
        tau = i;
        break;
      }
    }
    if (tau < next_jump) return tau;
    s = sc.extend(s, next_jump, out.marks[static_cast<std::size_t>(k)]);
  }
}

std::vector<GlobalOutcome> all_outcomes(const Tree& t) {
  std::vector<GlobalOutcome> out;
  for (const auto& p : enumerate_paths(t.lat)) {
    for (std::size_t o = 0; o < t.sc.size(); ++o) out.push_back({p, o});
  }
  return out;
}

// Snell envelope of c * alpha on a single-scenario tree (max or min reflection).
double snell(const BrownianLattice& lat, const ScalarField& c, bool upper) {
  std::vector<double> v(lat.node_count(lat.steps()));
  for (std::size_t n = 0; n < v.size(); ++n) v[n] = c({0, lat.steps(), n});
  for (int i = lat.steps() - 1; i >= 0; --i) {
    std::vector<double> w(lat.node_count(i));
    for (std::size_t n = 0; n < w.size(); ++n) {
      double e = 0.0;
      for (int b = 0; b < lat.branches(); ++b) e += lat.branch_prob() * v[lat.child(i, n, b)];
      const double h = c({0, i, n});
      w[n] = upper ? std::max(h, e) : std::min(h, e);
    }
    v = w;
  }
  return v[0];
}

}  // namespace

TEST_CASE("composition examples") {
  const Tree t = textbook();
  StoppingPolicy now(t.lat, t.sc);
  for (std::size_t s = 0; s < t.sc.size(); ++s) {
    const int start = t.sc[s].start();
    for (std::size_t n = 0; n < t.lat.node_count(start); ++n) now.set(s, start, n, true);
  }
  const StoppingPolicy never(t.lat, t.sc);
  for (const auto& o : all_outcomes(t)) {
    CHECK(compose_stopping(now, t.lat, t.sc, o).step == 0);
    CHECK(compose_stopping(never, t.lat, t.sc, o).step == 2);
  }
}

TEST_CASE("composition matches the partition sets on random policies") {
  std::mt19937_64 rng(41);
  for (int trial = 0; trial < 30; ++trial) {
    Tree t{BrownianLattice(1.0, 2 + trial % 2, 1), ScenarioSet(1 + trial % 2, 2 + trial % 2, 1 + trial % 2), {}};
    t.d = support::random_independent(t.lat, t.sc, rng);
    const StoppingPolicy pol = support::random_policy(t.lat, t.sc, rng, 0.4);
    for (const auto& o : all_outcomes(t)) {
      const ComposedStop c = compose_stopping(pol, t.lat, t.sc, o);
      CHECK(c.step == reference_stop(pol, t.lat, t.sc, o));
      // zeta_k <= tau < zeta_{k+1} for the reported level.
      const Scenario& out = t.sc[o.outcome];
      const int lo = c.level == 0 ? 0 : out.steps[static_cast<std::size_t>(c.level - 1)];
      const int hi = c.level < out.level() ? out.steps[static_cast<std::size_t>(c.level)] : std::numeric_limits<int>::max();
      CHECK(lo <= c.step);
      CHECK(c.step < hi);
      CHECK(c.scenario == t.sc.prefix(o.outcome, c.level));
    }
    const DecompositionReport r = verify_decomposition_uniqueness(pol, t.d);
    CHECK(r.violations.empty());
    CHECK(r.outcomes_checked == all_outcomes(t).size());
  }
}

TEST_CASE("invalid policy is rejected before verification") {
  const Tree t = textbook();
  StoppingPolicy pol(t.lat, t.sc);
  pol.set(2, 1, 0, true);  // scenario with its jump at step 2 stops at step 1
  CHECK_FALSE(pol.violations(t.sc).empty());
  CHECK_THROWS_AS(verify_decomposition_uniqueness(pol, t.d), Error);
}

TEST_CASE("changing a rule after the next default leaves the composition unchanged") {
  std::mt19937_64 rng(43);
  Tree t{BrownianLattice(1.0, 3, 1), ScenarioSet(1, 3, 1), {}};
  t.d = support::random_independent(t.lat, t.sc, rng);
  for (int trial = 0; trial < 20; ++trial) {
    const StoppingPolicy pol = support::random_policy(t.lat, t.sc, rng, 0.3);
    const int j = 1 + trial % 3;
    StoppingPolicy alt = pol;
    for (int i = j; i < 3; ++i) {
      for (std::size_t n = 0; n < t.lat.node_count(i); ++n) alt.set(0, i, n, !pol.flag(0, i, n));
    }
    for (const auto& o : all_outcomes(t)) {
      const Scenario& out = t.sc[o.outcome];
      if (out.level() == 0 || out.steps[0] > j) continue;
      CHECK(compose_stopping(pol, t.lat, t.sc, o).step == compose_stopping(alt, t.lat, t.sc, o).step);
    }
  }
}

TEST_CASE("expectation examples") {
  const Tree t = textbook();
  std::mt19937_64 rng(47);
  const StoppingPolicy pol = support::random_policy(t.lat, t.sc, rng, 0.5);
  const ExpectationReport one = backward_expectation([](const NodePoint&) { return 1.0; }, pol, t.d);
  CHECK(one.value == doctest::Approx(1.0).epsilon(1e-15));
  for (std::size_t s = 0; s < t.sc.size(); ++s) {
    for (std::size_t n = 0; n < one.J[s].size(); ++n) {
      CHECK(one.J[s][n] == doctest::Approx(t.d.survival(s, t.sc[s].start(), n)).epsilon(1e-15));
    }
  }
  const Tree u = textbook();
  const StoppingPolicy at_T(u.lat, u.sc);
  const IndexedProcess defaulted = [&u](const NodePoint& at) { return u.sc[at.scenario].level() >= 1 ? 1.0 : 0.0; };
  CHECK(backward_expectation(defaulted, at_T, u.d).value == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("expectation matches path enumeration on random instances") {
  std::mt19937_64 rng(53);
  for (int trial = 0; trial < 40; ++trial) {
    const int M = 2 + trial % 3;
    Tree t{BrownianLattice(1.0, M, 1 + trial % 2), ScenarioSet(trial % 3, M, 1 + (trial / 3) % 2), {}};
    t.d = trial % 2 ? support::random_node_dependent(t.lat, t.sc, rng) : support::random_independent(t.lat, t.sc, rng);
    const StoppingPolicy pol = support::random_policy(t.lat, t.sc, rng, 0.35);
    const ScalarField Z = support::random_field(t.lat, t.sc, rng, -2.0, 2.0);
    CHECK(std::abs(backward_expectation(Z, pol, t.d).value - direct_expectation(Z, pol, t.d)) <= 1e-12);
  }
}

TEST_CASE("expectation is linear and monotone") {
  std::mt19937_64 rng(59);
  Tree t{BrownianLattice(1.0, 3, 1), ScenarioSet(2, 3, 2), {}};
  t.d = support::random_node_dependent(t.lat, t.sc, rng);
  const StoppingPolicy pol = support::random_policy(t.lat, t.sc, rng, 0.3);
  const ScalarField Z1 = support::random_field(t.lat, t.sc, rng, -1.0, 1.0);
  const ScalarField Z2 = support::random_field(t.lat, t.sc, rng, 0.0, 1.0);
  const double a = 0.7, b = -1.3;
  const double lhs = backward_expectation([&](const NodePoint& x) { return a * Z1(x) + b * Z2(x); }, pol, t.d).value;
  const double rhs = a * backward_expectation(Z1, pol, t.d).value + b * backward_expectation(Z2, pol, t.d).value;
  CHECK(lhs == doctest::Approx(rhs).epsilon(1e-14));
  const double lo = backward_expectation(Z1, pol, t.d).value;
  const double hi = backward_expectation([&](const NodePoint& x) { return Z1(x) + Z2(x); }, pol, t.d).value;
  CHECK(lo <= hi);
}

TEST_CASE("supsup with a control-free payoff is the Snell envelope") {
  std::mt19937_64 rng(61);
  const BrownianLattice lat(1.0, 4, 1);
  const ScenarioSet sc(0, 4, 1);
  const DensityModel d = DensityModel::independent(lat, sc, {1.0});
  ControllerStopperProblem prob = support::random_problem(lat, sc, rng, 2);
  const ScalarField c = support::random_field(lat, sc, rng, -1.0, 1.0);
  prob.payoff = [c](const NodePoint& at, double) { return c(at); };
  CHECK(solve_supsup(prob, d).value == doctest::Approx(snell(lat, c, true)).epsilon(1e-14));
  prob.actions = {{Vector::Zero(1)}};
  CHECK(solve_supinf(prob, d).value == doctest::Approx(snell(lat, c, false)).epsilon(1e-14));
}

TEST_CASE("constant payoff gives its constant") {
  std::mt19937_64 rng(67);
  const BrownianLattice lat(1.0, 3, 1);
  const ScenarioSet sc(1, 3, 2);
  const DensityModel d = support::random_node_dependent(lat, sc, rng);
  ControllerStopperProblem prob = support::random_problem(lat, sc, rng, 3);
  prob.payoff = [](const NodePoint&, double) { return -0.4; };
  CHECK(solve_supsup(prob, d).value == doctest::Approx(-0.4).epsilon(1e-14));
  CHECK(solve_supinf(prob, d).value == doctest::Approx(-0.4).epsilon(1e-14));
  CHECK(enumerate_value(prob, d, GameMode::supsup) == doctest::Approx(-0.4).epsilon(1e-14));
}

TEST_CASE("stop-independent payoff makes supinf equal supsup") {
  std::mt19937_64 rng(71);
  const BrownianLattice lat(1.0, 3, 1);
  const ScenarioSet sc(0, 3, 1);
  const DensityModel d = DensityModel::independent(lat, sc, {1.0});
  ControllerStopperProblem prob = support::random_problem(lat, sc, rng, 1);
  prob.actions = {{Vector::Zero(1)}};
  prob.payoff = [](const NodePoint&, double x) { return x; };
  CHECK(solve_supinf(prob, d).value == doctest::Approx(solve_supsup(prob, d).value).epsilon(1e-15));
}

TEST_CASE("two-step controller-stopper matches pure strategy enumeration") {
  std::mt19937_64 rng(73);
  for (int trial = 0; trial < 10; ++trial) {
    const BrownianLattice lat(1.0, 2, 1);
    const ScenarioSet sc(1, 2, 1);
    const DensityModel d = trial % 2 ? support::random_node_dependent(lat, sc, rng) : support::random_independent(lat, sc, rng);
    const ControllerStopperProblem prob = support::random_problem(lat, sc, rng, 2);
    const double up = solve_supsup(prob, d).value;
    const double lo = solve_supinf(prob, d).value;
    CHECK(std::abs(up - enumerate_strategies(prob, d, GameMode::supsup)) <= 1e-12);
    CHECK(std::abs(lo - enumerate_strategies(prob, d, GameMode::supinf)) <= 1e-12);
    CHECK(std::abs(up - enumerate_value(prob, d, GameMode::supsup)) <= 1e-12);
    CHECK(std::abs(lo - enumerate_value(prob, d, GameMode::supinf)) <= 1e-12);
    CHECK(up >= lo);
  }
}

TEST_CASE("supsup dominates every explicit strategy pair") {
  std::mt19937_64 rng(79);
  const BrownianLattice lat(1.0, 3, 1);
  const ScenarioSet sc(1, 3, 2);
  const DensityModel d = support::random_independent(lat, sc, rng);
  const ControllerStopperProblem prob = support::random_problem(lat, sc, rng, 3);
  const double best = solve_supsup(prob, d).value;
  std::uniform_int_distribution<int> pick(0, 2);
  for (int trial = 0; trial < 50; ++trial) {
    const StoppingPolicy pol = support::random_policy(lat, sc, rng, 0.3);
    std::vector<int> choice(1000);
    for (auto& c : choice) c = pick(rng);
    const ControlPolicy ctl = [&](const NodePoint& at) {
      const std::size_t key = (at.scenario * 7 + static_cast<std::size_t>(at.step) * 31 + at.node * 3) % choice.size();
      return prob.actions[static_cast<std::size_t>(sc[at.scenario].level())][static_cast<std::size_t>(choice[key])];
    };
    CHECK(evaluate_strategy(prob, d, ctl, pol) <= best + 1e-14);
  }
  CHECK(best >= solve_supinf(prob, d).value);
}

TEST_CASE("state cap raises a capacity error") {
  std::mt19937_64 rng(83);
  const BrownianLattice lat(1.0, 3, 1);
  const ScenarioSet sc(1, 3, 1);
  const DensityModel d = support::random_independent(lat, sc, rng);
  const ControllerStopperProblem prob = support::random_problem(lat, sc, rng, 3);
  try {
    solve_supsup(prob, d, 5);
    FAIL("expected a capacity error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::capacity);
  }
}
