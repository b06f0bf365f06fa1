#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "support.hpp"

using namespace cascade;

namespace {

// n=1, one mark, T=1, M=2: masses {0.5: 0.3, 1.0: 0.2, none: 0.5}.
DensityModel textbook() {
  const BrownianLattice lat(1.0, 2, 1);
  const ScenarioSet sc(1, 2, 1);
  return DensityModel::independent(lat, sc, {0.5, 0.3, 0.2});
}

}  // namespace

TEST_CASE("survival masses of the three-atom example") {
  const DensityModel d = textbook();
  CHECK(d.survival(0, 0, 0) == doctest::Approx(1.0).epsilon(1e-15));
  CHECK(d.survival(0, 1, 0) == doctest::Approx(0.7).epsilon(1e-15));
  CHECK(d.survival(0, 2, 0) == doctest::Approx(0.5).epsilon(1e-15));
  // Top level is the density itself.
  CHECK(d.survival(1, 1, 0) == 0.3);
  CHECK(d.survival(1, 2, 0) == 0.3);
  CHECK(d.survival(2, 2, 0) == 0.2);
  CHECK(check_normalization(d).residual <= 1e-15);
}

TEST_CASE("step default probabilities of the three-atom example") {
  const DensityModel d = textbook();
  const StepProbabilities p0 = step_default_prob(d, 0, 0, 0);
  CHECK(p0.by_mark[0] == doctest::Approx(0.3).epsilon(1e-15));
  CHECK(p0.survive == doctest::Approx(0.7).epsilon(1e-15));
  const StepProbabilities p1 = step_default_prob(d, 0, 0, 1);
  CHECK(p1.by_mark[0] == doctest::Approx(0.2 / 0.7).epsilon(1e-15));
  CHECK(p1.survive + p1.by_mark[0] == doctest::Approx(1.0).epsilon(1e-15));
}

TEST_CASE("two marks with equal weights halve the time mass") {
  const BrownianLattice lat(1.0, 2, 1);
  const ScenarioSet sc(1, 2, 2);
  // ids: none, (1,e0), (1,e1), (2,e0), (2,e1)
  const DensityModel d = DensityModel::independent(lat, sc, {0.5, 0.15, 0.15, 0.1, 0.1});
  const StepProbabilities p = step_default_prob(d, 0, 0, 0);
  CHECK(p.by_mark[0] == doctest::Approx(0.15).epsilon(1e-15));
  CHECK(p.by_mark[1] == doctest::Approx(0.15).epsilon(1e-15));
}

TEST_CASE("normalization residual") {
  const BrownianLattice lat(1.0, 2, 1);
  const ScenarioSet sc(1, 2, 1);
  CHECK(check_normalization(DensityModel::independent(lat, sc, {0.5, 0.3, 0.2})).residual <= 1e-15);
  const auto scaled = check_normalization(DensityModel::independent(lat, sc, {0.55, 0.33, 0.22}));
  CHECK(scaled.residual == doctest::Approx(0.1).epsilon(1e-12));

  std::mt19937_64 rng(3);
  DensityModel good = support::random_node_dependent(lat, sc, rng);
  CHECK(check_normalization(good).residual <= 1e-15);
  // Break the martingale property at one node at step 1.
  std::vector<std::vector<std::vector<double>>> t(3, std::vector<std::vector<double>>(sc.size()));
  for (int i = 0; i <= 2; ++i) {
    for (std::size_t s = 0; s < sc.size(); ++s) {
      for (std::size_t n = 0; n < lat.node_count(i); ++n) t[static_cast<std::size_t>(i)][s].push_back(good.terminal_mass(s, i, n));
    }
  }
  t[1][1][1] += 0.05;
  t[1][2][1] -= 0.05;
  const auto bad = check_normalization(DensityModel::node_table(lat, sc, t));
  CHECK(bad.residual > 0.01);
  CHECK(bad.step == 1);
  CHECK(bad.node == 1);
}

TEST_CASE("martingale restoration on a node-dependent two-step tree") {
  const BrownianLattice lat(1.0, 2, 1);
  const ScenarioSet sc(1, 2, 1);
  std::mt19937_64 rng(5);
  const DensityModel d = support::random_node_dependent(lat, sc, rng);
  // alpha^0 at the root = mean of alpha^0 over the children + mass of a jump at t_1.
  const double children = 0.5 * (d.survival(0, 1, 0) + d.survival(0, 1, 1));
  const double jump_at_1 = 0.5 * (d.terminal_mass(1, 1, 0) + d.terminal_mass(1, 1, 1));
  CHECK(d.survival(0, 0, 0) == doctest::Approx(children + jump_at_1).epsilon(1e-14));
}

TEST_CASE("martingale restoration on random trees") {
  std::mt19937_64 rng(17);
  for (int trial = 0; trial < 20; ++trial) {
    const BrownianLattice lat(1.0, 1 + trial % 4, 1 + trial % 2);
    const ScenarioSet sc(trial % 3, lat.steps(), 1 + trial % 2);
    const DensityModel d = trial % 2 ? support::random_node_dependent(lat, sc, rng) : support::random_independent(lat, sc, rng);
    for (std::size_t s = 0; s < sc.size(); ++s) {
      for (int i = sc[s].start(); i < lat.steps(); ++i) {
        for (std::size_t n = 0; n < lat.node_count(i); ++n) {
          double rhs = 0.0;
          for (int b = 0; b < lat.branches(); ++b) {
            const std::size_t c = lat.child(i, n, b);
            rhs += lat.branch_prob() * d.survival(s, i + 1, c);
            for (int e = 0; e < sc.num_marks(); ++e) {
              const std::size_t x = sc.extend(s, i + 1, e);
              if (x != ScenarioSet::npos) rhs += lat.branch_prob() * d.prefix_mass(x, i + 1, c);
            }
          }
          CHECK(d.survival(s, i, n) == doctest::Approx(rhs).epsilon(1e-13));
        }
      }
    }
  }
}

TEST_CASE("level recursion equals direct summation") {
  std::mt19937_64 rng(23);
  for (int trial = 0; trial < 10; ++trial) {
    const BrownianLattice lat(1.0, 3, 1);
    const ScenarioSet sc(2, 3, 2);
    const DensityModel d = support::random_node_dependent(lat, sc, rng);
    for (int k = 0; k <= 2; ++k) {
      const SurvivalTable a = marginalize(d, k);
      const SurvivalTable b = marginalize_direct(d, k);
      REQUIRE(a.ids == b.ids);
      for (std::size_t j = 0; j < a.values.size(); ++j) {
        for (std::size_t r = 0; r < a.values[j].size(); ++r) {
          for (std::size_t n = 0; n < a.values[j][r].size(); ++n) {
            CHECK(std::abs(a.values[j][r][n] - b.values[j][r][n]) <= 1e-15);
          }
        }
      }
    }
  }
}

TEST_CASE("joint step probabilities sum to one and zero mass raises") {
  std::mt19937_64 rng(29);
  const BrownianLattice lat(1.0, 3, 2);
  const ScenarioSet sc(1, 3, 2);
  const DensityModel d = support::random_node_dependent(lat, sc, rng);
  for (std::size_t s = 0; s < sc.size(); ++s) {
    for (int i = sc[s].start(); i < 3; ++i) {
      for (std::size_t n = 0; n < lat.node_count(i); ++n) {
        const JointStep j = joint_step(d, s, n, i);
        double total = 0.0;
        for (std::size_t b = 0; b < j.survive.size(); ++b) {
          total += j.survive[b];
          for (double v : j.by_mark[b]) {
            CHECK(v >= 0.0);
            total += v;
          }
        }
        CHECK(total == doctest::Approx(1.0).epsilon(1e-13));
      }
    }
  }
  const DensityModel z = DensityModel::independent(BrownianLattice(1.0, 2, 1), ScenarioSet(1, 2, 1), {1.0, 0.0, 0.0});
  CHECK(z.null_scenario(1));
  try {
    joint_step(z, 1, 0, 1);
    FAIL("expected a conditioning error");
  } catch (const Error& e) {
    CHECK(e.kind() == ErrorKind::conditioning);
    CHECK(std::string(e.what()).find("scenario 1") != std::string::npos);
  }
}

TEST_CASE("constant hazard masses") {
  support::SpecBuilder sb;
  sb.M = 4;
  sb.n = 1;
  sb.hazard = 0.8;
  const ProblemSpec spec = sb.build();
  const BrownianLattice lat = make_lattice(spec);
  const ScenarioSet sc = make_scenarios(spec);
  const DensityModel d = build_density(spec, lat, sc);
  CHECK(d.terminal_mass(0, 0, 0) == doctest::Approx(std::exp(-0.8)).epsilon(1e-15));
  for (int j = 1; j <= 4; ++j) {
    const double cell = std::exp(-0.8 * (j - 1) / 4.0) - std::exp(-0.8 * j / 4.0);
    CHECK(d.terminal_mass(sc.find({{j}, {0}}), 0, 0) == doctest::Approx(cell).epsilon(1e-14));
  }
  CHECK(check_normalization(d).residual <= 1e-15);

  // With n = 2 a level-1 outcome also survives the second default to T.
  sb.n = 2;
  sb.gamma = {0.0, 0.0};
  sb.eta = {0.25, 0.75};
  const ProblemSpec s2 = sb.build();
  const BrownianLattice l2 = make_lattice(s2);
  const ScenarioSet c2 = make_scenarios(s2);
  const DensityModel d2 = build_density(s2, l2, c2);
  const double cell = std::exp(-0.8 * 0.25) - std::exp(-0.8 * 0.5);
  CHECK(d2.terminal_mass(c2.find({{2}, {1}}), 0, 0) == doctest::Approx(cell * 0.75 * std::exp(-0.8 * 0.5)).epsilon(1e-14));
  CHECK(check_normalization(d2).residual <= 1e-14);
}

TEST_CASE("node table given only at T is back-filled") {
  support::SpecBuilder sb;
  sb.M = 2;
  sb.n = 1;
  ProblemSpec spec = sb.build();
  spec.defaults.density.kind = DensitySource::Kind::node_table;
  // Terminal nodes 0, 1, 2; outcomes none, (1), (2).
  const double m[3][3] = {{0.6, 0.2, 0.2}, {0.5, 0.3, 0.2}, {0.4, 0.2, 0.4}};
  const std::vector<std::vector<int>> jumps = {{}, {1}, {2}};
  for (std::size_t n = 0; n < 3; ++n) {
    for (std::size_t s = 0; s < 3; ++s) {
      spec.defaults.density.rows.push_back({n, 2, jumps[s], std::vector<int>(jumps[s].size(), 0), m[n][s]});
    }
  }
  const BrownianLattice lat = make_lattice(spec);
  const ScenarioSet sc = make_scenarios(spec);
  const DensityModel d = build_density(spec, lat, sc);
  CHECK(d.node_dependent());
  CHECK(check_normalization(d).residual <= 1e-15);
  CHECK(d.terminal_mass(0, 1, 0) == doctest::Approx(0.55).epsilon(1e-15));
  CHECK(d.terminal_mass(0, 0, 0) == doctest::Approx(0.5).epsilon(1e-15));
}

TEST_CASE("explicit masses must sit on grid times") {
  support::SpecBuilder sb;
  sb.M = 2;
  ProblemSpec spec = sb.build();
  spec.defaults.density.hazard.reset();
  spec.defaults.density.masses = {{{}, {}, 0.5}, {{0.3}, {0}, 0.5}};
  CHECK_THROWS_AS(build_density(spec, make_lattice(spec), make_scenarios(spec)), Error);
}
