#include "cascade/density.hpp"

#include <cmath>
#include <sstream>

#include "cascade/error.hpp"

namespace cascade {

DensityModel DensityModel::independent(const BrownianLattice& lattice, const ScenarioSet& scenarios,
                                       std::vector<double> terminal) {
  if (terminal.size() != scenarios.size()) {
    throw Error(ErrorKind::configuration, "independent density needs one mass per scenario");
  }
  DensityModel d;
  d.lattice_ = lattice;
  d.scenarios_ = scenarios;
  d.node_dependent_ = false;
  d.terminal_.resize(scenarios.size());
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    d.terminal_[s].assign(static_cast<std::size_t>(lattice.steps() + 1), std::vector<double>{terminal[s]});
  }
  d.derive();
  return d;
}

DensityModel DensityModel::node_table(const BrownianLattice& lattice, const ScenarioSet& scenarios,
                                      std::vector<std::vector<std::vector<double>>> terminal) {
  const auto steps = static_cast<std::size_t>(lattice.steps() + 1);
  if (terminal.size() != steps) throw Error(ErrorKind::configuration, "node table needs M+1 time slices");
  DensityModel d;
  d.lattice_ = lattice;
  d.scenarios_ = scenarios;
  d.node_dependent_ = true;
  d.terminal_.assign(scenarios.size(), std::vector<std::vector<double>>(steps));
  for (std::size_t i = 0; i < steps; ++i) {
    if (terminal[i].size() != scenarios.size()) {
      throw Error(ErrorKind::configuration, "node table slice " + std::to_string(i) + " has wrong scenario count");
    }
    for (std::size_t s = 0; s < scenarios.size(); ++s) {
      if (terminal[i][s].size() != lattice.node_count(static_cast<int>(i))) {
        throw Error(ErrorKind::configuration, "node table slice " + std::to_string(i) + " has wrong node count");
      }
      d.terminal_[s][i] = std::move(terminal[i][s]);
    }
  }
  d.derive();
  return d;
}

void DensityModel::derive() {
  const int M = lattice_.steps();
  const std::size_t S = scenarios_.size();
  prefix_ = terminal_;
  // Children always carry larger ids, so a reverse sweep sees them first.
  for (std::size_t s = S; s-- > 0;) {
    const std::size_t p = scenarios_.parent(s);
    if (p == ScenarioSet::npos) continue;
    for (int i = 0; i <= M; ++i) {
      auto& dst = prefix_[p][static_cast<std::size_t>(i)];
      const auto& src = prefix_[s][static_cast<std::size_t>(i)];
      for (std::size_t j = 0; j < dst.size(); ++j) dst[j] += src[j];
    }
  }
  survival_.assign(S, {});
  null_.assign(S, 1);
  touches_zero_.assign(S, 0);
  for (std::size_t s = 0; s < S; ++s) {
    const Scenario& sc = scenarios_[s];
    survival_[s].resize(static_cast<std::size_t>(M + 1));
    for (int i = sc.start(); i <= M; ++i) {
      auto slice = terminal_[s][static_cast<std::size_t>(i)];
      for (int step = i + 1; step <= M; ++step) {
        for (int e = 0; e < scenarios_.num_marks(); ++e) {
          const std::size_t c = scenarios_.extend(s, step, e);
          if (c == ScenarioSet::npos) continue;
          const auto& pc = prefix_[c][static_cast<std::size_t>(i)];
          for (std::size_t j = 0; j < slice.size(); ++j) slice[j] += pc[j];
        }
      }
      for (double v : slice) {
        if (v != 0.0) null_[s] = 0;
        if (v <= 0.0) touches_zero_[s] = 1;
      }
      survival_[s][static_cast<std::size_t>(i)] = std::move(slice);
    }
  }
}

double DensityModel::terminal_mass(std::size_t s, int i, std::size_t node) const {
  return terminal_[s][static_cast<std::size_t>(i)][col(node)];
}

double DensityModel::prefix_mass(std::size_t s, int i, std::size_t node) const {
  return prefix_[s][static_cast<std::size_t>(i)][col(node)];
}

double DensityModel::survival(std::size_t s, int i, std::size_t node) const {
  const auto& slice = survival_[s][static_cast<std::size_t>(i)];
  if (slice.empty()) {
    throw Error(ErrorKind::configuration, "survival mass of scenario " + std::to_string(s) + " read before its last jump");
  }
  return slice[col(node)];
}

SurvivalTable marginalize(const DensityModel& density, int k) {
  const auto& lat = density.lattice();
  const auto& sc = density.scenarios();
  SurvivalTable t;
  t.level = k;
  t.ids = sc.level(k);
  for (std::size_t s : t.ids) {
    std::vector<std::vector<double>> rows;
    for (int i = sc[s].start(); i <= lat.steps(); ++i) {
      std::vector<double> row(lat.node_count(i));
      for (std::size_t n = 0; n < row.size(); ++n) row[n] = density.survival(s, i, n);
      rows.push_back(std::move(row));
    }
    t.values.push_back(std::move(rows));
    t.excluded.push_back(density.null_scenario(s) ? 1 : 0);
  }
  return t;
}

SurvivalTable marginalize_direct(const DensityModel& density, int k) {
  const auto& lat = density.lattice();
  const auto& sc = density.scenarios();
  SurvivalTable t;
  t.level = k;
  t.ids = sc.level(k);
  for (std::size_t s : t.ids) {
    std::vector<std::vector<double>> rows;
    bool all_zero = true;
    for (int i = sc[s].start(); i <= lat.steps(); ++i) {
      std::vector<double> row(lat.node_count(i), 0.0);
      for (std::size_t o = 0; o < sc.size(); ++o) {
        if (sc[o].level() < k || sc.prefix(o, k) != s) continue;
        if (sc[o].level() > k && sc[o].steps[static_cast<std::size_t>(k)] <= i) continue;
        for (std::size_t n = 0; n < row.size(); ++n) row[n] += density.terminal_mass(o, i, n);
      }
      for (double v : row) all_zero = all_zero && v == 0.0;
      rows.push_back(std::move(row));
    }
    t.values.push_back(std::move(rows));
    t.excluded.push_back(all_zero ? 1 : 0);
  }
  return t;
}

std::string NormalizationReport::describe() const {
  std::ostringstream os;
  os.precision(17);
  os << "normalization residual " << normalization << ", martingale residual " << martingale << ", min mass "
     << min_mass << " (worst at step " << step << ", node " << node << ", scenario " << scenario << ")";
  return os.str();
}

NormalizationReport check_normalization(const DensityModel& density) {
  const auto& lat = density.lattice();
  const auto& sc = density.scenarios();
  NormalizationReport r;
  r.min_mass = density.terminal_mass(0, 0, 0);
  double worst = -1.0;
  auto record = [&](double v, int i, std::size_t n, std::size_t s) {
    if (v > worst) {
      worst = v;
      r.step = i;
      r.node = n;
      r.scenario = s;
    }
  };
  for (int i = 0; i <= lat.steps(); ++i) {
    const std::size_t nodes = density.node_dependent() ? lat.node_count(i) : 1;
    for (std::size_t n = 0; n < nodes; ++n) {
      double total = 0.0;
      for (std::size_t s = 0; s < sc.size(); ++s) {
        const double m = density.terminal_mass(s, i, n);
        total += m;
        if (m < r.min_mass) r.min_mass = m;
      }
      const double res = std::abs(total - 1.0);
      r.normalization = std::max(r.normalization, res);
      record(res, i, n, 0);
    }
  }
  if (density.node_dependent()) {
    for (std::size_t s = 0; s < sc.size(); ++s) {
      for (int i = 0; i < lat.steps(); ++i) {
        for (std::size_t n = 0; n < lat.node_count(i); ++n) {
          double mean = 0.0;
          for (int b = 0; b < lat.branches(); ++b) {
            mean += lat.branch_prob() * density.terminal_mass(s, i + 1, lat.child(i, n, b));
          }
          const double res = std::abs(density.terminal_mass(s, i, n) - mean);
          r.martingale = std::max(r.martingale, res);
          record(res, i, n, s);
        }
      }
    }
  }
  r.residual = std::max(r.normalization, r.martingale);
  return r;
}

namespace {

double checked_survival(const DensityModel& density, std::size_t s, std::size_t node, int i) {
  const double alpha = density.survival(s, i, node);
  if (!(alpha > 0.0)) {
    throw Error(ErrorKind::conditioning, "zero survival mass in scenario " + std::to_string(s) + " at step " +
                                             std::to_string(i) + ", node " + std::to_string(node));
  }
  return alpha;
}

}  // namespace

JointStep joint_step(const DensityModel& density, std::size_t s, std::size_t node, int i) {
  const auto& lat = density.lattice();
  const auto& sc = density.scenarios();
  if (i >= lat.steps()) throw Error(ErrorKind::configuration, "no step after the horizon");
  const double alpha = checked_survival(density, s, node, i);
  const int marks = sc.num_marks();
  JointStep out;
  out.survive.resize(static_cast<std::size_t>(lat.branches()));
  out.by_mark.assign(static_cast<std::size_t>(lat.branches()), std::vector<double>(static_cast<std::size_t>(marks), 0.0));
  const double w = lat.branch_prob() / alpha;
  for (int b = 0; b < lat.branches(); ++b) {
    const std::size_t c = lat.child(i, node, b);
    out.survive[static_cast<std::size_t>(b)] = w * density.survival(s, i + 1, c);
    for (int e = 0; e < marks; ++e) {
      const std::size_t next = sc.extend(s, i + 1, e);
      if (next == ScenarioSet::npos) continue;
      out.by_mark[static_cast<std::size_t>(b)][static_cast<std::size_t>(e)] = w * density.prefix_mass(next, i + 1, c);
    }
  }
  return out;
}

StepProbabilities step_default_prob(const DensityModel& density, std::size_t s, std::size_t node, int i) {
  const JointStep j = joint_step(density, s, node, i);
  StepProbabilities p;
  p.by_mark.assign(j.by_mark.front().size(), 0.0);
  for (std::size_t b = 0; b < j.survive.size(); ++b) {
    p.survive += j.survive[b];
    for (std::size_t e = 0; e < p.by_mark.size(); ++e) p.by_mark[e] += j.by_mark[b][e];
  }
  return p;
}

namespace {

int grid_step(double t, const BrownianLattice& lattice) {
  const double x = t / lattice.dt();
  const double r = std::round(x);
  if (std::abs(x - r) > 1e-9 * std::max(1.0, x) || r < 1 || r > lattice.steps()) {
    std::ostringstream os;
    os << "jump time " << t << " is not a grid time in (0, T]";
    throw Error(ErrorKind::validation, os.str());
  }
  return static_cast<int>(r);
}

std::vector<double> hazard_masses(const ProblemSpec& spec, const BrownianLattice& lattice, const ScenarioSet& sc,
                                  double h) {
  if (!(h >= 0.0) || !std::isfinite(h)) throw Error(ErrorKind::validation, "hazard must be finite and nonnegative");
  std::vector<double> out(sc.size());
  for (std::size_t s = 0; s < sc.size(); ++s) {
    const Scenario& x = sc[s];
    double mass = 1.0;
    int last = 0;
    Scenario history;
    for (int j = 0; j < x.level(); ++j) {
      const int step = x.steps[static_cast<std::size_t>(j)];
      const double a = lattice.time(step - 1) - lattice.time(last);
      const double b = lattice.time(step) - lattice.time(last);
      const auto eta = mark_weights(spec.defaults, history);
      mass *= (std::exp(-h * a) - std::exp(-h * b)) * eta[static_cast<std::size_t>(x.marks[static_cast<std::size_t>(j)])];
      history.steps.push_back(step);
      history.marks.push_back(x.marks[static_cast<std::size_t>(j)]);
      last = step;
    }
    if (x.level() < spec.n_defaults) mass *= std::exp(-h * (lattice.horizon() - lattice.time(last)));
    out[s] = mass;
  }
  return out;
}

}  // namespace

DensityModel build_density(const ProblemSpec& spec, const BrownianLattice& lattice, const ScenarioSet& sc) {
  const DensitySource& src = spec.defaults.density;
  if (src.kind == DensitySource::Kind::independent) {
    if (src.hazard) return DensityModel::independent(lattice, sc, hazard_masses(spec, lattice, sc, *src.hazard));
    std::vector<double> masses(sc.size(), 0.0);
    std::vector<char> given(sc.size(), 0);
    for (const MassEntry& m : src.masses) {
      Scenario key;
      for (double t : m.times) key.steps.push_back(grid_step(t, lattice));
      key.marks = m.marks;
      const std::size_t id = sc.find(key);
      if (id == ScenarioSet::npos) throw Error(ErrorKind::validation, "mass entry does not name a scenario on the grid");
      if (given[id]) throw Error(ErrorKind::validation, "duplicate mass entry for scenario " + std::to_string(id));
      given[id] = 1;
      masses[id] = m.mass;
    }
    return DensityModel::independent(lattice, sc, std::move(masses));
  }

  const int M = lattice.steps();
  std::vector<std::vector<std::vector<double>>> table(static_cast<std::size_t>(M + 1));
  for (int i = 0; i <= M; ++i) table[static_cast<std::size_t>(i)].assign(sc.size(), std::vector<double>(lattice.node_count(i), 0.0));
  std::vector<char> has_step(static_cast<std::size_t>(M + 1), 0);
  for (const NodeMassRow& r : src.rows) {
    if (r.step < 0 || r.step > M) throw Error(ErrorKind::validation, "node table row has time index out of range");
    if (r.node >= lattice.node_count(r.step)) throw Error(ErrorKind::validation, "node table row has node id out of range");
    Scenario key{r.jump_steps, r.marks};
    const std::size_t id = sc.find(key);
    if (id == ScenarioSet::npos) throw Error(ErrorKind::validation, "node table row does not name a scenario on the grid");
    table[static_cast<std::size_t>(r.step)][id][r.node] += r.mass;
    has_step[static_cast<std::size_t>(r.step)] = 1;
  }
  bool only_terminal = has_step[static_cast<std::size_t>(M)] != 0;
  for (int i = 0; i < M; ++i) only_terminal = only_terminal && !has_step[static_cast<std::size_t>(i)];
  if (only_terminal) {
    // Rows only at T: earlier slices are the conditional expectations.
    for (int i = M - 1; i >= 0; --i) {
      for (std::size_t s = 0; s < sc.size(); ++s) {
        for (std::size_t n = 0; n < lattice.node_count(i); ++n) {
          double mean = 0.0;
          for (int b = 0; b < lattice.branches(); ++b) {
            mean += lattice.branch_prob() * table[static_cast<std::size_t>(i + 1)][s][lattice.child(i, n, b)];
          }
          table[static_cast<std::size_t>(i)][s][n] = mean;
        }
      }
    }
  }
  return DensityModel::node_table(lattice, sc, std::move(table));
}

}  // namespace cascade
