#include "cascade/lattice.hpp"

#include <cmath>
#include <cstdlib>
#include <string>

#include "cascade/error.hpp"

namespace cascade {

BrownianLattice::BrownianLattice(double horizon, int steps, int dims, std::size_t max_nodes)
    : horizon_(horizon), steps_(steps), dims_(dims) {
  if (!(horizon > 0.0) || steps < 1 || dims < 1) {
    throw Error(ErrorKind::validation, "lattice needs T > 0, M >= 1, m >= 1");
  }
  if (dims > 16) throw Error(ErrorKind::capacity, "Brownian dimension too large");
  // (M+1)^m terminal nodes alone; stop early on overflow.
  double total = 0.0;
  for (int i = 0; i <= steps; ++i) total += std::pow(static_cast<double>(i + 1), dims);
  if (total > static_cast<double>(max_nodes)) {
    throw Error(ErrorKind::capacity, "lattice with M=" + std::to_string(steps) + ", m=" + std::to_string(dims) +
                                         " needs " + std::to_string(static_cast<long long>(total)) +
                                         " nodes, cap is " + std::to_string(max_nodes));
  }
  dt_ = horizon / steps;
  sqrt_dt_ = std::sqrt(dt_);
  branch_prob_ = std::ldexp(1.0, -dims);
}

std::size_t BrownianLattice::node_count(int i) const {
  std::size_t n = 1;
  for (int c = 0; c < dims_; ++c) n *= static_cast<std::size_t>(i + 1);
  return n;
}

std::size_t BrownianLattice::total_nodes() const {
  std::size_t total = 0;
  for (int i = 0; i <= steps_; ++i) total += node_count(i);
  return total;
}

std::vector<int> BrownianLattice::up_counts(int i, std::size_t node) const {
  std::vector<int> ups(dims_);
  const auto radix = static_cast<std::size_t>(i + 1);
  for (int c = 0; c < dims_; ++c) {
    ups[c] = static_cast<int>(node % radix);
    node /= radix;
  }
  return ups;
}

std::size_t BrownianLattice::index(int i, const std::vector<int>& ups) const {
  std::size_t idx = 0;
  const auto radix = static_cast<std::size_t>(i + 1);
  for (int c = dims_ - 1; c >= 0; --c) idx = idx * radix + static_cast<std::size_t>(ups[c]);
  return idx;
}

std::size_t BrownianLattice::child(int i, std::size_t node, int branch) const {
  if (dims_ == 1) return node + static_cast<std::size_t>(branch & 1);
  const auto radix = static_cast<std::size_t>(i + 1);
  const auto next = static_cast<std::size_t>(i + 2);
  std::size_t idx = 0;
  std::size_t scale = 1;
  for (int c = 0; c < dims_; ++c) {
    const std::size_t u = node % radix + static_cast<std::size_t>((branch >> c) & 1);
    node /= radix;
    idx += u * scale;
    scale *= next;
  }
  return idx;
}

double BrownianLattice::brownian(int i, std::size_t node, int c) const {
  const auto radix = static_cast<std::size_t>(i + 1);
  for (int j = 0; j < c; ++j) node /= radix;
  const auto u = static_cast<int>(node % radix);
  return (2 * u - i) * sqrt_dt_;
}

std::size_t BrownianLattice::node_along(const std::vector<int>& path, int i) const {
  std::size_t node = 0;
  for (int j = 0; j < i; ++j) node = child(j, node, path[j]);
  return node;
}

std::size_t BrownianLattice::default_node_cap() {
  if (const char* env = std::getenv("CASCADE_MAX_NODES"); env != nullptr && *env != '\0') {
    char* end = nullptr;
    const unsigned long long v = std::strtoull(env, &end, 10);
    if (*end != '\0' || v == 0 || *env == '-') {
      throw Error(ErrorKind::configuration, std::string("CASCADE_MAX_NODES must be a positive integer, got \"") + env + "\"");
    }
    return static_cast<std::size_t>(v);
  }
  return 4'000'000;
}

std::vector<Scenario> enumerate_scenarios(int n, int steps, int num_marks) {
  std::vector<Scenario> out{Scenario{}};
  std::size_t begin = 0;
  for (int k = 1; k <= n; ++k) {
    const std::size_t end = out.size();
    for (std::size_t id = begin; id < end; ++id) {
      const Scenario base = out[id];
      for (int step = base.start() + 1; step <= steps; ++step) {
        for (int e = 0; e < num_marks; ++e) {
          Scenario next = base;
          next.steps.push_back(step);
          next.marks.push_back(e);
          out.push_back(std::move(next));
        }
      }
    }
    begin = end;
  }
  return out;
}

ScenarioSet::ScenarioSet(int n, int steps, int num_marks, std::size_t max_scenarios)
    : n_(n), steps_(steps), marks_(num_marks) {
  if (n < 0 || steps < 1 || num_marks < 1) {
    throw Error(ErrorKind::validation, "scenario set needs n >= 0, M >= 1, |E| >= 1");
  }
  // Count before enumerating: sum_k C(M,k) |E|^k.
  double count = 0.0;
  double binom = 1.0;
  for (int k = 0; k <= n; ++k) {
    if (k > 0) binom = binom * (steps - k + 1) / k;
    count += binom * std::pow(static_cast<double>(num_marks), k);
  }
  if (count > static_cast<double>(max_scenarios)) {
    throw Error(ErrorKind::capacity, "scenario count " + std::to_string(static_cast<long long>(count)) +
                                         " exceeds cap " + std::to_string(max_scenarios));
  }
  items_ = enumerate_scenarios(n, steps, num_marks);
  levels_.assign(static_cast<std::size_t>(n + 1), {});
  parents_.assign(items_.size(), npos);
  children_.assign(items_.size(), {});
  for (std::size_t id = 0; id < items_.size(); ++id) {
    levels_[items_[id].level()].push_back(id);
    lookup_.emplace(items_[id], id);
  }
  for (std::size_t id = 0; id < items_.size(); ++id) {
    const Scenario& s = items_[id];
    if (s.level() < n_) children_[id].assign(static_cast<std::size_t>(steps_ * marks_), npos);
    if (s.level() == 0) continue;
    Scenario up = s;
    const int step = up.steps.back();
    const int mark = up.marks.back();
    up.steps.pop_back();
    up.marks.pop_back();
    const std::size_t pid = lookup_.at(up);
    parents_[id] = pid;
    children_[pid][static_cast<std::size_t>((step - 1) * marks_ + mark)] = id;
  }
}

std::size_t ScenarioSet::find(const Scenario& s) const {
  auto it = lookup_.find(s);
  return it == lookup_.end() ? npos : it->second;
}

std::size_t ScenarioSet::extend(std::size_t id, int step, int mark) const {
  const auto& ch = children_[id];
  if (ch.empty() || step < 1 || step > steps_ || mark < 0 || mark >= marks_) return npos;
  return ch[static_cast<std::size_t>((step - 1) * marks_ + mark)];
}

std::size_t ScenarioSet::prefix(std::size_t id, int k) const {
  while (items_[id].level() > k) id = parents_[id];
  return id;
}

ScenarioTable::ScenarioTable(const BrownianLattice& lattice, const ScenarioSet& scenarios, double fill) {
  start_.resize(scenarios.size());
  data_.resize(scenarios.size());
  for (std::size_t s = 0; s < scenarios.size(); ++s) {
    start_[s] = scenarios[s].start();
    for (int i = start_[s]; i <= lattice.steps(); ++i) data_[s].emplace_back(lattice.node_count(i), fill);
  }
}

}  // namespace cascade
