#include "cascade/config.hpp"

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <map>
#include <sstream>

#include "cascade/error.hpp"

namespace cascade {

using nlohmann::json;

namespace {

[[noreturn]] void fail(const std::string& what) { throw Error(ErrorKind::validation, "config: " + what); }

const json& need(const json& j, const char* key, const std::string& where) {
  if (!j.is_object() || !j.contains(key)) fail(where + " needs \"" + key + "\"");
  return j.at(key);
}

double number(const json& j, const std::string& where) {
  if (!j.is_number()) fail(where + " must be a number");
  return j.get<double>();
}

Vector vec(const json& j, const std::string& where) {
  if (!j.is_array()) fail(where + " must be an array of numbers");
  Vector v(static_cast<Eigen::Index>(j.size()));
  for (std::size_t i = 0; i < j.size(); ++i) v[static_cast<Eigen::Index>(i)] = number(j[i], where);
  return v;
}

Matrix mat(const json& j, int cols, const std::string& where) {
  if (!j.is_array()) fail(where + " must be an array of rows");
  Matrix m(static_cast<Eigen::Index>(j.size()), cols);
  for (std::size_t r = 0; r < j.size(); ++r) {
    const Vector row = vec(j[r], where);
    if (row.size() != cols) fail(where + " rows must have one entry per Brownian component");
    m.row(static_cast<Eigen::Index>(r)) = row;
  }
  return m;
}

// Level entries: either one per level 0..n or a single entry shared by all levels.
std::vector<json> per_level(const json& j, int n, const std::string& where) {
  std::vector<json> out;
  if (j.is_array()) {
    if (j.size() == 1) {
      out.assign(static_cast<std::size_t>(n + 1), j[0]);
    } else if (j.size() == static_cast<std::size_t>(n + 1)) {
      for (const auto& e : j) out.push_back(e);
    } else {
      fail(where + " must have 1 or n+1 entries");
    }
  } else if (j.is_object()) {
    out.assign(static_cast<std::size_t>(n + 1), j);
  } else {
    fail(where + " must be an object or array");
  }
  return out;
}

struct LevelMarket {
  Vector drift;
  Matrix vol;
  std::vector<Vector> jump;  // per mark
  std::vector<bool> traded;
};

LevelMarket parse_level(const json& j, int d, int m, int marks, const std::string& where) {
  const std::string kind = j.value("kind", "constant");
  if (kind != "constant" && kind != "geometric") fail(where + ": unknown market preset \"" + kind + "\"");
  LevelMarket lm;
  lm.drift = vec(need(j, "drift", where), where + ".drift");
  lm.vol = mat(need(j, "vol", where), m, where + ".vol");
  if (lm.drift.size() != d || lm.vol.rows() != d) fail(where + ": drift/vol must have one row per asset");
  if (j.contains("jump")) {
    const json& g = j.at("jump");
    if (g.is_array() && !g.empty() && g[0].is_array()) {
      if (g.size() != static_cast<std::size_t>(marks)) fail(where + ".jump needs one vector per mark");
      for (const auto& e : g) lm.jump.push_back(vec(e, where + ".jump"));
    } else {
      lm.jump.assign(static_cast<std::size_t>(marks), vec(g, where + ".jump"));
    }
  } else {
    lm.jump.assign(static_cast<std::size_t>(marks), Vector::Zero(d));
  }
  for (const auto& g : lm.jump) {
    if (g.size() != d) fail(where + ".jump vectors need one entry per asset");
  }
  if (j.contains("traded")) {
    for (const auto& t : j.at("traded")) lm.traded.push_back(t.get<bool>());
    if (lm.traded.size() != static_cast<std::size_t>(d)) fail(where + ".traded needs one flag per asset");
  } else {
    lm.traded.assign(static_cast<std::size_t>(d), true);
  }
  return lm;
}

ConstraintSet parse_constraint(const json& j, int d, const std::string& where) {
  const std::string kind = need(j, "kind", where).get<std::string>();
  if (kind == "zero" || kind == "singleton-zero") return ConstraintSet::zero(d);
  if (kind == "unconstrained") return ConstraintSet::unconstrained(d);
  if (kind == "box") {
    auto lo = vec(need(j, "lo", where), where + ".lo");
    auto hi = vec(need(j, "hi", where), where + ".hi");
    if (lo.size() != d || hi.size() != d) fail(where + ": box bounds need one entry per asset");
    return ConstraintSet::box(std::move(lo), std::move(hi));
  }
  if (kind == "finite" || kind == "finite-set") {
    std::vector<Vector> pts;
    for (const auto& p : need(j, "points", where)) {
      pts.push_back(vec(p, where + ".points"));
      if (pts.back().size() != d) fail(where + ": points need one entry per asset");
    }
    return ConstraintSet::finite(std::move(pts));
  }
  fail(where + ": unknown constraint kind \"" + kind + "\"");
}

std::vector<int> int_tuple(const std::string& field) {
  std::vector<int> out;
  std::stringstream ss(field);
  std::string tok;
  while (std::getline(ss, tok, ';')) {
    if (tok.empty()) continue;
    out.push_back(std::stoi(tok));
  }
  return out;
}

std::vector<std::vector<std::string>> read_csv(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);
  std::vector<std::vector<std::string>> rows;
  std::string line;
  bool header = true;
  while (std::getline(in, line)) {
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    if (header) {
      header = false;
      continue;
    }
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string cell;
    while (std::getline(ss, cell, ',')) cells.push_back(cell);
    if (!line.empty() && line.back() == ',') cells.emplace_back();
    rows.push_back(std::move(cells));
  }
  return rows;
}

std::string resolve(const std::string& base, const std::string& file) {
  std::filesystem::path p(file);
  if (p.is_relative()) p = std::filesystem::path(base) / p;
  return p.string();
}

}  // namespace

ProblemSpec parse_config(const json& doc, const std::string& base_dir, std::optional<int> steps) {
  if (!doc.is_object()) fail("document must be a JSON object");
  ProblemSpec spec;
  spec.horizon = number(need(doc, "horizon", "document"), "horizon");
  spec.steps = steps ? *steps : need(doc, "steps", "document").get<int>();
  spec.initial_wealth = doc.value("initial_wealth", 0.0);

  const json& market = need(doc, "market", "document");
  const json& defaults = need(doc, "defaults", "document");
  spec.assets = need(market, "assets", "market").get<int>();
  spec.brownian_dims = doc.value("brownian_dims", market.value("brownian_dims", spec.assets));
  spec.n_defaults = need(defaults, "n", "defaults").get<int>();
  if (spec.n_defaults < 0) fail("defaults.n must be nonnegative");
  if (spec.assets < 1 || spec.brownian_dims < spec.assets) fail("need 1 <= assets <= brownian_dims");

  // Marks and eta.
  for (const auto& e : need(defaults, "marks", "defaults")) spec.defaults.marks.push_back(number(e, "defaults.marks"));
  const int marks = static_cast<int>(spec.defaults.marks.size());
  if (marks < 1) fail("defaults.marks must not be empty");
  if (defaults.contains("mark_weights")) {
    const json& w = defaults.at("mark_weights");
    if (w.is_array()) {
      std::vector<double> eta;
      for (const auto& v : w) eta.push_back(number(v, "defaults.mark_weights"));
      spec.defaults.mark_weights = [eta](const Scenario&) { return eta; };
    } else if (w.is_object()) {
      // Markov kernel: weights given the previous mark.
      std::vector<double> first;
      for (const auto& v : need(w, "first", "mark_weights")) first.push_back(number(v, "mark_weights.first"));
      std::vector<std::vector<double>> after;
      for (const auto& row : need(w, "after", "mark_weights")) {
        std::vector<double> r;
        for (const auto& v : row) r.push_back(number(v, "mark_weights.after"));
        after.push_back(std::move(r));
      }
      if (after.size() != static_cast<std::size_t>(marks)) fail("mark_weights.after needs one row per mark");
      spec.defaults.mark_weights = [first, after](const Scenario& h) {
        return h.marks.empty() ? first : after[static_cast<std::size_t>(h.marks.back())];
      };
    } else {
      fail("defaults.mark_weights must be an array or an object");
    }
  }

  const json& dens = need(defaults, "density", "defaults");
  const std::string dkind = need(dens, "kind", "defaults.density").get<std::string>();
  if (dkind == "independent") {
    spec.defaults.density.kind = DensitySource::Kind::independent;
    if (dens.contains("hazard")) {
      spec.defaults.density.hazard = number(dens.at("hazard"), "density.hazard");
    } else {
      for (const auto& m : need(dens, "masses", "defaults.density")) {
        MassEntry e;
        for (const auto& t : need(m, "times", "mass entry")) e.times.push_back(number(t, "mass entry times"));
        if (m.contains("marks")) {
          for (const auto& v : m.at("marks")) e.marks.push_back(v.get<int>());
        } else {
          e.marks.assign(e.times.size(), 0);
        }
        if (e.marks.size() != e.times.size()) fail("mass entry needs one mark per jump time");
        e.mass = number(need(m, "mass", "mass entry"), "mass");
        spec.defaults.density.masses.push_back(std::move(e));
      }
    }
  } else if (dkind == "node_table") {
    spec.defaults.density.kind = DensitySource::Kind::node_table;
    const std::string file = resolve(base_dir, need(dens, "file", "defaults.density").get<std::string>());
    for (const auto& cells : read_csv(file)) {
      if (cells.size() != 5) fail(file + ": rows need node_id,time_index,thetas,marks,mass");
      NodeMassRow r;
      r.node = static_cast<std::size_t>(std::stoull(cells[0]));
      r.step = std::stoi(cells[1]);
      r.jump_steps = int_tuple(cells[2]);
      r.marks = int_tuple(cells[3]);
      r.mass = std::stod(cells[4]);
      spec.defaults.density.rows.push_back(std::move(r));
    }
  } else {
    fail("unknown density kind \"" + dkind + "\"");
  }

  // Market levels.
  const int d = spec.assets;
  const int m = spec.brownian_dims;
  std::vector<LevelMarket> levels;
  {
    const auto entries = per_level(need(market, "levels", "market"), spec.n_defaults, "market.levels");
    for (std::size_t k = 0; k < entries.size(); ++k) {
      levels.push_back(parse_level(entries[k], d, m, marks, "market.levels[" + std::to_string(k) + "]"));
    }
  }
  for (const auto& lm : levels) {
    spec.market.drift.push_back([v = lm.drift](const NodePoint&) { return v; });
    spec.market.vol.push_back([v = lm.vol](const NodePoint&) { return v; });
    spec.market.jump.push_back([v = lm.jump](const NodePoint&, int e) { return v[static_cast<std::size_t>(e)]; });
    spec.market.traded.push_back(lm.traded);
  }

  // Payoff.
  const json& pay = need(doc, "payoff", "document");
  const std::string pkind = need(pay, "kind", "payoff").get<std::string>();
  const double shift = pay.value("shift", 0.0);
  const double recovery = pay.value("recovery", 1.0);
  if (pay.contains("bound")) spec.payoff.bound = number(pay.at("bound"), "payoff.bound");
  const ScenarioSet scenarios(spec.n_defaults, spec.steps, marks);
  const BrownianLattice lattice(spec.horizon, spec.steps, m);
  if (pkind == "constant") {
    std::vector<double> values;
    if (pay.contains("values")) {
      for (const auto& v : pay.at("values")) values.push_back(number(v, "payoff.values"));
      if (values.size() != static_cast<std::size_t>(spec.n_defaults + 1)) fail("payoff.values needs one value per level");
    } else {
      values.assign(static_cast<std::size_t>(spec.n_defaults + 1), number(need(pay, "value", "payoff"), "payoff.value"));
    }
    std::vector<int> level(scenarios.size());
    for (std::size_t s = 0; s < scenarios.size(); ++s) level[s] = scenarios[s].level();
    spec.payoff.value = [values, level, shift](const NodePoint& at) {
      return values[static_cast<std::size_t>(level[at.scenario])] + shift;
    };
    spec.payoff.description = "constant";
  } else if (pkind == "put" || pkind == "call") {
    const double strike = number(need(pay, "strike", "payoff"), "payoff.strike");
    const double spot = number(need(pay, "spot", "payoff"), "payoff.spot");
    const Eigen::RowVectorXd row0 = levels[0].vol.row(0);
    for (const auto& lm : levels) {
      if ((lm.vol.row(0) - row0).cwiseAbs().maxCoeff() != 0.0) {
        fail("put/call presets need the same volatility row for asset 1 at every level");
      }
    }
    const double half_var = 0.5 * row0.squaredNorm();
    std::vector<double> mu;  // log-drift of asset 1 per level
    std::vector<std::vector<double>> jump_factor;  // 1 + gamma per level and mark
    for (const auto& lm : levels) {
      mu.push_back(lm.drift[0] - half_var);
      std::vector<double> f;
      for (const auto& g : lm.jump) f.push_back(1.0 + g[0]);
      jump_factor.push_back(std::move(f));
    }
    const bool put = pkind == "put";
    spec.payoff.value = [=](const NodePoint& at) {
      const Scenario& s = scenarios[at.scenario];
      double logs = std::log(spot);
      for (int c = 0; c < m; ++c) logs += row0[c] * lattice.brownian(at.step, at.node, c);
      double factor = 1.0;
      double t0 = 0.0;
      for (int j = 0; j <= s.level(); ++j) {
        const double t1 = j < s.level() ? lattice.time(s.steps[static_cast<std::size_t>(j)]) : lattice.time(at.step);
        logs += mu[static_cast<std::size_t>(j)] * (t1 - t0);
        if (j < s.level()) factor *= jump_factor[static_cast<std::size_t>(j)][static_cast<std::size_t>(s.marks[static_cast<std::size_t>(j)])];
        t0 = t1;
      }
      const double S = factor * std::exp(logs);
      const double intrinsic = put ? std::max(strike - S, 0.0) : std::max(S - strike, 0.0);
      return intrinsic * std::pow(recovery, s.level()) + shift;
    };
    spec.payoff.description = pkind;
  } else if (pkind == "table") {
    const std::string file = resolve(base_dir, need(pay, "file", "payoff").get<std::string>());
    auto table = std::make_shared<std::map<std::tuple<std::size_t, int, std::size_t>, double>>();
    for (const auto& cells : read_csv(file)) {
      if (cells.size() != 5) fail(file + ": rows need thetas,marks,time_index,node_id,value");
      const std::size_t id = scenarios.find(Scenario{int_tuple(cells[0]), int_tuple(cells[1])});
      if (id == ScenarioSet::npos) fail(file + ": row names no scenario on the grid");
      (*table)[{id, std::stoi(cells[2]), static_cast<std::size_t>(std::stoull(cells[3]))}] = std::stod(cells[4]);
    }
    spec.payoff.value = [table, shift](const NodePoint& at) {
      auto it = table->find({at.scenario, at.step, at.node});
      return it == table->end() ? std::nan("") : it->second + shift;
    };
    spec.payoff.description = "table";
  } else {
    fail("unknown payoff kind \"" + pkind + "\"");
  }

  spec.utility.risk_aversion = number(need(need(doc, "utility", "document"), "risk_aversion", "utility"), "utility.risk_aversion");
  for (const auto& c : per_level(need(doc, "constraints", "document"), spec.n_defaults, "constraints")) {
    spec.constraints.push_back(parse_constraint(c, d, "constraints"));
  }
  return spec;
}

ProblemSpec load_config(const std::string& path, std::optional<int> steps) {
  std::ifstream in(path);
  if (!in) fail("cannot open " + path);
  json doc;
  try {
    doc = json::parse(in);
  } catch (const json::parse_error& ex) {
    fail(std::string("parse error: ") + ex.what());
  }
  const std::string base = std::filesystem::path(path).parent_path().string();
  try {
    return parse_config(doc, base.empty() ? "." : base, steps);
  } catch (const json::exception& ex) {
    fail(std::string("malformed value: ") + ex.what());
  }
}

std::string format_double(double v) {
  if (std::isnan(v)) return "nan";
  if (std::isinf(v)) return v > 0 ? "inf" : "-inf";
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

namespace {

void dump_into(std::string& out, const nlohmann::ordered_json& j, int indent, int depth) {
  const bool pretty = indent >= 0;
  const std::string pad = pretty ? "\n" + std::string(static_cast<std::size_t>(indent * (depth + 1)), ' ') : "";
  const std::string close = pretty ? "\n" + std::string(static_cast<std::size_t>(indent * depth), ' ') : "";
  switch (j.type()) {
    case json::value_t::object: {
      if (j.empty()) {
        out += "{}";
        return;
      }
      out += "{";
      bool first = true;
      for (auto it = j.begin(); it != j.end(); ++it) {
        if (!first) out += ",";
        first = false;
        out += pad + nlohmann::ordered_json(it.key()).dump() + (pretty ? ": " : ":");
        dump_into(out, it.value(), indent, depth + 1);
      }
      out += close + "}";
      return;
    }
    case json::value_t::array: {
      if (j.empty()) {
        out += "[]";
        return;
      }
      out += "[";
      bool first = true;
      for (const auto& v : j) {
        if (!first) out += ",";
        first = false;
        out += pad;
        dump_into(out, v, indent, depth + 1);
      }
      out += close + "]";
      return;
    }
    case json::value_t::number_float: {
      const double v = j.get<double>();
      out += std::isfinite(v) ? format_double(v) : "null";
      return;
    }
    default:
      out += j.dump();
  }
}

}  // namespace

std::string dump_json(const nlohmann::ordered_json& j, int indent) {
  std::string out;
  dump_into(out, j, indent, 0);
  if (indent >= 0) out += "\n";
  return out;
}

}  // namespace cascade
