#include "cascade/cli.hpp"

#include <CLI11.hpp>
#include <chrono>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <sstream>

#include "cascade/config.hpp"
#include "cascade/error.hpp"

namespace cascade {

using nlohmann::ordered_json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
  return std::chrono::duration<double>(Clock::now() - t0).count();
}

struct Instance {
  ProblemSpec spec;
  BrownianLattice lattice;
  ScenarioSet scenarios;
  DensityModel density;
  std::vector<std::string> warnings;
};

// Validation issues and a broken density both end here, before any solve.
Instance prepare(const RunConfig& cfg, std::optional<int> steps) {
  Instance in;
  in.spec = load_config(cfg.config_path, steps);
  const ValidationReport rep = validate_spec(in.spec);
  if (!rep.ok()) {
    std::string msg = "invalid problem:";
    for (const auto& issue : rep.issues) msg += "\n  - " + issue;
    throw Error(ErrorKind::validation, msg);
  }
  if (in.spec.brownian_dims > 2) {
    in.warnings.push_back("m = " + std::to_string(in.spec.brownian_dims) + " > 2: lattice size grows as (M+1)^m");
  }
  in.lattice = make_lattice(in.spec);
  in.scenarios = make_scenarios(in.spec);
  in.density = build_density(in.spec, in.lattice, in.scenarios);
  const NormalizationReport norm = check_normalization(in.density);
  if (norm.residual > 1e-9 || norm.min_mass < 0.0) {
    throw Error(ErrorKind::validation, "density check failed: " + norm.describe());
  }
  for (std::size_t s = 0; s < in.scenarios.size(); ++s) {
    if (in.density.null_scenario(s)) {
      in.warnings.push_back("scenario " + std::to_string(s) + " has zero survival mass and is excluded");
    }
  }
  return in;
}

void emit_warnings(const std::vector<std::string>& warnings) {
  for (const auto& w : warnings) std::cerr << "warning: " << w << "\n";
}

std::filesystem::path out_path(const RunConfig& cfg, const std::string& file) {
  std::error_code ec;
  std::filesystem::create_directories(cfg.out_dir, ec);
  if (ec || !std::filesystem::is_directory(cfg.out_dir)) {
    throw Error(ErrorKind::configuration, "output directory " + cfg.out_dir + " is not writable");
  }
  return std::filesystem::path(cfg.out_dir) / file;
}

void write_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw Error(ErrorKind::configuration, "cannot write " + path.string());
  out << text;
  if (!out) throw Error(ErrorKind::configuration, "write failed for " + path.string());
}

ordered_json invariant_summary(const SystemSolution& sol) {
  RbsdeInvariants worst;
  worst.min_dK = 0.0;
  std::size_t solved = 0;
  for (const auto& slot : sol.scenarios) {
    if (!slot.included) continue;
    ++solved;
    const auto& v = slot.invariants;
    worst.obstacle_gap = std::max(worst.obstacle_gap, v.obstacle_gap);
    worst.terminal_gap = std::max(worst.terminal_gap, v.terminal_gap);
    worst.min_dK = std::min(worst.min_dK, v.min_dK);
    worst.skorokhod = std::max(worst.skorokhod, v.skorokhod);
    worst.martingale = std::max(worst.martingale, v.martingale);
    worst.covariance = std::max(worst.covariance, v.covariance);
  }
  ordered_json j;
  j["solves"] = solved;
  j["obstacle_gap"] = worst.obstacle_gap;
  j["terminal_gap"] = worst.terminal_gap;
  j["min_dK"] = worst.min_dK;
  j["skorokhod"] = worst.skorokhod;
  j["martingale"] = worst.martingale;
  j["covariance"] = worst.covariance;
  j["ok"] = worst.ok();
  return j;
}

std::vector<std::string> solver_warnings(const SystemSolution& sol) {
  std::vector<std::string> out;
  for (const auto& slot : sol.scenarios) {
    for (const auto& w : slot.rbsde.warnings) out.push_back(std::string(to_string(sol.side)) + ": " + w);
  }
  return out;
}

void append_boundaries(std::ostringstream& csv, const Instance& in, const SystemSolution& sol) {
  const auto& lat = in.lattice;
  const int d = in.spec.assets;
  for (std::size_t s = 0; s < in.scenarios.size(); ++s) {
    const auto& slot = sol.scenarios[s];
    if (!slot.included) continue;
    const auto& H = sol.obstacle.table[s];
    const auto region = exercise_region(slot.rbsde, H);
    const int start = slot.rbsde.start;
    for (int i = start; i <= lat.steps(); ++i) {
      const auto r = static_cast<std::size_t>(i - start);
      for (std::size_t n = 0; n < lat.node_count(i); ++n) {
        csv << s << ',' << n << ',' << format_double(lat.time(i)) << ',' << format_double(slot.rbsde.Y[r][n]) << ','
            << format_double(H[r][n]) << ',' << (region[r][n] ? 1 : 0);
        for (int c = 0; c < d; ++c) {
          csv << ',';
          if (r < slot.pi.size() && slot.pi[r][n].size() == d) csv << format_double(slot.pi[r][n][c]);
        }
        csv << ',' << to_string(sol.side) << '\n';
      }
    }
  }
}

std::vector<int> steps_list(const RunConfig& cfg, int fallback) {
  if (!cfg.sweep.empty()) return cfg.sweep;
  return {cfg.steps ? *cfg.steps : fallback};
}

int config_steps(const RunConfig& cfg) { return load_config(cfg.config_path).steps; }

SolveOptions solve_options(const RunConfig& cfg) {
  SolveOptions opt;
  opt.jobs = cfg.jobs;
  return opt;
}

struct CrossRow {
  std::string test;
  double decomposition;
  double oracle;
  double tol;
};

}  // namespace

int run_validate(const RunConfig& cfg) {
  const Instance in = prepare(cfg, cfg.steps);
  emit_warnings(in.warnings);
  const NormalizationReport norm = check_normalization(in.density);
  std::cout << "valid: M=" << in.spec.steps << ", n=" << in.spec.n_defaults << ", scenarios=" << in.scenarios.size()
            << ", lattice nodes=" << in.lattice.total_nodes() << "\n"
            << "density: " << norm.describe() << "\n";
  return 0;
}

int run_price(const RunConfig& cfg) {
  const auto t0 = Clock::now();
  Instance in = prepare(cfg, cfg.steps);
  const double t_prepare = seconds_since(t0);
  const auto t1 = Clock::now();
  const PriceReport rep = indifference_prices(in.spec, in.density, solve_options(cfg));
  const double t_solve = seconds_since(t1);

  std::vector<std::string> warnings = in.warnings;
  for (const auto& w : solver_warnings(rep.buyer)) warnings.push_back(w);
  for (const auto& w : solver_warnings(rep.seller)) warnings.push_back(w);
  emit_warnings(warnings);

  if (cfg.format == "json" || cfg.format == "both") {
    ordered_json j;
    j["buy_price"] = rep.buy_price;
    j["sell_price"] = rep.sell_price;
    j["root_Y_buyer"] = rep.root_buyer;
    j["root_Y_seller"] = rep.root_seller;
    j["equation_residual"] = {{"buyer", rep.buyer_equation_residual}, {"seller", rep.seller_equation_residual}};
    ordered_json meta;
    meta["horizon"] = in.spec.horizon;
    meta["steps"] = in.spec.steps;
    meta["dt"] = in.lattice.dt();
    meta["n_defaults"] = in.spec.n_defaults;
    meta["assets"] = in.spec.assets;
    meta["brownian_dims"] = in.spec.brownian_dims;
    meta["marks"] = in.spec.defaults.marks;
    meta["risk_aversion"] = in.spec.utility.risk_aversion;
    meta["initial_wealth"] = in.spec.initial_wealth;
    meta["payoff"] = in.spec.payoff.description;
    meta["lattice_nodes"] = in.lattice.total_nodes();
    meta["scenario_count"] = in.scenarios.size();
    meta["driver_bound"] = {{"buyer", rep.buyer.driver_bound}, {"seller", rep.seller.driver_bound}};
    j["metadata"] = meta;
    j["invariants"] = {{"buyer", invariant_summary(rep.buyer)}, {"seller", invariant_summary(rep.seller)}};
    ordered_json scen = ordered_json::array();
    for (std::size_t s = 0; s < in.scenarios.size(); ++s) {
      ordered_json e;
      e["id"] = s;
      e["level"] = in.scenarios[s].level();
      e["jump_steps"] = in.scenarios[s].steps;
      e["marks"] = in.scenarios[s].marks;
      e["included"] = rep.buyer.scenarios[s].included && rep.seller.scenarios[s].included;
      scen.push_back(e);
    }
    j["scenarios"] = scen;
    j["warnings"] = warnings;
    if (cfg.timings) j["timings"] = {{"prepare_s", t_prepare}, {"solve_s", t_solve}};
    write_file(out_path(cfg, "report.json"), dump_json(j));
  }
  if (cfg.format == "csv" || cfg.format == "both") {
    std::ostringstream csv;
    csv << "scenario_id,node_id,time,Y,obstacle,exercise";
    for (int c = 1; c <= in.spec.assets; ++c) csv << ",pi_" << c;
    csv << ",side\n";
    append_boundaries(csv, in, rep.buyer);
    append_boundaries(csv, in, rep.seller);
    write_file(out_path(cfg, "boundaries.csv"), csv.str());
  }
  std::cout << "buy_price " << format_double(rep.buy_price) << "\nsell_price " << format_double(rep.sell_price) << "\n";
  return 0;
}

int run_crosscheck(const RunConfig& cfg) {
  std::vector<CrossRow> rows;
  const std::vector<int> ms = steps_list(cfg, cfg.sweep.empty() && !cfg.steps ? config_steps(cfg) : 0);
  for (int M : ms) {
    const auto t0 = Clock::now();
    Instance in = prepare(cfg, M);
    emit_warnings(in.warnings);
    const std::string tag = ms.size() > 1 ? "@M=" + std::to_string(M) : "";
    const double paths = std::pow(2.0, in.spec.brownian_dims * M) * static_cast<double>(in.scenarios.size());
    if (paths > cfg.max_paths) {
      throw Error(ErrorKind::capacity, "direct enumeration needs " + format_double(paths) + " path-outcome pairs at M=" +
                                           std::to_string(M));
    }
    const PriceReport rep = indifference_prices(in.spec, in.density, solve_options(cfg));

    // Expectation of the payoff under the buyer's optimal stop.
    const StoppingPolicy tau = optimal_stop(rep.buyer, in.density);
    const IndexedProcess Z = in.spec.payoff.value;
    rows.push_back({"expectation" + tag, backward_expectation(Z, tau, in.density).value,
                    direct_expectation(Z, tau, in.density), cfg.tol});

    const PhiTable phi_b = phi_recursion(in.spec, in.density, Side::buyer);
    const PhiTable phi_s = phi_recursion(in.spec, in.density, Side::seller);

    bool finite = true;
    for (const auto& A : in.spec.constraints) {
      finite = finite && (A.kind() == ConstraintSet::Kind::finite || A.kind() == ConstraintSet::Kind::zero);
    }
    std::string skip;
    if (!finite) skip = "action sets are not finite";
    if (M > cfg.caps.max_steps || in.spec.n_defaults > cfg.caps.max_level ||
        static_cast<int>(in.spec.defaults.marks.size()) > cfg.caps.max_marks) {
      skip = "instance outside enumeration caps";
    }
    if (skip.empty()) {
      for (const auto& A : in.spec.constraints) {
        if (static_cast<int>(A.enumerate().size()) > cfg.caps.max_actions) skip = "action set larger than the cap";
      }
    }
    if (skip.empty()) {
      const ControllerStopperProblem buyer = wealth_problem(in.spec, Side::buyer);
      const ControllerStopperProblem seller = wealth_problem(in.spec, Side::seller);
      rows.push_back({"supsup" + tag, solve_supsup(buyer, in.density).value,
                      enumerate_value(buyer, in.density, GameMode::supsup, cfg.caps), cfg.tol});
      rows.push_back({"supinf" + tag, solve_supinf(seller, in.density).value,
                      enumerate_value(seller, in.density, GameMode::supinf, cfg.caps), cfg.tol});
      rows.push_back({"buyer_price_enumerated" + tag, phi_b.price,
                      enumerate_price(in.spec, in.density, Side::buyer, cfg.caps), cfg.tol});
      rows.push_back({"seller_price_enumerated" + tag, phi_s.price,
                      enumerate_price(in.spec, in.density, Side::seller, cfg.caps), cfg.tol});
    } else {
      std::cerr << "warning: M=" << M << ": supsup/supinf/enumeration/saddle rows skipped (" << skip << ")\n";
    }
    rows.push_back({"buyer_price" + tag, rep.buy_price, phi_b.price, cfg.price_tol});
    rows.push_back({"seller_price" + tag, rep.sell_price, phi_s.price, cfg.price_tol});
    if (skip.empty()) {
      const double tol = 2.0 * in.lattice.dt() * rep.seller.driver_bound;
      const SaddleReport sp = check_saddle_point(in.spec, in.density, rep.seller, tol);
      rows.push_back({"saddle_point_violations" + tag, static_cast<double>(sp.violations), 0.0, 0.0});
      rows.push_back({"saddle_point_max_gain" + tag, std::max(sp.max_control_excess, sp.max_stop_excess), 0.0, tol});
    }
    if (cfg.timings) std::cerr << "timing: M=" << M << " " << seconds_since(t0) << " s\n";
  }
  std::ostringstream csv;
  csv << "test,decomposition,oracle,abs_diff,pass\n";
  bool all = true;
  for (const auto& r : rows) {
    const double diff = std::abs(r.decomposition - r.oracle);
    const bool pass = diff <= r.tol;
    all = all && pass;
    csv << r.test << ',' << format_double(r.decomposition) << ',' << format_double(r.oracle) << ','
        << format_double(diff) << ',' << (pass ? "true" : "false") << '\n';
  }
  write_file(out_path(cfg, "crosscheck.csv"), csv.str());
  std::cout << rows.size() << " rows, " << (all ? "all pass" : "some rows fail") << "\n";
  return 0;
}

int run_convergence(const RunConfig& cfg) {
  const std::vector<int> ms = steps_list(cfg, config_steps(cfg));
  std::ostringstream csv;
  csv << "M,dt,buy,sell,buy_error,ratio,sell_error,sell_ratio\n";
  double prev_buy = std::nan("");
  double prev_sell = std::nan("");
  auto cell = [](double v) { return std::isfinite(v) ? format_double(v) : std::string("n/a"); };
  for (int M : ms) {
    const auto t0 = Clock::now();
    Instance in = prepare(cfg, M);
    emit_warnings(in.warnings);
    const PriceReport rep = indifference_prices(in.spec, in.density, solve_options(cfg));
    double buy_err = std::nan("");
    double sell_err = std::nan("");
    try {
      buy_err = std::abs(rep.buy_price - phi_recursion(in.spec, in.density, Side::buyer).price);
      sell_err = std::abs(rep.sell_price - phi_recursion(in.spec, in.density, Side::seller).price);
    } catch (const Error& ex) {
      std::cerr << "warning: M=" << M << ": oracle unavailable (" << ex.what() << ")\n";
      buy_err = sell_err = std::nan("");
    }
    csv << M << ',' << format_double(in.lattice.dt()) << ',' << format_double(rep.buy_price) << ','
        << format_double(rep.sell_price) << ',' << cell(buy_err) << ',' << cell(buy_err / prev_buy) << ','
        << cell(sell_err) << ',' << cell(sell_err / prev_sell) << '\n';
    prev_buy = buy_err;
    prev_sell = sell_err;
    if (cfg.timings) std::cerr << "timing: M=" << M << " " << seconds_since(t0) << " s\n";
  }
  write_file(out_path(cfg, "convergence.csv"), csv.str());
  return 0;
}

int run_cli(int argc, char** argv) {
  CLI::App app{"Scenario-decomposition solver for controller-stopper problems and indifference prices under default risk"};
  app.require_subcommand(1);
  RunConfig cfg;
  int steps = 0;
  std::vector<int> sweep;

  auto add_common = [&](CLI::App* sub, bool needs_out) {
    sub->add_option("--config", cfg.config_path, "problem config (JSON)")->required()->check(CLI::ExistingFile);
    auto* out = sub->add_option("--out", cfg.out_dir, "output directory");
    if (needs_out) out->required();
    sub->add_option("--steps", steps, "override the number of time steps")->check(CLI::PositiveNumber);
    sub->add_option("--jobs", cfg.jobs, "parallel scenario solves")->check(CLI::PositiveNumber);
    sub->add_flag("--timings", cfg.timings, "record wall-clock timings");
  };
  auto* price = app.add_subcommand("price", "solve both reflected systems and write report.json, boundaries.csv");
  add_common(price, true);
  price->add_option("--format", cfg.format, "json|csv|both")->check(CLI::IsMember({"json", "csv", "both"}));
  auto* validate = app.add_subcommand("validate", "check the config, the model assumptions and the density");
  add_common(validate, false);
  auto* oracle = app.add_subcommand("oracle", "cross-check the decomposition against brute-force oracles");
  add_common(oracle, true);
  auto* converge = app.add_subcommand("converge", "price convergence against the global-filtration oracle");
  add_common(converge, true);
  for (auto* sub : {oracle, converge}) {
    sub->add_option("--steps-sweep", sweep, "comma-separated step counts")->delimiter(',');
    sub->add_option("--tol", cfg.tol, "pass threshold for exact rows");
    sub->add_option("--price-tol", cfg.price_tol, "pass threshold for price rows");
  }
  oracle->add_option("--max-steps", cfg.caps.max_steps, "enumeration cap on M");
  oracle->add_option("--max-level", cfg.caps.max_level, "enumeration cap on n");
  oracle->add_option("--max-actions", cfg.caps.max_actions, "enumeration cap on |A|");
  oracle->add_option("--max-paths", cfg.max_paths, "cap on paths x outcomes");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }
  if (steps > 0) cfg.steps = steps;
  cfg.sweep = sweep;
  try {
    for (std::size_t i = 1; i < cfg.sweep.size(); ++i) {
      if (cfg.sweep[i] <= cfg.sweep[i - 1]) throw Error(ErrorKind::configuration, "--steps-sweep must be strictly increasing");
    }
    for (int m : cfg.sweep) {
      if (m < 1) throw Error(ErrorKind::configuration, "--steps-sweep entries must be positive");
    }
    if (price->parsed()) return run_price(cfg);
    if (validate->parsed()) return run_validate(cfg);
    if (oracle->parsed()) return run_crosscheck(cfg);
    return run_convergence(cfg);
  } catch (const Error& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return exit_code(ex.kind());
  } catch (const std::exception& ex) {
    std::cerr << "error: " << ex.what() << "\n";
    return 4;
  }
}

}  // namespace cascade
