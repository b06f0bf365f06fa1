#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "cascade/cli.hpp"
#include "cascade/config.hpp"
#include "support.hpp"

using namespace cascade;
namespace fs = std::filesystem;

namespace {

std::string config(const std::string& name) { return std::string(CASCADE_SOURCE_DIR) + "/configs/" + name; }

fs::path scratch(const std::string& name) {
  const fs::path p = fs::temp_directory_path() / ("cascade_test_cli_" + name);
  fs::remove_all(p);
  fs::create_directories(p);
  return p;
}

std::string slurp(const fs::path& p) {
  std::ifstream in(p);
  std::stringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> lines(const fs::path& p) {
  std::vector<std::string> out;
  std::ifstream in(p);
  for (std::string l; std::getline(in, l);) out.push_back(l);
  return out;
}

nlohmann::json read_json(const fs::path& p) { return nlohmann::json::parse(slurp(p)); }

int cli(std::vector<std::string> args) {
  args.insert(args.begin(), "cascade");
  std::vector<char*> argv;
  for (auto& a : args) argv.push_back(a.data());
  return run_cli(static_cast<int>(argv.size()), argv.data());
}

}  // namespace

TEST_CASE("float formatting") {
  CHECK(format_double(0.1) == "0.10000000000000001");
  CHECK(format_double(2.0) == "2");
  CHECK(std::stod(format_double(1.0 / 3.0)) == 1.0 / 3.0);
  nlohmann::ordered_json j;
  j["b"] = 0.1;
  j["a"] = 1;
  CHECK(dump_json(j, -1) == "{\"b\":0.10000000000000001,\"a\":1}");
}

TEST_CASE("bundled config parses and validates") {
  const ProblemSpec spec = load_config(config("bundled.json"));
  CHECK(spec.steps == 16);
  CHECK(spec.n_defaults == 1);
  CHECK(validate_spec(spec).ok());
  CHECK(load_config(config("bundled.json"), 4).steps == 4);
  CHECK(make_scenarios(load_config(config("bundled.json"), 4)).size() == 5);
}

TEST_CASE("malformed documents are validation errors") {
  const char* docs[] = {
      R"({"horizon": 1.0})",
      R"({"horizon": -1.0, "steps": 2, "market": {}, "defaults": {}, "payoff": {}, "utility": {}, "constraints": []})",
  };
  for (const char* text : docs) {
    try {
      parse_config(nlohmann::json::parse(text), ".");
      FAIL("expected an error");
    } catch (const Error& e) {
      CHECK(e.kind() == ErrorKind::validation);
    }
  }
}

TEST_CASE("node table density from a file") {
  const fs::path dir = scratch("node_table");
  {
    std::ofstream f(dir / "masses.csv");
    f << "node_id,time_index,thetas,marks,mass\n";
    const double rows[3][3] = {{0.5, 0.3, 0.2}, {0.6, 0.1, 0.3}, {0.2, 0.5, 0.3}};
    for (int n = 0; n < 3; ++n) {
      f << n << ",2,,," << rows[n][0] << "\n";
      f << n << ",2,1,0," << rows[n][1] << "\n";
      f << n << ",2,2,0," << rows[n][2] << "\n";
    }
  }
  nlohmann::json doc = read_json(config("bundled.json"));
  doc["steps"] = 2;
  doc["defaults"]["density"] = {{"kind", "node_table"}, {"file", "masses.csv"}};
  const ProblemSpec spec = parse_config(doc, dir.string());
  const BrownianLattice lat = make_lattice(spec);
  const ScenarioSet sc = make_scenarios(spec);
  const DensityModel d = build_density(spec, lat, sc);
  CHECK(d.terminal_mass(sc.find({{}, {}}), 0, 0) == doctest::Approx(0.25 * 0.5 + 0.5 * 0.6 + 0.25 * 0.2).epsilon(1e-15));
  CHECK(check_normalization(d).residual <= 1e-15);
}

TEST_CASE("price writes both outputs") {
  const fs::path out = scratch("price");
  CHECK(cli({"price", "--config", config("bundled.json"), "--out", out.string(), "--steps", "4"}) == 0);
  const nlohmann::json r = read_json(out / "report.json");
  CHECK(r.contains("buy_price"));
  CHECK(r.contains("sell_price"));
  CHECK_FALSE(r.contains("timings"));
  CHECK(r["metadata"]["steps"] == 4);
  CHECK(r["scenarios"].size() == 5);
  const auto rows = lines(out / "boundaries.csv");
  CHECK(rows.front() == "scenario_id,node_id,time,Y,obstacle,exercise,pi_1,side");
  // 5 scenarios: {} on steps 0..4, jump at j on steps j..4; nodes i+1 per step; two sides.
  std::size_t expected = 0;
  for (int start : {0, 1, 2, 3, 4}) {
    for (int i = start; i <= 4; ++i) expected += static_cast<std::size_t>(i + 1);
  }
  CHECK(rows.size() == 1 + 2 * expected);
}

TEST_CASE("timings only on request") {
  const fs::path out = scratch("timings");
  CHECK(cli({"price", "--config", config("zero.json"), "--out", out.string(), "--format", "json", "--timings"}) == 0);
  CHECK(read_json(out / "report.json").contains("timings"));
  CHECK_FALSE(fs::exists(out / "boundaries.csv"));
}

TEST_CASE("zero instance prices to zero") {
  const fs::path out = scratch("zero");
  CHECK(cli({"price", "--config", config("zero.json"), "--out", out.string()}) == 0);
  const nlohmann::json r = read_json(out / "report.json");
  CHECK(std::abs(r["buy_price"].get<double>()) <= 1e-8);
  CHECK(std::abs(r["sell_price"].get<double>()) <= 1e-8);
}

TEST_CASE("reports are byte identical across runs and job counts") {
  const fs::path a = scratch("det_a"), b = scratch("det_b");
  CHECK(cli({"price", "--config", config("tiny.json"), "--out", a.string(), "--jobs", "1"}) == 0);
  CHECK(cli({"price", "--config", config("tiny.json"), "--out", b.string(), "--jobs", "4"}) == 0);
  CHECK(slurp(a / "report.json") == slurp(b / "report.json"));
  CHECK(slurp(a / "boundaries.csv") == slurp(b / "boundaries.csv"));
}

TEST_CASE("shifted payoff shifts both prices") {
  const fs::path base = scratch("shift_base"), moved = scratch("shift_moved");
  nlohmann::json doc = read_json(config("bundled.json"));
  doc["steps"] = 8;
  {
    std::ofstream(base / "c.json") << doc.dump();
  }
  doc["payoff"]["shift"] = 0.75;
  doc["payoff"]["bound"] = 1.75;
  {
    std::ofstream(moved / "c.json") << doc.dump();
  }
  CHECK(cli({"price", "--config", (base / "c.json").string(), "--out", base.string()}) == 0);
  CHECK(cli({"price", "--config", (moved / "c.json").string(), "--out", moved.string()}) == 0);
  const nlohmann::json r0 = read_json(base / "report.json"), r1 = read_json(moved / "report.json");
  CHECK(std::abs(r1["buy_price"].get<double>() - r0["buy_price"].get<double>() - 0.75) <= 1e-12);
  CHECK(std::abs(r1["sell_price"].get<double>() - r0["sell_price"].get<double>() - 0.75) <= 1e-12);
}

TEST_CASE("invalid density exits with the validation code") {
  const fs::path out = scratch("invalid");
  CHECK(cli({"validate", "--config", config("invalid.json")}) == 2);
  CHECK(cli({"price", "--config", config("invalid.json"), "--out", out.string()}) == 2);
  CHECK(cli({"validate", "--config", config("bundled.json")}) == 0);
}

TEST_CASE("argument errors") {
  const fs::path out = scratch("args");
  CHECK(cli({"price", "--config", config("bundled.json")}) == 2);
  CHECK(cli({"converge", "--config", config("bundled.json"), "--out", out.string(), "--steps-sweep", "4,2"}) == 2);
  CHECK(cli({"converge", "--config", config("bundled.json"), "--out", out.string(), "--steps-sweep", "0,2"}) == 2);
}

TEST_CASE("oracle cross-check on the tiny instance") {
  const fs::path out = scratch("oracle");
  CHECK(cli({"oracle", "--config", config("tiny.json"), "--out", out.string()}) == 0);
  const auto rows = lines(out / "crosscheck.csv");
  CHECK(rows.front() == "test,decomposition,oracle,abs_diff,pass");
  CHECK(rows.size() == 10);
  for (std::size_t i = 1; i < rows.size(); ++i) CHECK(rows[i].substr(rows[i].rfind(',') + 1) == "true");
}

TEST_CASE("oracle path cap is a capacity error") {
  const fs::path out = scratch("oracle_cap");
  CHECK(cli({"oracle", "--config", config("tiny.json"), "--out", out.string(), "--max-paths", "10"}) == 3);
}

TEST_CASE("convergence table") {
  const fs::path out = scratch("converge");
  CHECK(cli({"converge", "--config", config("bundled.json"), "--out", out.string(), "--steps-sweep", "2,4,8"}) == 0);
  const auto rows = lines(out / "convergence.csv");
  REQUIRE(rows.size() == 4);
  CHECK(rows[0] == "M,dt,buy,sell,buy_error,ratio,sell_error,sell_ratio");
  CHECK(rows[1].find("n/a") != std::string::npos);
  CHECK(rows[3].find("n/a") == std::string::npos);
  const fs::path single = scratch("converge_single");
  CHECK(cli({"converge", "--config", config("bundled.json"), "--out", single.string(), "--steps-sweep", "4"}) == 0);
  CHECK(lines(single / "convergence.csv").size() == 2);
}

TEST_CASE("lattice node cap from the environment") {
  const fs::path out = scratch("node_cap");
  ::setenv("CASCADE_MAX_NODES", "50", 1);
  CHECK(cli({"price", "--config", config("bundled.json"), "--out", out.string()}) == 3);
  CHECK(cli({"price", "--config", config("bundled.json"), "--out", out.string(), "--steps", "4"}) == 0);
  ::setenv("CASCADE_MAX_NODES", "many", 1);
  CHECK(cli({"price", "--config", config("bundled.json"), "--out", out.string()}) == 2);
  ::unsetenv("CASCADE_MAX_NODES");
}
