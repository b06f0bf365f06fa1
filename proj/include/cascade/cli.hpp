#pragma once

#include <optional>
#include <string>
#include <vector>

#include "cascade/oracle.hpp"

namespace cascade {

struct RunConfig {
  std::string config_path;
  std::string out_dir = ".";
  std::optional<int> steps;
  std::vector<int> sweep;   // strictly increasing
  double tol = 1e-8;        // pass threshold for exact cross-check rows
  double price_tol = 5e-3;  // pass threshold for discretised price rows
  int jobs = 1;
  std::string format = "both";  // json | csv | both
  bool timings = false;
  OracleCaps caps;
  double max_paths = 1 << 22;  // paths x outcomes for direct enumeration
};

int run_price(const RunConfig& cfg);
int run_validate(const RunConfig& cfg);
int run_crosscheck(const RunConfig& cfg);
int run_convergence(const RunConfig& cfg);

/// Parses arguments, dispatches, and maps errors to exit codes.
int run_cli(int argc, char** argv);

}  // namespace cascade
