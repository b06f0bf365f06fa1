#pragma once

#include <json.hpp>
#include <optional>
#include <string>

#include "cascade/model.hpp"

namespace cascade {

/// Builds a ProblemSpec from a config document; relative file paths resolve against base_dir.
/// `steps` overrides the document's step count.
ProblemSpec parse_config(const nlohmann::json& doc, const std::string& base_dir, std::optional<int> steps = std::nullopt);

ProblemSpec load_config(const std::string& path, std::optional<int> steps = std::nullopt);

/// %.17g formatting used for every float written to disk.
std::string format_double(double v);

/// JSON text with every float at 17 significant digits, keys in insertion order of the object type.
/// Negative indent gives a single line.
std::string dump_json(const nlohmann::ordered_json& j, int indent = 2);

}  // namespace cascade
