#pragma once

#include <string>
#include <vector>

namespace gpxva {

/// Executes the pipeline named in the config and writes report tables plus a
/// run manifest under `out_dir`. Deterministic: report bytes are a pure
/// function of (config, seed).
///
/// Errors: nlohmann::json exceptions escape on malformed input (CLI exit 2),
/// ValidationError on semantic problems (exit 3), NumericError on numerical
/// failure (exit 4).
void run_scenario(const std::string& config_path, const std::string& out_dir, int threads = 1,
                  bool dump_paths = false);

/// Commented example configuration covering every pipeline; the published
/// schema for `run`.
std::string scenario_schema();

} // namespace gpxva
