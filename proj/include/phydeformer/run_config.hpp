#pragma once

#include <string>

#include "phydeformer/losses.hpp"
#include "phydeformer/optimizer.hpp"

namespace phydeformer {

// Full configuration of a run: file paths plus all loss/optimizer knobs.
// Values come from defaults, then a key=value config file, then
// command-line flags (flags win). Unknown keys are errors.
struct RunConfig {
  std::string source, target, body, out, log;
  LossConfig loss;
  OptimConfig opt;
  bool grading = true;
  bool axis_override = false;
  Vec3 axis_direction = Vec3::UnitZ();
  double unit_scale = 1.0;   // --units: meters 1, centimeters 0.01
  bool log_times = false;    // print measured wall times into the CSV
  std::string jacobian_dump;  // optional binary dump of the final field

  // Applies one key=value setting; throws ConfigError on unknown keys or
  // malformed values.
  void set(const std::string& key, const std::string& value);

  // Loads `key = value` lines (# comments, blank lines allowed) on top of
  // the current values.
  void load_file(const std::string& path);

  // Sorted "key = value" lines describing the effective configuration.
  std::string echo() const;
};

// CSV convergence log: effective config as comment header, one row per
// iteration, final metrics as a trailing comment. Wall times print as 0
// unless log_times is set, keeping default logs byte-reproducible.
void write_csv_log(const std::string& path, const RunConfig& cfg,
                   const RegistrationReport& report);

// Two-line key=value metrics summary next to an output mesh.
void write_metrics_summary(const std::string& path, const RegistrationReport& report);

}  // namespace phydeformer
