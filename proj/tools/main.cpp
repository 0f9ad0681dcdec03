// phydeformer command line: contour grading plus Jacobian-field registration.
//
// Subcommands: register, grade, metrics, perturb, ablate. Options may also
// come from a flat `key = value` file via --config; explicit flags win.
// Exit codes: 0 success, 1 input/config error, 2 numerical failure.

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <optional>
#include <string>
#include <utility>
#include <vector>

#include "CLI11.hpp"
#include "phydeformer/errors.hpp"
#include "phydeformer/grading.hpp"
#include "phydeformer/log.hpp"
#include "phydeformer/obj_io.hpp"
#include "phydeformer/optimizer.hpp"
#include "phydeformer/poisson_system.hpp"
#include "phydeformer/run_config.hpp"
#include "phydeformer/trimesh.hpp"

namespace pd = phydeformer;

namespace {

// Flags are collected as (config key, value) pairs in parse order and applied
// on top of the --config file, so the file provides defaults and flags win.
struct CliState {
  std::string config_path;
  std::vector<std::pair<std::string, std::string>> overrides;
};

void add_kv(CLI::App* cmd, CliState& st, const std::string& flag, const std::string& key,
            const std::string& desc) {
  cmd->add_option_function<std::string>(
      flag, [&st, key](const std::string& v) { st.overrides.emplace_back(key, v); }, desc);
}

void add_kv_flag(CLI::App* cmd, CliState& st, const std::string& flag, const std::string& key,
                 const std::string& value, const std::string& desc) {
  cmd->add_flag_callback(
      flag, [&st, key, value]() { st.overrides.emplace_back(key, value); }, desc);
}

pd::RunConfig make_config(const CliState& st) {
  pd::RunConfig cfg;
  if (!st.config_path.empty()) cfg.load_file(st.config_path);
  for (const auto& [key, value] : st.overrides) cfg.set(key, value);
  return cfg;
}

void require_path(const std::string& value, const char* flag) {
  if (value.empty()) throw pd::ConfigError(std::string("missing required option ") + flag);
}

std::string with_suffix(const std::string& path, const char* ext) {
  return std::filesystem::path(path).replace_extension(ext).string();
}

pd::GradingAxis grading_axis(const pd::TriMesh& source, const pd::RunConfig& cfg) {
  if (cfg.axis_override)
    return pd::GradingAxis{source.centroid(), cfg.axis_direction.normalized()};
  return pd::principal_axis(source);
}

// Grades source toward target along the configured axis. Falls back to the
// ungraded source (with a warning) when either mesh has no boundary loops,
// so registration still runs on closed garments.
pd::TriMesh maybe_grade(const pd::TriMesh& source, const pd::TriMesh& target,
                        const pd::RunConfig& cfg) {
  if (!cfg.grading) return source;
  if (pd::extract_boundary_loops(source).empty() ||
      pd::extract_boundary_loops(target).empty()) {
    pd::log_warning("closed mesh, grading skipped");
    return source;
  }
  const pd::GradingAxis axis = grading_axis(source, cfg);
  const auto src = pd::measure_contours(source, axis);
  const auto tgt = pd::measure_contours(target, axis);
  const auto pairs = pd::pair_contours(src, tgt);
  return pd::apply_grading(source, pd::compute_grading(pairs, src, tgt, axis));
}

int cmd_register(const CliState& st) {
  pd::RunConfig cfg = make_config(st);
  require_path(cfg.source, "--source");
  require_path(cfg.target, "--target");
  require_path(cfg.out, "--out");

  const pd::TriMesh source = pd::load_obj(cfg.source, cfg.unit_scale);
  const pd::TriMesh target = pd::load_obj(cfg.target, cfg.unit_scale);
  std::optional<pd::TriMesh> body;
  if (!cfg.body.empty()) body = pd::load_obj(cfg.body, cfg.unit_scale);

  const pd::TriMesh graded = maybe_grade(source, target, cfg);
  const pd::RegistrationResult run =
      pd::run_registration(graded, target, body ? &*body : nullptr, cfg.loss, cfg.opt);

  pd::save_obj(run.mesh, cfg.out);
  if (!cfg.log.empty()) pd::write_csv_log(cfg.log, cfg, run.report);
  pd::write_metrics_summary(with_suffix(cfg.out, ".metrics.txt"), run.report);
  if (!cfg.jacobian_dump.empty() && !run.jacobians.empty())
    pd::write_jacobian_dump(run.jacobians, cfg.jacobian_dump);

  std::printf("%.6f %.6f\n", run.report.chamfer_x1000, run.report.normal_similarity);
  if (run.report.aborted_at) {
    std::fprintf(stderr,
                 "phydeformer: registration aborted at iteration %d (non-finite values)\n",
                 *run.report.aborted_at);
    return 2;
  }
  return 0;
}

int cmd_grade(const CliState& st, const std::string& map_flag) {
  pd::RunConfig cfg = make_config(st);
  require_path(cfg.source, "--source");
  require_path(cfg.target, "--target");
  require_path(cfg.out, "--out");

  const pd::TriMesh source = pd::load_obj(cfg.source, cfg.unit_scale);
  const pd::TriMesh target = pd::load_obj(cfg.target, cfg.unit_scale);

  const pd::GradingAxis axis = grading_axis(source, cfg);
  const auto src = pd::measure_contours(source, axis);  // closed mesh -> input error
  const auto tgt = pd::measure_contours(target, axis);
  const auto pairs = pd::pair_contours(src, tgt);
  const pd::GradingMap map = pd::compute_grading(pairs, src, tgt, axis);

  pd::save_obj(pd::apply_grading(source, map), cfg.out);
  const std::string map_path = map_flag.empty() ? with_suffix(cfg.out, ".grading.txt") : map_flag;
  pd::save_grading(map, map_path);
  return 0;
}

int cmd_metrics(const CliState& st, const std::string& path_a, const std::string& path_b) {
  pd::RunConfig cfg = make_config(st);
  require_path(path_a, "--a");
  require_path(path_b, "--b");
  const pd::TriMesh a = pd::load_obj(path_a, cfg.unit_scale);
  const pd::TriMesh b = pd::load_obj(path_b, cfg.unit_scale);
  const auto [chamfer_x1000, normal_similarity] = pd::metrics(a, b);
  std::printf("%.6f %.6f\n", chamfer_x1000, normal_similarity);
  return 0;
}

int cmd_perturb(const CliState& st, double sigma) {
  pd::RunConfig cfg = make_config(st);
  require_path(cfg.source, "--source");
  require_path(cfg.out, "--out");
  const pd::TriMesh mesh = pd::load_obj(cfg.source, cfg.unit_scale);
  pd::save_obj(pd::perturb_gaussian(mesh, sigma * cfg.unit_scale, cfg.opt.seed), cfg.out);
  return 0;
}

int cmd_ablate(const CliState& st, const std::string& only) {
  pd::RunConfig cfg = make_config(st);
  require_path(cfg.source, "--source");
  require_path(cfg.target, "--target");

  static const std::vector<std::string> kVariants = {
      "full", "no-grading", "no-contour", "no-normal", "no-bending", "vertex-displacement"};

  std::vector<std::string> selected;
  if (only.empty()) {
    selected = kVariants;
  } else {
    std::string rest = only;
    while (!rest.empty()) {
      const std::size_t comma = rest.find(',');
      std::string name = rest.substr(0, comma);
      rest = comma == std::string::npos ? std::string() : rest.substr(comma + 1);
      if (name.empty()) continue;
      if (std::find(kVariants.begin(), kVariants.end(), name) == kVariants.end())
        throw pd::ConfigError("unknown ablation variant '" + name + "'");
      selected.push_back(name);
    }
    if (selected.empty()) throw pd::ConfigError("--only selected no variants");
  }

  const pd::TriMesh source = pd::load_obj(cfg.source, cfg.unit_scale);
  const pd::TriMesh target = pd::load_obj(cfg.target, cfg.unit_scale);
  std::optional<pd::TriMesh> body;
  if (!cfg.body.empty()) body = pd::load_obj(cfg.body, cfg.unit_scale);

  std::string table;
  char line[128];
  std::snprintf(line, sizeof line, "%-22s %14s %18s\n", "variant", "chamfer_x1000",
                "normal_similarity");
  table += line;

  int exit_code = 0;
  for (const auto& name : selected) {
    pd::RunConfig variant = cfg;
    if (name == "no-grading") variant.grading = false;
    else if (name == "no-contour") variant.loss.contour_enabled = false;
    else if (name == "no-normal") variant.loss.lambda_n = 0.0;
    else if (name == "no-bending") variant.loss.lambda_b = 0.0;
    else if (name == "vertex-displacement")
      variant.opt.parameterization = pd::Parameterization::VertexDisplacement;

    const pd::TriMesh graded = maybe_grade(source, target, variant);
    const pd::RegistrationResult run =
        pd::run_registration(graded, target, body ? &*body : nullptr, variant.loss, variant.opt);
    if (run.report.aborted_at) exit_code = 2;
    std::snprintf(line, sizeof line, "%-22s %14.6f %18.6f\n", name.c_str(),
                  run.report.chamfer_x1000, run.report.normal_similarity);
    table += line;
  }

  std::fputs(table.c_str(), stdout);
  if (!cfg.out.empty()) {
    std::ofstream file(cfg.out);
    if (!file) throw pd::ConfigError("cannot write table to '" + cfg.out + "'");
    file << table;
  }
  return exit_code;
}

void add_common_flags(CLI::App* cmd, CliState& st) {
  cmd->add_option("--config", st.config_path, "key = value config file (flags win)");
  add_kv(cmd, st, "--units", "units", "input length units: m (default), cm, mm");
}

void add_run_flags(CLI::App* cmd, CliState& st) {
  add_common_flags(cmd, st);
  add_kv(cmd, st, "--source", "source", "source garment OBJ");
  add_kv(cmd, st, "--target", "target", "target scan OBJ");
  add_kv(cmd, st, "--body", "body", "collision body OBJ (optional)");
  add_kv(cmd, st, "--out", "out", "output path");
  add_kv(cmd, st, "--log", "log", "CSV convergence log path");
  add_kv(cmd, st, "--seed", "seed", "RNG seed (default 0)");
  add_kv(cmd, st, "--iterations", "iterations", "optimization iterations (default 1500)");
  add_kv(cmd, st, "--lr", "learning_rate", "Adam learning rate (default 0.002)");
  add_kv(cmd, st, "--bending-mode", "bending_mode", "rest_relative | absolute");
  add_kv(cmd, st, "--parameterization", "parameterization", "jacobian | vertex_displacement");
  add_kv(cmd, st, "--axis", "axis", "grading axis direction x,y,z (default: principal axis)");
  add_kv(cmd, st, "--gradient-clip", "gradient_clip", "max gradient L2 norm, or 'none'");
  add_kv_flag(cmd, st, "--no-grading", "grading", "false", "skip contour grading");
  add_kv_flag(cmd, st, "--log-times", "log_times", "true", "record wall times in the CSV log");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{
      "Non-rigid garment registration: contour-driven grading followed by optimization of a "
      "per-triangle Jacobian field"};
  app.require_subcommand(1);

  CliState st_register, st_grade, st_metrics, st_perturb, st_ablate;
  std::string metrics_a, metrics_b, grade_map, ablate_only;
  double sigma = 0.0;

  CLI::App* reg = app.add_subcommand("register", "Grade then register source onto target");
  add_run_flags(reg, st_register);
  add_kv(reg, st_register, "--jacobian-dump", "jacobian_dump",
         "binary dump of the final per-face field");

  CLI::App* grd = app.add_subcommand("grade", "Contour grading only");
  add_common_flags(grd, st_grade);
  add_kv(grd, st_grade, "--source", "source", "source garment OBJ");
  add_kv(grd, st_grade, "--target", "target", "target scan OBJ");
  add_kv(grd, st_grade, "--out", "out", "graded OBJ path");
  add_kv(grd, st_grade, "--axis", "axis", "grading axis direction x,y,z");
  grd->add_option("--map", grade_map, "grading map text path (default: <out>.grading.txt)");

  CLI::App* met = app.add_subcommand("metrics", "Print chamfer_x1000 and normal_similarity");
  add_common_flags(met, st_metrics);
  met->add_option("--a", metrics_a, "first mesh OBJ");
  met->add_option("--b", metrics_b, "second mesh OBJ");

  CLI::App* per = app.add_subcommand("perturb", "Add Gaussian vertex noise");
  add_common_flags(per, st_perturb);
  add_kv(per, st_perturb, "--source", "source", "input OBJ");
  add_kv(per, st_perturb, "--out", "out", "output OBJ");
  add_kv(per, st_perturb, "--seed", "seed", "RNG seed (default 0)");
  per->add_option("--sigma", sigma, "noise standard deviation (meters)");

  CLI::App* abl = app.add_subcommand("ablate", "Run loss/parameterization ablation variants");
  add_run_flags(abl, st_ablate);
  abl->add_option("--only", ablate_only,
                  "comma-separated variant subset (full, no-grading, no-contour, no-normal, "
                  "no-bending, vertex-displacement)");

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    if (e.get_exit_code() == 0) return app.exit(e);  // --help and friends
    std::fprintf(stderr, "phydeformer: %s\n", e.what());
    return 1;
  }

  try {
    if (reg->parsed()) return cmd_register(st_register);
    if (grd->parsed()) return cmd_grade(st_grade, grade_map);
    if (met->parsed()) return cmd_metrics(st_metrics, metrics_a, metrics_b);
    if (per->parsed()) return cmd_perturb(st_perturb, sigma);
    if (abl->parsed()) return cmd_ablate(st_ablate, ablate_only);
  } catch (const pd::NumericalError& e) {
    std::fprintf(stderr, "phydeformer: numerical failure: %s\n", e.what());
    return 2;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "phydeformer: %s\n", e.what());
    return 1;
  }
  return 0;
}
