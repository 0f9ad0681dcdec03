#include "phydeformer/run_config.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "phydeformer/errors.hpp"

namespace phydeformer {

namespace {

double to_double(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    double d = std::stod(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return d;
  } catch (const std::logic_error&) {
    throw ConfigError("config key '" + key + "': cannot parse number '" + value + "'");
  }
}

long long to_int(const std::string& key, const std::string& value) {
  try {
    std::size_t used = 0;
    long long i = std::stoll(value, &used);
    if (used != value.size()) throw std::invalid_argument(value);
    return i;
  } catch (const std::logic_error&) {
    throw ConfigError("config key '" + key + "': cannot parse integer '" + value + "'");
  }
}

bool to_bool(const std::string& key, const std::string& value) {
  if (value == "1" || value == "true" || value == "on" || value == "yes") return true;
  if (value == "0" || value == "false" || value == "off" || value == "no") return false;
  throw ConfigError("config key '" + key + "': cannot parse boolean '" + value + "'");
}

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

}  // namespace

void RunConfig::set(const std::string& key, const std::string& value) {
  if (key == "source") source = value;
  else if (key == "target") target = value;
  else if (key == "body") body = value;
  else if (key == "out") out = value;
  else if (key == "log") log = value;
  else if (key == "jacobian_dump") jacobian_dump = value;
  else if (key == "seed") opt.seed = static_cast<std::uint64_t>(to_int(key, value));
  else if (key == "grading") grading = to_bool(key, value);
  else if (key == "log_times") log_times = to_bool(key, value);
  else if (key == "axis") {
    std::istringstream ss(value);
    std::string part;
    Vec3 dir;
    for (int k = 0; k < 3; ++k) {
      if (!std::getline(ss, part, ',')) throw ConfigError("axis needs 'x,y,z'");
      dir[k] = to_double(key, part);
    }
    if (std::getline(ss, part, ',')) throw ConfigError("axis needs exactly three components");
    const double norm = dir.norm();
    if (norm <= 0.0) throw ConfigError("axis direction must be non-zero");
    // skip the division when the vector is already unit length, so feeding an
    // echoed axis back in reproduces it bit for bit
    axis_direction = std::abs(norm - 1.0) <= 1e-12 ? dir : Vec3(dir / norm);
    axis_override = true;
  } else if (key == "units") {
    if (value == "m" || value == "meters") unit_scale = 1.0;
    else if (value == "cm" || value == "centimeters") unit_scale = 0.01;
    else if (value == "mm" || value == "millimeters") unit_scale = 0.001;
    else throw ConfigError("units must be m, cm or mm; got '" + value + "'");
  } else if (key == "iterations") {
    opt.iterations = static_cast<int>(to_int(key, value));
  } else if (key == "learning_rate" || key == "lr") {
    opt.learning_rate = to_double(key, value);
  } else if (key == "parameterization") {
    if (value == "jacobian") opt.parameterization = Parameterization::Jacobian;
    else if (value == "vertex_displacement")
      opt.parameterization = Parameterization::VertexDisplacement;
    else
      throw ConfigError("parameterization must be jacobian or vertex_displacement; got '" +
                        value + "'");
  } else if (key == "gradient_clip") {
    if (value == "none") opt.gradient_clip.reset();
    else opt.gradient_clip = to_double(key, value);
  } else if (key == "early_stop") {
    opt.early_stop = to_bool(key, value);
  } else if (key == "early_stop_rel") {
    opt.early_stop_rel = to_double(key, value);
  } else if (key == "early_stop_window") {
    opt.early_stop_window = static_cast<int>(to_int(key, value));
  } else if (key == "adam_beta1") {
    opt.adam_beta1 = to_double(key, value);
  } else if (key == "adam_beta2") {
    opt.adam_beta2 = to_double(key, value);
  } else if (key == "adam_eps") {
    opt.adam_eps = to_double(key, value);
  } else if (key == "lambda_n") {
    loss.lambda_n = to_double(key, value);
  } else if (key == "lambda_s") {
    loss.lambda_s = to_double(key, value);
  } else if (key == "lambda_b") {
    loss.lambda_b = to_double(key, value);
  } else if (key == "lambda_c") {
    loss.lambda_c = to_double(key, value);
  } else if (key == "lame_lambda") {
    loss.lame_lambda = to_double(key, value);
  } else if (key == "lame_mu") {
    loss.lame_mu = to_double(key, value);
  } else if (key == "kappa") {
    loss.kappa = to_double(key, value);
  } else if (key == "epsilon_collision") {
    loss.epsilon_collision = to_double(key, value);
  } else if (key == "strain_start_iter") {
    loss.strain_start_iter = static_cast<int>(to_int(key, value));
  } else if (key == "bending_mode") {
    if (value == "rest_relative") loss.bending_mode = BendingMode::RestRelative;
    else if (value == "absolute") loss.bending_mode = BendingMode::Absolute;
    else throw ConfigError("bending_mode must be rest_relative or absolute; got '" + value + "'");
  } else if (key == "surface_samples") {
    loss.surface_samples = to_double(key, value);
  } else if (key == "contour_enabled") {
    loss.contour_enabled = to_bool(key, value);
  } else {
    throw ConfigError("unknown config key '" + key + "'");
  }
}

void RunConfig::load_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw ConfigError("cannot open config file '" + path + "'");
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto hash = line.find('#'); hash != std::string::npos) line.erase(hash);
    const auto eq = line.find('=');
    std::string key, value;
    if (eq == std::string::npos) {
      std::istringstream check(line);
      if (!(check >> key)) continue;  // blank line
      throw ConfigError(path + ":" + std::to_string(line_no) + ": expected 'key = value'");
    }
    auto trim = [](std::string s) {
      const char* ws = " \t\r";
      s.erase(0, s.find_first_not_of(ws));
      if (auto end = s.find_last_not_of(ws); end != std::string::npos) s.erase(end + 1);
      else s.clear();
      return s;
    };
    key = trim(line.substr(0, eq));
    value = trim(line.substr(eq + 1));
    if (key.empty())
      throw ConfigError(path + ":" + std::to_string(line_no) + ": missing key before '='");
    set(key, value);
  }
}

std::string RunConfig::echo() const {
  std::vector<std::pair<std::string, std::string>> kv = {
      {"adam_beta1", fmt(opt.adam_beta1)},
      {"adam_beta2", fmt(opt.adam_beta2)},
      {"adam_eps", fmt(opt.adam_eps)},
      {"axis", axis_override ? fmt(axis_direction.x()) + "," + fmt(axis_direction.y()) + "," +
                                   fmt(axis_direction.z())
                             : std::string("auto")},
      {"bending_mode",
       loss.bending_mode == BendingMode::RestRelative ? "rest_relative" : "absolute"},
      {"body", body.empty() ? "-" : body},
      {"contour_enabled", loss.contour_enabled ? "true" : "false"},
      {"early_stop", opt.early_stop ? "true" : "false"},
      {"epsilon_collision", fmt(loss.epsilon_collision)},
      {"gradient_clip", opt.gradient_clip ? fmt(*opt.gradient_clip) : std::string("none")},
      {"grading", grading ? "true" : "false"},
      {"iterations", std::to_string(opt.iterations)},
      {"kappa", fmt(loss.kappa)},
      {"lambda_b", fmt(loss.lambda_b)},
      {"lambda_c", fmt(loss.lambda_c)},
      {"lambda_n", fmt(loss.lambda_n)},
      {"lambda_s", fmt(loss.lambda_s)},
      {"lame_lambda", fmt(loss.lame_lambda)},
      {"lame_mu", fmt(loss.lame_mu)},
      {"learning_rate", fmt(opt.learning_rate)},
      {"log_times", log_times ? "true" : "false"},
      {"parameterization",
       opt.parameterization == Parameterization::Jacobian ? "jacobian" : "vertex_displacement"},
      {"seed", std::to_string(opt.seed)},
      {"source", source.empty() ? "-" : source},
      {"strain_start_iter", std::to_string(loss.strain_start_iter)},
      {"surface_samples", fmt(loss.surface_samples)},
      {"target", target.empty() ? "-" : target},
      {"unit_scale", fmt(unit_scale)},
  };
  std::sort(kv.begin(), kv.end());
  std::string out_str;
  for (const auto& [k, v] : kv) out_str += k + " = " + v + "\n";
  return out_str;
}

void write_csv_log(const std::string& path, const RunConfig& cfg,
                   const RegistrationReport& report) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open log file '" + path + "' for writing");
  out << "# registration log\n";
  std::istringstream echo_lines(cfg.echo());
  std::string line;
  while (std::getline(echo_lines, line)) out << "# " << line << "\n";

  out << "iter,total,rec,contour,normal,strain,bending,collision,time_ms\n";
  char buf[320];
  for (const auto& row : report.rows) {
    if (cfg.log_times)
      std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.3f\n",
                    row.iter, row.total, row.rec, row.contour, row.normal, row.strain,
                    row.bending, row.collision, row.time_ms);
    else
      std::snprintf(buf, sizeof buf, "%d,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,%.10g,0\n", row.iter,
                    row.total, row.rec, row.contour, row.normal, row.strain, row.bending,
                    row.collision);
    out << buf;
  }
  std::snprintf(buf, sizeof buf, "# metrics chamfer_x1000=%.10g normal_similarity=%.10g\n",
                report.chamfer_x1000, report.normal_similarity);
  out << buf;
  if (report.aborted_at)
    out << "# aborted_at=" << *report.aborted_at << "\n";
  if (!out) throw ConfigError("failed while writing '" + path + "'");
}

void write_metrics_summary(const std::string& path, const RegistrationReport& report) {
  std::ofstream out(path);
  if (!out) throw ConfigError("cannot open '" + path + "' for writing");
  char buf[128];
  std::snprintf(buf, sizeof buf, "chamfer_x1000 = %.10g\nnormal_similarity = %.10g\n",
                report.chamfer_x1000, report.normal_similarity);
  out << buf;
  if (!out) throw ConfigError("failed while writing '" + path + "'");
}

}  // namespace phydeformer
