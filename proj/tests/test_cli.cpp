// Run configuration, CSV logging, and the command-line tool end to end.
// The CLI binary path is injected by the build as PHYDEFORMER_CLI.
#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include "doctest.h"

#include <sys/wait.h>

#include <algorithm>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include "phydeformer/errors.hpp"
#include "phydeformer/obj_io.hpp"
#include "phydeformer/run_config.hpp"
#include "phydeformer/trimesh.hpp"
#include "support/test_meshes.hpp"

using namespace phydeformer;
namespace tmesh = testmesh;
namespace fs = std::filesystem;

namespace {

const fs::path kDir = "cli_tmp";

struct RunResult {
  int code = -1;
  std::string out, err;
};

std::string slurp(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

RunResult run_cli(const std::string& args) {
  fs::create_directories(kDir);
  const fs::path out_file = kDir / "stdout.txt";
  const fs::path err_file = kDir / "stderr.txt";
  const std::string cmd = std::string(PHYDEFORMER_CLI) + " " + args + " >" +
                          out_file.string() + " 2>" + err_file.string();
  const int status = std::system(cmd.c_str());
  RunResult r;
  r.code = (status >= 0 && WIFEXITED(status)) ? WEXITSTATUS(status) : -1;
  r.out = slurp(out_file);
  r.err = slurp(err_file);
  return r;
}

std::string path_of(const char* name) { return (kDir / name).string(); }

struct Fixture {
  Fixture() {
    fs::create_directories(kDir);
    save_obj(tmesh::tube(8, 5, 0.1, 0.0, 0.3), path_of("small.obj"));
    save_obj(tmesh::tube(8, 5, 0.115, 0.0, 0.33), path_of("small_big.obj"));
  }
};

bool contains(const std::string& text, const std::string& needle) {
  return text.find(needle) != std::string::npos;
}

int count_lines(const std::string& text) {
  int n = 0;
  for (char c : text)
    if (c == '\n') ++n;
  return n;
}

}  // namespace

// --- RunConfig ---------------------------------------------------------------

TEST_CASE("unknown config keys and malformed values are rejected") {
  RunConfig cfg;
  CHECK_THROWS_WITH_AS(cfg.set("lerning_rate", "0.01"),
                       doctest::Contains("unknown config key 'lerning_rate'"), ConfigError);
  CHECK_THROWS_AS(cfg.set("iterations", "ten"), ConfigError);
  CHECK_THROWS_AS(cfg.set("grading", "maybe"), ConfigError);
  CHECK_THROWS_AS(cfg.set("lambda_n", "0.01x"), ConfigError);
  CHECK_THROWS_AS(cfg.set("bending_mode", "soft"), ConfigError);
  CHECK_THROWS_AS(cfg.set("parameterization", "offsets"), ConfigError);
}

TEST_CASE("units, axis and gradient_clip parse") {
  RunConfig cfg;
  cfg.set("units", "cm");
  CHECK(cfg.unit_scale == doctest::Approx(0.01));
  cfg.set("units", "mm");
  CHECK(cfg.unit_scale == doctest::Approx(0.001));
  cfg.set("units", "meters");
  CHECK(cfg.unit_scale == doctest::Approx(1.0));
  CHECK_THROWS_AS(cfg.set("units", "inches"), ConfigError);

  cfg.set("axis", "0,0,2");
  CHECK(cfg.axis_override);
  CHECK(cfg.axis_direction.isApprox(Vec3(0, 0, 1)));
  CHECK_THROWS_AS(cfg.set("axis", "1,2"), ConfigError);
  CHECK_THROWS_AS(cfg.set("axis", "1,2,3,4"), ConfigError);
  CHECK_THROWS_AS(cfg.set("axis", "0,0,0"), ConfigError);

  cfg.set("gradient_clip", "5.0");
  REQUIRE(cfg.opt.gradient_clip.has_value());
  CHECK(*cfg.opt.gradient_clip == doctest::Approx(5.0));
  cfg.set("gradient_clip", "none");
  CHECK_FALSE(cfg.opt.gradient_clip.has_value());
}

TEST_CASE("config files load with comments, and errors carry path:line") {
  fs::create_directories(kDir);
  const std::string good = path_of("good.cfg");
  {
    std::ofstream f(good);
    f << "# a comment\n\n"
      << "iterations = 42\n"
      << "lr = 0.5   # trailing comment\n"
      << "bending_mode = absolute\n";
  }
  RunConfig cfg;
  cfg.load_file(good);
  CHECK(cfg.opt.iterations == 42);
  CHECK(cfg.opt.learning_rate == doctest::Approx(0.5));
  CHECK(cfg.loss.bending_mode == BendingMode::Absolute);

  const std::string bad = path_of("bad.cfg");
  {
    std::ofstream f(bad);
    f << "iterations = 5\nthis line has no equals\n";
  }
  CHECK_THROWS_WITH_AS(cfg.load_file(bad), doctest::Contains((bad + ":2").c_str()), ConfigError);
  CHECK_THROWS_WITH_AS(cfg.load_file(path_of("absent.cfg")), doctest::Contains("absent.cfg"),
                       ConfigError);
}

TEST_CASE("echo round-trips through set") {
  RunConfig cfg;
  cfg.set("iterations", "17");
  cfg.set("lambda_b", "0.25");
  cfg.set("axis", "1,1,0");
  cfg.set("units", "cm");
  const std::string first = cfg.echo();

  RunConfig copy;
  copy.unit_scale = cfg.unit_scale;  // echo reports the scale, not the unit name
  std::istringstream lines(first);
  std::string line;
  while (std::getline(lines, line)) {
    const auto eq = line.find(" = ");
    REQUIRE(eq != std::string::npos);
    const std::string key = line.substr(0, eq);
    const std::string value = line.substr(eq + 3);
    if (value == "-" || key == "unit_scale") continue;
    if (key == "axis" && value == "auto") continue;
    copy.set(key, value);
  }
  CHECK(copy.echo() == first);
}

// --- CSV log -----------------------------------------------------------------

TEST_CASE("the CSV log has the fixed schema and reproducible times") {
  fs::create_directories(kDir);
  RunConfig cfg;
  cfg.set("iterations", "2");
  RegistrationReport report;
  for (int i = 0; i < 2; ++i) {
    IterationRow row;
    row.iter = i;
    row.total = 1.5 + i;
    row.rec = 1.0;
    row.contour = 0.25;
    row.normal = 0.5;
    row.strain = 0.0;
    row.bending = 0.125;
    row.collision = 0.0;
    row.time_ms = 5.0;
    report.rows.push_back(row);
  }
  report.chamfer_x1000 = 0.125;
  report.normal_similarity = 0.0625;

  const std::string log = path_of("log.csv");
  write_csv_log(log, cfg, report);
  const std::string text = slurp(log);
  CHECK(contains(text, "iter,total,rec,contour,normal,strain,bending,collision,time_ms\n"));
  CHECK(contains(text, "# iterations = 2\n"));
  CHECK(contains(text, "0,1.5,1,0.25,0.5,0,0.125,0,0\n"));  // time prints 0 by default
  CHECK(contains(text, "# metrics chamfer_x1000=0.125 normal_similarity=0.0625\n"));

  cfg.set("log_times", "true");
  write_csv_log(log, cfg, report);
  CHECK(contains(slurp(log), "0,1.5,1,0.25,0.5,0,0.125,0,5.000\n"));

  const std::string summary = path_of("sum.txt");
  write_metrics_summary(summary, report);
  CHECK(slurp(summary) == "chamfer_x1000 = 0.125\nnormal_similarity = 0.0625\n");
}

// --- CLI end to end ----------------------------------------------------------

TEST_CASE("cli: no subcommand or missing files fail with exit 1") {
  Fixture fix;
  CHECK(run_cli("").code == 1);

  const RunResult r = run_cli("register --source " + path_of("nope.obj") + " --target " +
                              path_of("small.obj") + " --out " + path_of("x.obj") +
                              " --iterations 1");
  CHECK(r.code == 1);
  CHECK(contains(r.err, "nope.obj"));

  const RunResult missing = run_cli("register --target " + path_of("small.obj") + " --out " +
                                    path_of("x.obj"));
  CHECK(missing.code == 1);
  CHECK(contains(missing.err, "--source"));
}

TEST_CASE("cli: self-registration reports zero metrics and writes artifacts") {
  Fixture fix;
  const std::string out = path_of("self.obj");
  const std::string log = path_of("self.csv");
  const RunResult r = run_cli("register --source " + path_of("small.obj") + " --target " +
                              path_of("small.obj") + " --out " + out + " --log " + log +
                              " --iterations 5");
  CAPTURE(r.err);
  CHECK(r.code == 0);
  CHECK(r.out == "0.000000 0.000000\n");
  CHECK(fs::exists(out));
  CHECK(fs::exists(log));
  CHECK(fs::exists(path_of("self.metrics.txt")));
  CHECK(contains(slurp(path_of("self.metrics.txt")), "chamfer_x1000 = "));
}

TEST_CASE("cli: registration is byte-for-byte reproducible") {
  Fixture fix;
  const std::string base = "register --source " + path_of("small.obj") + " --target " +
                           path_of("small_big.obj") + " --iterations 8 --seed 3";
  const RunResult a =
      run_cli(base + " --out " + path_of("rep_a.obj") + " --log " + path_of("rep_a.csv"));
  const RunResult b =
      run_cli(base + " --out " + path_of("rep_b.obj") + " --log " + path_of("rep_b.csv"));
  CAPTURE(a.err);
  REQUIRE(a.code == 0);
  REQUIRE(b.code == 0);
  CHECK(slurp(path_of("rep_a.obj")) == slurp(path_of("rep_b.obj")));
  CHECK(slurp(path_of("rep_a.csv")) == slurp(path_of("rep_b.csv")));
  CHECK(slurp(path_of("rep_a.obj")).size() > 0);
}

TEST_CASE("cli: command-line flags beat the config file") {
  Fixture fix;
  const std::string cfg_file = path_of("run.cfg");
  {
    std::ofstream f(cfg_file);
    f << "iterations = 5\nseed = 9\n";
  }
  const std::string log = path_of("override.csv");
  const RunResult r = run_cli("register --config " + cfg_file + " --source " + path_of("small.obj") +
                              " --target " + path_of("small.obj") + " --out " +
                              path_of("override.obj") + " --log " + log + " --iterations 7");
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  const std::string text = slurp(log);
  CHECK(contains(text, "# iterations = 7\n"));
  CHECK(contains(text, "# seed = 9\n"));
  // 7 data rows: lines that don't start with '#' minus the schema line
  int rows = 0;
  std::istringstream lines(text);
  std::string line;
  while (std::getline(lines, line))
    if (!line.empty() && line[0] != '#' && line.find("iter,") != 0) ++rows;
  CHECK(rows == 7);
}

TEST_CASE("cli: metrics oracle in centimetre units") {
  fs::create_directories(kDir);
  // Same tube in centimetre units, shifted by exactly 1 cm along z.
  TriMesh a = tmesh::tube(8, 5, 10.0, 0.0, 30.0);
  TriMesh b = a;
  for (auto& p : b.positions) p.z() += 1.0;
  save_obj(a, path_of("cm_a.obj"));
  save_obj(b, path_of("cm_b.obj"));
  const RunResult r =
      run_cli("metrics --a " + path_of("cm_a.obj") + " --b " + path_of("cm_b.obj") + " --units cm");
  CAPTURE(r.err);
  CHECK(r.code == 0);
  // nearest vertex is the same vertex in both directions, so the symmetric
  // sum of mean squared distances is 2 * (0.01 m)^2 -> x1000 = 0.2
  CHECK(r.out == "0.200000 0.000000\n");

  const RunResult same =
      run_cli("metrics --a " + path_of("cm_a.obj") + " --b " + path_of("cm_a.obj"));
  CHECK(same.code == 0);
  CHECK(same.out == "0.000000 0.000000\n");
}

TEST_CASE("cli: perturb is deterministic and exact at sigma zero") {
  Fixture fix;
  const std::string zero = path_of("p_zero.obj");
  REQUIRE(run_cli("perturb --source " + path_of("small.obj") + " --out " + zero +
                  " --sigma 0")
              .code == 0);
  CHECK(slurp(zero) == slurp(path_of("small.obj")));

  const std::string p1 = path_of("p1.obj");
  const std::string p2 = path_of("p2.obj");
  REQUIRE(run_cli("perturb --source " + path_of("small.obj") + " --out " + p1 +
                  " --sigma 0.002 --seed 5")
              .code == 0);
  REQUIRE(run_cli("perturb --source " + path_of("small.obj") + " --out " + p2 +
                  " --sigma 0.002 --seed 5")
              .code == 0);
  CHECK(slurp(p1) == slurp(p2));
  CHECK(slurp(p1) != slurp(path_of("small.obj")));
}

TEST_CASE("cli: grade maps a tube onto its scaled copy") {
  Fixture fix;
  const std::string out = path_of("graded.obj");
  const RunResult r = run_cli("grade --source " + path_of("small.obj") + " --target " +
                              path_of("small_big.obj") + " --out " + out);
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  CHECK(fs::exists(path_of("graded.grading.txt")));
  const TriMesh graded = load_obj(out);
  const TriMesh target = load_obj(path_of("small_big.obj"));
  REQUIRE(graded.vertex_count() == target.vertex_count());
  double worst = 0.0;
  for (int v = 0; v < graded.vertex_count(); ++v)
    worst = std::max(worst, (graded.positions[v] - target.positions[v]).norm());
  CHECK(worst < 1e-6);  // uniform scaling is recovered exactly up to io rounding
}

TEST_CASE("cli: ablation table lists requested variants") {
  Fixture fix;
  const RunResult r = run_cli("ablate --source " + path_of("small.obj") + " --target " +
                              path_of("small_big.obj") + " --iterations 3 --only full,no-bending");
  CAPTURE(r.err);
  REQUIRE(r.code == 0);
  CHECK(count_lines(r.out) == 3);  // header + two variants
  CHECK(contains(r.out, "variant"));
  CHECK(contains(r.out, "full"));
  CHECK(contains(r.out, "no-bending"));

  const RunResult bad = run_cli("ablate --source " + path_of("small.obj") + " --target " +
                                path_of("small_big.obj") + " --only nonsense");
  CHECK(bad.code == 1);
  CHECK(contains(bad.err, "unknown ablation variant"));
}

TEST_CASE("cli: closed meshes register with grading skipped") {
  fs::create_directories(kDir);
  save_obj(tmesh::icosphere(1, 0.5), path_of("ball.obj"));
  const RunResult r = run_cli("register --source " + path_of("ball.obj") + " --target " +
                              path_of("ball.obj") + " --out " + path_of("ball_out.obj") +
                              " --iterations 2");
  CAPTURE(r.err);
  CHECK(r.code == 0);
  CHECK(contains(r.err, "closed mesh, grading skipped"));
}

TEST_CASE("cli: bad inputs map to the documented exit codes") {
  Fixture fix;
  // quad faces are rejected with a message about triangles
  const std::string quad = path_of("quad.obj");
  {
    std::ofstream f(quad);
    f << "v 0 0 0\nv 1 0 0\nv 1 1 0\nv 0 1 0\nf 1 2 3 4\n";
  }
  const RunResult q = run_cli("metrics --a " + quad + " --b " + quad);
  CHECK(q.code == 1);
  CHECK(contains(q.err, "triangles"));

  const RunResult bm = run_cli("register --source " + path_of("small.obj") + " --target " +
                               path_of("small.obj") + " --out " + path_of("bm.obj") +
                               " --iterations 1 --bending-mode springy");
  CHECK(bm.code == 1);
  CHECK(contains(bm.err, "bending_mode"));

  // numerical blow-up is exit 2 (grading disabled: it would solve this pair
  // outright and leave the optimizer nothing to diverge on)
  const RunResult blow = run_cli("register --source " + path_of("small.obj") + " --target " +
                                 path_of("small_big.obj") + " --out " + path_of("blow.obj") +
                                 " --iterations 4 --lr 1e200 --no-grading" +
                                 " --parameterization vertex_displacement");
  CHECK(blow.code == 2);
  CHECK(contains(blow.err, "aborted"));
}

TEST_CASE("cli: vertex-displacement parameterization is accepted end to end") {
  Fixture fix;
  const RunResult r = run_cli("register --source " + path_of("small.obj") + " --target " +
                              path_of("small_big.obj") + " --out " + path_of("vd.obj") +
                              " --iterations 4 --parameterization vertex_displacement" +
                              " --no-grading");
  CAPTURE(r.err);
  CHECK(r.code == 0);
  CHECK(fs::exists(path_of("vd.obj")));
}
