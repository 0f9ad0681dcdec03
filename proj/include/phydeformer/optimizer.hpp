#pragma once

#include <Eigen/Core>
#include <cstdint>
#include <optional>
#include <vector>

#include "phydeformer/losses.hpp"
#include "phydeformer/poisson_system.hpp"
#include "phydeformer/trimesh.hpp"

namespace phydeformer {

enum class Parameterization { Jacobian, VertexDisplacement };

struct OptimConfig {
  double learning_rate = 0.002;
  int iterations = 1500;
  double adam_beta1 = 0.9;
  double adam_beta2 = 0.999;
  double adam_eps = 1e-8;
  Parameterization parameterization = Parameterization::Jacobian;
  std::optional<double> gradient_clip;  // max L2 norm of the parameter gradient
  std::uint64_t seed = 0;
  bool early_stop = false;          // optional: stop when progress stalls
  double early_stop_rel = 1e-7;     // relative improvement threshold
  int early_stop_window = 50;       // over this many iterations

  void validate() const;
};

// Standard bias-corrected Adam, kept explicit so steps are deterministic
// and testable.
struct AdamState {
  Eigen::VectorXd first_moment;
  Eigen::VectorXd second_moment;
  int step = 0;
};

// One in-place update. Throws NumericalError (naming the step) on a
// non-finite gradient.
void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state,
               const OptimConfig& cfg);

struct IterationRow {
  int iter = 0;
  double total = 0, rec = 0, contour = 0, normal = 0, strain = 0, bending = 0, collision = 0;
  double time_ms = 0;  // measured wall time (the CSV writer decides whether to print it)
};

// Instrumentation over the raw parameter gradient (before any clipping):
// per-iteration infinity norms, plus counts of non-finite gradients and of
// spikes exceeding 10x the running median (after a 20-iteration warmup,
// median over the trailing 100 norms).
struct GradientStats {
  int nonfinite_events = 0;
  int outlier_events = 0;
  double max_inf_norm = 0.0;
  std::vector<double> inf_norms;
};

// Feed one raw gradient into the stats (the registration loop calls this
// every iteration, before clipping).
void record_gradient(GradientStats& stats, const Eigen::VectorXd& grad);

struct RegistrationReport {
  std::vector<IterationRow> rows;
  double chamfer_x1000 = 0.0;
  double normal_similarity = 0.0;
  GradientStats gradient_stats;
  double dihedral_deviation_variance = 0.0;  // var of (angle - rest angle) on the result
  std::optional<int> aborted_at;             // iteration of a non-finite loss/gradient
  long factorizations = 0;
  bool early_stopped = false;
};

struct RegistrationResult {
  TriMesh mesh;
  RegistrationReport report;
  JacobianField jacobians;       // final field (Jacobian mode only)
  Vec3 translation = Vec3::Zero();  // final global translation (Jacobian mode only)
};

// The registration driver. Per iteration: recover positions from the
// current parameters (Poisson solve in Jacobian mode, direct offsets in the
// ablation mode), refresh correspondences, evaluate the objective, pull the
// gradient back to the parameters (adjoint solve in Jacobian mode), and
// take one Adam step. The output mesh always carries the source topology.
RegistrationResult run_registration(const TriMesh& source, const TriMesh& target,
                                    const TriMesh* body, const LossConfig& loss_cfg,
                                    const OptimConfig& opt_cfg);

// Evaluation metrics: symmetric mean squared vertex-to-nearest-vertex
// distance x 1000, and half the vertex-normal cosine distance (lower is
// better for both).
std::pair<double, double> metrics(const TriMesh& x, const TriMesh& t);

struct NoiseStudyRow {
  double sigma = 0.0;
  double chamfer_x1000 = 0.0;
  double normal_similarity = 0.0;
};

// Registers against Gaussian-perturbed copies of the target (sigma = 0
// reproduces the plain run) and evaluates each result against the clean
// target.
std::vector<NoiseStudyRow> run_noise_study(const TriMesh& source, const TriMesh& target,
                                           const TriMesh* body, const std::vector<double>& sigmas,
                                           const LossConfig& loss_cfg, const OptimConfig& opt_cfg);

}  // namespace phydeformer
