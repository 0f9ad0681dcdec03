#include "phydeformer/optimizer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <memory>
#include <tuple>

#include "phydeformer/errors.hpp"
#include "phydeformer/log.hpp"

namespace phydeformer {

void OptimConfig::validate() const {
  if (!(learning_rate > 0.0)) throw ConfigError("learning_rate must be > 0");
  if (iterations < 1) throw ConfigError("iterations must be >= 1");
  if (!(adam_beta1 >= 0 && adam_beta1 < 1) || !(adam_beta2 >= 0 && adam_beta2 < 1))
    throw ConfigError("Adam betas must lie in [0, 1)");
  if (gradient_clip && !(*gradient_clip > 0.0)) throw ConfigError("gradient_clip must be > 0");
}

void adam_step(Eigen::VectorXd& params, const Eigen::VectorXd& grad, AdamState& state,
               const OptimConfig& cfg) {
  if (params.size() != grad.size()) throw NumericalError("Adam shapes do not match");
  if (state.first_moment.size() == 0) {
    state.first_moment = Eigen::VectorXd::Zero(params.size());
    state.second_moment = Eigen::VectorXd::Zero(params.size());
  }
  if (!grad.allFinite())
    throw NumericalError("non-finite gradient at Adam step " + std::to_string(state.step + 1));

  state.step += 1;
  state.first_moment = cfg.adam_beta1 * state.first_moment + (1.0 - cfg.adam_beta1) * grad;
  state.second_moment =
      cfg.adam_beta2 * state.second_moment + (1.0 - cfg.adam_beta2) * grad.cwiseProduct(grad);
  const double bias1 = 1.0 - std::pow(cfg.adam_beta1, state.step);
  const double bias2 = 1.0 - std::pow(cfg.adam_beta2, state.step);
  const Eigen::ArrayXd m_hat = state.first_moment.array() / bias1;
  const Eigen::ArrayXd v_hat = state.second_moment.array() / bias2;
  params.array() -= cfg.learning_rate * m_hat / (v_hat.sqrt() + cfg.adam_eps);
}

namespace {

void flatten_jacobians(const JacobianField& jacobians, const Vec3& translation,
                       Eigen::VectorXd& params) {
  const int nf = static_cast<int>(jacobians.size());
  params.resize(9 * nf + 3);
  for (int f = 0; f < nf; ++f)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) params[9 * f + 3 * r + c] = jacobians[f](r, c);
  params.segment<3>(9 * nf) = translation;
}

void unflatten_jacobians(const Eigen::VectorXd& params, JacobianField& jacobians,
                         Vec3& translation) {
  const int nf = static_cast<int>((params.size() - 3) / 9);
  jacobians.resize(nf);
  for (int f = 0; f < nf; ++f)
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) jacobians[f](r, c) = params[9 * f + 3 * r + c];
  translation = params.segment<3>(9 * nf);
}

double variance(const std::vector<double>& values) {
  if (values.empty()) return 0.0;
  double mean = 0.0;
  for (double v : values) mean += v;
  mean /= static_cast<double>(values.size());
  double var = 0.0;
  for (double v : values) var += (v - mean) * (v - mean);
  return var / static_cast<double>(values.size());
}

}  // namespace

void record_gradient(GradientStats& stats, const Eigen::VectorXd& grad) {
  if (!grad.allFinite()) {
    stats.nonfinite_events += 1;
    return;
  }
  const double inf_norm = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
  stats.max_inf_norm = std::max(stats.max_inf_norm, inf_norm);
  const std::size_t n = stats.inf_norms.size();
  if (n >= 20) {
    const std::size_t window = std::min<std::size_t>(n, 100);
    std::vector<double> recent(stats.inf_norms.end() - window, stats.inf_norms.end());
    std::nth_element(recent.begin(), recent.begin() + window / 2, recent.end());
    const double median = recent[window / 2];
    if (median > 0.0 && inf_norm > 10.0 * median) stats.outlier_events += 1;
  }
  stats.inf_norms.push_back(inf_norm);
}

RegistrationResult run_registration(const TriMesh& source, const TriMesh& target,
                                    const TriMesh* body, const LossConfig& loss_cfg,
                                    const OptimConfig& opt_cfg) {
  loss_cfg.validate();
  opt_cfg.validate();

  RegistrationResult result;
  result.mesh = source;  // topology carried through; positions updated below
  RegistrationReport& report = result.report;

  const RestState rest = build_rest_state(source);
  const SurfaceSamples samples = sample_surface(source, loss_cfg.surface_samples, opt_cfg.seed);
  const TargetCache cache = build_target_cache(target, body, loss_cfg.surface_samples,
                                               opt_cfg.seed);
  if (body && !cache.body->closed())
    log_warning_once("open-body", "collision body is open; penalties use unsigned distances");

  const bool jacobian_mode = opt_cfg.parameterization == Parameterization::Jacobian;

  std::unique_ptr<PoissonSystem> system;
  Eigen::VectorXd params;
  if (jacobian_mode) {
    system = std::make_unique<PoissonSystem>(source);
    JacobianField init = system->jacobians_from_positions(source.positions);
    const Vec3 translation_init = cache.target.centroid() - source.centroid();
    flatten_jacobians(init, translation_init, params);
  } else {
    params = Eigen::VectorXd::Zero(3 * source.vertex_count());
  }

  AdamState adam;
  JacobianField jacobians;
  Vec3 translation = Vec3::Zero();
  std::vector<Vec3> positions(source.vertex_count());

  auto positions_from_params = [&]() {
    if (jacobian_mode) {
      unflatten_jacobians(params, jacobians, translation);
      positions = system->solve(jacobians, translation);
    } else {
      for (int v = 0; v < source.vertex_count(); ++v)
        positions[v] = source.positions[v] + Vec3(params[3 * v], params[3 * v + 1],
                                                  params[3 * v + 2]);
    }
  };

  report.rows.reserve(opt_cfg.iterations);
  Eigen::VectorXd grad(params.size());

  // Gradients whose largest entry sits at the float-noise floor mean the run
  // is numerically converged; stepping on them would let Adam's normalized
  // update bootstrap pure rounding noise into learning-rate-sized dithering.
  constexpr double kGradientFloor = 1e-10;

  // Positions of the last iteration whose loss evaluated finite, used to roll
  // back when a later iteration diverges.
  std::vector<Vec3> good_positions = source.positions;
  bool have_good = false;

  auto abort_run = [&](int iter, const std::string& why) {
    report.aborted_at = iter;
    log_warning("registration aborted: " + why + " at iteration " + std::to_string(iter));
  };

  for (int iter = 0; iter < opt_cfg.iterations; ++iter) {
    const auto t_start = std::chrono::steady_clock::now();
    positions_from_params();

    bool positions_finite = true;
    for (const Vec3& p : positions)
      if (!p.allFinite()) { positions_finite = false; break; }
    if (!positions_finite) {
      abort_run(iter, "non-finite vertex positions");
      break;
    }

    Correspondences corr;
    LossEvaluation eval;
    try {
      corr = refresh_correspondences(positions, source, samples, rest, cache, iter);
      eval = total_loss(positions, source, samples, rest, cache, corr, loss_cfg, iter);
    } catch (const PhyDeformerError& err) {
      abort_run(iter, std::string("loss evaluation failed (") + err.what() + ")");
      break;
    }

    if (!std::isfinite(eval.total)) {
      abort_run(iter, "non-finite loss");
      break;
    }
    good_positions = positions;
    have_good = true;

    if (jacobian_mode) {
      JacobianField jacobian_grad;
      Vec3 translation_grad;
      system->adjoint(eval.grad, jacobian_grad, translation_grad);
      flatten_jacobians(jacobian_grad, translation_grad, grad);
    } else {
      for (int v = 0; v < source.vertex_count(); ++v) grad.segment<3>(3 * v) = eval.grad[v];
    }

    record_gradient(report.gradient_stats, grad);
    if (!grad.allFinite()) {
      abort_run(iter, "non-finite gradient");
      break;
    }
    const double grad_inf = grad.size() > 0 ? grad.cwiseAbs().maxCoeff() : 0.0;
    if (grad_inf >= kGradientFloor) {
      if (opt_cfg.gradient_clip) {
        const double norm = grad.norm();
        if (norm > *opt_cfg.gradient_clip) grad *= *opt_cfg.gradient_clip / norm;
      }
      adam_step(params, grad, adam, opt_cfg);
    }

    IterationRow row;
    row.iter = iter;
    row.total = eval.total;
    row.rec = eval.parts.surface;
    row.contour = eval.parts.contour;
    row.normal = eval.parts.normal;
    row.strain = eval.parts.strain;
    row.bending = eval.parts.bending;
    row.collision = eval.parts.collision;
    row.time_ms = std::chrono::duration<double, std::milli>(std::chrono::steady_clock::now() -
                                                            t_start)
                      .count();
    report.rows.push_back(row);

    if (opt_cfg.early_stop && iter + 1 >= 2 * opt_cfg.early_stop_window) {
      const auto& rows = report.rows;
      const double recent = rows[rows.size() - 1].total;
      const double past = rows[rows.size() - 1 - opt_cfg.early_stop_window].total;
      if (past > 0.0 && (past - recent) / past < opt_cfg.early_stop_rel) {
        report.early_stopped = true;
        break;
      }
    }
  }

  if (report.aborted_at) {
    // Roll back to the newest state whose loss evaluated finite so callers
    // receive a usable mesh instead of the diverged parameters.
    positions = have_good ? good_positions : source.positions;
    if (jacobian_mode) {
      jacobians = system->jacobians_from_positions(positions);
      translation = Vec3::Zero();
    }
  } else {
    positions_from_params();  // final parameters -> final mesh
    bool finite = true;
    for (const Vec3& p : positions)
      if (!p.allFinite()) { finite = false; break; }
    if (!finite) {
      // The very last Adam step diverged and was never re-evaluated in-loop.
      abort_run(opt_cfg.iterations, "non-finite vertex positions");
      positions = have_good ? good_positions : source.positions;
      if (jacobian_mode) {
        jacobians = system->jacobians_from_positions(positions);
        translation = Vec3::Zero();
      }
    }
  }
  result.mesh.positions = positions;
  if (jacobian_mode) {
    result.jacobians = jacobians;
    result.translation = translation;
  }

  try {
    std::tie(report.chamfer_x1000, report.normal_similarity) = metrics(result.mesh, cache.target);
    const auto angles = dihedral_angles(result.mesh.positions, rest.edges);
    std::vector<double> deviation(angles.size());
    for (std::size_t j = 0; j < angles.size(); ++j)
      deviation[j] = angles[j] - rest.edges[j].rest_dihedral;
    report.dihedral_deviation_variance = variance(deviation);
  } catch (const PhyDeformerError& err) {
    log_warning(std::string("final metrics unavailable (") + err.what() + ")");
    report.chamfer_x1000 = std::numeric_limits<double>::quiet_NaN();
    report.normal_similarity = std::numeric_limits<double>::quiet_NaN();
  }
  report.factorizations = system ? system->factorization_count() : 0;
  return result;
}

std::pair<double, double> metrics(const TriMesh& x, const TriMesh& t) {
  const double chamfer_x1000 = 1000.0 * chamfer_value(x.positions, t.positions);

  const auto nx = vertex_normals(x);
  const auto nt = vertex_normals(t);
  KdTree3 tree_t(t.positions);
  KdTree3 tree_x(x.positions);
  const auto x_to_t = tree_t.nearest_batch(x.positions);
  const auto t_to_x = tree_x.nearest_batch(t.positions);

  double forward = 0.0;
  for (std::size_t v = 0; v < nx.size(); ++v) forward += 1.0 - nx[v].dot(nt[x_to_t[v]]);
  forward /= static_cast<double>(nx.size());
  double backward = 0.0;
  for (std::size_t w = 0; w < nt.size(); ++w) backward += 1.0 - nt[w].dot(nx[t_to_x[w]]);
  backward /= static_cast<double>(nt.size());

  // 1 - cos is non-negative in exact arithmetic; rounding on perfectly
  // aligned normals can land a hair below zero, so clamp.
  return {chamfer_x1000, std::max(0.0, 0.5 * (forward + backward))};
}

std::vector<NoiseStudyRow> run_noise_study(const TriMesh& source, const TriMesh& target,
                                           const TriMesh* body, const std::vector<double>& sigmas,
                                           const LossConfig& loss_cfg,
                                           const OptimConfig& opt_cfg) {
  std::vector<NoiseStudyRow> table;
  table.reserve(sigmas.size());
  for (std::size_t k = 0; k < sigmas.size(); ++k) {
    // Independent noise per row; sigma = 0 leaves the target bit-identical.
    const TriMesh noisy =
        perturb_gaussian(target, sigmas[k], opt_cfg.seed + static_cast<std::uint64_t>(k));
    const RegistrationResult run = run_registration(source, noisy, body, loss_cfg, opt_cfg);
    NoiseStudyRow row;
    row.sigma = sigmas[k];
    std::tie(row.chamfer_x1000, row.normal_similarity) = metrics(run.mesh, target);
    table.push_back(row);
  }
  return table;
}

}  // namespace phydeformer
