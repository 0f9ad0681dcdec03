#pragma once

#include <Eigen/Core>
#include <memory>
#include <optional>
#include <vector>

#include "phydeformer/kdtree.hpp"
#include "phydeformer/sampling.hpp"
#include "phydeformer/sdf_body.hpp"
#include "phydeformer/trimesh.hpp"

namespace phydeformer {

enum class BendingMode { RestRelative, Absolute };

// Weights, material constants and schedule of the registration objective.
struct LossConfig {
  double lambda_n = 0.01;      // normal-consistency weight
  double lambda_s = 1.0;       // membrane-strain weight
  double lambda_b = 0.1;       // bending weight
  double lambda_c = 0.01;      // collision weight
  double lame_lambda = 16.3;   // first Lame constant
  double lame_mu = 13.5;       // second Lame constant
  double kappa = 4e-5;         // bending stiffness
  double epsilon_collision = 0.002;  // collision margin, meters
  int strain_start_iter = 500;       // strain joins the objective at this iteration
  BendingMode bending_mode = BendingMode::RestRelative;
  double surface_samples = 4.0;  // average Chamfer samples per face
  bool contour_enabled = true;   // boundary-loop Chamfer term on/off

  void validate() const;  // throws ConfigError on out-of-range values
};

// Undeformed geometry, computed once from the graded source and never
// mutated: per-face rest frames for the strain term, rest areas, hinge
// list with rest angles, and the source boundary loops.
struct RestState {
  std::vector<Eigen::Matrix2d> inverse_material;  // inverse rest edge matrix per face
  std::vector<double> rest_areas;
  std::vector<InteriorEdge> edges;  // rest_dihedral carried per edge
  std::vector<BoundaryLoop> source_boundary;
  std::vector<int> boundary_vertices;  // loops concatenated, for the contour term
};

RestState build_rest_state(const TriMesh& graded_source);

// Everything about the target that never changes during a run: fixed
// surface samples with their kd-tree, vertex tree + normals for the normal
// term and metrics, boundary vertices, and the body SDF when present.
struct TargetCache {
  TriMesh target;
  std::vector<Vec3> samples;
  KdTree3 sample_tree;
  KdTree3 vertex_tree;
  std::vector<Vec3> vertex_normals;
  std::vector<int> boundary_vertices;
  std::vector<Vec3> boundary_points;
  KdTree3 boundary_tree;
  std::shared_ptr<const SdfBody> body;  // null when no body was given
};

TargetCache build_target_cache(TriMesh target, const TriMesh* body, double surface_samples,
                               std::uint64_t seed);

// Nearest-neighbor assignments refreshed each iteration and frozen while
// that iteration's gradient is evaluated.
struct Correspondences {
  std::vector<int> surf_x_to_t, surf_t_to_x;      // surface samples
  std::vector<int> contour_x_to_t, contour_t_to_x;  // boundary vertices
  std::vector<int> vert_x_to_t, vert_t_to_x;      // vertices (normal term)
  std::vector<SdfHit> body_hits;                  // per deformed vertex
  int refreshed_at = -1;
};

Correspondences refresh_correspondences(const std::vector<Vec3>& positions,
                                        const TriMesh& source_topology,
                                        const SurfaceSamples& samples, const RestState& rest,
                                        const TargetCache& cache, int iteration);

// --- individual terms -------------------------------------------------------

struct LossTerm {
  double value = 0.0;
  std::vector<Vec3> grad;  // per entity of the differentiated argument
};

// Symmetric mean of squared nearest-neighbor distances between two point
// sets, with the gradient taken w.r.t. the A points under frozen
// correspondences. Builds its own trees; the per-iteration path below
// reuses cached ones.
std::pair<double, std::vector<Vec3>> chamfer(const std::vector<Vec3>& a,
                                             const std::vector<Vec3>& b);
double chamfer_value(const std::vector<Vec3>& a, const std::vector<Vec3>& b);

// Same quantity under precomputed assignments.
double chamfer_with_corr(const std::vector<Vec3>& a, const std::vector<Vec3>& b,
                         const std::vector<int>& a_to_b, const std::vector<int>& b_to_a,
                         std::vector<Vec3>* grad_a);

// Vertex-normal cosine distance, both directions, under frozen vertex
// correspondences; the gradient differentiates the deformed normals
// through their area-vector normalization. Gradient is per X vertex.
LossTerm normal_loss(const std::vector<Vec3>& positions, const TriMesh& topology,
                     const TargetCache& cache, const Correspondences& corr);

// Membrane strain: per-face Green strain against the rest frame under a
// StVK energy density, integrated with rest areas.
LossTerm strain_stvk(const std::vector<Vec3>& positions, const TriMesh& topology,
                     const RestState& rest, double lame_lambda, double lame_mu);
LossTerm strain_stvk_serial(const std::vector<Vec3>& positions, const TriMesh& topology,
                            const RestState& rest, double lame_lambda, double lame_mu);

// Quadratic hinge energy on signed dihedral angles, either relative to the
// rest angles or absolute. Near-degenerate hinges are skipped with a
// warning.
LossTerm bending(const std::vector<Vec3>& positions, const RestState& rest, double kappa,
                 BendingMode mode);
LossTerm bending_serial(const std::vector<Vec3>& positions, const RestState& rest, double kappa,
                        BendingMode mode);

// Cubic one-sided penalty on body proximity: sum of max(eps - sdf, 0)^3
// over vertices, gradient through the SDF's spatial gradient.
LossTerm collision(const std::vector<Vec3>& positions, const SdfBody& body, double epsilon);
// Same from precomputed per-vertex hits (the per-iteration path).
LossTerm collision_from_hits(const std::vector<SdfHit>& hits, double epsilon);

// --- combined objective ------------------------------------------------------

struct LossBreakdown {
  double reconstruction = 0.0;  // surface + contour, unweighted
  double surface = 0.0;
  double contour = 0.0;
  double normal = 0.0;
  double strain = 0.0;
  double bending = 0.0;
  double collision = 0.0;
};

struct LossEvaluation {
  double total = 0.0;
  LossBreakdown parts;            // unweighted term values
  std::vector<Vec3> grad;         // d total / d position
};

// Weighted objective at one iteration; the strain term enters the weighted
// sum only from cfg.strain_start_iter on but is always reported in the
// breakdown.
LossEvaluation total_loss(const std::vector<Vec3>& positions, const TriMesh& topology,
                          const SurfaceSamples& samples, const RestState& rest,
                          const TargetCache& cache, const Correspondences& corr,
                          const LossConfig& cfg, int iteration);

}  // namespace phydeformer
