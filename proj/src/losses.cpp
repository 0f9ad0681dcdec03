#include "phydeformer/losses.hpp"

#include <algorithm>
#include <cmath>

#include "phydeformer/errors.hpp"
#include "phydeformer/log.hpp"
#include "phydeformer/parallel.hpp"

namespace phydeformer {

void LossConfig::validate() const {
  if (lambda_n < 0 || lambda_s < 0 || lambda_b < 0 || lambda_c < 0)
    throw ConfigError("loss weights must be >= 0");
  if (!(lame_mu > 0)) throw ConfigError("lame_mu must be > 0");
  if (kappa < 0) throw ConfigError("kappa must be >= 0");
  if (epsilon_collision < 0) throw ConfigError("epsilon_collision must be >= 0");
  if (!(surface_samples > 0)) throw ConfigError("surface_samples must be > 0");
  if (strain_start_iter < 0) throw ConfigError("strain_start_iter must be >= 0");
}

RestState build_rest_state(const TriMesh& graded_source) {
  require_clean(graded_source, graded_source.name.empty() ? "source mesh" : graded_source.name);
  RestState rest;
  rest.rest_areas = face_areas(graded_source);
  rest.edges = interior_edges(graded_source);
  rest.source_boundary = extract_boundary_loops(graded_source);
  for (const auto& loop : rest.source_boundary)
    rest.boundary_vertices.insert(rest.boundary_vertices.end(), loop.vertex_ids.begin(),
                                  loop.vertex_ids.end());

  // Rest edge matrix per face, expressed in an orthonormal in-plane frame:
  // column k is edge k in (t1, t2) coordinates. Non-degeneracy (checked
  // above) makes it invertible.
  const int nf = graded_source.face_count();
  rest.inverse_material.resize(nf);
  parallel_for(nf, [&](long long f) {
    const auto& tri = graded_source.faces[f];
    const Vec3 e1 = graded_source.positions[tri[1]] - graded_source.positions[tri[0]];
    const Vec3 e2 = graded_source.positions[tri[2]] - graded_source.positions[tri[0]];
    const Vec3 t1 = e1.normalized();
    const Vec3 n = e1.cross(e2).normalized();
    const Vec3 t2 = n.cross(t1);
    Eigen::Matrix2d dm;
    dm << e1.dot(t1), e2.dot(t1), e1.dot(t2), e2.dot(t2);
    rest.inverse_material[f] = dm.inverse();
  });
  return rest;
}

TargetCache build_target_cache(TriMesh target, const TriMesh* body, double surface_samples,
                               std::uint64_t seed) {
  TargetCache cache;
  cache.target = std::move(target);

  SurfaceSamples samples = sample_surface(cache.target, surface_samples, seed);
  cache.samples = sample_positions(samples, cache.target, cache.target.positions);
  cache.sample_tree = KdTree3(cache.samples);
  cache.vertex_tree = KdTree3(cache.target.positions);
  cache.vertex_normals = vertex_normals(cache.target);

  try {
    for (const auto& loop : extract_boundary_loops(cache.target))
      cache.boundary_vertices.insert(cache.boundary_vertices.end(), loop.vertex_ids.begin(),
                                     loop.vertex_ids.end());
  } catch (const MeshError& err) {
    log_warning(std::string("target boundary unusable for the contour term: ") + err.what());
    cache.boundary_vertices.clear();
  }
  if (cache.boundary_vertices.empty())
    log_warning("target mesh has no open boundary; the contour term will contribute zero");
  cache.boundary_points.reserve(cache.boundary_vertices.size());
  for (int v : cache.boundary_vertices) cache.boundary_points.push_back(cache.target.positions[v]);
  cache.boundary_tree = KdTree3(cache.boundary_points);

  if (body) cache.body = std::make_shared<const SdfBody>(*body);
  return cache;
}

Correspondences refresh_correspondences(const std::vector<Vec3>& positions,
                                        const TriMesh& source_topology,
                                        const SurfaceSamples& samples, const RestState& rest,
                                        const TargetCache& cache, int iteration) {
  Correspondences corr;
  corr.refreshed_at = iteration;

  if (samples.count() > 0 && !cache.samples.empty()) {
    auto sample_pos = sample_positions(samples, source_topology, positions);
    corr.surf_x_to_t = cache.sample_tree.nearest_batch(sample_pos);
    KdTree3 x_tree(sample_pos);
    corr.surf_t_to_x = x_tree.nearest_batch(cache.samples);
  }

  if (!rest.boundary_vertices.empty() && !cache.boundary_points.empty()) {
    std::vector<Vec3> x_boundary;
    x_boundary.reserve(rest.boundary_vertices.size());
    for (int v : rest.boundary_vertices) x_boundary.push_back(positions[v]);
    corr.contour_x_to_t = cache.boundary_tree.nearest_batch(x_boundary);
    KdTree3 x_tree(x_boundary);
    corr.contour_t_to_x = x_tree.nearest_batch(cache.boundary_points);
  }

  corr.vert_x_to_t = cache.vertex_tree.nearest_batch(positions);
  {
    KdTree3 x_tree(positions);
    corr.vert_t_to_x = x_tree.nearest_batch(cache.target.positions);
  }

  if (cache.body) corr.body_hits = cache.body->query_batch(positions);
  return corr;
}

// --- chamfer -----------------------------------------------------------------

double chamfer_with_corr(const std::vector<Vec3>& a, const std::vector<Vec3>& b,
                         const std::vector<int>& a_to_b, const std::vector<int>& b_to_a,
                         std::vector<Vec3>* grad_a) {
  const double na = static_cast<double>(a.size());
  const double nb = static_cast<double>(b.size());
  if (grad_a) grad_a->assign(a.size(), Vec3::Zero());

  double forward = 0.0;
  for (std::size_t i = 0; i < a.size(); ++i) {
    const Vec3 d = a[i] - b[a_to_b[i]];
    forward += d.squaredNorm();
    if (grad_a) (*grad_a)[i] += (2.0 / na) * d;
  }
  double backward = 0.0;
  for (std::size_t j = 0; j < b.size(); ++j) {
    const Vec3 d = a[b_to_a[j]] - b[j];
    backward += d.squaredNorm();
    if (grad_a) (*grad_a)[b_to_a[j]] += (2.0 / nb) * d;
  }
  return forward / na + backward / nb;
}

std::pair<double, std::vector<Vec3>> chamfer(const std::vector<Vec3>& a,
                                             const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw NumericalError("chamfer of an empty point set");
  KdTree3 tree_b(b);
  KdTree3 tree_a(a);
  std::vector<int> a_to_b = tree_b.nearest_batch(a);
  std::vector<int> b_to_a = tree_a.nearest_batch(b);
  std::vector<Vec3> grad;
  double value = chamfer_with_corr(a, b, a_to_b, b_to_a, &grad);
  return {value, std::move(grad)};
}

double chamfer_value(const std::vector<Vec3>& a, const std::vector<Vec3>& b) {
  if (a.empty() || b.empty()) throw NumericalError("chamfer of an empty point set");
  KdTree3 tree_b(b);
  KdTree3 tree_a(a);
  std::vector<int> a_to_b = tree_b.nearest_batch(a);
  std::vector<int> b_to_a = tree_a.nearest_batch(b);
  return chamfer_with_corr(a, b, a_to_b, b_to_a, nullptr);
}

// --- normal consistency --------------------------------------------------------

LossTerm normal_loss(const std::vector<Vec3>& positions, const TriMesh& topology,
                     const TargetCache& cache, const Correspondences& corr) {
  const int nv = static_cast<int>(positions.size());
  const int nf = topology.face_count();
  const int nt = cache.target.vertex_count();

  // Unnormalized face area vectors of the deformed mesh.
  std::vector<Vec3> cross(nf);
  parallel_for(nf, [&](long long f) {
    const auto& tri = topology.faces[f];
    cross[f] =
        (positions[tri[1]] - positions[tri[0]]).cross(positions[tri[2]] - positions[tri[0]]);
  });

  std::vector<Vec3> area_vec(nv, Vec3::Zero());
  for (int f = 0; f < nf; ++f)
    for (int k = 0; k < 3; ++k) area_vec[topology.faces[f][k]] += cross[f];

  std::vector<Vec3> nx(nv);
  std::vector<bool> degenerate(nv, false);
  for (int v = 0; v < nv; ++v) {
    double n = area_vec[v].norm();
    if (n > 1e-20) {
      nx[v] = area_vec[v] / n;
    } else {
      nx[v] = Vec3::Zero();  // constant (no gradient); contributes 1 - 0 = 1 per appearance
      degenerate[v] = true;
    }
  }

  LossTerm term;
  term.grad.assign(nv, Vec3::Zero());

  // dL/d(nx_v), accumulated over both directions of the cosine distance.
  std::vector<Vec3> dn(nv, Vec3::Zero());
  double value = 0.0;
  const double inv_x = 1.0 / static_cast<double>(nv);
  for (int v = 0; v < nv; ++v) {
    const Vec3& nt_v = cache.vertex_normals[corr.vert_x_to_t[v]];
    value += inv_x * (1.0 - nx[v].dot(nt_v));
    dn[v] -= inv_x * nt_v;
  }
  const double inv_t = 1.0 / static_cast<double>(nt);
  for (int t = 0; t < nt; ++t) {
    int v = corr.vert_t_to_x[t];
    value += inv_t * (1.0 - cache.vertex_normals[t].dot(nx[v]));
    dn[v] -= inv_t * cache.vertex_normals[t];
  }
  term.value = value;

  // Through the normalization: d(n)/d(area_vec) = (I - n n^T) / |area_vec|.
  std::vector<Vec3> dm(nv, Vec3::Zero());
  parallel_for(nv, [&](long long v) {
    if (degenerate[v]) return;
    double len = area_vec[v].norm();
    dm[v] = (dn[v] - nx[v] * nx[v].dot(dn[v])) / len;
  });

  // Scatter through the cross products: the face's area vector feels every
  // incident vertex's dm.
  for (int f = 0; f < nf; ++f) {
    const auto& tri = topology.faces[f];
    const Vec3 g = dm[tri[0]] + dm[tri[1]] + dm[tri[2]];
    const Vec3 u = positions[tri[1]] - positions[tri[0]];
    const Vec3 w = positions[tri[2]] - positions[tri[0]];
    const Vec3 gu = w.cross(g);  // d<g, u x w>/du
    const Vec3 gw = g.cross(u);  // d<g, u x w>/dw
    term.grad[tri[1]] += gu;
    term.grad[tri[2]] += gw;
    term.grad[tri[0]] -= gu + gw;
  }
  return term;
}

// --- membrane strain -------------------------------------------------------------

namespace {

LossTerm strain_impl(const std::vector<Vec3>& positions, const TriMesh& topology,
                     const RestState& rest, double lame_lambda, double lame_mu, bool parallel) {
  const int nf = topology.face_count();
  std::vector<double> face_value(nf, 0.0);
  std::vector<std::array<Vec3, 3>> face_grad(nf);

  auto per_face = [&](long long f) {
    const auto& tri = topology.faces[f];
    Eigen::Matrix<double, 3, 2> d;
    d.col(0) = positions[tri[1]] - positions[tri[0]];
    d.col(1) = positions[tri[2]] - positions[tri[0]];
    const Eigen::Matrix2d& bm = rest.inverse_material[f];
    const Eigen::Matrix<double, 3, 2> F = d * bm;
    const Eigen::Matrix2d green = 0.5 * (F.transpose() * F - Eigen::Matrix2d::Identity());
    const double tr = green.trace();
    const double area = rest.rest_areas[f];
    face_value[f] = area * (0.5 * lame_lambda * tr * tr + lame_mu * green.squaredNorm());

    // dpsi/dF = A (lambda tr(G) F + 2 mu F G); chain back through D = F Bm^{-1}.
    const Eigen::Matrix<double, 3, 2> dF =
        area * (lame_lambda * tr * F + 2.0 * lame_mu * (F * green));
    const Eigen::Matrix<double, 3, 2> dD = dF * bm.transpose();
    face_grad[f][1] = dD.col(0);
    face_grad[f][2] = dD.col(1);
    face_grad[f][0] = -(dD.col(0) + dD.col(1));
  };
  if (parallel)
    parallel_for(nf, per_face);
  else
    for (long long f = 0; f < nf; ++f) per_face(f);

  LossTerm term;
  term.grad.assign(positions.size(), Vec3::Zero());
  for (int f = 0; f < nf; ++f) {
    term.value += face_value[f];
    for (int k = 0; k < 3; ++k) term.grad[topology.faces[f][k]] += face_grad[f][k];
  }
  return term;
}

}  // namespace

LossTerm strain_stvk(const std::vector<Vec3>& positions, const TriMesh& topology,
                     const RestState& rest, double lame_lambda, double lame_mu) {
  return strain_impl(positions, topology, rest, lame_lambda, lame_mu, true);
}

LossTerm strain_stvk_serial(const std::vector<Vec3>& positions, const TriMesh& topology,
                            const RestState& rest, double lame_lambda, double lame_mu) {
  return strain_impl(positions, topology, rest, lame_lambda, lame_mu, false);
}

// --- bending ------------------------------------------------------------------------

namespace {

LossTerm bending_impl(const std::vector<Vec3>& positions, const RestState& rest, double kappa,
                      BendingMode mode, bool parallel) {
  const int ne = static_cast<int>(rest.edges.size());
  std::vector<double> edge_value(ne, 0.0);
  std::vector<std::array<Vec3, 4>> edge_grad(ne);  // d/d(p0, p1, wing_a, wing_b)
  std::vector<unsigned char> skipped(ne, 0);

  auto per_edge = [&](long long j) {
    const InteriorEdge& hinge = rest.edges[j];
    const Vec3& p0 = positions[hinge.v0];
    const Vec3& p1 = positions[hinge.v1];
    const Vec3& pa = positions[hinge.wing_a];
    const Vec3& pb = positions[hinge.wing_b];
    edge_grad[j] = {Vec3::Zero(), Vec3::Zero(), Vec3::Zero(), Vec3::Zero()};

    const Vec3 e = p1 - p0;
    const Vec3 na_raw = e.cross(pa - p0);
    const Vec3 nb_raw = (p0 - p1).cross(pb - p1);
    const double len_e = e.norm(), len_a = na_raw.norm(), len_b = nb_raw.norm();
    if (len_e < 1e-12 || len_a < 1e-12 || len_b < 1e-12) {
      skipped[j] = 1;
      return;
    }
    const Vec3 eh = e / len_e, na = na_raw / len_a, nb = nb_raw / len_b;
    const double s = eh.dot(na.cross(nb));
    const double c = na.dot(nb);
    const double alpha = std::atan2(s, c);

    const double dev = mode == BendingMode::RestRelative ? alpha - hinge.rest_dihedral : alpha;
    edge_value[j] = 0.5 * kappa * dev * dev;
    const double dE = kappa * dev;  // dE/d(alpha)

    // d(alpha) through the two raw normals; the edge-direction variation
    // cancels because na x nb is parallel to the edge.
    const Vec3 wa = c * nb.cross(eh) - s * nb;
    const Vec3 wb = c * eh.cross(na) - s * na;
    const Vec3 ga = (wa - na * na.dot(wa)) / len_a;
    const Vec3 gb = (wb - nb * nb.dot(wb)) / len_b;

    edge_grad[j][2] = dE * ga.cross(e);
    edge_grad[j][3] = dE * e.cross(gb);
    edge_grad[j][0] = dE * ((p1 - pa).cross(ga) + (pb - p1).cross(gb));
    edge_grad[j][1] = dE * ((pa - p0).cross(ga) + (p0 - pb).cross(gb));
  };
  if (parallel)
    parallel_for(ne, per_edge);
  else
    for (long long j = 0; j < ne; ++j) per_edge(j);

  LossTerm term;
  term.grad.assign(positions.size(), Vec3::Zero());
  for (int j = 0; j < ne; ++j) {
    if (skipped[j]) {
      log_warning_once("bending-degenerate-hinge",
                       "near-degenerate hinge skipped in the bending term");
      continue;
    }
    const InteriorEdge& hinge = rest.edges[j];
    term.value += edge_value[j];
    term.grad[hinge.v0] += edge_grad[j][0];
    term.grad[hinge.v1] += edge_grad[j][1];
    term.grad[hinge.wing_a] += edge_grad[j][2];
    term.grad[hinge.wing_b] += edge_grad[j][3];
  }
  return term;
}

}  // namespace

LossTerm bending(const std::vector<Vec3>& positions, const RestState& rest, double kappa,
                 BendingMode mode) {
  return bending_impl(positions, rest, kappa, mode, true);
}

LossTerm bending_serial(const std::vector<Vec3>& positions, const RestState& rest, double kappa,
                        BendingMode mode) {
  return bending_impl(positions, rest, kappa, mode, false);
}

// --- collision ------------------------------------------------------------------------

LossTerm collision_from_hits(const std::vector<SdfHit>& hits, double epsilon) {
  LossTerm term;
  term.grad.assign(hits.size(), Vec3::Zero());
  for (std::size_t v = 0; v < hits.size(); ++v) {
    const double violation = epsilon - hits[v].signed_distance;
    if (violation <= 0.0) continue;
    term.value += violation * violation * violation;
    term.grad[v] = -3.0 * violation * violation * hits[v].gradient;
  }
  return term;
}

LossTerm collision(const std::vector<Vec3>& positions, const SdfBody& body, double epsilon) {
  return collision_from_hits(body.query_batch(positions), epsilon);
}

// --- combined objective -----------------------------------------------------------------

LossEvaluation total_loss(const std::vector<Vec3>& positions, const TriMesh& topology,
                          const SurfaceSamples& samples, const RestState& rest,
                          const TargetCache& cache, const Correspondences& corr,
                          const LossConfig& cfg, int iteration) {
  LossEvaluation eval;
  eval.grad.assign(positions.size(), Vec3::Zero());

  // Surface Chamfer on the fixed samples; gradients scatter to vertices by
  // barycentric weight.
  if (!corr.surf_x_to_t.empty()) {
    auto sample_pos = sample_positions(samples, topology, positions);
    std::vector<Vec3> sample_grad;
    eval.parts.surface = chamfer_with_corr(sample_pos, cache.samples, corr.surf_x_to_t,
                                           corr.surf_t_to_x, &sample_grad);
    for (int i = 0; i < samples.count(); ++i) {
      const auto& tri = topology.faces[samples.face[i]];
      const Vec3& b = samples.bary[i];
      for (int k = 0; k < 3; ++k) eval.grad[tri[k]] += b[k] * sample_grad[i];
    }
  }

  // Contour Chamfer on boundary vertices.
  if (cfg.contour_enabled) {
    if (!corr.contour_x_to_t.empty()) {
      std::vector<Vec3> x_boundary;
      x_boundary.reserve(rest.boundary_vertices.size());
      for (int v : rest.boundary_vertices) x_boundary.push_back(positions[v]);
      std::vector<Vec3> boundary_grad;
      eval.parts.contour = chamfer_with_corr(x_boundary, cache.boundary_points,
                                             corr.contour_x_to_t, corr.contour_t_to_x,
                                             &boundary_grad);
      for (std::size_t i = 0; i < rest.boundary_vertices.size(); ++i)
        eval.grad[rest.boundary_vertices[i]] += boundary_grad[i];
    } else {
      log_warning_once("contour-missing",
                       "contour term skipped: a side has no usable boundary loops");
    }
  }
  eval.parts.reconstruction = eval.parts.surface + eval.parts.contour;

  double total = eval.parts.surface + eval.parts.contour;

  if (cfg.lambda_n > 0.0) {
    LossTerm n = normal_loss(positions, topology, cache, corr);
    eval.parts.normal = n.value;
    total += cfg.lambda_n * n.value;
    for (std::size_t v = 0; v < positions.size(); ++v)
      eval.grad[v] += cfg.lambda_n * n.grad[v];
  } else {
    eval.parts.normal = normal_loss(positions, topology, cache, corr).value;
  }

  {
    LossTerm s = strain_stvk(positions, topology, rest, cfg.lame_lambda, cfg.lame_mu);
    eval.parts.strain = s.value;
    if (iteration >= cfg.strain_start_iter && cfg.lambda_s > 0.0) {
      total += cfg.lambda_s * s.value;
      for (std::size_t v = 0; v < positions.size(); ++v)
        eval.grad[v] += cfg.lambda_s * s.grad[v];
    }
  }

  {
    LossTerm b = bending(positions, rest, cfg.kappa, cfg.bending_mode);
    eval.parts.bending = b.value;
    if (cfg.lambda_b > 0.0) {
      total += cfg.lambda_b * b.value;
      for (std::size_t v = 0; v < positions.size(); ++v)
        eval.grad[v] += cfg.lambda_b * b.grad[v];
    }
  }

  if (!corr.body_hits.empty()) {
    LossTerm c = collision_from_hits(corr.body_hits, cfg.epsilon_collision);
    eval.parts.collision = c.value;
    if (cfg.lambda_c > 0.0) {
      total += cfg.lambda_c * c.value;
      for (std::size_t v = 0; v < positions.size(); ++v)
        eval.grad[v] += cfg.lambda_c * c.grad[v];
    }
  }

  eval.total = total;
  return eval;
}

}  // namespace phydeformer
