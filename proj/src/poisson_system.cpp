#include "phydeformer/poisson_system.hpp"

#include <cstdio>
#include <fstream>
#include <numeric>

#include "phydeformer/errors.hpp"
#include "phydeformer/face_gradient.hpp"

namespace phydeformer {

namespace {

// Union-find over vertices, linked through faces.
struct DisjointSet {
  std::vector<int> parent;
  explicit DisjointSet(int n) : parent(n) { std::iota(parent.begin(), parent.end(), 0); }
  int find(int x) {
    while (parent[x] != x) x = parent[x] = parent[parent[x]];
    return x;
  }
  void unite(int a, int b) {
    a = find(a);
    b = find(b);
    if (a != b) parent[std::max(a, b)] = std::min(a, b);
  }
};

}  // namespace

PoissonSystem::PoissonSystem(const TriMesh& source) {
  require_clean(source, source.name.empty() ? "source mesh" : source.name);
  nv_ = source.vertex_count();
  nf_ = source.face_count();

  G_ = build_face_gradient(source);
  areas_ = face_areas(source);
  row_weights_.resize(3 * nf_);
  for (int f = 0; f < nf_; ++f)
    for (int r = 0; r < 3; ++r) row_weights_[3 * f + r] = areas_[f];

  // Connected components; the first (smallest-index) vertex of each acts as
  // the gauge anchor.
  DisjointSet ds(nv_);
  for (const auto& tri : source.faces) {
    ds.unite(tri[0], tri[1]);
    ds.unite(tri[1], tri[2]);
  }
  component_of_.assign(nv_, -1);
  for (int v = 0; v < nv_; ++v) {
    int root = ds.find(v);
    if (component_of_[root] < 0) {
      component_of_[root] = static_cast<int>(components_.size());
      components_.emplace_back();
    }
    component_of_[v] = component_of_[root];
    components_[component_of_[v]].push_back(v);
  }
  component_centroid_.assign(components_.size(), Vec3::Zero());
  for (std::size_t c = 0; c < components_.size(); ++c) {
    for (int v : components_[c]) component_centroid_[c] += source.positions[v];
    component_centroid_[c] /= static_cast<double>(components_[c].size());
  }

  // Reduced index map: drop each component's anchor (its first vertex).
  full_to_reduced_.assign(nv_, -1);
  std::vector<bool> anchor(nv_, false);
  for (const auto& comp : components_) anchor[comp.front()] = true;
  for (int v = 0; v < nv_; ++v)
    if (!anchor[v]) {
      full_to_reduced_[v] = static_cast<int>(reduced_to_full_.size());
      reduced_to_full_.push_back(v);
    }

  // Normal matrix K = G^T M G, restricted to non-anchor rows/columns.
  Eigen::SparseMatrix<double> K =
      G_.transpose() * row_weights_.asDiagonal() * G_;
  const int nr = static_cast<int>(reduced_to_full_.size());
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(K.nonZeros());
  for (int col = 0; col < K.outerSize(); ++col) {
    int rc = full_to_reduced_[col];
    if (rc < 0) continue;
    for (Eigen::SparseMatrix<double>::InnerIterator it(K, col); it; ++it) {
      int rr = full_to_reduced_[it.row()];
      if (rr < 0) continue;
      triplets.emplace_back(rr, rc, it.value());
    }
  }
  Eigen::SparseMatrix<double> K_red(nr, nr);
  K_red.setFromTriplets(triplets.begin(), triplets.end());
  K_red.makeCompressed();

  ldlt_.compute(K_red);
  ++factorizations_;
  if (nr > 0 && ldlt_.info() != Eigen::Success)
    throw NumericalError("factorization of the gradient normal matrix failed (" +
                         std::to_string(components_.size()) + " components, " +
                         std::to_string(nr) + " free vertices)");
}

JacobianField PoissonSystem::jacobians_from_positions(const std::vector<Vec3>& positions) const {
  if (static_cast<int>(positions.size()) != nv_)
    throw NumericalError("position count does not match the factored mesh");
  Eigen::MatrixXd P(nv_, 3);
  for (int v = 0; v < nv_; ++v) P.row(v) = positions[v].transpose();
  Eigen::MatrixXd B = G_ * P;  // 3|F| x 3, block f holds grad of each coordinate
  JacobianField J(nf_);
  for (int f = 0; f < nf_; ++f) J[f] = B.block<3, 3>(3 * f, 0).transpose();
  return J;
}

std::vector<Vec3> PoissonSystem::solve(const JacobianField& jacobians,
                                       const Vec3& translation) const {
  if (static_cast<int>(jacobians.size()) != nf_)
    throw NumericalError("Jacobian count does not match the factored mesh");
  for (const auto& J : jacobians)
    if (!J.allFinite()) throw NumericalError("non-finite Jacobian entry passed to solve");
  if (!translation.allFinite()) throw NumericalError("non-finite translation passed to solve");

  std::vector<Vec3> X(nv_);
  Eigen::VectorXd b(3 * nf_), rhs_red(reduced_to_full_.size());
  for (int coord = 0; coord < 3; ++coord) {
    // Target gradients of coordinate `coord` are row `coord` of each J.
    for (int f = 0; f < nf_; ++f)
      for (int r = 0; r < 3; ++r) b[3 * f + r] = jacobians[f](coord, r);
    Eigen::VectorXd rhs = G_.transpose() * (row_weights_.asDiagonal() * b);
    for (std::size_t i = 0; i < reduced_to_full_.size(); ++i)
      rhs_red[i] = rhs[reduced_to_full_[i]];
    Eigen::VectorXd y_red = ldlt_.solve(rhs_red);

    // Scatter with anchors at zero, then recentre each component on its
    // source centroid and add the global translation.
    Eigen::VectorXd y = Eigen::VectorXd::Zero(nv_);
    for (std::size_t i = 0; i < reduced_to_full_.size(); ++i) y[reduced_to_full_[i]] = y_red[i];
    for (std::size_t c = 0; c < components_.size(); ++c) {
      double mean = 0.0;
      for (int v : components_[c]) mean += y[v];
      mean /= static_cast<double>(components_[c].size());
      double offset = component_centroid_[c][coord] - mean + translation[coord];
      for (int v : components_[c]) X[v][coord] = y[v] + offset;
    }
  }
  ++solves_;
  return X;
}

void PoissonSystem::adjoint(const std::vector<Vec3>& position_grad, JacobianField& jacobian_grad,
                            Vec3& translation_grad) const {
  if (static_cast<int>(position_grad.size()) != nv_)
    throw NumericalError("gradient size does not match the factored mesh");

  jacobian_grad.assign(nf_, Eigen::Matrix3d::Zero());
  translation_grad.setZero();

  Eigen::VectorXd w(nv_), w_red(reduced_to_full_.size());
  for (int coord = 0; coord < 3; ++coord) {
    for (int v = 0; v < nv_; ++v) w[v] = position_grad[v][coord];
    translation_grad[coord] = w.sum();

    // Transpose of the recentring step: remove each component's mean.
    for (const auto& comp : components_) {
      double mean = 0.0;
      for (int v : comp) mean += w[v];
      mean /= static_cast<double>(comp.size());
      for (int v : comp) w[v] -= mean;
    }
    for (std::size_t i = 0; i < reduced_to_full_.size(); ++i)
      w_red[i] = w[reduced_to_full_[i]];
    Eigen::VectorXd z_red = ldlt_.solve(w_red);  // K is symmetric
    Eigen::VectorXd z = Eigen::VectorXd::Zero(nv_);
    for (std::size_t i = 0; i < reduced_to_full_.size(); ++i) z[reduced_to_full_[i]] = z_red[i];

    Eigen::VectorXd u = row_weights_.asDiagonal() * (G_ * z);
    for (int f = 0; f < nf_; ++f)
      for (int r = 0; r < 3; ++r) jacobian_grad[f](coord, r) = u[3 * f + r];
  }
  ++solves_;
}

void write_jacobian_dump(const JacobianField& jacobians, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) throw MeshError("cannot open '" + path + "' for writing");
  for (const auto& J : jacobians) {
    double row_major[9];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) row_major[3 * r + c] = J(r, c);
    out.write(reinterpret_cast<const char*>(row_major), sizeof row_major);
  }
  if (!out) throw MeshError("failed while writing '" + path + "'");
}

}  // namespace phydeformer
