#pragma once

#include <Eigen/SparseCholesky>
#include <Eigen/SparseCore>
#include <vector>

#include "phydeformer/trimesh.hpp"

namespace phydeformer {

// One 3x3 deformation gradient per face, mapping source tangent directions
// (plus the source normal) into deformed space.
using JacobianField = std::vector<Eigen::Matrix3d>;

// Area-weighted least-squares reconstruction of vertex positions from a
// per-face Jacobian field: minimizes sum_f A_f ||grad_f(X) - J_f^T||^2.
// The normal equations G^T M G are factored once (sparse LDLT) at
// construction; every solve and every adjoint reuses that factorization.
//
// The system is rank-deficient by one translation per connected component.
// The gauge is fixed by pinning one vertex per component during the solve
// and then recentring each component on its source centroid; the global
// translation parameter is added on top. solve() and adjoint() are exact
// transposes of each other, which the test suite checks directly.
class PoissonSystem {
 public:
  explicit PoissonSystem(const TriMesh& source);

  int vertex_count() const { return nv_; }
  int face_count() const { return nf_; }
  int component_count() const { return static_cast<int>(components_.size()); }
  const Eigen::SparseMatrix<double>& gradient_operator() const { return G_; }
  const std::vector<double>& areas() const { return areas_; }

  // Per-face Jacobians of the map source -> positions: J_f = (G_f X)^T.
  // For positions equal to the source of a planar face this is the identity
  // on the tangent plane (and zero along the normal).
  JacobianField jacobians_from_positions(const std::vector<Vec3>& positions) const;

  // Least-squares positions for a Jacobian field, plus a global translation.
  // Errors on non-finite input.
  std::vector<Vec3> solve(const JacobianField& jacobians, const Vec3& translation) const;

  // Exact adjoint of solve(): pulls a gradient w.r.t. positions back to
  // gradients w.r.t. the Jacobian entries and the translation.
  void adjoint(const std::vector<Vec3>& position_grad, JacobianField& jacobian_grad,
               Vec3& translation_grad) const;

  // Factorization / solve counters (each solve() and adjoint() counts one).
  long factorization_count() const { return factorizations_; }
  long solve_count() const { return solves_; }

 private:
  int nv_ = 0, nf_ = 0;
  Eigen::SparseMatrix<double> G_;      // 3|F| x |V|
  std::vector<double> areas_;          // per face
  Eigen::VectorXd row_weights_;        // per gradient row (area repeated x3)
  Eigen::SimplicialLDLT<Eigen::SparseMatrix<double>> ldlt_;  // reduced normal matrix

  std::vector<int> component_of_;           // per vertex
  std::vector<std::vector<int>> components_;  // vertex lists, anchor = first
  std::vector<Vec3> component_centroid_;    // source centroid per component
  std::vector<int> full_to_reduced_;        // -1 at anchors
  std::vector<int> reduced_to_full_;

  long factorizations_ = 0;
  mutable long solves_ = 0;
};

// Raw binary dump of a Jacobian field (|F| x 9 doubles, row-major,
// little-endian) for external inspection.
void write_jacobian_dump(const JacobianField& jacobians, const std::string& path);

}  // namespace phydeformer
