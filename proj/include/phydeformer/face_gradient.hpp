#pragma once

#include <Eigen/SparseCore>

#include "phydeformer/trimesh.hpp"

namespace phydeformer {

// Sparse operator G (3|F| x |V|) taking a per-vertex scalar field to its
// per-face 3-d gradient under linear interpolation: rows [3f, 3f+3) hold
// grad_f = sum_k f(v_k) * (n x e_k) / (2 A_f), where e_k is the edge
// opposite vertex k in winding order. Exact for fields that are affine on a
// face; constant fields map to zero.
Eigen::SparseMatrix<double> build_face_gradient(const TriMesh& mesh);

}  // namespace phydeformer
