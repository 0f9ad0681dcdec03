#include "phydeformer/face_gradient.hpp"

#include <vector>

#include "phydeformer/errors.hpp"

namespace phydeformer {

Eigen::SparseMatrix<double> build_face_gradient(const TriMesh& mesh) {
  const int nf = mesh.face_count();
  std::vector<Eigen::Triplet<double>> triplets;
  triplets.reserve(static_cast<std::size_t>(nf) * 9);

  for (int f = 0; f < nf; ++f) {
    const auto& tri = mesh.faces[f];
    const Vec3& p0 = mesh.positions[tri[0]];
    const Vec3& p1 = mesh.positions[tri[1]];
    const Vec3& p2 = mesh.positions[tri[2]];
    const Vec3 cross = (p1 - p0).cross(p2 - p0);
    const double two_area = cross.norm();
    if (two_area <= 2.0 * kDegenerateAreaEps)
      throw MeshError("face " + std::to_string(f) + " is degenerate; gradient undefined");
    const Vec3 n = cross / two_area;

    // Hat-function gradient for vertex k: rotate the opposite edge into the
    // triangle plane and scale by 1 / (2 A).
    const Vec3 edge_opp[3] = {p2 - p1, p0 - p2, p1 - p0};
    for (int k = 0; k < 3; ++k) {
      const Vec3 g = n.cross(edge_opp[k]) / two_area;  // (n x e_k) / (2 A)
      for (int r = 0; r < 3; ++r) triplets.emplace_back(3 * f + r, tri[k], g[r]);
    }
  }

  Eigen::SparseMatrix<double> G(3 * nf, mesh.vertex_count());
  G.setFromTriplets(triplets.begin(), triplets.end());
  G.makeCompressed();
  return G;
}

}  // namespace phydeformer
