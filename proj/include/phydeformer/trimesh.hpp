#pragma once

#include <Eigen/Core>
#include <Eigen/Dense>
#include <array>
#include <cstdint>
#include <string>
#include <vector>

namespace phydeformer {

using Vec3 = Eigen::Vector3d;

// Faces smaller than this (in m^2) are treated as degenerate.
inline constexpr double kDegenerateAreaEps = 1e-12;

// Indexed triangle mesh. Positions are in meters, faces are CCW triples of
// vertex indices. Plain data; validation lives in the functions below.
struct TriMesh {
  std::vector<Vec3> positions;
  std::vector<std::array<int, 3>> faces;
  std::string name;

  int vertex_count() const { return static_cast<int>(positions.size()); }
  int face_count() const { return static_cast<int>(faces.size()); }

  Vec3 centroid() const;         // unweighted vertex mean
  double bbox_diagonal() const;  // axis-aligned bounding box diagonal
};

// A closed cycle of boundary vertices, ordered to follow face orientation.
struct BoundaryLoop {
  std::vector<int> vertex_ids;
  double length(const TriMesh& mesh) const;  // closed polyline length
};

// An edge shared by exactly two faces. The direction v0 -> v1 matches the
// winding of face_a (so face_b traverses it v1 -> v0); wing_a / wing_b are
// the respective opposite vertices. rest_dihedral stores the signed hinge
// angle of the mesh the edge list was built from.
struct InteriorEdge {
  int v0 = -1, v1 = -1;
  int face_a = -1, face_b = -1;
  int wing_a = -1, wing_b = -1;
  double rest_dihedral = 0.0;
};

// --- per-face / per-vertex quantities -------------------------------------
// Each quantity has an OpenMP-parallel entry point and a plain serial twin;
// the two are kept bitwise-identical (map writes, serial reductions) and the
// test suite checks that.

std::vector<double> face_areas(const TriMesh& mesh);
std::vector<double> face_areas_serial(const TriMesh& mesh);

std::vector<Vec3> face_normals(const TriMesh& mesh);
std::vector<Vec3> face_normals_serial(const TriMesh& mesh);

// Area-weighted (via summed face area vectors), normalized. Falls back to
// the unweighted mean of face normals when the weighted sum vanishes, and
// errors if that is still zero.
std::vector<Vec3> vertex_normals(const TriMesh& mesh);
std::vector<Vec3> vertex_normals_serial(const TriMesh& mesh);

// --- topology --------------------------------------------------------------

// All boundary loops, each following face orientation, ordered by
// decreasing length. Errors on boundaries that do not close into cycles.
std::vector<BoundaryLoop> extract_boundary_loops(const TriMesh& mesh);

// Edges shared by exactly two consistently wound faces, in deterministic
// (face-scan) order, with rest_dihedral taken from the current positions.
// Edges with mismatched winding or more than two faces are skipped with a
// warning.
std::vector<InteriorEdge> interior_edges(const TriMesh& mesh);

// Signed hinge angle at each edge: 0 when flat, positive when the hinge
// creases away from the face normals (a convex ridge seen from the normal
// side). atan2-based, so stable near +-pi.
double signed_dihedral(const Vec3& p0, const Vec3& p1, const Vec3& wing_a,
                       const Vec3& wing_b);
std::vector<double> dihedral_angles(const std::vector<Vec3>& positions,
                                    const std::vector<InteriorEdge>& edges);
std::vector<double> dihedral_angles_serial(const std::vector<Vec3>& positions,
                                           const std::vector<InteriorEdge>& edges);

// Convenience: edges + angles of a mesh in one call.
std::vector<double> dihedral_angles(const TriMesh& mesh);

// --- validation ------------------------------------------------------------

// Throws MeshError unless the mesh is a clean input for the deformation
// pipeline: in-range indices, no degenerate faces, every edge on at most two
// faces, and consistent winding across shared edges. `what` names the mesh
// in error messages.
void require_clean(const TriMesh& mesh, const std::string& what);

// Scan topology and warn (non-fatally) about non-manifold edges or
// inconsistent winding. Returns true when nothing was flagged.
bool warn_topology(const TriMesh& mesh, const std::string& what);

// --- perturbation ----------------------------------------------------------

// Adds i.i.d. Gaussian noise (std sigma, meters) to every vertex. Each
// vertex draws from its own seeded generator, so the result is identical
// for a given (mesh, sigma, seed) regardless of thread count, and sigma = 0
// returns bit-identical positions.
TriMesh perturb_gaussian(const TriMesh& mesh, double sigma, std::uint64_t seed);

}  // namespace phydeformer
