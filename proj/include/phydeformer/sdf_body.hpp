#pragma once

#include <memory>
#include <vector>

#include "phydeformer/trimesh.hpp"

namespace phydeformer {

struct SdfHit {
  double signed_distance = 0.0;
  Vec3 closest_point = Vec3::Zero();
  Vec3 gradient = Vec3::Zero();  // unit; points toward increasing distance
  int face = -1;                 // face carrying the closest point
};

// Closest point on triangle (a, b, c) to p; also reports barycentric
// coordinates when bary is given. Exposed for the brute-force test oracle.
Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                               Vec3* bary = nullptr);

// Signed distance to a triangle mesh. Distances come from an exact
// closest-point query over an AABB tree; the sign comes from the
// angle-weighted pseudonormal of the closest feature (face, edge or
// vertex), so it is valid arbitrarily close to the surface. Open or
// inconsistently wound meshes cannot be signed: construction warns once and
// all distances are reported positive.
class SdfBody {
 public:
  explicit SdfBody(TriMesh body);

  const TriMesh& mesh() const { return mesh_; }
  bool closed() const { return closed_; }

  // Ties (equal distance from several faces) resolve to the smallest face
  // index, matching the brute-force scan exactly.
  SdfHit query(const Vec3& p) const;
  std::vector<SdfHit> query_batch(const std::vector<Vec3>& points) const;
  std::vector<SdfHit> query_batch_serial(const std::vector<Vec3>& points) const;

 private:
  struct BvhNode {
    Vec3 lo, hi;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf face range into face_order_
  };

  int build(int begin, int end);
  Vec3 pseudonormal(int face, const Vec3& bary) const;

  TriMesh mesh_;
  bool closed_ = true;
  std::vector<Vec3> face_normal_;                      // unit
  std::vector<Vec3> vertex_pseudonormal_;              // unit, angle-weighted
  std::vector<std::vector<std::pair<int, Vec3>>> edge_pn_;  // per vertex: (other endpoint, unit pn)
  std::vector<int> face_order_;
  std::vector<BvhNode> nodes_;
  int root_ = -1;
  std::vector<Vec3> face_centroid_;  // build-time only helper, kept small
};

}  // namespace phydeformer
