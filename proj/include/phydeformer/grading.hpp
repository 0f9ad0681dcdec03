#pragma once

#include <string>
#include <utility>
#include <vector>

#include "phydeformer/trimesh.hpp"

namespace phydeformer {

// Axis the garment is graded along: a point on the axis plus a unit
// direction.
struct GradingAxis {
  Vec3 origin = Vec3::Zero();
  Vec3 direction = Vec3::UnitZ();
};

// One boundary loop reduced to the numbers grading works with.
struct ContourMeasure {
  BoundaryLoop loop;
  double circumference = 0.0;  // closed polyline length
  Vec3 centroid = Vec3::Zero();
  double axial_coord = 0.0;  // centroid projected onto the axis
};

// Piecewise-linear scaling knot at one axial station.
struct GradingKnot {
  double axial_coord = 0.0;
  double axial_scale = 1.0;   // stretch applied to the segment starting here
  double radial_scale = 1.0;  // in-plane scale, interpolated between knots
};

// Axis plus knots sorted by axial_coord. Radial scale interpolates linearly
// between knots (clamped outside); the axial map integrates axial_scale
// from the first knot, whose image is anchored at
// axial_offset + axial_scale * axial_coord. With the default offset of zero
// a single knot (a, s, s) is a uniform scale about the axis origin;
// compute_grading sets the offset so the first contour lands exactly on its
// paired target station. All scales must stay positive, which keeps the map
// invertible.
struct GradingMap {
  GradingAxis axis;
  std::vector<GradingKnot> knots;
  double axial_offset = 0.0;

  double axial_image(double a) const;   // mapped axial coordinate
  double radial_scale_at(double a) const;
};

// Dominant principal axis of the vertex cloud (largest covariance
// eigenvalue), with a deterministic sign: the component of largest
// magnitude is made positive. Origin is the vertex centroid.
GradingAxis principal_axis(const TriMesh& mesh);

// One measure per boundary loop. Errors with "closed mesh, grading skipped"
// when the mesh has no boundary.
std::vector<ContourMeasure> measure_contours(const TriMesh& mesh, const GradingAxis& axis);

// Pairs source and target contours by ascending axial rank. With unequal
// counts the larger side is subsampled proportionally by rank and the
// leftover contours are reported with a warning. Result is (source index,
// target index) pairs, deterministic and independent of input list order.
std::vector<std::pair<int, int>> pair_contours(const std::vector<ContourMeasure>& source,
                                               const std::vector<ContourMeasure>& target);

// Builds the knot list: one knot per pair at the source axial station,
// radial scale = circumference ratio, axial scale = ratio of consecutive
// target and source axial gaps (last knot repeats the previous scale).
// Pairs whose source stations coincide are merged with a warning.
GradingMap compute_grading(const std::vector<std::pair<int, int>>& pairs,
                           const std::vector<ContourMeasure>& source,
                           const std::vector<ContourMeasure>& target, const GradingAxis& axis);

// Applies the map: each vertex is split into axial + radial parts about the
// axis, the axial part goes through the integrated axial map and the radial
// part is scaled. Topology is untouched.
TriMesh apply_grading(const TriMesh& mesh, const GradingMap& map);

// Plain-text round-trippable serialization.
void save_grading(const GradingMap& map, const std::string& path);
GradingMap load_grading(const std::string& path);

}  // namespace phydeformer
