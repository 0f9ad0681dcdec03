#pragma once

#include <cstdint>
#include <vector>

#include "phydeformer/trimesh.hpp"

namespace phydeformer {

// Fixed barycentric samples on a mesh. The face assignment and barycentric
// coordinates are drawn once; positions are then linear in the vertex
// positions, so the same samples can be re-evaluated on a deformed copy of
// the mesh (and gradients scatter through the barycentric weights).
struct SurfaceSamples {
  std::vector<int> face;
  std::vector<Vec3> bary;

  int count() const { return static_cast<int>(face.size()); }
};

// Draws round(samples_per_face * |F|) samples distributed over faces in
// proportion to their area (largest-remainder rounding, uniform barycentric
// draws per face). Deterministic in (mesh, samples_per_face, seed) and
// independent of thread count.
SurfaceSamples sample_surface(const TriMesh& mesh, double samples_per_face, std::uint64_t seed);

// Sample positions under the given vertex positions.
std::vector<Vec3> sample_positions(const SurfaceSamples& samples, const TriMesh& topology,
                                   const std::vector<Vec3>& positions);

}  // namespace phydeformer
