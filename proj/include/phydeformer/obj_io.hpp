#pragma once

#include <string>

#include "phydeformer/trimesh.hpp"

namespace phydeformer {

// Reads an ASCII OBJ. Only `v` and `f` records contribute; `vt`, `vn`,
// groups, materials and comments are ignored. Faces must be triangles with
// 1-based indices (negative or out-of-range indices, quads and degenerate
// triangles are errors naming the line). Non-manifold topology loads with a
// warning. `scale` multiplies every coordinate (unit conversion).
TriMesh load_obj(const std::string& path, double scale = 1.0);

// Writes vertices then faces, coordinates with 9 significant digits,
// indices 1-based. Layout is fixed so identical meshes produce identical
// bytes.
void save_obj(const TriMesh& mesh, const std::string& path);

}  // namespace phydeformer
