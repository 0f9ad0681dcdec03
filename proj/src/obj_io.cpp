#include "phydeformer/obj_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "phydeformer/errors.hpp"
#include "phydeformer/log.hpp"

namespace phydeformer {

namespace {

[[noreturn]] void parse_fail(const std::string& path, int line, const std::string& why) {
  throw MeshError(path + ":" + std::to_string(line) + ": " + why);
}

// "7", "7/2", "7//3", "7/2/3" -> vertex index 7. Anything else is an error.
int parse_face_vertex(const std::string& token, const std::string& path, int line) {
  std::size_t slash = token.find('/');
  std::string head = slash == std::string::npos ? token : token.substr(0, slash);
  if (head.empty()) parse_fail(path, line, "malformed face token '" + token + "'");
  try {
    std::size_t used = 0;
    int idx = std::stoi(head, &used);
    if (used != head.size()) parse_fail(path, line, "malformed face token '" + token + "'");
    return idx;
  } catch (const std::logic_error&) {
    parse_fail(path, line, "malformed face token '" + token + "'");
  }
}

}  // namespace

TriMesh load_obj(const std::string& path, double scale) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open mesh file '" + path + "'");

  TriMesh mesh;
  mesh.name = std::filesystem::path(path).stem().string();

  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    std::istringstream ss(line);
    std::string tag;
    if (!(ss >> tag) || tag[0] == '#') continue;

    if (tag == "v") {
      double x, y, z;
      if (!(ss >> x >> y >> z)) parse_fail(path, line_no, "vertex needs three coordinates");
      mesh.positions.emplace_back(scale * x, scale * y, scale * z);
    } else if (tag == "f") {
      std::vector<std::string> tokens;
      std::string tok;
      while (ss >> tok) tokens.push_back(tok);
      if (tokens.size() != 3)
        parse_fail(path, line_no,
                   "face has " + std::to_string(tokens.size()) + " vertices; only triangles are supported");
      std::array<int, 3> tri{};
      for (int k = 0; k < 3; ++k) {
        int idx = parse_face_vertex(tokens[k], path, line_no);
        if (idx < 0) idx = static_cast<int>(mesh.positions.size()) + idx + 1;  // OBJ relative index
        if (idx < 1 || idx > static_cast<int>(mesh.positions.size()))
          parse_fail(path, line_no, "face index " + tokens[k] + " is out of range");
        tri[k] = idx - 1;
      }
      if (tri[0] == tri[1] || tri[1] == tri[2] || tri[0] == tri[2])
        parse_fail(path, line_no, "face repeats a vertex");
      mesh.faces.push_back(tri);
    }
    // vt / vn / o / g / s / usemtl / mtllib / l / p: ignored.
  }

  if (mesh.positions.empty()) throw MeshError(path + ": no vertices found");

  // Degenerate faces are rejected at load so downstream code can rely on
  // positive areas.
  auto areas = face_areas(mesh);
  for (int f = 0; f < mesh.face_count(); ++f)
    if (areas[f] <= kDegenerateAreaEps)
      throw MeshError(path + ": face " + std::to_string(f) +
                      " is degenerate (area <= 1e-12 m^2)");

  warn_topology(mesh, path);
  return mesh;
}

void save_obj(const TriMesh& mesh, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot open '" + path + "' for writing");
  char buf[128];
  for (const Vec3& p : mesh.positions) {
    std::snprintf(buf, sizeof buf, "v %.9g %.9g %.9g\n", p.x(), p.y(), p.z());
    out << buf;
  }
  for (const auto& tri : mesh.faces) {
    std::snprintf(buf, sizeof buf, "f %d %d %d\n", tri[0] + 1, tri[1] + 1, tri[2] + 1);
    out << buf;
  }
  if (!out) throw MeshError("failed while writing '" + path + "'");
}

}  // namespace phydeformer
