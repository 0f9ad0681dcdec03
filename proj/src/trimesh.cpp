#include "phydeformer/trimesh.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <random>
#include <unordered_map>

#include "phydeformer/errors.hpp"
#include "phydeformer/log.hpp"
#include "phydeformer/parallel.hpp"

namespace phydeformer {

namespace {

inline std::uint64_t directed_key(int a, int b) {
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint64_t>(static_cast<std::uint32_t>(b));
}

inline Vec3 face_cross(const TriMesh& m, int f) {
  const auto& tri = m.faces[f];
  const Vec3& a = m.positions[tri[0]];
  const Vec3& b = m.positions[tri[1]];
  const Vec3& c = m.positions[tri[2]];
  return (b - a).cross(c - a);
}

inline std::uint64_t splitmix64(std::uint64_t x) {
  x += 0x9E3779B97F4A7C15ull;
  x = (x ^ (x >> 30)) * 0xBF58476D1CE4E5B9ull;
  x = (x ^ (x >> 27)) * 0x94D049BB133111EBull;
  return x ^ (x >> 31);
}

// Shared scan used by require_clean / warn_topology. Returns human-readable
// problems, at most one per condition kind to keep messages short.
std::vector<std::string> topology_problems(const TriMesh& m) {
  std::vector<std::string> out;
  const int nv = m.vertex_count();
  bool bad_index = false, degenerate = false;
  for (int f = 0; f < m.face_count() && !bad_index; ++f) {
    for (int k = 0; k < 3; ++k) {
      int v = m.faces[f][k];
      if (v < 0 || v >= nv) {
        out.push_back("face " + std::to_string(f) + " references vertex " +
                      std::to_string(v) + " outside [0, " + std::to_string(nv) + ")");
        bad_index = true;
        break;
      }
    }
  }
  if (bad_index) return out;  // cannot scan edges safely

  for (int f = 0; f < m.face_count(); ++f) {
    if (0.5 * face_cross(m, f).norm() <= kDegenerateAreaEps) {
      out.push_back("face " + std::to_string(f) + " is degenerate (area <= 1e-12 m^2)");
      degenerate = true;
      break;
    }
  }
  (void)degenerate;

  // Count directed edges; a repeated directed edge means either a
  // non-manifold fan or two faces wound the same way across an edge.
  std::unordered_map<std::uint64_t, int> directed;
  directed.reserve(m.faces.size() * 4);
  for (const auto& tri : m.faces)
    for (int k = 0; k < 3; ++k) directed[directed_key(tri[k], tri[(k + 1) % 3])]++;

  for (const auto& tri : m.faces) {
    for (int k = 0; k < 3; ++k) {
      int a = tri[k], b = tri[(k + 1) % 3];
      int same = directed[directed_key(a, b)];
      int opposite = 0;
      if (auto it = directed.find(directed_key(b, a)); it != directed.end())
        opposite = it->second;
      if (same > 1) {
        out.push_back("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                      ") appears with the same winding in " + std::to_string(same) +
                      " faces (non-manifold or inconsistently wound)");
        return out;
      }
      if (same + opposite > 2) {
        out.push_back("edge (" + std::to_string(a) + ", " + std::to_string(b) +
                      ") is shared by more than two faces");
        return out;
      }
    }
  }
  return out;
}

}  // namespace

Vec3 TriMesh::centroid() const {
  Vec3 c = Vec3::Zero();
  if (positions.empty()) return c;
  for (const Vec3& p : positions) c += p;
  return c / static_cast<double>(positions.size());
}

double TriMesh::bbox_diagonal() const {
  if (positions.empty()) return 0.0;
  Vec3 lo = positions[0], hi = positions[0];
  for (const Vec3& p : positions) {
    lo = lo.cwiseMin(p);
    hi = hi.cwiseMax(p);
  }
  return (hi - lo).norm();
}

double BoundaryLoop::length(const TriMesh& mesh) const {
  double len = 0.0;
  const int n = static_cast<int>(vertex_ids.size());
  for (int i = 0; i < n; ++i) {
    const Vec3& a = mesh.positions[vertex_ids[i]];
    const Vec3& b = mesh.positions[vertex_ids[(i + 1) % n]];
    len += (b - a).norm();
  }
  return len;
}

// --- per-face / per-vertex quantities ---------------------------------------

std::vector<double> face_areas_serial(const TriMesh& mesh) {
  std::vector<double> areas(mesh.face_count());
  for (int f = 0; f < mesh.face_count(); ++f) areas[f] = 0.5 * face_cross(mesh, f).norm();
  return areas;
}

std::vector<double> face_areas(const TriMesh& mesh) {
  std::vector<double> areas(mesh.face_count());
  parallel_for(mesh.face_count(),
               [&](long long f) { areas[f] = 0.5 * face_cross(mesh, static_cast<int>(f)).norm(); });
  return areas;
}

std::vector<Vec3> face_normals_serial(const TriMesh& mesh) {
  std::vector<Vec3> normals(mesh.face_count());
  for (int f = 0; f < mesh.face_count(); ++f) {
    Vec3 c = face_cross(mesh, f);
    double n = c.norm();
    normals[f] = n > 0.0 ? Vec3(c / n) : Vec3::Zero();
  }
  return normals;
}

std::vector<Vec3> face_normals(const TriMesh& mesh) {
  std::vector<Vec3> normals(mesh.face_count());
  parallel_for(mesh.face_count(), [&](long long f) {
    Vec3 c = face_cross(mesh, static_cast<int>(f));
    double n = c.norm();
    normals[f] = n > 0.0 ? Vec3(c / n) : Vec3::Zero();
  });
  return normals;
}

namespace {

std::vector<Vec3> vertex_normals_impl(const TriMesh& mesh, bool parallel) {
  const int nv = mesh.vertex_count();
  const int nf = mesh.face_count();
  // Phase 1 (parallel map): per-face area vectors and unit normals.
  std::vector<Vec3> cross(nf), unit(nf);
  auto fill = [&](long long f) {
    Vec3 c = face_cross(mesh, static_cast<int>(f));
    cross[f] = c;
    double n = c.norm();
    unit[f] = n > 0.0 ? Vec3(c / n) : Vec3::Zero();
  };
  if (parallel)
    parallel_for(nf, fill);
  else
    for (long long f = 0; f < nf; ++f) fill(f);

  // Phase 2 (serial reduction): accumulate per vertex in face order.
  std::vector<Vec3> weighted(nv, Vec3::Zero()), fallback(nv, Vec3::Zero());
  for (int f = 0; f < nf; ++f) {
    for (int k = 0; k < 3; ++k) {
      int v = mesh.faces[f][k];
      weighted[v] += 0.5 * cross[f];
      fallback[v] += unit[f];
    }
  }

  std::vector<Vec3> normals(nv);
  auto normalize = [&](long long v) {
    double wn = weighted[v].norm();
    if (wn > 1e-20) {
      normals[v] = weighted[v] / wn;
      return;
    }
    double fn = fallback[v].norm();
    if (fn > 1e-20) {
      normals[v] = fallback[v] / fn;
      return;
    }
    normals[v] = Vec3(std::numeric_limits<double>::quiet_NaN(),
                      std::numeric_limits<double>::quiet_NaN(),
                      std::numeric_limits<double>::quiet_NaN());
  };
  if (parallel)
    parallel_for(nv, normalize);
  else
    for (long long v = 0; v < nv; ++v) normalize(v);

  for (int v = 0; v < nv; ++v)
    if (!normals[v].allFinite())
      throw MeshError("vertex " + std::to_string(v) +
                      " has a zero-length normal even after the unweighted fallback");
  return normals;
}

}  // namespace

std::vector<Vec3> vertex_normals(const TriMesh& mesh) { return vertex_normals_impl(mesh, true); }
std::vector<Vec3> vertex_normals_serial(const TriMesh& mesh) {
  return vertex_normals_impl(mesh, false);
}

// --- topology ----------------------------------------------------------------

std::vector<BoundaryLoop> extract_boundary_loops(const TriMesh& mesh) {
  // Directed edge census.
  std::unordered_map<std::uint64_t, int> directed;
  directed.reserve(mesh.faces.size() * 4);
  for (const auto& tri : mesh.faces)
    for (int k = 0; k < 3; ++k) {
      int a = tri[k], b = tri[(k + 1) % 3];
      if (++directed[directed_key(a, b)] > 1)
        throw MeshError("cannot trace boundary: edge (" + std::to_string(a) + ", " +
                        std::to_string(b) + ") repeats with the same winding");
    }

  // Boundary halfedges in face-scan order (deterministic), plus a
  // start-vertex index for the walk.
  std::vector<std::pair<int, int>> halfedges;
  std::unordered_map<int, int> outgoing;  // start vertex -> index into halfedges
  for (const auto& tri : mesh.faces)
    for (int k = 0; k < 3; ++k) {
      int a = tri[k], b = tri[(k + 1) % 3];
      if (directed.count(directed_key(b, a))) continue;  // interior edge
      if (outgoing.count(a))
        throw MeshError("non-manifold boundary at vertex " + std::to_string(a) +
                        " (two boundary edges leave it)");
      outgoing[a] = static_cast<int>(halfedges.size());
      halfedges.emplace_back(a, b);
    }

  std::vector<bool> visited(halfedges.size(), false);
  std::vector<BoundaryLoop> loops;
  for (std::size_t h = 0; h < halfedges.size(); ++h) {
    if (visited[h]) continue;
    BoundaryLoop loop;
    int start = halfedges[h].first;
    int cur_he = static_cast<int>(h);
    while (true) {
      visited[cur_he] = true;
      loop.vertex_ids.push_back(halfedges[cur_he].first);
      int next_v = halfedges[cur_he].second;
      if (next_v == start) break;
      auto it = outgoing.find(next_v);
      if (it == outgoing.end())
        throw MeshError("boundary chain does not close: no boundary edge leaves vertex " +
                        std::to_string(next_v));
      cur_he = it->second;
    }
    loops.push_back(std::move(loop));
  }

  std::stable_sort(loops.begin(), loops.end(), [&](const BoundaryLoop& a, const BoundaryLoop& b) {
    return a.length(mesh) > b.length(mesh);
  });
  return loops;
}

std::vector<InteriorEdge> interior_edges(const TriMesh& mesh) {
  struct Occurrences {
    int count = 0;
    int face[2] = {-1, -1};
    int from[2] = {-1, -1};  // directed start vertex of each occurrence
    int wing[2] = {-1, -1};
  };
  std::unordered_map<std::uint64_t, Occurrences> edges;
  edges.reserve(mesh.faces.size() * 2);
  std::vector<std::uint64_t> order;  // canonical keys by first appearance
  order.reserve(mesh.faces.size() * 2);

  for (int f = 0; f < mesh.face_count(); ++f) {
    const auto& tri = mesh.faces[f];
    for (int k = 0; k < 3; ++k) {
      int a = tri[k], b = tri[(k + 1) % 3], w = tri[(k + 2) % 3];
      std::uint64_t key = directed_key(std::min(a, b), std::max(a, b));
      auto [it, fresh] = edges.try_emplace(key);
      if (fresh) order.push_back(key);
      Occurrences& occ = it->second;
      if (occ.count < 2) {
        occ.face[occ.count] = f;
        occ.from[occ.count] = a;
        occ.wing[occ.count] = w;
      }
      occ.count++;
    }
  }

  std::vector<InteriorEdge> result;
  result.reserve(order.size());
  for (std::uint64_t key : order) {
    const Occurrences& occ = edges[key];
    if (occ.count == 1) continue;  // boundary edge
    if (occ.count > 2) {
      log_warning("edge shared by " + std::to_string(occ.count) +
                  " faces skipped when building hinge list");
      continue;
    }
    if (occ.from[0] == occ.from[1]) {
      log_warning("edge (" + std::to_string(occ.from[0]) + ", ...) has inconsistent winding; "
                  "hinge skipped");
      continue;
    }
    InteriorEdge e;
    e.v0 = occ.from[0];
    e.v1 = occ.from[1];  // opposite direction, so this is the other endpoint
    e.face_a = occ.face[0];
    e.face_b = occ.face[1];
    e.wing_a = occ.wing[0];
    e.wing_b = occ.wing[1];
    e.rest_dihedral = signed_dihedral(mesh.positions[e.v0], mesh.positions[e.v1],
                                      mesh.positions[e.wing_a], mesh.positions[e.wing_b]);
    result.push_back(e);
  }
  return result;
}

double signed_dihedral(const Vec3& p0, const Vec3& p1, const Vec3& wing_a, const Vec3& wing_b) {
  const Vec3 e = p1 - p0;
  const Vec3 na = e.cross(wing_a - p0).normalized();
  const Vec3 nb = (p0 - p1).cross(wing_b - p1).normalized();
  const Vec3 eh = e.normalized();
  return std::atan2(eh.dot(na.cross(nb)), na.dot(nb));
}

std::vector<double> dihedral_angles_serial(const std::vector<Vec3>& positions,
                                           const std::vector<InteriorEdge>& edges) {
  std::vector<double> angles(edges.size());
  for (std::size_t j = 0; j < edges.size(); ++j) {
    const InteriorEdge& e = edges[j];
    angles[j] = signed_dihedral(positions[e.v0], positions[e.v1], positions[e.wing_a],
                                positions[e.wing_b]);
  }
  return angles;
}

std::vector<double> dihedral_angles(const std::vector<Vec3>& positions,
                                    const std::vector<InteriorEdge>& edges) {
  std::vector<double> angles(edges.size());
  parallel_for(static_cast<long long>(edges.size()), [&](long long j) {
    const InteriorEdge& e = edges[j];
    angles[j] = signed_dihedral(positions[e.v0], positions[e.v1], positions[e.wing_a],
                                positions[e.wing_b]);
  });
  return angles;
}

std::vector<double> dihedral_angles(const TriMesh& mesh) {
  return dihedral_angles(mesh.positions, interior_edges(mesh));
}

// --- validation ----------------------------------------------------------------

void require_clean(const TriMesh& mesh, const std::string& what) {
  if (mesh.vertex_count() < 3 || mesh.face_count() < 1)
    throw MeshError(what + ": needs at least one triangle");
  auto problems = topology_problems(mesh);
  if (!problems.empty()) throw MeshError(what + ": " + problems.front());
}

bool warn_topology(const TriMesh& mesh, const std::string& what) {
  auto problems = topology_problems(mesh);
  for (const auto& p : problems) log_warning(what + ": " + p);
  return problems.empty();
}

// --- perturbation ----------------------------------------------------------------

TriMesh perturb_gaussian(const TriMesh& mesh, double sigma, std::uint64_t seed) {
  if (sigma < 0.0) throw ConfigError("perturbation sigma must be >= 0");
  TriMesh out = mesh;
  if (sigma == 0.0) return out;
  parallel_for(mesh.vertex_count(), [&](long long v) {
    // One generator per vertex keeps the result independent of thread count.
    std::mt19937_64 eng(splitmix64(seed ^ splitmix64(static_cast<std::uint64_t>(v))));
    std::normal_distribution<double> gauss(0.0, sigma);
    double dx = gauss(eng), dy = gauss(eng), dz = gauss(eng);
    out.positions[v] += Vec3(dx, dy, dz);
  });
  return out;
}

}  // namespace phydeformer
