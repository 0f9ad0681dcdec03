#include "phydeformer/grading.hpp"

#include <Eigen/Eigenvalues>
#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <numeric>
#include <sstream>

#include "phydeformer/errors.hpp"
#include "phydeformer/log.hpp"

namespace phydeformer {

double GradingMap::axial_image(double a) const {
  if (knots.empty()) return a;
  // Baseline anchor axial_scale * station makes a single knot a uniform
  // scale about the axis origin; axial_offset shifts the whole image so a
  // computed map lands the first contour on its paired target station.
  double image = axial_offset + knots.front().axial_scale * knots.front().axial_coord;
  if (a <= knots.front().axial_coord)
    return image + knots.front().axial_scale * (a - knots.front().axial_coord);
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    if (a <= knots[k + 1].axial_coord)
      return image + knots[k].axial_scale * (a - knots[k].axial_coord);
    image += knots[k].axial_scale * (knots[k + 1].axial_coord - knots[k].axial_coord);
  }
  return image + knots.back().axial_scale * (a - knots.back().axial_coord);
}

double GradingMap::radial_scale_at(double a) const {
  if (knots.empty()) return 1.0;
  if (a <= knots.front().axial_coord) return knots.front().radial_scale;
  for (std::size_t k = 0; k + 1 < knots.size(); ++k) {
    if (a <= knots[k + 1].axial_coord) {
      double t = (a - knots[k].axial_coord) / (knots[k + 1].axial_coord - knots[k].axial_coord);
      return (1.0 - t) * knots[k].radial_scale + t * knots[k + 1].radial_scale;
    }
  }
  return knots.back().radial_scale;
}

GradingAxis principal_axis(const TriMesh& mesh) {
  if (mesh.positions.empty()) throw MeshError("cannot fit an axis to an empty mesh");
  GradingAxis axis;
  axis.origin = mesh.centroid();
  Eigen::Matrix3d cov = Eigen::Matrix3d::Zero();
  for (const Vec3& p : mesh.positions) {
    Vec3 d = p - axis.origin;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Eigen::Matrix3d> eig(cov);
  Vec3 dir = eig.eigenvectors().col(2);  // eigenvalues ascend; take the largest
  int max_comp = 0;
  dir.cwiseAbs().maxCoeff(&max_comp);
  if (dir[max_comp] < 0.0) dir = -dir;
  axis.direction = dir.normalized();
  return axis;
}

std::vector<ContourMeasure> measure_contours(const TriMesh& mesh, const GradingAxis& axis) {
  auto loops = extract_boundary_loops(mesh);
  if (loops.empty())
    throw MeshError((mesh.name.empty() ? std::string("mesh") : mesh.name) +
                    ": closed mesh, grading skipped");
  std::vector<ContourMeasure> measures;
  measures.reserve(loops.size());
  for (auto& loop : loops) {
    ContourMeasure m;
    m.circumference = loop.length(mesh);
    m.centroid = Vec3::Zero();
    for (int v : loop.vertex_ids) m.centroid += mesh.positions[v];
    m.centroid /= static_cast<double>(loop.vertex_ids.size());
    m.axial_coord = (m.centroid - axis.origin).dot(axis.direction);
    m.loop = std::move(loop);
    measures.push_back(std::move(m));
  }
  return measures;
}

namespace {

// Indices sorted by axial station; circumference breaks exact ties so the
// order is a property of the measures, not of the input order.
std::vector<int> axial_rank(const std::vector<ContourMeasure>& ms) {
  std::vector<int> idx(ms.size());
  std::iota(idx.begin(), idx.end(), 0);
  std::sort(idx.begin(), idx.end(), [&](int a, int b) {
    if (ms[a].axial_coord != ms[b].axial_coord) return ms[a].axial_coord < ms[b].axial_coord;
    return ms[a].circumference < ms[b].circumference;
  });
  return idx;
}

}  // namespace

std::vector<std::pair<int, int>> pair_contours(const std::vector<ContourMeasure>& source,
                                               const std::vector<ContourMeasure>& target) {
  if (source.empty() || target.empty())
    throw MeshError("cannot pair contours: a side has none");
  auto src_rank = axial_rank(source);
  auto tgt_rank = axial_rank(target);
  const int ns = static_cast<int>(src_rank.size());
  const int nt = static_cast<int>(tgt_rank.size());

  std::vector<std::pair<int, int>> pairs;
  auto rank_map = [](int r, int from, int to) {
    // Proportional rank: endpoints map to endpoints.
    if (from <= 1) return 0;
    return static_cast<int>(std::llround(static_cast<double>(r) * (to - 1) / (from - 1)));
  };

  if (ns <= nt) {
    std::vector<bool> used(nt, false);
    for (int r = 0; r < ns; ++r) {
      int t = rank_map(r, ns, nt);
      pairs.emplace_back(src_rank[r], tgt_rank[t]);
      used[t] = true;
    }
    for (int t = 0; t < nt; ++t)
      if (!used[t])
        log_warning("target contour at axial " +
                    std::to_string(target[tgt_rank[t]].axial_coord) + " left unmatched");
  } else {
    std::vector<bool> used(ns, false);
    for (int r = 0; r < nt; ++r) {
      int s = rank_map(r, nt, ns);
      pairs.emplace_back(src_rank[s], tgt_rank[r]);
      used[s] = true;
    }
    for (int s = 0; s < ns; ++s)
      if (!used[s])
        log_warning("source contour at axial " +
                    std::to_string(source[src_rank[s]].axial_coord) + " left unmatched");
  }
  return pairs;
}

GradingMap compute_grading(const std::vector<std::pair<int, int>>& pairs,
                           const std::vector<ContourMeasure>& source,
                           const std::vector<ContourMeasure>& target, const GradingAxis& axis) {
  if (pairs.empty()) throw MeshError("cannot grade without contour pairs");

  struct Station {
    double a_src, a_tgt, radial;
  };
  std::vector<Station> stations;
  stations.reserve(pairs.size());
  for (auto [s, t] : pairs) {
    if (source[s].circumference <= 0.0)
      throw MeshError("source contour has zero circumference");
    stations.push_back({source[s].axial_coord, target[t].axial_coord,
                        target[t].circumference / source[s].circumference});
  }
  std::sort(stations.begin(), stations.end(),
            [](const Station& a, const Station& b) { return a.a_src < b.a_src; });

  // Merge stations that sit at the same source height.
  std::vector<Station> merged;
  for (const auto& st : stations) {
    if (!merged.empty() && st.a_src - merged.back().a_src < 1e-12) {
      merged.back().radial = 0.5 * (merged.back().radial + st.radial);
      merged.back().a_tgt = 0.5 * (merged.back().a_tgt + st.a_tgt);
      log_warning("two contour pairs share one axial station; merged");
    } else {
      merged.push_back(st);
    }
  }

  GradingMap map;
  map.axis = axis;
  map.knots.resize(merged.size());
  for (std::size_t k = 0; k < merged.size(); ++k) {
    map.knots[k].axial_coord = merged[k].a_src;
    map.knots[k].radial_scale = merged[k].radial;
  }
  if (merged.size() == 1) {
    map.knots[0].axial_scale = 1.0;
  } else {
    for (std::size_t k = 0; k + 1 < merged.size(); ++k) {
      double src_gap = merged[k + 1].a_src - merged[k].a_src;
      double tgt_gap = merged[k + 1].a_tgt - merged[k].a_tgt;
      double s = tgt_gap / src_gap;
      if (!(s > 0.0)) {
        log_warning("non-positive axial gap ratio between contour stations; using 1");
        s = 1.0;
      }
      map.knots[k].axial_scale = s;
    }
    map.knots.back().axial_scale = map.knots[merged.size() - 2].axial_scale;
  }

  // Anchor the first contour's image at its measured target station.
  map.axial_offset =
      merged.front().a_tgt - map.knots.front().axial_scale * map.knots.front().axial_coord;

  for (const auto& k : map.knots)
    if (!(k.axial_scale > 0.0) || !(k.radial_scale > 0.0))
      throw MeshError("grading produced a non-positive scale");
  return map;
}

TriMesh apply_grading(const TriMesh& mesh, const GradingMap& map) {
  TriMesh out = mesh;
  const Vec3& o = map.axis.origin;
  const Vec3 d = map.axis.direction.normalized();
  for (auto& p : out.positions) {
    const Vec3 rel = p - o;
    const double a = rel.dot(d);
    const Vec3 radial = rel - a * d;
    p = o + map.axial_image(a) * d + map.radial_scale_at(a) * radial;
  }
  return out;
}

void save_grading(const GradingMap& map, const std::string& path) {
  std::ofstream out(path);
  if (!out) throw MeshError("cannot open '" + path + "' for writing");
  char buf[256];
  out << "# grading map\n";
  std::snprintf(buf, sizeof buf, "axis_origin = %.17g %.17g %.17g\n", map.axis.origin.x(),
                map.axis.origin.y(), map.axis.origin.z());
  out << buf;
  std::snprintf(buf, sizeof buf, "axis_direction = %.17g %.17g %.17g\n", map.axis.direction.x(),
                map.axis.direction.y(), map.axis.direction.z());
  out << buf;
  std::snprintf(buf, sizeof buf, "axial_offset = %.17g\n", map.axial_offset);
  out << buf;
  for (const auto& k : map.knots) {
    std::snprintf(buf, sizeof buf, "knot = %.17g %.17g %.17g\n", k.axial_coord, k.axial_scale,
                  k.radial_scale);
    out << buf;
  }
  if (!out) throw MeshError("failed while writing '" + path + "'");
}

GradingMap load_grading(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw MeshError("cannot open grading map '" + path + "'");
  GradingMap map;
  bool have_origin = false, have_dir = false;
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    std::istringstream ss(line);
    std::string key, eq;
    if (!(ss >> key) || key[0] == '#') continue;
    if (!(ss >> eq) || eq != "=")
      throw MeshError(path + ":" + std::to_string(line_no) + ": expected 'key = values'");
    if (key == "axial_offset") {
      if (!(ss >> map.axial_offset))
        throw MeshError(path + ":" + std::to_string(line_no) + ": expected one number");
      continue;
    }
    double x, y, z;
    if (!(ss >> x >> y >> z))
      throw MeshError(path + ":" + std::to_string(line_no) + ": expected three numbers");
    if (key == "axis_origin") {
      map.axis.origin = Vec3(x, y, z);
      have_origin = true;
    } else if (key == "axis_direction") {
      map.axis.direction = Vec3(x, y, z);
      have_dir = true;
    } else if (key == "knot") {
      map.knots.push_back({x, y, z});
    } else {
      throw MeshError(path + ":" + std::to_string(line_no) + ": unknown key '" + key + "'");
    }
  }
  if (!have_origin || !have_dir || map.knots.empty())
    throw MeshError(path + ": incomplete grading map");
  std::sort(map.knots.begin(), map.knots.end(),
            [](const GradingKnot& a, const GradingKnot& b) { return a.axial_coord < b.axial_coord; });
  return map;
}

}  // namespace phydeformer
