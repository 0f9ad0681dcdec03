#include "phydeformer/sdf_body.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <unordered_map>

#include "phydeformer/errors.hpp"
#include "phydeformer/log.hpp"
#include "phydeformer/parallel.hpp"

namespace phydeformer {

namespace {

constexpr int kLeafFaces = 4;
constexpr double kBaryEps = 1e-9;

inline std::uint64_t edge_key(int a, int b) {
  if (a > b) std::swap(a, b);
  return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
         static_cast<std::uint64_t>(static_cast<std::uint32_t>(b));
}

inline double aabb_dist2(const Vec3& p, const Vec3& lo, const Vec3& hi) {
  double d2 = 0.0;
  for (int k = 0; k < 3; ++k) {
    double d = 0.0;
    if (p[k] < lo[k]) d = lo[k] - p[k];
    else if (p[k] > hi[k]) d = p[k] - hi[k];
    d2 += d * d;
  }
  return d2;
}

}  // namespace

Vec3 closest_point_on_triangle(const Vec3& p, const Vec3& a, const Vec3& b, const Vec3& c,
                               Vec3* bary) {
  auto set_bary = [&](double u, double v, double w) {
    if (bary) *bary = Vec3(u, v, w);
  };

  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0.0 && d2 <= 0.0) {
    set_bary(1, 0, 0);
    return a;
  }

  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0.0 && d4 <= d3) {
    set_bary(0, 1, 0);
    return b;
  }

  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0.0 && d1 >= 0.0 && d3 <= 0.0) {
    double v = d1 / (d1 - d3);
    set_bary(1 - v, v, 0);
    return a + v * ab;
  }

  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0.0 && d5 <= d6) {
    set_bary(0, 0, 1);
    return c;
  }

  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0.0 && d2 >= 0.0 && d6 <= 0.0) {
    double w = d2 / (d2 - d6);
    set_bary(1 - w, 0, w);
    return a + w * ac;
  }

  const double va = d3 * d6 - d5 * d4;
  if (va <= 0.0 && d4 - d3 >= 0.0 && d5 - d6 >= 0.0) {
    double w = (d4 - d3) / ((d4 - d3) + (d5 - d6));
    set_bary(0, 1 - w, w);
    return b + w * (c - b);
  }

  const double denom = 1.0 / (va + vb + vc);
  const double v = vb * denom, w = vc * denom;
  set_bary(1 - v - w, v, w);
  return a + ab * v + ac * w;
}

SdfBody::SdfBody(TriMesh body) : mesh_(std::move(body)) {
  if (mesh_.face_count() == 0) throw MeshError("body mesh has no faces");

  face_normal_ = face_normals(mesh_);

  // Closedness: every edge on exactly two faces with opposite winding.
  std::unordered_map<std::uint64_t, int> directed;
  std::unordered_map<std::uint64_t, int> canonical;
  directed.reserve(mesh_.faces.size() * 4);
  canonical.reserve(mesh_.faces.size() * 2);
  for (const auto& tri : mesh_.faces)
    for (int k = 0; k < 3; ++k) {
      int a = tri[k], b = tri[(k + 1) % 3];
      std::uint64_t dk = (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) |
                         static_cast<std::uint64_t>(static_cast<std::uint32_t>(b));
      if (++directed[dk] > 1) closed_ = false;
      canonical[edge_key(a, b)]++;
    }
  for (const auto& [key, count] : canonical)
    if (count != 2) closed_ = false;
  if (!closed_)
    log_warning("body mesh '" + mesh_.name +
                "' is not a closed oriented surface; distances will be unsigned (positive)");

  // Angle-weighted vertex pseudonormals and edge pseudonormals.
  vertex_pseudonormal_.assign(mesh_.vertex_count(), Vec3::Zero());
  std::unordered_map<std::uint64_t, Vec3> edge_sum;
  edge_sum.reserve(canonical.size());
  for (int f = 0; f < mesh_.face_count(); ++f) {
    const auto& tri = mesh_.faces[f];
    for (int k = 0; k < 3; ++k) {
      int v = tri[k], x = tri[(k + 1) % 3], y = tri[(k + 2) % 3];
      Vec3 e1 = mesh_.positions[x] - mesh_.positions[v];
      Vec3 e2 = mesh_.positions[y] - mesh_.positions[v];
      double angle = std::atan2(e1.cross(e2).norm(), e1.dot(e2));
      vertex_pseudonormal_[v] += angle * face_normal_[f];
      edge_sum[edge_key(v, x)] += face_normal_[f];
    }
  }
  for (auto& pn : vertex_pseudonormal_) {
    double n = pn.norm();
    if (n > 1e-12) pn /= n;
  }
  edge_pn_.assign(mesh_.vertex_count(), {});
  for (auto& [key, sum] : edge_sum) {
    // Each edge was visited once per incident face (twice via edge_key from
    // either endpoint ordering), so `sum` already holds the face-normal sum.
    int a = static_cast<int>(key >> 32), b = static_cast<int>(key & 0xffffffffu);
    double n = sum.norm();
    Vec3 pn = n > 1e-12 ? Vec3(sum / n) : Vec3::Zero();
    edge_pn_[a].emplace_back(b, pn);
  }
  for (auto& list : edge_pn_) std::sort(list.begin(), list.end(), [](const auto& x, const auto& y) {
    return x.first < y.first;
  });

  // AABB tree over faces, split on the widest centroid axis.
  face_centroid_.resize(mesh_.face_count());
  for (int f = 0; f < mesh_.face_count(); ++f) {
    const auto& tri = mesh_.faces[f];
    face_centroid_[f] =
        (mesh_.positions[tri[0]] + mesh_.positions[tri[1]] + mesh_.positions[tri[2]]) / 3.0;
  }
  face_order_.resize(mesh_.face_count());
  std::iota(face_order_.begin(), face_order_.end(), 0);
  nodes_.reserve(2 * mesh_.face_count() / kLeafFaces + 2);
  root_ = build(0, mesh_.face_count());
  face_centroid_.clear();
  face_centroid_.shrink_to_fit();
}

int SdfBody::build(int begin, int end) {
  BvhNode node;
  node.begin = begin;
  node.end = end;
  node.lo = Vec3::Constant(std::numeric_limits<double>::infinity());
  node.hi = -node.lo;
  for (int i = begin; i < end; ++i) {
    const auto& tri = mesh_.faces[face_order_[i]];
    for (int k = 0; k < 3; ++k) {
      node.lo = node.lo.cwiseMin(mesh_.positions[tri[k]]);
      node.hi = node.hi.cwiseMax(mesh_.positions[tri[k]]);
    }
  }
  if (end - begin <= kLeafFaces) {
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }

  Vec3 clo = Vec3::Constant(std::numeric_limits<double>::infinity()), chi = -clo;
  for (int i = begin; i < end; ++i) {
    clo = clo.cwiseMin(face_centroid_[face_order_[i]]);
    chi = chi.cwiseMax(face_centroid_[face_order_[i]]);
  }
  int axis = 0;
  (chi - clo).maxCoeff(&axis);
  int mid = (begin + end) / 2;
  std::nth_element(face_order_.begin() + begin, face_order_.begin() + mid,
                   face_order_.begin() + end, [&](int a, int b) {
                     double ca = face_centroid_[a][axis], cb = face_centroid_[b][axis];
                     return ca < cb || (ca == cb && a < b);
                   });

  nodes_.push_back(node);
  int self = static_cast<int>(nodes_.size()) - 1;
  int left = build(begin, mid);
  int right = build(mid, end);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

Vec3 SdfBody::pseudonormal(int face, const Vec3& bary) const {
  const auto& tri = mesh_.faces[face];
  int zero_count = 0;
  for (int k = 0; k < 3; ++k)
    if (bary[k] <= kBaryEps) ++zero_count;

  if (zero_count == 0) return face_normal_[face];

  if (zero_count == 1) {
    // On the edge opposite the vanishing coordinate.
    int k = bary[0] <= kBaryEps ? 0 : (bary[1] <= kBaryEps ? 1 : 2);
    int a = tri[(k + 1) % 3], b = tri[(k + 2) % 3];
    int lo = std::min(a, b), hi = std::max(a, b);
    for (const auto& [other, pn] : edge_pn_[lo])
      if (other == hi && pn.squaredNorm() > 0.0) return pn;
    return face_normal_[face];
  }

  // At the vertex carrying the dominant coordinate.
  int k = 0;
  bary.maxCoeff(&k);
  const Vec3& pn = vertex_pseudonormal_[tri[k]];
  return pn.squaredNorm() > 0.0 ? pn : face_normal_[face];
}

SdfHit SdfBody::query(const Vec3& p) const {
  int best_face = mesh_.face_count();
  double best_d2 = std::numeric_limits<double>::infinity();
  Vec3 best_point = Vec3::Zero(), best_bary = Vec3::Zero();

  // Explicit stack; children are visited nearer-first, and nodes at exactly
  // the best distance are still opened so index tie-breaks match brute force.
  int stack[128];
  int top = 0;
  stack[top++] = root_;
  while (top > 0) {
    int id = stack[--top];
    const BvhNode& node = nodes_[id];
    if (aabb_dist2(p, node.lo, node.hi) > best_d2) continue;
    if (node.left < 0) {
      for (int i = node.begin; i < node.end; ++i) {
        int f = face_order_[i];
        const auto& tri = mesh_.faces[f];
        Vec3 bary;
        Vec3 cp = closest_point_on_triangle(p, mesh_.positions[tri[0]], mesh_.positions[tri[1]],
                                            mesh_.positions[tri[2]], &bary);
        double d2 = (p - cp).squaredNorm();
        if (d2 < best_d2 || (d2 == best_d2 && f < best_face)) {
          best_d2 = d2;
          best_face = f;
          best_point = cp;
          best_bary = bary;
        }
      }
      continue;
    }
    double dl = aabb_dist2(p, nodes_[node.left].lo, nodes_[node.left].hi);
    double dr = aabb_dist2(p, nodes_[node.right].lo, nodes_[node.right].hi);
    // Push the farther child first so the nearer one is processed next.
    if (dl <= dr) {
      stack[top++] = node.right;
      stack[top++] = node.left;
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }

  SdfHit hit;
  hit.face = best_face;
  hit.closest_point = best_point;
  const Vec3 diff = p - best_point;
  const double dist = diff.norm();
  const Vec3 pn = pseudonormal(best_face, best_bary);
  const double side = (closed_ && diff.dot(pn) < 0.0) ? -1.0 : 1.0;
  hit.signed_distance = side * dist;
  hit.gradient = dist > 1e-9 ? Vec3(side * diff / dist) : pn;
  return hit;
}

std::vector<SdfHit> SdfBody::query_batch_serial(const std::vector<Vec3>& points) const {
  std::vector<SdfHit> hits(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) hits[i] = query(points[i]);
  return hits;
}

std::vector<SdfHit> SdfBody::query_batch(const std::vector<Vec3>& points) const {
  std::vector<SdfHit> hits(points.size());
  parallel_for(static_cast<long long>(points.size()),
               [&](long long i) { hits[i] = query(points[i]); });
  return hits;
}

}  // namespace phydeformer
