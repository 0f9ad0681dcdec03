#include "phydeformer/kdtree.hpp"

#include <algorithm>
#include <limits>
#include <numeric>

#include "phydeformer/errors.hpp"
#include "phydeformer/parallel.hpp"

namespace phydeformer {

namespace {
constexpr int kLeafSize = 8;
}

KdTree3::KdTree3(std::vector<Vec3> points) : points_(std::move(points)) {
  order_.resize(points_.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(points_.empty() ? 0 : 2 * points_.size() / kLeafSize + 2);
  if (!points_.empty()) root_ = build(0, static_cast<int>(points_.size()));
}

int KdTree3::build(int begin, int end) {
  Node node;
  node.begin = begin;
  node.end = end;
  if (end - begin <= kLeafSize) {
    nodes_.push_back(node);
    return static_cast<int>(nodes_.size()) - 1;
  }

  Vec3 lo = points_[order_[begin]], hi = lo;
  for (int i = begin + 1; i < end; ++i) {
    lo = lo.cwiseMin(points_[order_[i]]);
    hi = hi.cwiseMax(points_[order_[i]]);
  }
  int axis = 0;
  (hi - lo).maxCoeff(&axis);

  int mid = (begin + end) / 2;
  // Index tie-break makes the comparator a strict total order, so the split
  // partition is unique regardless of the std::nth_element implementation.
  std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                   [&](int a, int b) {
                     double pa = points_[a][axis], pb = points_[b][axis];
                     return pa < pb || (pa == pb && a < b);
                   });

  node.axis = axis;
  node.split = points_[order_[mid]][axis];
  nodes_.push_back(node);
  int self = static_cast<int>(nodes_.size()) - 1;
  int left = build(begin, mid);
  int right = build(mid, end);
  nodes_[self].left = left;
  nodes_[self].right = right;
  return self;
}

void KdTree3::search(const Vec3& q, int node_id, int& best, double& best_d2) const {
  const Node& node = nodes_[node_id];
  if (node.axis < 0) {
    for (int i = node.begin; i < node.end; ++i) {
      int idx = order_[i];
      double d2 = (points_[idx] - q).squaredNorm();
      if (d2 < best_d2 || (d2 == best_d2 && idx < best)) {
        best_d2 = d2;
        best = idx;
      }
    }
    return;
  }
  double delta = q[node.axis] - node.split;
  int near = delta < 0.0 ? node.left : node.right;
  int far = delta < 0.0 ? node.right : node.left;
  search(q, near, best, best_d2);
  // The far side can still hold the winner on exact plane ties (equal
  // distance, smaller index), so prune strictly.
  if (delta * delta <= best_d2) search(q, far, best, best_d2);
}

int KdTree3::nearest(const Vec3& query, double* dist2) const {
  if (points_.empty()) throw NumericalError("nearest-neighbor query on an empty point set");
  int best = static_cast<int>(points_.size());
  double best_d2 = std::numeric_limits<double>::infinity();
  search(query, root_, best, best_d2);
  if (dist2) *dist2 = best_d2;
  return best;
}

std::vector<int> KdTree3::nearest_batch_serial(const std::vector<Vec3>& queries) const {
  std::vector<int> out(queries.size());
  for (std::size_t i = 0; i < queries.size(); ++i) out[i] = nearest(queries[i]);
  return out;
}

std::vector<int> KdTree3::nearest_batch(const std::vector<Vec3>& queries) const {
  std::vector<int> out(queries.size());
  parallel_for(static_cast<long long>(queries.size()),
               [&](long long i) { out[i] = nearest(queries[i]); });
  return out;
}

}  // namespace phydeformer
