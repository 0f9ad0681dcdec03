#pragma once

#include <vector>

#include "phydeformer/trimesh.hpp"

namespace phydeformer {

// Static 3-d kd-tree for exact nearest-neighbor queries. Ties in distance
// resolve to the smaller point index, so results match a brute-force scan
// exactly and do not depend on build or traversal order.
class KdTree3 {
 public:
  KdTree3() = default;
  explicit KdTree3(std::vector<Vec3> points);

  int size() const { return static_cast<int>(points_.size()); }
  bool empty() const { return points_.empty(); }
  const std::vector<Vec3>& points() const { return points_; }

  // Index of the nearest point (smallest index on exact ties); the squared
  // distance is written to dist2 when given. Errors on an empty tree.
  int nearest(const Vec3& query, double* dist2 = nullptr) const;

  std::vector<int> nearest_batch(const std::vector<Vec3>& queries) const;
  std::vector<int> nearest_batch_serial(const std::vector<Vec3>& queries) const;

 private:
  struct Node {
    double split = 0.0;
    int axis = -1;             // -1 marks a leaf
    int left = -1, right = -1;
    int begin = 0, end = 0;    // leaf range into order_
  };

  int build(int begin, int end);
  void search(const Vec3& q, int node, int& best, double& best_d2) const;

  std::vector<Vec3> points_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

}  // namespace phydeformer
