#pragma once

#include <vector>

#include "objslam/features.hpp"

namespace objslam {

struct MatchPair {
  int query_idx = -1;
  int train_idx = -1;
  double distance = 0.0;  // L2 for float descriptors, Hamming for binary
};

/// Pass to kdtree_knn to examine every point (exact search).
inline constexpr int kUnlimitedChecks = 0;

/// Axis-aligned splitting tree over 128-dim float descriptors. Split
/// dimension is the one with the highest variance, split value the lower
/// median; leaves hold at most 8 points. Immutable after build, so
/// concurrent queries are safe.
class KdTree {
 public:
  struct Node {
    int axis = -1;          // -1 marks a leaf
    float split = 0.f;
    int left = -1, right = -1;
    int begin = 0, end = 0;  // leaf range in point_order_
    std::vector<float> box_min, box_max;  // bounding box for search bounds
  };

  int size() const { return static_cast<int>(points_.size()); }
  bool empty() const { return points_.empty(); }
  int depth() const;

  friend KdTree kdtree_build(const std::vector<FloatDescriptor>& descs);
  friend std::vector<MatchPair> kdtree_knn(const KdTree& tree,
                                           const FloatDescriptor& q, int k,
                                           int max_checks);

 private:
  std::vector<FloatDescriptor> points_;
  std::vector<int> point_order_;
  std::vector<Node> nodes_;
  int root_ = -1;
};

KdTree kdtree_build(const std::vector<FloatDescriptor>& descs);

/// Best-bin-first k-nearest-neighbor search. With max_checks =
/// kUnlimitedChecks the result equals exhaustive search; a positive cap
/// bounds how many stored points are examined. Results sorted by distance,
/// ties by lower train index. query_idx is left at -1 for the caller.
std::vector<MatchPair> kdtree_knn(const KdTree& tree, const FloatDescriptor& q,
                                  int k = 2, int max_checks = kUnlimitedChecks);

/// Exhaustive Hamming k-nearest-neighbor, ties by lower train index.
std::vector<MatchPair> hamming_knn(const std::vector<BinaryDescriptor>& descs,
                                   const BinaryDescriptor& q, int k = 2);

/// Lowe ratio test: keeps the best neighbor of each query iff
/// best < ratio * second. Single-neighbor entries pass unconditionally.
std::vector<MatchPair> filter_ratio(
    const std::vector<std::vector<MatchPair>>& knn_per_query,
    double ratio = 0.7);

double l2_distance(const FloatDescriptor& a, const FloatDescriptor& b);

}  // namespace objslam
