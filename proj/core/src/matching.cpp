#include "objslam/matching.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <queue>

#include "objslam/errors.hpp"

namespace objslam {

double l2_distance(const FloatDescriptor& a, const FloatDescriptor& b) {
  double s = 0;
  for (int i = 0; i < 128; ++i) {
    double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return std::sqrt(s);
}

namespace {

double squared_l2(const FloatDescriptor& a, const FloatDescriptor& b) {
  double s = 0;
  for (int i = 0; i < 128; ++i) {
    double d = static_cast<double>(a[i]) - b[i];
    s += d * d;
  }
  return s;
}

}  // namespace

int KdTree::depth() const {
  if (root_ < 0) return 0;
  std::vector<std::pair<int, int>> stack{{root_, 1}};
  int best = 0;
  while (!stack.empty()) {
    auto [n, d] = stack.back();
    stack.pop_back();
    best = std::max(best, d);
    if (nodes_[n].axis >= 0) {
      stack.push_back({nodes_[n].left, d + 1});
      stack.push_back({nodes_[n].right, d + 1});
    }
  }
  return best;
}

KdTree kdtree_build(const std::vector<FloatDescriptor>& descs) {
  if (descs.empty()) fail(ErrorCode::Empty, "kd-tree needs at least one descriptor");
  KdTree tree;
  tree.points_ = descs;
  tree.point_order_.resize(descs.size());
  for (std::size_t i = 0; i < descs.size(); ++i) tree.point_order_[i] = static_cast<int>(i);

  constexpr int kLeafSize = 8;

  // Recursive split over point_order_[begin, end).
  auto build = [&](auto&& self, int begin, int end) -> int {
    KdTree::Node node;
    node.box_min.assign(128, std::numeric_limits<float>::max());
    node.box_max.assign(128, std::numeric_limits<float>::lowest());
    for (int i = begin; i < end; ++i) {
      const FloatDescriptor& p = tree.points_[tree.point_order_[i]];
      for (int d = 0; d < 128; ++d) {
        node.box_min[d] = std::min(node.box_min[d], p[d]);
        node.box_max[d] = std::max(node.box_max[d], p[d]);
      }
    }

    if (end - begin <= kLeafSize) {
      node.begin = begin;
      node.end = end;
      tree.nodes_.push_back(std::move(node));
      return static_cast<int>(tree.nodes_.size()) - 1;
    }

    // Highest-variance dimension; lower index wins ties.
    int best_dim = 0;
    double best_var = -1;
    for (int d = 0; d < 128; ++d) {
      double mean = 0;
      for (int i = begin; i < end; ++i)
        mean += tree.points_[tree.point_order_[i]][d];
      mean /= (end - begin);
      double var = 0;
      for (int i = begin; i < end; ++i) {
        double diff = tree.points_[tree.point_order_[i]][d] - mean;
        var += diff * diff;
      }
      if (var > best_var) {
        best_var = var;
        best_dim = d;
      }
    }

    // Lower median split: sort by (value, index) and cut after the median
    // position, which keeps both sides non-empty.
    std::sort(tree.point_order_.begin() + begin, tree.point_order_.begin() + end,
              [&](int a, int b) {
                float va = tree.points_[a][best_dim], vb = tree.points_[b][best_dim];
                return va != vb ? va < vb : a < b;
              });
    int mid = begin + (end - begin - 1) / 2;
    node.axis = best_dim;
    node.split = tree.points_[tree.point_order_[mid]][best_dim];

    int self_idx = static_cast<int>(tree.nodes_.size());
    tree.nodes_.push_back(std::move(node));
    int left = self(self, begin, mid + 1);
    int right = self(self, mid + 1, end);
    tree.nodes_[self_idx].left = left;
    tree.nodes_[self_idx].right = right;
    return self_idx;
  };

  tree.root_ = build(build, 0, static_cast<int>(descs.size()));
  return tree;
}

std::vector<MatchPair> kdtree_knn(const KdTree& tree, const FloatDescriptor& q,
                                  int k, int max_checks) {
  std::vector<MatchPair> out;
  if (tree.root_ < 0 || k < 1) return out;

  auto box_bound = [&](const KdTree::Node& n) {
    double b = 0;
    for (int d = 0; d < 128; ++d) {
      double diff = 0;
      if (q[d] < n.box_min[d]) diff = n.box_min[d] - q[d];
      else if (q[d] > n.box_max[d]) diff = q[d] - n.box_max[d];
      b += diff * diff;
    }
    return b;
  };

  // (bound, node); smallest bound explored first.
  using Entry = std::pair<double, int>;
  std::priority_queue<Entry, std::vector<Entry>, std::greater<>> frontier;
  frontier.push({box_bound(tree.nodes_[tree.root_]), tree.root_});

  // Current k best as (distance^2, train_idx), worst on top.
  std::priority_queue<std::pair<double, int>> best;
  int checked = 0;
  bool capped = max_checks > 0;

  while (!frontier.empty()) {
    auto [bound, idx] = frontier.top();
    frontier.pop();
    if (static_cast<int>(best.size()) == k && bound > best.top().first) break;
    if (capped && checked >= max_checks) break;

    const KdTree::Node* node = &tree.nodes_[idx];
    while (node->axis >= 0) {
      const KdTree::Node& l = tree.nodes_[node->left];
      const KdTree::Node& r = tree.nodes_[node->right];
      double bl = box_bound(l), br = box_bound(r);
      if (bl <= br) {
        frontier.push({br, node->right});
        node = &l;
      } else {
        frontier.push({bl, node->left});
        node = &r;
      }
    }

    for (int i = node->begin; i < node->end; ++i) {
      if (capped && checked >= max_checks) break;
      int train = tree.point_order_[i];
      double d2 = squared_l2(q, tree.points_[train]);
      ++checked;
      if (static_cast<int>(best.size()) < k) {
        best.push({d2, train});
      } else if (d2 < best.top().first ||
                 (d2 == best.top().first && train < best.top().second)) {
        best.pop();
        best.push({d2, train});
      }
    }
  }

  out.resize(best.size());
  for (int i = static_cast<int>(best.size()) - 1; i >= 0; --i) {
    out[i] = {-1, best.top().second, std::sqrt(best.top().first)};
    best.pop();
  }
  // Equal distances surface in ascending train order.
  std::stable_sort(out.begin(), out.end(), [](const MatchPair& a, const MatchPair& b) {
    return a.distance != b.distance ? a.distance < b.distance
                                    : a.train_idx < b.train_idx;
  });
  return out;
}

std::vector<MatchPair> hamming_knn(const std::vector<BinaryDescriptor>& descs,
                                   const BinaryDescriptor& q, int k) {
  std::vector<MatchPair> all;
  all.reserve(descs.size());
  for (std::size_t i = 0; i < descs.size(); ++i)
    all.push_back({-1, static_cast<int>(i), static_cast<double>(hamming(descs[i], q))});
  int keep = std::min<int>(k, static_cast<int>(all.size()));
  std::partial_sort(all.begin(), all.begin() + keep, all.end(),
                    [](const MatchPair& a, const MatchPair& b) {
                      return a.distance != b.distance ? a.distance < b.distance
                                                      : a.train_idx < b.train_idx;
                    });
  all.resize(keep);
  return all;
}

std::vector<MatchPair> filter_ratio(
    const std::vector<std::vector<MatchPair>>& knn_per_query, double ratio) {
  std::vector<MatchPair> out;
  for (std::size_t qi = 0; qi < knn_per_query.size(); ++qi) {
    const auto& knn = knn_per_query[qi];
    if (knn.empty()) continue;
    if (knn.size() >= 2 && !(knn[0].distance < ratio * knn[1].distance)) continue;
    MatchPair m = knn[0];
    m.query_idx = static_cast<int>(qi);
    out.push_back(m);
  }
  return out;
}

}  // namespace objslam
