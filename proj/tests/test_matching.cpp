#include "objslam/matching.hpp"

#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>

#include "objslam/errors.hpp"
#include "objslam/rng.hpp"

using namespace objslam;

namespace {

std::vector<FloatDescriptor> random_descriptors(std::uint64_t seed, int n) {
  SplitMix64 rng(seed);
  std::vector<FloatDescriptor> out(n);
  for (auto& d : out)
    for (auto& v : d) v = static_cast<float>(rng.next_double());
  return out;
}

std::vector<BinaryDescriptor> random_binary(std::uint64_t seed, int n) {
  SplitMix64 rng(seed);
  std::vector<BinaryDescriptor> out(n);
  for (auto& d : out)
    for (auto& w : d.words) w = rng.next();
  return out;
}

// The workload the tree serves: gradient-histogram descriptors of seeded
// synthetic patches. Queries are descriptors of noise-perturbed views of the
// same patches, like re-observations of the same features.
struct DescriptorWorkload {
  std::vector<FloatDescriptor> stored;
  std::vector<FloatDescriptor> queries;
};

DescriptorWorkload descriptor_workload(std::uint64_t seed, int n) {
  DescriptorWorkload w;
  auto patches = synthetic_patch_corpus(seed, n, 48);
  SplitMix64 rng(hash_mix(seed, 7));
  for (auto& p : patches) {
    Keypoint kp;
    kp.u = 23.5;
    kp.v = 23.5;
    kp.orientation = rng.next_double() * 6.283185307179586;
    w.stored.push_back(describe_gradhist(p, kp));
    GrayImage noisy = p;
    for (auto& px : noisy.data) {
      int v = px + static_cast<int>(rng.next_below(17)) - 8;
      px = static_cast<std::uint8_t>(std::clamp(v, 0, 255));
    }
    w.queries.push_back(describe_gradhist(noisy, kp));
  }
  return w;
}

// Brute-force oracle: all distances, sorted by (distance, index).
std::vector<MatchPair> brute_knn(const std::vector<FloatDescriptor>& descs,
                                 const FloatDescriptor& q, int k) {
  std::vector<MatchPair> all;
  for (std::size_t i = 0; i < descs.size(); ++i)
    all.push_back({-1, static_cast<int>(i), l2_distance(descs[i], q)});
  std::sort(all.begin(), all.end(), [](const MatchPair& a, const MatchPair& b) {
    return a.distance != b.distance ? a.distance < b.distance
                                    : a.train_idx < b.train_idx;
  });
  all.resize(std::min<std::size_t>(k, all.size()));
  return all;
}

}  // namespace

TEST(KdTree, EmptyInputRejected) {
  EXPECT_THROW(kdtree_build({}), Error);
}

TEST(KdTree, SingleDescriptorSingleLeaf) {
  auto descs = random_descriptors(1, 1);
  KdTree tree = kdtree_build(descs);
  EXPECT_EQ(tree.size(), 1);
  EXPECT_EQ(tree.depth(), 1);
  auto res = kdtree_knn(tree, descs[0], 1, kUnlimitedChecks);
  ASSERT_EQ(res.size(), 1u);
  EXPECT_EQ(res[0].train_idx, 0);
  EXPECT_DOUBLE_EQ(res[0].distance, 0.0);
}

TEST(KdTree, HoldsAllIndices) {
  auto descs = random_descriptors(2, 137);
  KdTree tree = kdtree_build(descs);
  EXPECT_EQ(tree.size(), 137);
  auto res = kdtree_knn(tree, descs[5], 137, kUnlimitedChecks);
  ASSERT_EQ(res.size(), 137u);
  std::set<int> idx;
  for (const auto& m : res) idx.insert(m.train_idx);
  EXPECT_EQ(idx.size(), 137u);
}

TEST(KdTree, DepthBoundOnSeededInput) {
  auto descs = random_descriptors(3, 1000);
  KdTree tree = kdtree_build(descs);
  double bound = 2 * std::log2(1000.0 / 8.0) + 2;
  EXPECT_LE(tree.depth(), static_cast<int>(bound));
}

TEST(KdTree, StoredDescriptorComesBackFirst) {
  auto descs = random_descriptors(4, 200);
  KdTree tree = kdtree_build(descs);
  for (int i : {0, 17, 99, 199}) {
    auto res = kdtree_knn(tree, descs[i], 2, kUnlimitedChecks);
    ASSERT_GE(res.size(), 1u);
    EXPECT_EQ(res[0].train_idx, i);
    EXPECT_DOUBLE_EQ(res[0].distance, 0.0);
  }
}

TEST(KdTree, UnlimitedChecksMatchesBruteForce) {
  auto descs = random_descriptors(5, 1000);
  auto queries = random_descriptors(6, 100);
  KdTree tree = kdtree_build(descs);
  for (const auto& q : queries) {
    auto got = kdtree_knn(tree, q, 2, kUnlimitedChecks);
    auto want = brute_knn(descs, q, 2);
    ASSERT_EQ(got.size(), want.size());
    for (std::size_t i = 0; i < got.size(); ++i) {
      EXPECT_EQ(got[i].train_idx, want[i].train_idx);
      EXPECT_NEAR(got[i].distance, want[i].distance, 1e-12);
    }
  }
}

TEST(KdTree, CappedChecksAgreeOften) {
  DescriptorWorkload w = descriptor_workload(7, 200);
  KdTree tree = kdtree_build(w.stored);
  int agree = 0;
  for (const auto& q : w.queries) {
    auto got = kdtree_knn(tree, q, 1, 64);
    auto want = brute_knn(w.stored, q, 1);
    if (!got.empty() && got[0].train_idx == want[0].train_idx) ++agree;
  }
  EXPECT_GE(agree, 190);  // >= 95%
}

TEST(KdTree, AgreementMonotoneInChecks) {
  DescriptorWorkload w = descriptor_workload(9, 150);
  KdTree tree = kdtree_build(w.stored);
  int prev = -1;
  for (int checks : {8, 32, 64, 256, kUnlimitedChecks}) {
    int agree = 0;
    for (const auto& q : w.queries) {
      auto got = kdtree_knn(tree, q, 1, checks);
      auto want = brute_knn(w.stored, q, 1);
      if (!got.empty() && got[0].train_idx == want[0].train_idx) ++agree;
    }
    EXPECT_GE(agree, prev);
    prev = agree;
  }
  EXPECT_EQ(prev, 150);  // unlimited must be exact
}

TEST(HammingKnn, ExactEntryFirst) {
  auto descs = random_binary(11, 50);
  auto res = hamming_knn(descs, descs[33], 2);
  ASSERT_EQ(res.size(), 2u);
  EXPECT_EQ(res[0].train_idx, 33);
  EXPECT_EQ(res[0].distance, 0.0);
}

TEST(HammingKnn, ComplementOfZeroIs256) {
  std::vector<BinaryDescriptor> descs(1);  // all-zero
  BinaryDescriptor q;
  for (auto& w : q.words) w = ~std::uint64_t{0};
  auto res = hamming_knn(descs, q, 1);
  ASSERT_EQ(res.size(), 1u);
  EXPECT_EQ(res[0].distance, 256.0);
}

TEST(HammingKnn, MatchesNaiveBitCountOracle) {
  auto descs = random_binary(12, 100);
  auto queries = random_binary(13, 200);
  for (const auto& q : queries) {
    auto got = hamming_knn(descs, q, 1);
    // per-bit counting oracle
    int best_d = 257, best_i = -1;
    for (std::size_t i = 0; i < descs.size(); ++i) {
      int d = 0;
      for (int b = 0; b < 256; ++b)
        if (descs[i].bit(b) != q.bit(b)) ++d;
      if (d < best_d) {
        best_d = d;
        best_i = static_cast<int>(i);
      }
    }
    ASSERT_EQ(got[0].train_idx, best_i);
    ASSERT_EQ(got[0].distance, best_d);
  }
}

TEST(HammingKnn, TiesBreakByLowerIndex) {
  std::vector<BinaryDescriptor> descs(3);
  descs[0].set_bit(0);  // distance 1 from zero query
  descs[1].set_bit(5);  // distance 1
  // descs[2] stays zero: distance 0
  BinaryDescriptor q;
  auto res = hamming_knn(descs, q, 3);
  ASSERT_EQ(res.size(), 3u);
  EXPECT_EQ(res[0].train_idx, 2);
  EXPECT_EQ(res[1].train_idx, 0);
  EXPECT_EQ(res[2].train_idx, 1);
}

TEST(FilterRatio, SpecExamples) {
  auto mk = [](double best, double second) {
    return std::vector<MatchPair>{{-1, 0, best}, {-1, 1, second}};
  };
  EXPECT_EQ(filter_ratio({mk(0.2, 0.9)}, 0.7).size(), 1u);
  EXPECT_EQ(filter_ratio({mk(0.7, 0.9)}, 0.7).size(), 0u);
  EXPECT_EQ(filter_ratio({mk(0.0, 0.5)}, 0.7).size(), 1u);
  // single neighbor passes unconditionally
  EXPECT_EQ(filter_ratio({{{-1, 3, 9.0}}}, 0.7).size(), 1u);
}

TEST(FilterRatio, FillsQueryIndices) {
  std::vector<std::vector<MatchPair>> knn{
      {{-1, 5, 0.1}, {-1, 6, 0.9}},
      {{-1, 7, 0.8}, {-1, 8, 0.9}},  // fails ratio
      {{-1, 9, 0.2}, {-1, 10, 0.9}},
  };
  auto out = filter_ratio(knn, 0.7);
  ASSERT_EQ(out.size(), 2u);
  EXPECT_EQ(out[0].query_idx, 0);
  EXPECT_EQ(out[0].train_idx, 5);
  EXPECT_EQ(out[1].query_idx, 2);
  EXPECT_EQ(out[1].train_idx, 9);
}
