#include "objslam/robust.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "objslam/errors.hpp"
#include "objslam/rng.hpp"

using namespace objslam;

namespace {

constexpr double kDeg = M_PI / 180.0;

const Intrinsics kCam{250.0, 250.0, 160.0, 120.0, 320, 240, 0.001};

double rotation_angle(const Mat3& a, const Mat3& b) {
  double c = ((a.transpose() * b).trace() - 1.0) / 2.0;
  return std::acos(std::clamp(c, -1.0, 1.0));
}

std::vector<PixelPair> square_corners_mapped(const Mat3& h) {
  Homography hh = Homography::from_matrix(h);
  std::vector<PixelPair> corrs;
  for (Pixel p : {Pixel{0, 0}, Pixel{10, 0}, Pixel{10, 10}, Pixel{0, 10}})
    corrs.push_back({p, apply_homography(hh, p)});
  return corrs;
}

Mat3 well_conditioned_h() {
  Mat3 h;
  h << 1.2, 0.1, 30, -0.05, 0.9, -20, 1e-4, -2e-4, 1;
  return h;
}

}  // namespace

TEST(FitHomography, IdentityFromFixedPoints) {
  std::vector<PixelPair> corrs;
  for (Pixel p : {Pixel{0, 0}, Pixel{10, 0}, Pixel{10, 10}, Pixel{0, 10}})
    corrs.push_back({p, p});
  Homography h = fit_homography(corrs);
  Mat3 expected = Mat3::Identity() / std::sqrt(3.0);
  EXPECT_LT((h.h - expected).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FitHomography, PureTranslation) {
  std::vector<PixelPair> corrs;
  for (Pixel p : {Pixel{0, 0}, Pixel{10, 0}, Pixel{10, 10}, Pixel{0, 10}})
    corrs.push_back({p, Pixel{p.u + 5, p.v + 7}});
  Homography h = fit_homography(corrs);
  Mat3 want;
  want << 1, 0, 5, 0, 1, 7, 0, 0, 1;
  want /= want.norm();
  EXPECT_LT((h.h - want).cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FitHomography, RecoversNoisyTransform) {
  Homography truth = Homography::from_matrix(well_conditioned_h());
  SplitMix64 rng(21);
  std::vector<PixelPair> corrs;
  for (int i = 0; i < 20; ++i) {
    Pixel p{rng.next_double() * 320, rng.next_double() * 240};
    Pixel q = apply_homography(truth, p);
    q.u += rng.next_gaussian() * 0.1;
    q.v += rng.next_gaussian() * 0.1;
    corrs.push_back({p, q});
  }
  Homography fitted = fit_homography(corrs);
  double total = 0;
  for (const auto& [p, q] : corrs) {
    Pixel r = apply_homography(fitted, p);
    total += std::hypot(r.u - q.u, r.v - q.v);
  }
  EXPECT_LT(total / corrs.size(), 0.3);
}

TEST(FitHomography, CollinearSourcesDegenerate) {
  std::vector<PixelPair> corrs;
  for (double t : {0.0, 1.0, 2.0, 3.0})
    corrs.push_back({Pixel{t, t}, Pixel{t * 2, t}});
  try {
    fit_homography(corrs);
    FAIL() << "expected Degenerate";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Degenerate);
  }
}

TEST(RansacHomography, OutlierFreeRecoversExactly) {
  Homography truth = Homography::from_matrix(well_conditioned_h());
  SplitMix64 rng(23);
  std::vector<PixelPair> corrs;
  for (int i = 0; i < 30; ++i) {
    Pixel p{rng.next_double() * 320, rng.next_double() * 240};
    corrs.push_back({p, apply_homography(truth, p)});
  }
  RansacParams params;
  params.inlier_threshold = 3.0;
  params.rng_seed = 1;
  auto res = ransac_homography(corrs, params);
  EXPECT_EQ(res.inlier_count, 30);
  EXPECT_LT((res.model.h - truth.h).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(RansacHomography, SeparatesLabeledOutliers) {
  Homography truth = Homography::from_matrix(well_conditioned_h());
  SplitMix64 rng(25);
  std::vector<PixelPair> corrs;
  for (int i = 0; i < 70; ++i) {
    Pixel p{rng.next_double() * 320, rng.next_double() * 240};
    corrs.push_back({p, apply_homography(truth, p)});
  }
  for (int i = 0; i < 30; ++i) {
    corrs.push_back({Pixel{rng.next_double() * 320, rng.next_double() * 240},
                     Pixel{rng.next_double() * 320, rng.next_double() * 240}});
  }
  RansacParams params;
  params.inlier_threshold = 3.0;
  params.rng_seed = 2;
  auto res = ransac_homography(corrs, params);
  for (int i = 0; i < 70; ++i) EXPECT_TRUE(res.inlier_mask[i]) << "inlier " << i;
  int false_inliers = 0;
  for (int i = 70; i < 100; ++i) false_inliers += res.inlier_mask[i];
  EXPECT_LE(false_inliers, 2);
}

TEST(RansacHomography, CollinearInputNoModel) {
  std::vector<PixelPair> corrs;
  for (double t : {0.0, 1.0, 2.0, 3.0})
    corrs.push_back({Pixel{t, t}, Pixel{t, t + 1}});
  RansacParams params;
  params.max_iterations = 50;
  try {
    ransac_homography(corrs, params);
    FAIL() << "expected NoModel";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoModel);
  }
}

TEST(RansacHomography, DeterministicAndMaskConsistent) {
  Homography truth = Homography::from_matrix(well_conditioned_h());
  SplitMix64 rng(27);
  std::vector<PixelPair> corrs;
  for (int i = 0; i < 40; ++i) {
    Pixel p{rng.next_double() * 320, rng.next_double() * 240};
    Pixel q = apply_homography(truth, p);
    if (i % 5 == 0) q = {rng.next_double() * 320, rng.next_double() * 240};
    corrs.push_back({p, q});
  }
  RansacParams params;
  params.rng_seed = 77;
  auto a = ransac_homography(corrs, params);
  auto b = ransac_homography(corrs, params);
  EXPECT_EQ(a.inlier_mask, b.inlier_mask);
  EXPECT_EQ(a.inlier_count, b.inlier_count);
  EXPECT_EQ(a.iterations_run, b.iterations_run);
  EXPECT_EQ((a.model.h - b.model.h).cwiseAbs().maxCoeff(), 0.0);

  // re-evaluating the returned model reproduces the returned mask
  Homography inv{Mat3(a.model.h.inverse())};
  int count = 0;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    double e2 = homography_sym_error2(a.model, inv, corrs[i]);
    bool in = e2 < params.inlier_threshold * params.inlier_threshold;
    EXPECT_EQ(in, static_cast<bool>(a.inlier_mask[i]));
    count += in;
  }
  EXPECT_EQ(count, a.inlier_count);
  EXPECT_GE(a.inlier_count, 4);
}

namespace {

Pose sample_pose() {
  Pose p;
  p.rotation = rot_y(20 * kDeg) * rot_x(-10 * kDeg);
  p.translation = Vec3(0.3, -0.2, 0.5);
  return p;
}

// Correspondences seen from a camera-to-world pose: pick a pixel and depth,
// lift to the world through the pose.
std::vector<PointPixel> pnp_corrs(const Pose& pose, int n, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<PointPixel> corrs;
  while (static_cast<int>(corrs.size()) < n) {
    Pixel px{20 + rng.next_double() * 280, 20 + rng.next_double() * 200};
    double depth = 1.0 + rng.next_double() * 4.0;
    Vec3 p_c = backproject(kCam, px, depth);
    Vec3 p_w = pose.rotation * p_c + pose.translation;
    corrs.push_back({p_w, px});
  }
  return corrs;
}

}  // namespace

TEST(RansacPnp, ExactPointsRecoverPose) {
  Pose truth = sample_pose();
  auto corrs = pnp_corrs(truth, 50, 31);
  RansacParams params;
  params.inlier_threshold = 2.0;
  params.rng_seed = 3;
  auto res = ransac_pnp(corrs, kCam, params);
  EXPECT_EQ(res.inlier_count, 50);
  EXPECT_LT((res.model.rotation - truth.rotation).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((res.model.translation - truth.translation).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(RansacPnp, NoisyWithOutliers) {
  Pose truth = sample_pose();
  auto corrs = pnp_corrs(truth, 50, 33);
  SplitMix64 rng(34);
  for (auto& [pw, px] : corrs) {
    px.u += rng.next_gaussian() * 0.5;
    px.v += rng.next_gaussian() * 0.5;
  }
  for (int i = 0; i < 10; ++i) {  // 20% of 50
    corrs[i * 5].second = {rng.next_double() * 320, rng.next_double() * 240};
  }
  RansacParams params;
  params.inlier_threshold = 2.0;
  params.rng_seed = 4;
  auto res = ransac_pnp(corrs, kCam, params);
  EXPECT_LT(rotation_angle(res.model.rotation, truth.rotation), 0.5 * kDeg);
  EXPECT_LT((res.model.translation - truth.translation).norm(), 0.01);
}

TEST(RansacPnp, OpticalAxisPointsDegenerate) {
  std::vector<PointPixel> corrs;
  for (int i = 0; i < 10; ++i)
    corrs.push_back({Vec3(0, 0, 1.0 + 0.3 * i), Pixel{160, 120}});
  RansacParams params;
  params.max_iterations = 100;
  params.rng_seed = 5;
  try {
    ransac_pnp(corrs, kCam, params);
    FAIL() << "expected NoModel or Degenerate";
  } catch (const Error& e) {
    EXPECT_TRUE(e.code() == ErrorCode::NoModel || e.code() == ErrorCode::Degenerate);
  }
}

TEST(RansacPnp, DeterministicAndMaskConsistent) {
  Pose truth = sample_pose();
  auto corrs = pnp_corrs(truth, 40, 35);
  SplitMix64 rng(36);
  for (int i = 0; i < 8; ++i)
    corrs[i * 5].second = {rng.next_double() * 320, rng.next_double() * 240};
  RansacParams params;
  params.inlier_threshold = 2.0;
  params.rng_seed = 6;
  auto a = ransac_pnp(corrs, kCam, params);
  auto b = ransac_pnp(corrs, kCam, params);
  EXPECT_EQ(a.inlier_mask, b.inlier_mask);
  EXPECT_EQ((a.model.rotation - b.model.rotation).cwiseAbs().maxCoeff(), 0.0);

  int count = 0;
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    bool in = false;
    try {
      Vec2 r = reprojection_residual(a.model, kCam, corrs[i].first, corrs[i].second);
      in = r.squaredNorm() < params.inlier_threshold * params.inlier_threshold;
    } catch (const Error&) {
    }
    EXPECT_EQ(in, static_cast<bool>(a.inlier_mask[i]));
    count += in;
  }
  EXPECT_EQ(count, a.inlier_count);
  EXPECT_GE(a.inlier_count, 6);
}

TEST(FitSim3, IdentityForEqualSets) {
  std::vector<Vec3> pts{{0, 0, 0}, {1, 0, 0}, {0, 1, 0}, {1, 2, 3}};
  Sim3 s = fit_sim3(pts, pts);
  EXPECT_NEAR(s.scale, 1.0, 1e-9);
  EXPECT_LT((s.rotation - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(s.translation.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FitSim3, PureScale) {
  std::vector<Vec3> src{{1, 0, 0}, {0, 1, 0}, {0, 0, 1}, {1, 1, 1}};
  std::vector<Vec3> dst;
  for (const auto& p : src) dst.push_back(2 * p);
  Sim3 s = fit_sim3(src, dst);
  EXPECT_NEAR(s.scale, 2.0, 1e-9);
  EXPECT_LT((s.rotation - Mat3::Identity()).cwiseAbs().maxCoeff(), 1e-9);
  EXPECT_LT(s.translation.cwiseAbs().maxCoeff(), 1e-9);
}

TEST(FitSim3, RecoversRandomTransform) {
  SplitMix64 rng(41);
  Sim3 truth;
  truth.scale = 0.5 + rng.next_double() * 2;
  truth.rotation = rot_z(rng.next_double() * 6) * rot_y(rng.next_double() * 6);
  truth.translation = Vec3(rng.next_double() * 4 - 2, rng.next_double() * 4 - 2,
                           rng.next_double() * 4 - 2);
  std::vector<Vec3> src, dst;
  for (int i = 0; i < 20; ++i) {
    Vec3 p(rng.next_double() * 10 - 5, rng.next_double() * 10 - 5,
           rng.next_double() * 10 - 5);
    src.push_back(p);
    dst.push_back(sim3_apply(truth, p));
  }
  Sim3 got = fit_sim3(src, dst);
  EXPECT_NEAR(got.scale, truth.scale, 1e-6);
  EXPECT_LT((got.rotation - truth.rotation).cwiseAbs().maxCoeff(), 1e-6);
  EXPECT_LT((got.translation - truth.translation).cwiseAbs().maxCoeff(), 1e-6);
}

TEST(FitSim3, CollinearDegenerate) {
  std::vector<Vec3> src{{0, 0, 0}, {1, 1, 1}, {2, 2, 2}, {3, 3, 3}};
  std::vector<Vec3> dst{{0, 0, 0}, {0, 1, 0}, {0, 2, 0}, {0, 3, 0}};
  try {
    fit_sim3(src, dst);
    FAIL() << "expected Degenerate";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::Degenerate);
  }
}

TEST(RansacSim3, ExactCorrespondences) {
  SplitMix64 rng(43);
  Sim3 truth;
  truth.scale = 1.3;
  truth.rotation = rot_x(0.4) * rot_z(-0.8);
  truth.translation = Vec3(1, -2, 0.5);
  std::vector<PointPair> corrs;
  for (int i = 0; i < 30; ++i) {
    Vec3 p(rng.next_double() * 6 - 3, rng.next_double() * 6 - 3,
           rng.next_double() * 6 - 3);
    corrs.push_back({p, sim3_apply(truth, p)});
  }
  RansacParams params;
  params.inlier_threshold = 0.05;
  params.rng_seed = 7;
  auto res = ransac_sim3(corrs, params);
  EXPECT_EQ(res.inlier_count, 30);
  EXPECT_NEAR(res.model.scale, truth.scale, 1e-9);
}

TEST(RansacSim3, LabeledOutliersExcluded) {
  SplitMix64 rng(45);
  Sim3 truth;
  truth.scale = 0.9;
  truth.rotation = rot_y(1.1);
  truth.translation = Vec3(-0.5, 0.2, 2);
  std::vector<PointPair> corrs;
  for (int i = 0; i < 20; ++i) {
    Vec3 p(rng.next_double() * 6 - 3, rng.next_double() * 6 - 3,
           rng.next_double() * 6 - 3);
    corrs.push_back({p, sim3_apply(truth, p)});
  }
  for (int i = 0; i < 10; ++i) {
    corrs.push_back({Vec3(rng.next_double() * 6 - 3, rng.next_double() * 6 - 3,
                          rng.next_double() * 6 - 3),
                     Vec3(rng.next_double() * 20 - 10, rng.next_double() * 20 - 10,
                          rng.next_double() * 20 - 10)});
  }
  RansacParams params;
  params.inlier_threshold = 0.05;
  params.rng_seed = 8;
  auto res = ransac_sim3(corrs, params);
  for (int i = 0; i < 20; ++i) EXPECT_TRUE(res.inlier_mask[i]) << "inlier " << i;
  EXPECT_GE(res.inlier_count, 20);
}

TEST(RansacSim3, CollinearNoModel) {
  std::vector<PointPair> corrs;
  for (double t : {0.0, 1.0, 2.0})
    corrs.push_back({Vec3(t, t, t), Vec3(t, 0, 0)});
  RansacParams params;
  params.max_iterations = 50;
  params.rng_seed = 9;
  try {
    ransac_sim3(corrs, params);
    FAIL() << "expected NoModel";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoModel);
  }
}

TEST(Ransac, NeverReturnsBelowMinimalSampleSize) {
  // all correspondences random garbage: either NoModel or >= minimal inliers
  SplitMix64 rng(47);
  std::vector<PixelPair> corrs;
  for (int i = 0; i < 12; ++i)
    corrs.push_back({Pixel{rng.next_double() * 320, rng.next_double() * 240},
                     Pixel{rng.next_double() * 320, rng.next_double() * 240}});
  RansacParams params;
  params.max_iterations = 200;
  params.rng_seed = 10;
  try {
    auto res = ransac_homography(corrs, params);
    EXPECT_GE(res.inlier_count, 4);
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoModel);
  }
}
