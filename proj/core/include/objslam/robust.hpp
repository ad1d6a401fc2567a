#pragma once

#include <cstdint>
#include <utility>
#include <vector>

#include "objslam/geometry.hpp"

namespace objslam {

struct RansacParams {
  int max_iterations = 2000;
  double inlier_threshold = 3.0;  // pixels or meters, per model
  double confidence = 0.99;
  std::uint64_t rng_seed = 0;
};

template <typename M>
struct RansacResult {
  M model;
  std::vector<std::uint8_t> inlier_mask;
  int inlier_count = 0;
  int iterations_run = 0;
};

using PixelPair = std::pair<Pixel, Pixel>;       // source -> destination
using PointPixel = std::pair<Vec3, Pixel>;       // world point -> observation
using PointPair = std::pair<Vec3, Vec3>;         // source -> destination

/// Normalized DLT (Hartley): both point sets translated to their centroid
/// and scaled to mean distance sqrt(2) before the SVD solve.
Homography fit_homography(const std::vector<PixelPair>& corrs);

/// Minimal 4-point RANSAC; inlier test is the symmetric transfer error
/// (forward plus backward squared distances under the threshold squared).
RansacResult<Homography> ransac_homography(const std::vector<PixelPair>& corrs,
                                           const RansacParams& params);

/// Minimal 6-point DLT pose hypotheses refined by Levenberg-Marquardt on the
/// inliers. The returned Pose maps camera to world.
RansacResult<Pose> ransac_pnp(const std::vector<PointPixel>& corrs,
                              const Intrinsics& k, const RansacParams& params);

/// Closed-form similarity from aligned point sets: SVD rotation with
/// reflection guard, scale as the ratio of RMS deviations, translation from
/// the centroids.
Sim3 fit_sim3(const std::vector<Vec3>& src, const std::vector<Vec3>& dst);

RansacResult<Sim3> ransac_sim3(const std::vector<PointPair>& corrs,
                               const RansacParams& params);

/// Squared symmetric transfer error of one correspondence under H.
double homography_sym_error2(const Homography& h, const Homography& h_inv,
                             const PixelPair& corr);

/// Reprojection residual of a world point under a camera-to-world pose.
/// Returns (du, dv) or throws BehindCamera.
Vec2 reprojection_residual(const Pose& camera_to_world, const Intrinsics& k,
                           const Vec3& p_world, const Pixel& observed);

}  // namespace objslam
