#pragma once

#include <cstdint>
#include <optional>
#include <vector>

#include "objslam/slam.hpp"

namespace objslam::detail {

/// Depth (meters) under a keypoint, or nothing when the sample is invalid
/// or outside [cfg.min_depth, cfg.max_depth].
std::optional<double> depth_under(const DepthImage& depth, double u, double v,
                                  const SlamConfig& cfg);

/// Re-picks the representative descriptor: the observation descriptor with
/// the minimum summed Hamming distance to the others (ties toward the
/// earlier keyframe).
void refresh_representative(SlamMap& map, MapPoint& pt);

/// Erases the point and its observations; covisibility weights between its
/// observers drop accordingly.
void detach_point(SlamMap& map, std::uint64_t point_id);

/// Recomputes the whole covisibility graph from the point observations.
void rebuild_covisibility(SlamMap& map);

/// RMS reprojection error over every stored observation (behind-camera
/// observations are skipped).
double map_rms(const SlamMap& map);

/// Levenberg-Marquardt bundle adjustment over the given keyframes and every
/// point they observe; other keyframes observing those points contribute
/// fixed residuals. Throws NotEnoughObservations below 10 residuals.
double run_ba(SlamMap& map, const std::vector<std::uint64_t>& optimized_kfs,
              const SlamConfig& cfg);

struct RelocDetail {
  Pose pose;
  std::uint64_t kf_id = 0;
  int inliers = 0;
  std::vector<std::pair<std::uint64_t, int>> matches;  // point id -> kp idx
};

std::optional<RelocDetail> relocalize_detail(const SlamMap& map,
                                             const Frame& frame,
                                             const SlamConfig& cfg);

}  // namespace objslam::detail
