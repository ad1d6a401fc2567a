#include <algorithm>
#include <climits>
#include <cmath>
#include <set>
#include <utility>

#include "objslam/errors.hpp"
#include "objslam/matching.hpp"
#include "objslam/slam.hpp"
#include "slam_internal.hpp"

namespace objslam {
namespace {

/// Uniform grid over frame keypoints so the windowed search stays linear in
/// the number of nearby keypoints. Candidates come back in keypoint order.
class KeypointGrid {
 public:
  KeypointGrid(const std::vector<Keypoint>& kps, int width, int height,
               int cell = 16)
      : cell_(cell),
        cols_(std::max(1, (width + cell - 1) / cell)),
        rows_(std::max(1, (height + cell - 1) / cell)),
        cells_(static_cast<std::size_t>(cols_) * rows_) {
    for (std::size_t i = 0; i < kps.size(); ++i) {
      int cx = clamp_col(static_cast<int>(kps[i].u) / cell_);
      int cy = clamp_row(static_cast<int>(kps[i].v) / cell_);
      cells_[static_cast<std::size_t>(cy) * cols_ + cx].push_back(
          static_cast<int>(i));
    }
  }

  /// Indices of keypoints within `radius` of (u, v), in ascending order.
  std::vector<int> collect(const std::vector<Keypoint>& kps, double u,
                           double v, double radius) const {
    std::vector<int> out;
    int c0 = clamp_col(static_cast<int>(std::floor((u - radius) / cell_)));
    int c1 = clamp_col(static_cast<int>(std::floor((u + radius) / cell_)));
    int r0 = clamp_row(static_cast<int>(std::floor((v - radius) / cell_)));
    int r1 = clamp_row(static_cast<int>(std::floor((v + radius) / cell_)));
    double r2 = radius * radius;
    for (int cy = r0; cy <= r1; ++cy) {
      for (int cx = c0; cx <= c1; ++cx) {
        for (int i : cells_[static_cast<std::size_t>(cy) * cols_ + cx]) {
          double du = kps[static_cast<std::size_t>(i)].u - u;
          double dv = kps[static_cast<std::size_t>(i)].v - v;
          if (du * du + dv * dv <= r2) out.push_back(i);
        }
      }
    }
    std::sort(out.begin(), out.end());
    return out;
  }

 private:
  int clamp_col(int c) const { return std::clamp(c, 0, cols_ - 1); }
  int clamp_row(int r) const { return std::clamp(r, 0, rows_ - 1); }

  int cell_;
  int cols_;
  int rows_;
  std::vector<std::vector<int>> cells_;
};

struct Claim {
  int distance = INT_MAX;
  std::uint64_t point = 0;
};

/// One tentative match set: keypoint index -> best claiming point.
using ClaimMap = std::map<int, Claim>;

void claim(ClaimMap& claims, int kp, int distance, std::uint64_t pid) {
  auto it = claims.find(kp);
  if (it == claims.end() || distance < it->second.distance ||
      (distance == it->second.distance && pid < it->second.point)) {
    claims[kp] = Claim{distance, pid};
  }
}

struct PnpRound {
  std::vector<std::uint64_t> pids;  // parallel to corrs
  std::vector<int> kp_indices;
  std::vector<PointPixel> corrs;
};

PnpRound round_from_claims(const SlamMap& map, const Frame& frame,
                           const ClaimMap& claims) {
  PnpRound round;
  for (const auto& [kp, c] : claims) {
    const Keypoint& obs = frame.keypoints[static_cast<std::size_t>(kp)];
    round.pids.push_back(c.point);
    round.kp_indices.push_back(kp);
    round.corrs.emplace_back(map.points.at(c.point).position,
                             Pixel{obs.u, obs.v});
  }
  return round;
}

/// Points observed by the reference keyframe and its covisibility
/// neighborhood — the fallback search pool.
std::vector<std::uint64_t> local_map_points(const SlamMap& map,
                                            std::uint64_t reference_kf) {
  std::set<std::uint64_t> pool;
  auto absorb = [&map, &pool](std::uint64_t kf_id) {
    auto it = map.keyframes.find(kf_id);
    if (it == map.keyframes.end()) return;
    for (const auto& [pid, kp] : it->second.observations) pool.insert(pid);
  };
  absorb(reference_kf);
  for (std::uint64_t n : map.covisibility.neighbors(reference_kf)) absorb(n);
  if (pool.empty())
    for (const auto& [pid, pt] : map.points) pool.insert(pid);
  return {pool.begin(), pool.end()};
}

}  // namespace

namespace detail {

std::optional<RelocDetail> relocalize_detail(const SlamMap& map,
                                             const Frame& frame,
                                             const SlamConfig& cfg) {
  if (map.vocabulary == nullptr || map.keyframes.empty()) return std::nullopt;
  BowVector bow = bow_transform(*map.vocabulary, frame.descriptors);
  std::vector<ScoredKeyframe> hits =
      index_query(map.index, bow, cfg.reloc_top_k);

  for (const ScoredKeyframe& hit : hits) {
    const Keyframe& kf = map.keyframes.at(hit.id);
    std::vector<std::uint64_t> pids;
    std::vector<BinaryDescriptor> descs;
    pids.reserve(kf.observations.size());
    for (const auto& [pid, kp] : kf.observations) {
      pids.push_back(pid);
      descs.push_back(map.points.at(pid).descriptor);
    }
    if (descs.size() < 6) continue;

    std::map<std::uint64_t, std::pair<int, int>> best;  // pid -> (dist, kp)
    for (std::size_t j = 0; j < frame.descriptors.size(); ++j) {
      std::vector<MatchPair> nn = hamming_knn(descs, frame.descriptors[j], 2);
      if (nn.empty()) continue;
      if (nn.size() >= 2 && !(nn[0].distance < cfg.match_ratio * nn[1].distance))
        continue;
      std::uint64_t pid = pids[static_cast<std::size_t>(nn[0].train_idx)];
      int d = static_cast<int>(nn[0].distance);
      auto it = best.find(pid);
      if (it == best.end() || d < it->second.first)
        best[pid] = {d, static_cast<int>(j)};
    }

    std::vector<PointPixel> corrs;
    std::vector<std::pair<std::uint64_t, int>> pairs;
    for (const auto& [pid, dk] : best) {
      const Keypoint& kp = frame.keypoints[static_cast<std::size_t>(dk.second)];
      corrs.emplace_back(map.points.at(pid).position, Pixel{kp.u, kp.v});
      pairs.emplace_back(pid, dk.second);
    }
    if (corrs.size() < 6) continue;

    RansacResult<Pose> res;
    try {
      res = ransac_pnp(corrs, map.intrinsics, cfg.pnp);
    } catch (const Error&) {
      continue;
    }
    if (res.inlier_count < cfg.reloc_min_inliers) continue;

    RelocDetail detail;
    detail.pose = res.model;
    detail.kf_id = hit.id;
    detail.inliers = res.inlier_count;
    for (std::size_t i = 0; i < pairs.size(); ++i)
      if (res.inlier_mask[i]) detail.matches.push_back(pairs[i]);
    return detail;
  }
  return std::nullopt;
}

}  // namespace detail

std::optional<Pose> relocalize(const SlamMap& map, const Frame& frame,
                               const SlamConfig& cfg) {
  auto detail = detail::relocalize_detail(map, frame, cfg);
  if (!detail) return std::nullopt;
  return detail->pose;
}

std::optional<Pose> track_frame(SlamMap& map, TrackerState& state,
                                Frame& frame, const SlamConfig& cfg) {
  if (state.mode == TrackMode::kUninitialized)
    fail(ErrorCode::BadParams, "tracker is not initialized");

  if (state.mode == TrackMode::kLost) {
    auto detail = detail::relocalize_detail(map, frame, cfg);
    if (!detail) return std::nullopt;
    frame.pose = detail->pose;
    state.mode = TrackMode::kTracking;
    state.velocity = Pose{};
    state.last_pose = detail->pose;
    state.last_matches = detail->matches;
    state.last_tracked = detail->inliers;
    state.reference_kf = detail->kf_id;
    state.frames_since_keyframe += 1;
    std::set<std::uint64_t> local;
    for (const auto& [pid, kp] : map.keyframes.at(detail->kf_id).observations)
      local.insert(pid);
    for (const auto& [pid, kp] : detail->matches) {
      local.insert(pid);
      MapPoint& pt = map.points.at(pid);
      pt.visible_count += 1;
      pt.found_count += 1;
    }
    state.local_points.assign(local.begin(), local.end());
    return detail->pose;
  }

  Pose predicted = compose(state.velocity, state.last_pose);
  KeypointGrid grid(frame.keypoints, frame.gray.width, frame.gray.height);

  // Windowed search around the projections of the last frame's local set.
  std::vector<std::uint64_t> sorted_local = state.local_points;
  std::sort(sorted_local.begin(), sorted_local.end());
  sorted_local.erase(std::unique(sorted_local.begin(), sorted_local.end()),
                     sorted_local.end());

  Mat3 r_t = predicted.rotation.transpose();
  std::set<std::uint64_t> visible;
  ClaimMap claims;
  for (std::uint64_t pid : sorted_local) {
    auto it = map.points.find(pid);
    if (it == map.points.end()) continue;
    const MapPoint& pt = it->second;
    Vec3 p_c = r_t * (pt.position - predicted.translation);
    if (p_c.z() <= 1e-9) continue;
    Pixel px = project(map.intrinsics, p_c);
    if (px.u < 0 || px.u > map.intrinsics.width - 1 || px.v < 0 ||
        px.v > map.intrinsics.height - 1)
      continue;
    visible.insert(pid);

    std::vector<int> cand =
        grid.collect(frame.keypoints, px.u, px.v, cfg.search_window);
    int best = -1, best_d = INT_MAX, second_d = INT_MAX;
    for (int j : cand) {
      int d = hamming(pt.descriptor, frame.descriptors[static_cast<std::size_t>(j)]);
      if (d < best_d) {
        second_d = best_d;
        best_d = d;
        best = j;
      } else if (d < second_d) {
        second_d = d;
      }
    }
    if (best < 0) continue;
    // The window already constrains the search geometrically, so the ratio
    // here is milder than the one for unconstrained descriptor matching.
    if (second_d != INT_MAX &&
        !(static_cast<double>(best_d) < cfg.window_ratio * second_d))
      continue;
    claim(claims, best, best_d, pid);
  }

  PnpRound round = round_from_claims(map, frame, claims);
  RansacResult<Pose> res;
  if (static_cast<int>(round.corrs.size()) >= 6) {
    try {
      res = ransac_pnp(round.corrs, map.intrinsics, cfg.pnp);
    } catch (const Error&) {
      res.inlier_count = 0;
    }
  }

  if (res.inlier_count < cfg.min_track_inliers) {
    // Fallback: descriptor search over the whole local map, no window.
    std::vector<std::uint64_t> pool = local_map_points(map, state.reference_kf);
    std::vector<BinaryDescriptor> descs;
    descs.reserve(pool.size());
    for (std::uint64_t pid : pool)
      descs.push_back(map.points.at(pid).descriptor);

    ClaimMap fallback_claims;
    if (descs.size() >= 6) {
      std::map<std::uint64_t, std::pair<int, int>> best;  // pid -> (dist, kp)
      for (std::size_t j = 0; j < frame.descriptors.size(); ++j) {
        std::vector<MatchPair> nn = hamming_knn(descs, frame.descriptors[j], 2);
        if (nn.empty()) continue;
        if (nn.size() >= 2 &&
            !(nn[0].distance < cfg.match_ratio * nn[1].distance))
          continue;
        std::uint64_t pid = pool[static_cast<std::size_t>(nn[0].train_idx)];
        int d = static_cast<int>(nn[0].distance);
        auto it = best.find(pid);
        if (it == best.end() || d < it->second.first)
          best[pid] = {d, static_cast<int>(j)};
      }
      for (const auto& [pid, dk] : best)
        claim(fallback_claims, dk.second, dk.first, pid);
    }
    PnpRound fb = round_from_claims(map, frame, fallback_claims);
    if (static_cast<int>(fb.corrs.size()) >= 6) {
      try {
        RansacResult<Pose> res2 = ransac_pnp(fb.corrs, map.intrinsics, cfg.pnp);
        if (res2.inlier_count > res.inlier_count) {
          res = std::move(res2);
          round = std::move(fb);
        }
      } catch (const Error&) {
      }
    }
  }

  if (res.inlier_count < cfg.min_track_inliers) {
    for (std::uint64_t pid : visible) map.points.at(pid).visible_count += 1;
    state.mode = TrackMode::kLost;
    return std::nullopt;
  }

  std::vector<std::pair<std::uint64_t, int>> inlier_matches;
  std::set<std::uint64_t> found;
  for (std::size_t i = 0; i < round.corrs.size(); ++i) {
    if (!res.inlier_mask[i]) continue;
    inlier_matches.emplace_back(round.pids[i], round.kp_indices[i]);
    found.insert(round.pids[i]);
  }
  std::sort(inlier_matches.begin(), inlier_matches.end());

  for (std::uint64_t pid : found) visible.insert(pid);
  for (std::uint64_t pid : visible) map.points.at(pid).visible_count += 1;
  for (std::uint64_t pid : found) map.points.at(pid).found_count += 1;

  Pose pose = res.model;
  frame.pose = pose;
  state.velocity = compose(pose, invert(state.last_pose));
  state.last_pose = pose;
  state.last_matches = inlier_matches;
  state.last_tracked = res.inlier_count;
  state.frames_since_keyframe += 1;

  // Next frame's local set: this frame's inliers plus the reference
  // keyframe's points.
  std::set<std::uint64_t> local(found.begin(), found.end());
  auto ref = map.keyframes.find(state.reference_kf);
  if (ref != map.keyframes.end())
    for (const auto& [pid, kp] : ref->second.observations) local.insert(pid);
  state.local_points.assign(local.begin(), local.end());
  return pose;
}

PipelineResult process_frame(SlamMap& map, TrackerState& state, Frame& frame,
                             const SlamConfig& cfg) {
  PipelineResult out;
  if (state.mode == TrackMode::kUninitialized) {
    state = initialize_rgbd(map, frame, cfg);
    out.pose = Pose{};
    out.new_keyframe = map.keyframes.begin()->first;
    return out;
  }

  out.pose = track_frame(map, state, frame, cfg);
  if (!out.pose) return out;

  out.new_keyframe = insert_keyframe(map, state, frame, *out.pose, cfg);
  if (!out.new_keyframe) return out;

  cull_map_points(map, cfg);
  try {
    out.ba_rms = local_ba(map, *out.new_keyframe, cfg);
  } catch (const Error& e) {
    if (e.code() != ErrorCode::NotEnoughObservations) throw;
  }
  out.loop_candidate = detect_loop(map, *out.new_keyframe, cfg);
  if (out.loop_candidate) {
    try {
      close_loop(map, *out.new_keyframe, *out.loop_candidate, cfg);
      out.loop_closed = true;
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotEnoughInliers) throw;
    }
  }
  return out;
}

}  // namespace objslam
