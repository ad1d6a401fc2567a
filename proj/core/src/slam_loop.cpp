#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <utility>
#include <vector>

#include "objslam/errors.hpp"
#include "objslam/matching.hpp"
#include "objslam/slam.hpp"
#include "slam_internal.hpp"

namespace objslam {

std::optional<std::uint64_t> detect_loop(SlamMap& map, std::uint64_t kf_id,
                                         const SlamConfig& cfg) {
  auto kf_it = map.keyframes.find(kf_id);
  if (kf_it == map.keyframes.end())
    fail(ErrorCode::BadParams, "unknown keyframe");
  if (map.index.vectors.find(kf_id) == map.index.vectors.end())
    fail(ErrorCode::BadParams, "keyframe is not BoW-indexed");
  if (map.keyframes.size() < 10) {
    map.loop_streaks.clear();
    return std::nullopt;
  }

  std::vector<std::uint64_t> neighbors = map.covisibility.neighbors(kf_id);
  if (neighbors.empty()) {
    map.loop_streaks.clear();
    return std::nullopt;
  }

  // The weakest covisible neighbor sets the score bar.
  double min_score = std::numeric_limits<double>::infinity();
  for (std::uint64_t n : neighbors) {
    double s = bow_similarity(kf_it->second.bow, map.keyframes.at(n).bow);
    min_score = std::min(min_score, s);
  }

  std::set<std::uint64_t> excluded(neighbors.begin(), neighbors.end());
  excluded.insert(kf_id);

  std::map<std::uint64_t, double> candidates;
  for (const auto& [other, bow] : map.index.vectors) {
    if (excluded.count(other)) continue;
    double s = bow_similarity(kf_it->second.bow, bow);
    if (s >= min_score) candidates[other] = s;
  }

  // A candidate must survive loop_consistency consecutive insertions.
  std::map<std::uint64_t, int> streaks;
  for (const auto& [id, score] : candidates) {
    auto prev = map.loop_streaks.find(id);
    streaks[id] = prev == map.loop_streaks.end() ? 1 : prev->second + 1;
  }
  map.loop_streaks = std::move(streaks);

  std::optional<std::uint64_t> best;
  double best_score = -1.0;
  for (const auto& [id, streak] : map.loop_streaks) {
    if (streak < cfg.loop_consistency) continue;
    double s = candidates.at(id);
    if (s > best_score) {
      best_score = s;
      best = id;
    }
  }
  return best;
}

namespace {

Pose corrected_pose(const Sim3& s, const Pose& p) {
  Pose out;
  out.rotation = reorthonormalize(s.rotation * p.rotation);
  out.translation = s.scale * (s.rotation * p.translation) + s.translation;
  return out;
}

struct FusePair {
  std::uint64_t keep = 0;   // candidate-side point
  std::uint64_t merge = 0;  // corrected-side duplicate
};

}  // namespace

LoopCloseResult close_loop(SlamMap& map, std::uint64_t kf_id,
                           std::uint64_t candidate_id, const SlamConfig& cfg) {
  auto kf_it = map.keyframes.find(kf_id);
  auto cand_it = map.keyframes.find(candidate_id);
  if (kf_it == map.keyframes.end() || cand_it == map.keyframes.end())
    fail(ErrorCode::BadParams, "unknown loop keyframe");
  if (kf_id == candidate_id)
    fail(ErrorCode::BadParams, "loop ends must differ");

  // Match the two keyframes' map points by representative descriptor.
  std::vector<std::uint64_t> pids_a, pids_b;
  std::vector<BinaryDescriptor> descs_b;
  for (const auto& [pid, kp] : kf_it->second.observations)
    pids_a.push_back(pid);
  for (const auto& [pid, kp] : cand_it->second.observations) {
    pids_b.push_back(pid);
    descs_b.push_back(map.points.at(pid).descriptor);
  }

  std::map<std::uint64_t, std::pair<int, std::uint64_t>> best_for_b;
  for (std::uint64_t pa : pids_a) {
    const BinaryDescriptor& d = map.points.at(pa).descriptor;
    std::vector<MatchPair> nn = hamming_knn(descs_b, d, 2);
    if (nn.empty()) continue;
    if (nn.size() >= 2 && !(nn[0].distance < cfg.match_ratio * nn[1].distance))
      continue;
    std::uint64_t pb = pids_b[static_cast<std::size_t>(nn[0].train_idx)];
    int dist = static_cast<int>(nn[0].distance);
    auto it = best_for_b.find(pb);
    if (it == best_for_b.end() || dist < it->second.first)
      best_for_b[pb] = {dist, pa};
  }

  std::vector<PointPair> corrs;
  std::vector<std::pair<std::uint64_t, std::uint64_t>> pairs;  // (pa, pb)
  for (const auto& [pb, da] : best_for_b) {
    corrs.emplace_back(map.points.at(da.second).position,
                       map.points.at(pb).position);
    pairs.emplace_back(da.second, pb);
  }
  if (static_cast<int>(corrs.size()) < cfg.loop_min_inliers)
    fail(ErrorCode::NotEnoughInliers,
         std::to_string(corrs.size()) + " point matches, need " +
             std::to_string(cfg.loop_min_inliers));

  RansacResult<Sim3> res;
  try {
    res = ransac_sim3(corrs, cfg.sim3);
  } catch (const Error&) {
    fail(ErrorCode::NotEnoughInliers, "similarity estimation failed");
  }
  if (res.inlier_count < cfg.loop_min_inliers)
    fail(ErrorCode::NotEnoughInliers,
         std::to_string(res.inlier_count) + " Sim3 inliers, need " +
             std::to_string(cfg.loop_min_inliers));

  LoopCloseResult out;
  out.sim3_inliers = res.inlier_count;
  out.rms_before = detail::map_rms(map);

  // Correct the current loop end and its covisibility neighborhood.
  const Sim3& s = res.model;
  std::set<std::uint64_t> corrected{kf_id};
  for (std::uint64_t n : map.covisibility.neighbors(kf_id)) corrected.insert(n);
  corrected.erase(candidate_id);

  for (std::uint64_t id : corrected) {
    Keyframe& kf = map.keyframes.at(id);
    kf.pose = corrected_pose(s, kf.pose);
  }
  for (auto& [pid, pt] : map.points)
    if (corrected.count(pt.first_kf)) pt.position = sim3_apply(s, pt.position);

  // Fuse duplicates: candidate-side points projected into the corrected
  // keyframes against the observations already there.
  std::set<std::uint64_t> cand_side{candidate_id};
  for (std::uint64_t n : map.covisibility.neighbors(candidate_id))
    cand_side.insert(n);
  std::set<std::uint64_t> cand_points;
  for (std::uint64_t id : cand_side) {
    auto it = map.keyframes.find(id);
    if (it == map.keyframes.end()) continue;
    for (const auto& [pid, kp] : it->second.observations)
      if (!corrected.count(map.points.at(pid).first_kf))
        cand_points.insert(pid);
  }

  std::vector<FusePair> fuses;
  std::set<std::uint64_t> merged;
  for (std::uint64_t ckf_id : corrected) {
    const Keyframe& ckf = map.keyframes.at(ckf_id);
    Mat3 r_t = ckf.pose.rotation.transpose();
    for (std::uint64_t q : cand_points) {
      const MapPoint& cand_pt = map.points.at(q);
      Vec3 p_c = r_t * (cand_pt.position - ckf.pose.translation);
      if (p_c.z() <= 1e-9) continue;
      Pixel px = project(map.intrinsics, p_c);
      if (px.u < 0 || px.u > map.intrinsics.width - 1 || px.v < 0 ||
          px.v > map.intrinsics.height - 1)
        continue;
      for (const auto& [pid, kp] : ckf.observations) {
        if (pid == q || merged.count(pid) || cand_points.count(pid)) continue;
        const MapPoint& local_pt = map.points.at(pid);
        const Keypoint& obs = ckf.keypoints[static_cast<std::size_t>(kp)];
        double du = obs.u - px.u, dv = obs.v - px.v;
        if (du * du + dv * dv > cfg.fuse_px * cfg.fuse_px) continue;
        if ((local_pt.position - cand_pt.position).norm() > cfg.fuse_dist)
          continue;
        fuses.push_back(FusePair{q, pid});
        merged.insert(pid);
      }
    }
  }

  for (const FusePair& f : fuses) {
    auto keep_it = map.points.find(f.keep);
    auto merge_it = map.points.find(f.merge);
    if (keep_it == map.points.end() || merge_it == map.points.end()) continue;
    MapPoint& keep = keep_it->second;
    MapPoint& gone = merge_it->second;
    for (const auto& [okf, okp] : gone.observations) {
      Keyframe& kf = map.keyframes.at(okf);
      kf.observations.erase(f.merge);
      if (keep.observations.find(okf) == keep.observations.end()) {
        keep.observations[okf] = okp;
        kf.observations[f.keep] = okp;
      }
    }
    keep.visible_count += gone.visible_count;
    keep.found_count += gone.found_count;
    keep.first_kf = std::min(keep.first_kf, gone.first_kf);
    map.points.erase(merge_it);
    detail::refresh_representative(map, keep);
    ++out.fused_points;
  }
  detail::rebuild_covisibility(map);

  // Global adjustment with both loop ends pinned, which anchors their
  // relative pose.
  std::vector<std::uint64_t> optimized;
  for (const auto& [id, kf] : map.keyframes)
    if (id != kf_id && id != candidate_id) optimized.push_back(id);
  if (!optimized.empty()) {
    try {
      out.rms_after = detail::run_ba(map, optimized, cfg);
    } catch (const Error& e) {
      if (e.code() != ErrorCode::NotEnoughObservations) throw;
      out.rms_after = detail::map_rms(map);
    }
  } else {
    out.rms_after = detail::map_rms(map);
  }
  return out;
}

}  // namespace objslam
