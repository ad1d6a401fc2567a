#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>
#include <utility>

#include "objslam/errors.hpp"
#include "objslam/slam.hpp"
#include "slam_internal.hpp"

namespace objslam {

int CovisibilityGraph::weight(std::uint64_t a, std::uint64_t b) const {
  auto row = adjacency.find(a);
  if (row == adjacency.end()) return 0;
  auto cell = row->second.find(b);
  return cell == row->second.end() ? 0 : cell->second;
}

void CovisibilityGraph::set_weight(std::uint64_t a, std::uint64_t b, int w) {
  if (a == b) return;
  if (w < 1) {
    auto drop = [this](std::uint64_t x, std::uint64_t y) {
      auto row = adjacency.find(x);
      if (row == adjacency.end()) return;
      row->second.erase(y);
      if (row->second.empty()) adjacency.erase(row);
    };
    drop(a, b);
    drop(b, a);
    return;
  }
  adjacency[a][b] = w;
  adjacency[b][a] = w;
}

void CovisibilityGraph::add_weight(std::uint64_t a, std::uint64_t b,
                                   int delta) {
  set_weight(a, b, weight(a, b) + delta);
}

void CovisibilityGraph::drop_keyframe(std::uint64_t a) {
  auto row = adjacency.find(a);
  if (row == adjacency.end()) return;
  for (const auto& [other, w] : row->second) {
    auto o = adjacency.find(other);
    if (o == adjacency.end()) continue;
    o->second.erase(a);
    if (o->second.empty()) adjacency.erase(o);
  }
  adjacency.erase(a);
}

std::vector<std::uint64_t> CovisibilityGraph::neighbors(std::uint64_t a,
                                                        int min_weight) const {
  std::vector<std::uint64_t> out;
  auto row = adjacency.find(a);
  if (row == adjacency.end()) return out;
  for (const auto& [other, w] : row->second)
    if (w >= min_weight) out.push_back(other);
  return out;
}

namespace detail {

std::optional<double> depth_under(const DepthImage& depth, double u, double v,
                                  const SlamConfig& cfg) {
  int x = static_cast<int>(std::lround(u));
  int y = static_cast<int>(std::lround(v));
  if (!depth.in_bounds(x, y) || !depth.valid(x, y)) return std::nullopt;
  double d = depth.at(x, y);
  if (d < cfg.min_depth || d > cfg.max_depth) return std::nullopt;
  return d;
}

void refresh_representative(SlamMap& map, MapPoint& pt) {
  std::vector<const BinaryDescriptor*> cands;
  cands.reserve(pt.observations.size());
  for (const auto& [kf_id, kp] : pt.observations) {
    const Keyframe& kf = map.keyframes.at(kf_id);
    cands.push_back(&kf.descriptors[static_cast<std::size_t>(kp)]);
  }
  if (cands.empty()) return;
  std::size_t best = 0;
  long best_sum = -1;
  for (std::size_t i = 0; i < cands.size(); ++i) {
    long sum = 0;
    for (std::size_t j = 0; j < cands.size(); ++j)
      sum += hamming(*cands[i], *cands[j]);
    if (best_sum < 0 || sum < best_sum) {
      best_sum = sum;
      best = i;
    }
  }
  pt.descriptor = *cands[best];
}

void detach_point(SlamMap& map, std::uint64_t point_id) {
  auto it = map.points.find(point_id);
  if (it == map.points.end()) return;
  std::vector<std::uint64_t> observers;
  for (const auto& [kf_id, kp] : it->second.observations) {
    auto kf = map.keyframes.find(kf_id);
    if (kf != map.keyframes.end()) kf->second.observations.erase(point_id);
    observers.push_back(kf_id);
  }
  for (std::size_t i = 0; i < observers.size(); ++i)
    for (std::size_t j = i + 1; j < observers.size(); ++j)
      map.covisibility.add_weight(observers[i], observers[j], -1);
  map.points.erase(it);
}

void rebuild_covisibility(SlamMap& map) {
  map.covisibility.adjacency.clear();
  for (const auto& [pid, pt] : map.points) {
    std::vector<std::uint64_t> obs;
    obs.reserve(pt.observations.size());
    for (const auto& [kf_id, kp] : pt.observations) obs.push_back(kf_id);
    for (std::size_t i = 0; i < obs.size(); ++i)
      for (std::size_t j = i + 1; j < obs.size(); ++j)
        map.covisibility.add_weight(obs[i], obs[j], 1);
  }
}

double map_rms(const SlamMap& map) {
  double ss = 0.0;
  std::size_t n = 0;
  for (const auto& [kf_id, kf] : map.keyframes) {
    for (const auto& [pid, kp] : kf.observations) {
      const MapPoint& pt = map.points.at(pid);
      const Keypoint& obs = kf.keypoints[static_cast<std::size_t>(kp)];
      try {
        Vec2 r = reprojection_residual(kf.pose, map.intrinsics, pt.position,
                                       Pixel{obs.u, obs.v});
        ss += r.squaredNorm();
        ++n;
      } catch (const Error&) {
        // behind-camera observations carry no pixel error
      }
    }
  }
  return n == 0 ? 0.0 : std::sqrt(ss / static_cast<double>(n));
}

}  // namespace detail

Frame make_frame(double timestamp, GrayImage gray, DepthImage depth,
                 const SlamConfig& cfg) {
  if (gray.width != depth.width || gray.height != depth.height)
    fail(ErrorCode::BadParams, "gray and depth dimensions differ");
  Frame f;
  f.timestamp = timestamp;
  ExtractResult ex = extract(gray, cfg.feature_budget, DescriptorKind::kBinary);
  f.keypoints = std::move(ex.keypoints);
  f.descriptors = std::move(ex.binary);
  f.gray = std::move(gray);
  f.depth = std::move(depth);
  return f;
}

TrackerState initialize_rgbd(SlamMap& map, Frame& frame,
                             const SlamConfig& cfg) {
  if (!map.keyframes.empty() || !map.points.empty())
    fail(ErrorCode::BadParams, "initialize_rgbd needs an empty map");
  if (map.vocabulary == nullptr)
    fail(ErrorCode::BadParams, "map has no vocabulary");

  std::vector<std::pair<int, double>> valid;  // keypoint index -> depth
  for (std::size_t i = 0; i < frame.keypoints.size(); ++i) {
    const Keypoint& kp = frame.keypoints[i];
    if (auto d = detail::depth_under(frame.depth, kp.u, kp.v, cfg))
      valid.emplace_back(static_cast<int>(i), *d);
  }
  if (static_cast<int>(valid.size()) < cfg.init_min_points) {
    std::ostringstream msg;
    msg << valid.size() << " keypoints with usable depth, need "
        << cfg.init_min_points;
    fail(ErrorCode::NotEnoughDepth, msg.str());
  }

  Keyframe kf;
  kf.id = map.next_keyframe_id++;
  kf.pose = Pose{};
  kf.keypoints = frame.keypoints;
  kf.descriptors = frame.descriptors;
  kf.bow = bow_transform(*map.vocabulary, frame.descriptors);

  TrackerState state;
  for (const auto& [idx, d] : valid) {
    const Keypoint& kp = frame.keypoints[static_cast<std::size_t>(idx)];
    MapPoint pt;
    pt.id = map.next_point_id++;
    pt.position = backproject(map.intrinsics, Pixel{kp.u, kp.v}, d);
    pt.descriptor = frame.descriptors[static_cast<std::size_t>(idx)];
    pt.observations[kf.id] = idx;
    pt.visible_count = 1;
    pt.found_count = 1;
    pt.first_kf = kf.id;
    kf.observations[pt.id] = idx;
    state.local_points.push_back(pt.id);
    state.last_matches.emplace_back(pt.id, idx);
    map.points.emplace(pt.id, std::move(pt));
  }
  index_add(map.index, kf.id, kf.bow);
  std::uint64_t kf_id = kf.id;
  map.keyframes.emplace(kf_id, std::move(kf));

  frame.pose = Pose{};
  state.mode = TrackMode::kTracking;
  state.velocity = Pose{};
  state.last_pose = Pose{};
  state.reference_kf = kf_id;
  state.frames_since_keyframe = 0;
  state.last_tracked = static_cast<int>(valid.size());
  return state;
}

std::optional<std::uint64_t> insert_keyframe(SlamMap& map, TrackerState& state,
                                             const Frame& frame,
                                             const Pose& pose,
                                             const SlamConfig& cfg) {
  const Keyframe& ref = map.keyframes.at(state.reference_kf);
  bool interval_due = state.frames_since_keyframe >= cfg.keyframe_interval;
  bool coverage_weak =
      static_cast<double>(state.last_tracked) <
      cfg.keyframe_tracked_fraction * static_cast<double>(ref.observations.size());
  if (!interval_due && !coverage_weak) return std::nullopt;

  Keyframe kf;
  kf.id = map.next_keyframe_id++;
  kf.pose = pose;
  kf.keypoints = frame.keypoints;
  kf.descriptors = frame.descriptors;
  kf.bow = bow_transform(*map.vocabulary, frame.descriptors);

  std::vector<char> used(frame.keypoints.size(), 0);
  std::vector<std::uint64_t> refreshed;  // after the keyframe is in the map
  for (const auto& [pid, kp_idx] : state.last_matches) {
    auto it = map.points.find(pid);
    if (it == map.points.end()) continue;  // culled since tracking
    if (used[static_cast<std::size_t>(kp_idx)]) continue;
    used[static_cast<std::size_t>(kp_idx)] = 1;
    kf.observations[pid] = kp_idx;
    it->second.observations[kf.id] = kp_idx;
    refreshed.push_back(pid);
  }
  // Local points not matched this frame, projected into the new keyframe.
  // An unmatched keypoint that lands on one of them is the same physical
  // point whose track briefly broke; absorb it instead of minting a twin.
  // The projection carries the current pose error, so the search is wider
  // than the loop-fusion gates and the descriptor makes the call.
  struct FuseCandidate {
    std::uint64_t pid;
    double u, v;
    Vec3 position;
    const BinaryDescriptor* descriptor;
  };
  std::vector<FuseCandidate> fusable;
  Mat3 r_t = pose.rotation.transpose();
  for (std::uint64_t pid : state.local_points) {
    auto it = map.points.find(pid);
    if (it == map.points.end()) continue;
    if (kf.observations.count(pid)) continue;
    Vec3 p_c = r_t * (it->second.position - pose.translation);
    if (p_c.z() <= 1e-9) continue;
    Pixel px = project(map.intrinsics, p_c);
    fusable.push_back(
        FuseCandidate{pid, px.u, px.v, it->second.position, &it->second.descriptor});
  }

  for (std::size_t i = 0; i < frame.keypoints.size(); ++i) {
    if (used[i]) continue;
    const Keypoint& kp = frame.keypoints[i];
    auto d = detail::depth_under(frame.depth, kp.u, kp.v, cfg);
    if (!d) continue;
    Vec3 p_w = pose.apply(backproject(map.intrinsics, Pixel{kp.u, kp.v}, *d));

    int hit = -1;
    int hit_bits = cfg.insert_fuse_hamming + 1;  // candidates are pid-ascending
    const double px2 = cfg.insert_fuse_px * cfg.insert_fuse_px;
    for (std::size_t c = 0; c < fusable.size(); ++c) {
      double du = fusable[c].u - kp.u, dv = fusable[c].v - kp.v;
      if (du * du + dv * dv > px2) continue;
      if ((fusable[c].position - p_w).norm() > cfg.insert_fuse_dist) continue;
      int bits = hamming(*fusable[c].descriptor, frame.descriptors[i]);
      if (bits >= hit_bits) continue;
      hit = static_cast<int>(c);
      hit_bits = bits;
    }
    if (hit >= 0) {
      MapPoint& pt = map.points.at(fusable[static_cast<std::size_t>(hit)].pid);
      kf.observations[pt.id] = static_cast<int>(i);
      pt.observations[kf.id] = static_cast<int>(i);
      ++pt.visible_count;
      ++pt.found_count;
      refreshed.push_back(pt.id);
      fusable.erase(fusable.begin() + hit);  // one keypoint per point
      continue;
    }

    MapPoint pt;
    pt.id = map.next_point_id++;
    pt.position = p_w;
    pt.descriptor = frame.descriptors[i];
    pt.observations[kf.id] = static_cast<int>(i);
    pt.visible_count = 1;
    pt.found_count = 1;
    pt.first_kf = kf.id;
    kf.observations[pt.id] = static_cast<int>(i);
    map.points.emplace(pt.id, std::move(pt));
  }

  std::map<std::uint64_t, int> shared;
  for (const auto& [pid, kp_idx] : kf.observations) {
    for (const auto& [other, okp] : map.points.at(pid).observations)
      if (other != kf.id) ++shared[other];
  }
  for (const auto& [other, w] : shared)
    map.covisibility.set_weight(kf.id, other, w);

  index_add(map.index, kf.id, kf.bow);
  std::uint64_t kf_id = kf.id;

  state.reference_kf = kf_id;
  state.frames_since_keyframe = 0;
  state.local_points.clear();
  for (const auto& [pid, kp_idx] : kf.observations)
    state.local_points.push_back(pid);

  map.keyframes.emplace(kf_id, std::move(kf));
  for (std::uint64_t pid : refreshed)
    detail::refresh_representative(map, map.points.at(pid));
  return kf_id;
}

std::vector<std::uint64_t> cull_map_points(SlamMap& map,
                                           const SlamConfig& cfg) {
  std::vector<std::uint64_t> removed;
  if (map.keyframes.empty()) return removed;
  std::uint64_t latest = map.keyframes.rbegin()->first;
  for (const auto& [pid, pt] : map.points) {
    std::uint64_t age = latest - pt.first_kf;
    if (age < static_cast<std::uint64_t>(cfg.cull_age_keyframes)) continue;
    double ratio = pt.visible_count > 0
                       ? static_cast<double>(pt.found_count) /
                             static_cast<double>(pt.visible_count)
                       : 0.0;
    bool reliable = ratio >= cfg.cull_found_ratio &&
                    static_cast<int>(pt.observations.size()) >=
                        cfg.cull_min_observations;
    if (!reliable) removed.push_back(pid);
  }
  for (std::uint64_t pid : removed) detail::detach_point(map, pid);
  return removed;
}

void add_object_marker(SlamMap& map, const Detection& detection,
                       const Pose& camera_pose, const SlamConfig& cfg) {
  if (!detection.depth)
    fail(ErrorCode::MissingDepth,
         "detection '" + detection.name + "' carries no depth estimate");
  Vec3 pos = marker_world(camera_pose, *detection.depth);
  for (ObjectMarker& m : map.markers) {
    if (m.name != detection.name) continue;
    if ((m.position - pos).norm() <= cfg.marker_merge_dist) {
      m.position = 0.5 * (m.position + pos);
      return;
    }
  }
  map.markers.push_back(ObjectMarker{detection.name, pos});
}

double ate_rmse(const std::vector<Pose>& estimated,
                const std::vector<Pose>& truth) {
  if (estimated.size() != truth.size())
    fail(ErrorCode::LengthMismatch, "trajectory lengths differ");
  if (estimated.size() < 2)
    fail(ErrorCode::LengthMismatch, "need at least two poses");
  std::vector<Vec3> src, dst;
  src.reserve(estimated.size());
  dst.reserve(truth.size());
  for (const Pose& p : estimated) src.push_back(p.translation);
  for (const Pose& p : truth) dst.push_back(p.translation);

  // Rigid alignment: rotation from the similarity fit, scale pinned to 1,
  // translation recomputed from the centroids.
  Sim3 s = fit_sim3(src, dst);
  Vec3 mu_src = Vec3::Zero(), mu_dst = Vec3::Zero();
  for (const Vec3& p : src) mu_src += p;
  for (const Vec3& p : dst) mu_dst += p;
  mu_src /= static_cast<double>(src.size());
  mu_dst /= static_cast<double>(dst.size());
  Vec3 t = mu_dst - s.rotation * mu_src;

  double ss = 0.0;
  for (std::size_t i = 0; i < src.size(); ++i)
    ss += (s.rotation * src[i] + t - dst[i]).squaredNorm();
  return std::sqrt(ss / static_cast<double>(src.size()));
}

std::vector<std::string> audit_map(const SlamMap& map) {
  std::vector<std::string> issues;
  auto report = [&issues](const std::string& s) { issues.push_back(s); };

  for (const auto& [kf_id, kf] : map.keyframes) {
    if (kf.id != kf_id) report("keyframe key/id mismatch");
    if (kf.keypoints.size() != kf.descriptors.size())
      report("keyframe " + std::to_string(kf_id) +
             ": keypoint/descriptor count mismatch");
    for (const auto& [pid, kp] : kf.observations) {
      auto pt = map.points.find(pid);
      if (pt == map.points.end()) {
        report("keyframe " + std::to_string(kf_id) + " observes missing point " +
               std::to_string(pid));
        continue;
      }
      auto back = pt->second.observations.find(kf_id);
      if (back == pt->second.observations.end() || back->second != kp)
        report("observation " + std::to_string(kf_id) + "->" +
               std::to_string(pid) + " not mirrored");
      if (kp < 0 || kp >= static_cast<int>(kf.keypoints.size()))
        report("keyframe " + std::to_string(kf_id) +
               ": observation keypoint index out of range");
    }
  }
  for (const auto& [pid, pt] : map.points) {
    if (pt.id != pid) report("point key/id mismatch");
    if (pt.observations.empty())
      report("point " + std::to_string(pid) + " has no observations");
    if (pt.found_count > pt.visible_count)
      report("point " + std::to_string(pid) + " found exceeds visible");
    for (const auto& [kf_id, kp] : pt.observations) {
      auto kf = map.keyframes.find(kf_id);
      if (kf == map.keyframes.end()) {
        report("point " + std::to_string(pid) + " observed by missing keyframe " +
               std::to_string(kf_id));
        continue;
      }
      auto back = kf->second.observations.find(pid);
      if (back == kf->second.observations.end() || back->second != kp)
        report("observation " + std::to_string(pid) + "->" +
               std::to_string(kf_id) + " not mirrored");
    }
  }

  // Covisibility must equal the shared-point counts exactly.
  CovisibilityGraph expected;
  for (const auto& [pid, pt] : map.points) {
    std::vector<std::uint64_t> obs;
    for (const auto& [kf_id, kp] : pt.observations) obs.push_back(kf_id);
    for (std::size_t i = 0; i < obs.size(); ++i)
      for (std::size_t j = i + 1; j < obs.size(); ++j)
        expected.add_weight(obs[i], obs[j], 1);
  }
  if (!(expected == map.covisibility))
    report("covisibility does not match shared-point counts");

  if (map.index.vectors.size() != map.keyframes.size())
    report("BoW index size does not match keyframe count");
  for (const auto& [kf_id, kf] : map.keyframes) {
    auto v = map.index.vectors.find(kf_id);
    if (v == map.index.vectors.end())
      report("keyframe " + std::to_string(kf_id) + " missing from BoW index");
    else if (!(v->second == kf.bow))
      report("keyframe " + std::to_string(kf_id) + " BoW differs from index");
  }
  return issues;
}

namespace {

bool keyframes_equal(const Keyframe& a, const Keyframe& b) {
  if (a.id != b.id || a.observations != b.observations || !(a.bow == b.bow))
    return false;
  if (!exact_equal(a.pose.rotation, b.pose.rotation) ||
      !exact_equal(a.pose.translation, b.pose.translation))
    return false;
  if (a.keypoints.size() != b.keypoints.size() ||
      !(a.descriptors == b.descriptors))
    return false;
  for (std::size_t i = 0; i < a.keypoints.size(); ++i) {
    const Keypoint& x = a.keypoints[i];
    const Keypoint& y = b.keypoints[i];
    if (x.u != y.u || x.v != y.v || x.level != y.level ||
        x.orientation != y.orientation || x.score != y.score)
      return false;
  }
  return true;
}

bool points_equal(const MapPoint& a, const MapPoint& b) {
  return a.id == b.id && exact_equal(a.position, b.position) &&
         a.descriptor == b.descriptor && a.observations == b.observations &&
         a.visible_count == b.visible_count && a.found_count == b.found_count &&
         a.first_kf == b.first_kf;
}

}  // namespace

bool maps_structurally_equal(const SlamMap& a, const SlamMap& b) {
  if (a.keyframes.size() != b.keyframes.size() ||
      a.points.size() != b.points.size() ||
      a.markers.size() != b.markers.size())
    return false;
  for (auto ia = a.keyframes.begin(), ib = b.keyframes.begin();
       ia != a.keyframes.end(); ++ia, ++ib) {
    if (ia->first != ib->first || !keyframes_equal(ia->second, ib->second))
      return false;
  }
  for (auto ia = a.points.begin(), ib = b.points.begin(); ia != a.points.end();
       ++ia, ++ib) {
    if (ia->first != ib->first || !points_equal(ia->second, ib->second))
      return false;
  }
  for (std::size_t i = 0; i < a.markers.size(); ++i) {
    if (a.markers[i].name != b.markers[i].name ||
        !exact_equal(a.markers[i].position, b.markers[i].position))
      return false;
  }
  return a.covisibility == b.covisibility && a.index == b.index;
}

}  // namespace objslam
