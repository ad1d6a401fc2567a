#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "objslam/bow.hpp"
#include "objslam/features.hpp"
#include "objslam/geometry.hpp"
#include "objslam/image.hpp"
#include "objslam/recognition.hpp"
#include "objslam/robust.hpp"

namespace objslam {

inline bool exact_equal(const Mat3& a, const Mat3& b) {
  return (a.array() == b.array()).all();
}
inline bool exact_equal(const Vec3& a, const Vec3& b) {
  return (a.array() == b.array()).all();
}

/// One RGB-D input with extracted binary features. `pose` is camera-to-world
/// and set once tracking succeeds.
struct Frame {
  double timestamp = 0.0;
  GrayImage gray;
  DepthImage depth;
  std::vector<Keypoint> keypoints;
  std::vector<BinaryDescriptor> descriptors;
  std::optional<Pose> pose;
};

struct Keyframe {
  std::uint64_t id = 0;
  Pose pose;  // camera-to-world
  std::vector<Keypoint> keypoints;
  std::vector<BinaryDescriptor> descriptors;
  BowVector bow;
  std::map<std::uint64_t, int> observations;  // map point id -> keypoint index
};

struct MapPoint {
  std::uint64_t id = 0;
  Vec3 position = Vec3::Zero();  // world, meters
  BinaryDescriptor descriptor;   // representative: min summed Hamming
  std::map<std::uint64_t, int> observations;  // keyframe id -> keypoint index
  int visible_count = 0;
  int found_count = 0;
  std::uint64_t first_kf = 0;
};

/// Undirected keyframe graph weighted by shared map-point counts. Only
/// weights >= 1 are stored; symmetry is maintained by the setters.
struct CovisibilityGraph {
  std::map<std::uint64_t, std::map<std::uint64_t, int>> adjacency;

  int weight(std::uint64_t a, std::uint64_t b) const;
  void set_weight(std::uint64_t a, std::uint64_t b, int w);
  void add_weight(std::uint64_t a, std::uint64_t b, int delta);
  void drop_keyframe(std::uint64_t a);
  std::vector<std::uint64_t> neighbors(std::uint64_t a, int min_weight = 1) const;

  bool operator==(const CovisibilityGraph&) const = default;
};

struct ObjectMarker {
  std::string name;
  Vec3 position = Vec3::Zero();
};

struct SlamMap {
  Intrinsics intrinsics;                  // runtime config, not persisted
  const Vocabulary* vocabulary = nullptr; // shared, not owned
  std::map<std::uint64_t, Keyframe> keyframes;
  std::map<std::uint64_t, MapPoint> points;
  CovisibilityGraph covisibility;
  std::vector<ObjectMarker> markers;
  InvertedIndex index;
  std::uint64_t next_keyframe_id = 0;
  std::uint64_t next_point_id = 0;
  std::map<std::uint64_t, int> loop_streaks;  // consistency ledger
};

enum class TrackMode { kUninitialized, kTracking, kLost };

struct TrackerState {
  TrackMode mode = TrackMode::kUninitialized;
  Pose velocity;   // frame-to-frame motion; meaningful only while Tracking
  Pose last_pose;
  std::vector<std::uint64_t> local_points;  // the last frame's local set
  std::vector<std::pair<std::uint64_t, int>> last_matches;  // point -> kp idx
  std::uint64_t reference_kf = 0;
  int frames_since_keyframe = 0;
  int last_tracked = 0;  // inlier count of the last tracked frame
};

struct SlamConfig {
  int feature_budget = 1000;
  double min_depth = 0.1;   // meters, valid backprojection range
  double max_depth = 10.0;
  int init_min_points = 100;
  double search_window = 15.0;  // px around each projected point
  double match_ratio = 0.7;     // Lowe ratio for unconstrained searches
  double window_ratio = 0.9;    // milder ratio inside the projection window
  int min_track_inliers = 20;
  RansacParams pnp{2000, 2.0, 0.99, 0};
  int keyframe_interval = 20;              // frames
  double keyframe_tracked_fraction = 0.9;  // of the reference keyframe
  double cull_found_ratio = 0.25;
  int cull_min_observations = 3;
  int cull_age_keyframes = 3;
  int ba_covis_weight = 15;
  double ba_huber_px = 2.0;
  int ba_max_iterations = 10;
  int loop_consistency = 3;
  int loop_min_inliers = 20;
  RansacParams sim3{2000, 0.05, 0.99, 0};
  double fuse_px = 2.0;
  double fuse_dist = 0.05;  // meters
  // Second-chance association at keyframe insertion: a redetected corner the
  // window search missed backprojects roughly one pose-error away from its
  // point, so the geometric gates here are wider than the loop-fusion ones
  // and a descriptor check keeps distinct corners apart.
  double insert_fuse_px = 6.0;
  double insert_fuse_dist = 0.15;  // meters
  int insert_fuse_hamming = 64;    // bits
  double marker_merge_dist = 0.3;
  int reloc_top_k = 5;
  int reloc_min_inliers = 20;
};

/// Builds a Frame by extracting binary features. Gray and depth dimensions
/// must agree.
Frame make_frame(double timestamp, GrayImage gray, DepthImage depth,
                 const SlamConfig& cfg = SlamConfig{});

/// First keyframe at identity, one map point per keypoint with valid depth
/// in [min_depth, max_depth]. Throws NotEnoughDepth below init_min_points.
TrackerState initialize_rgbd(SlamMap& map, Frame& frame,
                             const SlamConfig& cfg = SlamConfig{});

/// Constant-velocity prediction, windowed descriptor search, PnP; falls
/// back to a local-map-wide search, then to Lost. In Lost mode delegates to
/// relocalize. Returns the tracked pose, or nothing while lost.
std::optional<Pose> track_frame(SlamMap& map, TrackerState& state,
                                Frame& frame,
                                const SlamConfig& cfg = SlamConfig{});

/// BoW lookup over the top reloc_top_k keyframes; first PnP result with
/// reloc_min_inliers wins. Absence is a valid result.
std::optional<Pose> relocalize(const SlamMap& map, const Frame& frame,
                               const SlamConfig& cfg = SlamConfig{});

/// Inserts iff >= keyframe_interval frames passed since the last keyframe
/// or tracking covers < keyframe_tracked_fraction of the reference
/// keyframe's points. Returns the new keyframe id when inserted.
std::optional<std::uint64_t> insert_keyframe(SlamMap& map, TrackerState& state,
                                             const Frame& frame,
                                             const Pose& pose,
                                             const SlamConfig& cfg = SlamConfig{});

/// Removes points older than cull_age_keyframes keyframes unless they were
/// found in >= cull_found_ratio of their predicted-visible frames AND are
/// observed by >= cull_min_observations keyframes. Returns removed ids.
std::vector<std::uint64_t> cull_map_points(SlamMap& map,
                                           const SlamConfig& cfg = SlamConfig{});

/// Reprojection residual (predicted minus observed) of one observation plus
/// its analytic Jacobians under the multiplicative pose perturbation
/// R <- R * exp(w^), t <- t + dt and the point shift p <- p + dp.
/// Throws BehindCamera for non-positive camera-frame depth.
Vec2 ba_residual(const Pose& camera_to_world, const Intrinsics& k,
                 const Vec3& p_world, const Pixel& observed,
                 Eigen::Matrix<double, 2, 6>* j_pose = nullptr,
                 Eigen::Matrix<double, 2, 3>* j_point = nullptr);

/// Levenberg-Marquardt bundle adjustment with Huber loss over the center
/// keyframe, its strong covisibility neighborhood, and their points;
/// keyframe 0 stays fixed when it falls in the optimized set. Returns the
/// final RMS reprojection error in pixels.
double local_ba(SlamMap& map, std::uint64_t center_kf,
                const SlamConfig& cfg = SlamConfig{});

/// BoW candidate filtered by the covisibility min-score rule; a candidate
/// must persist loop_consistency consecutive insertions before being
/// returned.
std::optional<std::uint64_t> detect_loop(SlamMap& map, std::uint64_t kf_id,
                                         const SlamConfig& cfg = SlamConfig{});

struct LoopCloseResult {
  int sim3_inliers = 0;
  double rms_before = 0.0;  // global reprojection RMS before/after BA
  double rms_after = 0.0;
  int fused_points = 0;
};

/// Sim3 alignment of the loop ends, pose/point correction, duplicate
/// fusion, then global BA with both loop-end keyframes held fixed. Throws
/// NotEnoughInliers (map untouched) below loop_min_inliers.
LoopCloseResult close_loop(SlamMap& map, std::uint64_t kf_id,
                           std::uint64_t candidate_id,
                           const SlamConfig& cfg = SlamConfig{});

/// Marker at marker_world(camera_pose, detection.depth); same-name markers
/// within marker_merge_dist merge by averaging the two positions. Throws
/// MissingDepth when the detection has no depth.
void add_object_marker(SlamMap& map, const Detection& detection,
                       const Pose& camera_pose,
                       const SlamConfig& cfg = SlamConfig{});

/// RMS translational error after rigid (scale-1) alignment of `estimated`
/// onto `truth`. Throws LengthMismatch unless both have equal length >= 2.
double ate_rmse(const std::vector<Pose>& estimated,
                const std::vector<Pose>& truth);

/// Referential-integrity audit; an empty result means the map is sound.
std::vector<std::string> audit_map(const SlamMap& map);

/// Structural equality over everything a map file stores (keyframes,
/// points, covisibility, markers, BoW index); intrinsics and the vocabulary
/// pointer are runtime configuration and stay out.
bool maps_structurally_equal(const SlamMap& a, const SlamMap& b);

struct PipelineResult {
  std::optional<Pose> pose;
  std::optional<std::uint64_t> new_keyframe;
  std::optional<std::uint64_t> loop_candidate;
  bool loop_closed = false;
  double ba_rms = -1.0;  // local BA result when a keyframe was inserted
};

/// Deterministic lockstep step: track, keyframe decision, local BA,
/// culling, loop detection and closure. Initializes on the first frame.
PipelineResult process_frame(SlamMap& map, TrackerState& state, Frame& frame,
                             const SlamConfig& cfg = SlamConfig{});

}  // namespace objslam
