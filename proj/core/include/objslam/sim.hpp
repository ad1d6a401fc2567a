#pragma once

#include <cstdint>
#include <string>
#include <utility>
#include <vector>

#include "objslam/geometry.hpp"
#include "objslam/image.hpp"

namespace objslam {

/// Textured rectangle in space. The board spans [-width/2, width/2] x
/// [-height/2, height/2] on its local z=0 plane and is visible from the +z
/// (normal) side only. Texture row 0 lies along the +y edge, so a camera
/// facing the front of the board sees the texture upright, never mirrored.
struct Board {
  std::string name;
  Pose pose;  // board-to-world
  double width = 1.0;   // meters
  double height = 1.0;  // meters
  GrayImage texture;
};

struct SimScene {
  std::vector<Board> boards;
  std::uint8_t background_intensity = 90;
  double background_depth = 9.0;  // meters; stands in for the far wall
  std::uint64_t seed = 0;
};

struct SimConfig {
  Intrinsics intrinsics{250.0, 250.0, 160.0, 120.0, 320, 240, 0.001};
  double fps = 5.0;
  double intensity_sigma = 0.0;  // gray levels
  double depth_sigma = 0.0;      // meters
  double depth_dropout = 0.0;    // probability a depth sample reads invalid
};

/// Pinhole render. For every pixel the ray is intersected with all board
/// planes and the nearest front-face hit inside a board's extent wins
/// (texture sampled bilinearly); everything else is background. Depth is
/// distance along the optical axis. Noise comes last, from a stream seeded
/// by (scene.seed, salt, pixel index), so the output is deterministic and
/// independent of pixel evaluation order; pass a distinct salt per frame to
/// decorrelate noise across a sequence.
std::pair<GrayImage, DepthImage> render_rgbd(const SimScene& scene,
                                             const Pose& camera,
                                             const SimConfig& cfg,
                                             std::uint64_t salt = 0);

enum class TrajectoryKind { kSquare, kOrbit, kLine };

struct TrajectoryParams {
  double step_size = 0.15;  // max translation between consecutive poses
  Vec3 center = Vec3::Zero();  // square / orbit center
  double side = 4.0;           // square side length, meters
  int turn_steps = 10;         // in-place poses per 90-degree corner turn
  double radius = 1.5;         // orbit radius, meters
  Vec3 start = Vec3::Zero();         // line start
  Vec3 direction = Vec3(0, 0, 1);    // line direction
};

/// Scripted camera paths on the y=center.y plane. square: perimeter walk
/// with in-place 90-degree corner turns, last pose equal to the first;
/// orbit: circle around `center`, always facing it, closing the loop; line:
/// constant-velocity straight path facing the travel direction.
std::vector<Pose> make_trajectory(TrajectoryKind kind,
                                  const TrajectoryParams& params, int steps);

/// One procedural board texture: a checkerboard of randomly shaded cells
/// overlaid with high-contrast discs, tuned to feed the corner detector.
GrayImage make_texture(std::uint64_t seed, int width, int height);

/// Procedural room: `n_boards` textured boards on the walls of a
/// 6 x 6 x 3 m volume (walls at x = +/-3 and z = +/-3, +y pointing down),
/// non-overlapping, normals facing inward. Every texture is regenerated
/// (bounded retries) until it yields at least 100 FAST keypoints at
/// threshold 20.
SimScene make_scene(std::uint64_t seed, int n_boards);

/// Camera pose viewing the board fronto-parallel from `distance` meters in
/// front of its center, optionally rolled about the optical axis.
Pose camera_facing(const Board& board, double distance, double roll = 0.0);

}  // namespace objslam
