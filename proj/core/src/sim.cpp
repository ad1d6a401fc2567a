#include "objslam/sim.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include "objslam/errors.hpp"
#include "objslam/features.hpp"
#include "objslam/rng.hpp"

namespace objslam {

namespace {

constexpr double kPi = 3.14159265358979323846;

Pose pose_at(const Vec3& position, double yaw) {
  Pose p;
  p.rotation = rot_y(yaw);
  p.translation = position;
  return p;
}

}  // namespace

std::pair<GrayImage, DepthImage> render_rgbd(const SimScene& scene,
                                             const Pose& camera,
                                             const SimConfig& cfg,
                                             std::uint64_t salt) {
  const Intrinsics& k = cfg.intrinsics;
  GrayImage gray(k.width, k.height, scene.background_intensity);
  DepthImage depth(k.width, k.height,
                   static_cast<float>(scene.background_depth));

  const std::uint64_t noise_seed = hash_mix(scene.seed, salt);
  for (int y = 0; y < k.height; ++y) {
    for (int x = 0; x < k.width; ++x) {
      // Ray through the pixel, parameterized so t equals z-depth.
      Vec3 dir_cam((x - k.cx) / k.fx, (y - k.cy) / k.fy, 1.0);
      Vec3 dir = camera.rotation * dir_cam;
      const Vec3& origin = camera.translation;

      double best_t = std::numeric_limits<double>::infinity();
      double intensity = scene.background_intensity;
      for (const Board& b : scene.boards) {
        Vec3 normal = b.pose.rotation.col(2);
        double denom = normal.dot(dir);
        if (denom >= -1e-12) continue;  // back face or parallel
        double t = normal.dot(b.pose.translation - origin) / denom;
        if (t <= 1e-6 || t >= best_t) continue;
        Vec3 local = b.pose.rotation.transpose() *
                     (origin + t * dir - b.pose.translation);
        if (std::abs(local.x()) > b.width / 2 ||
            std::abs(local.y()) > b.height / 2)
          continue;
        best_t = t;
        double tx = (local.x() + b.width / 2) / b.width * (b.texture.width - 1);
        double ty =
            (b.height / 2 - local.y()) / b.height * (b.texture.height - 1);
        intensity = b.texture.sample(tx, ty);
      }

      double d = std::isinf(best_t) ? scene.background_depth : best_t;

      // Per-pixel noise stream; draws happen unconditionally so the stream
      // layout does not depend on the noise configuration.
      SplitMix64 rng(hash_mix(
          noise_seed, static_cast<std::uint64_t>(y) * k.width + x));
      double gi = intensity + cfg.intensity_sigma * rng.next_gaussian();
      double dn = d + cfg.depth_sigma * rng.next_gaussian();
      bool drop = rng.next_double() < cfg.depth_dropout;

      gray.at(x, y) = static_cast<std::uint8_t>(
          std::clamp<long>(std::lround(gi), 0, 255));
      depth.at(x, y) = (drop || dn <= 0.0) ? 0.f : static_cast<float>(dn);
    }
  }
  return {std::move(gray), std::move(depth)};
}

std::vector<Pose> make_trajectory(TrajectoryKind kind,
                                  const TrajectoryParams& params, int steps) {
  if (steps < 2) fail(ErrorCode::BadParams, "trajectory needs >= 2 steps");
  if (params.step_size <= 0)
    fail(ErrorCode::BadParams, "step_size must be positive");

  std::vector<Pose> out;
  out.reserve(steps);

  switch (kind) {
    case TrajectoryKind::kSquare: {
      if (params.side <= 0)
        fail(ErrorCode::BadParams, "square side must be positive");
      if (params.turn_steps < 1)
        fail(ErrorCode::BadParams, "turn_steps must be >= 1");
      int moves = steps - 1 - 4 * params.turn_steps;
      if (moves < 4)
        fail(ErrorCode::BadParams,
             "not enough steps for four sides and four corner turns");
      double half = params.side / 2;
      Vec3 corners[4] = {params.center + Vec3(-half, 0, -half),
                         params.center + Vec3(-half, 0, half),
                         params.center + Vec3(half, 0, half),
                         params.center + Vec3(half, 0, -half)};
      int base = moves / 4, rem = moves % 4;
      out.push_back(pose_at(corners[0], 0.0));
      for (int side = 0; side < 4; ++side) {
        int m = base + (side < rem ? 1 : 0);
        if (params.side / m > params.step_size + 1e-12)
          fail(ErrorCode::BadParams, "per-step travel exceeds step_size");
        Vec3 a = corners[side];
        Vec3 b = corners[(side + 1) % 4];
        double yaw = side * (kPi / 2);
        for (int i = 1; i <= m; ++i)
          out.push_back(pose_at(a + (static_cast<double>(i) / m) * (b - a), yaw));
        for (int i = 1; i <= params.turn_steps; ++i)
          out.push_back(
              pose_at(b, yaw + (kPi / 2) * i / params.turn_steps));
      }
      break;
    }
    case TrajectoryKind::kOrbit: {
      if (params.radius <= 0)
        fail(ErrorCode::BadParams, "orbit radius must be positive");
      double chord = 2 * params.radius * std::sin(kPi / (steps - 1));
      if (chord > params.step_size + 1e-12)
        fail(ErrorCode::BadParams, "per-step travel exceeds step_size");
      for (int i = 0; i < steps; ++i) {
        double phi = 2 * kPi * i / (steps - 1);
        Vec3 pos = params.center +
                   params.radius * Vec3(std::sin(phi), 0.0, std::cos(phi));
        out.push_back(pose_at(pos, phi + kPi));
      }
      break;
    }
    case TrajectoryKind::kLine: {
      if (params.direction.norm() < 1e-12)
        fail(ErrorCode::BadParams, "line direction must be non-zero");
      Vec3 dir = params.direction.normalized();
      Pose p;
      p.rotation =
          Eigen::Quaterniond::FromTwoVectors(Vec3(0, 0, 1), dir)
              .toRotationMatrix();
      for (int i = 0; i < steps; ++i) {
        p.translation = params.start + i * params.step_size * dir;
        out.push_back(p);
      }
      break;
    }
  }
  return out;
}

GrayImage make_texture(std::uint64_t seed, int width, int height) {
  SplitMix64 rng(hash_mix(seed, 0x7e47u));
  GrayImage img(width, height);

  // Checkerboard of per-cell shades; the randomness turns the X-junctions
  // between cells into corner-detector food.
  const int cell = 24;
  const int cells_x = (width + cell - 1) / cell;
  const int cells_y = (height + cell - 1) / cell;
  std::vector<std::uint8_t> shade(
      static_cast<std::size_t>(cells_x) * cells_y);
  for (int cy = 0; cy < cells_y; ++cy)
    for (int cx = 0; cx < cells_x; ++cx) {
      int base = ((cx + cy) & 1) ? 180 : 60;
      int jitter = static_cast<int>(rng.next_below(61)) - 30;
      shade[static_cast<std::size_t>(cy) * cells_x + cx] =
          static_cast<std::uint8_t>(std::clamp(base + jitter, 0, 255));
    }
  for (int y = 0; y < height; ++y)
    for (int x = 0; x < width; ++x)
      img.at(x, y) =
          shade[static_cast<std::size_t>(y / cell) * cells_x + x / cell];

  // High-contrast discs.
  const int blobs = 60;
  for (int i = 0; i < blobs; ++i) {
    int bx = static_cast<int>(rng.next_below(width));
    int by = static_cast<int>(rng.next_below(height));
    int radius = 3 + static_cast<int>(rng.next_below(10));
    int bright = rng.next() & 1;
    int value = bright ? 215 + static_cast<int>(rng.next_below(41))
                       : static_cast<int>(rng.next_below(41));
    for (int y = std::max(0, by - radius);
         y <= std::min(height - 1, by + radius); ++y)
      for (int x = std::max(0, bx - radius);
           x <= std::min(width - 1, bx + radius); ++x)
        if ((x - bx) * (x - bx) + (y - by) * (y - by) <= radius * radius)
          img.at(x, y) = static_cast<std::uint8_t>(value);
  }
  return img;
}

SimScene make_scene(std::uint64_t seed, int n_boards) {
  if (n_boards < 0) fail(ErrorCode::BadParams, "n_boards must be >= 0");
  SimScene scene;
  scene.seed = seed;
  SplitMix64 rng(hash_mix(seed, 0x5ce2eu));

  // Inward wall normals; boards slot along each wall's horizontal axis.
  struct Wall {
    Vec3 normal;
    Vec3 axis;  // direction of increasing slot coordinate
  };
  const Wall walls[4] = {{Vec3(0, 0, -1), Vec3(1, 0, 0)},
                         {Vec3(-1, 0, 0), Vec3(0, 0, 1)},
                         {Vec3(0, 0, 1), Vec3(-1, 0, 0)},
                         {Vec3(1, 0, 0), Vec3(0, 0, -1)}};
  const double half_room = 3.0;
  const int slots_per_wall = std::max(1, (n_boards + 3) / 4);
  const double slot_width = 2 * half_room / slots_per_wall;

  for (int i = 0; i < n_boards; ++i) {
    const Wall& wall = walls[i % 4];
    int slot = i / 4;

    Board b;
    b.name = "board" + std::to_string(i);
    b.width = std::min(1.7, 0.8 * slot_width) * (0.8 + 0.2 * rng.next_double());
    b.height = 1.0 + 0.4 * rng.next_double();

    double along = -half_room + slot_width * (slot + 0.5) +
                   (slot_width - b.width) * 0.4 * (rng.next_double() - 0.5);
    double y_center = 0.4 * (rng.next_double() - 0.5);
    b.pose.translation =
        -half_room * wall.normal + along * wall.axis + Vec3(0, y_center, 0);
    Vec3 y_axis(0, -1, 0);  // texture "up" is world up
    b.pose.rotation.col(0) = y_axis.cross(wall.normal);
    b.pose.rotation.col(1) = y_axis;
    b.pose.rotation.col(2) = wall.normal;

    // Regenerate until the texture feeds FAST well enough; keep the best
    // attempt if the bound is never met.
    GrayImage best;
    std::size_t best_count = 0;
    for (int attempt = 0; attempt < 8; ++attempt) {
      GrayImage t = make_texture(
          hash_mix(seed, static_cast<std::uint64_t>(i) * 16 + attempt + 1),
          256, 192);
      std::size_t count = detect_fast(t, 20).size();
      if (count > best_count) {
        best_count = count;
        best = std::move(t);
      }
      if (best_count >= 100) break;
    }
    b.texture = std::move(best);
    scene.boards.push_back(std::move(b));
  }
  return scene;
}

Pose camera_facing(const Board& board, double distance, double roll) {
  Pose cam;
  cam.rotation.col(0) = board.pose.rotation.col(0);
  cam.rotation.col(1) = -board.pose.rotation.col(1);
  cam.rotation.col(2) = -board.pose.rotation.col(2);
  cam.rotation = cam.rotation * rot_z(roll);
  cam.translation =
      board.pose.translation + distance * board.pose.rotation.col(2);
  return cam;
}

}  // namespace objslam
