#pragma once

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace objslam {

using Mat3 = Eigen::Matrix3d;
using Vec3 = Eigen::Vector3d;
using Vec2 = Eigen::Vector2d;

/// Subpixel image position.
struct Pixel {
  double u = 0.0;
  double v = 0.0;
};

/// Rigid-body transform. Maps points from the source frame into the target
/// frame as R*p + t. Rotations are stored as plain 3x3 matrices so the map
/// marker equation can be read straight off the entries.
struct Pose {
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();

  Vec3 apply(const Vec3& p) const { return rotation * p + translation; }
};

/// Similarity transform: p -> scale * R * p + t.
struct Sim3 {
  double scale = 1.0;
  Mat3 rotation = Mat3::Identity();
  Vec3 translation = Vec3::Zero();
};

/// Pinhole camera model plus the depth-image unit.
struct Intrinsics {
  double fx = 0.0;
  double fy = 0.0;
  double cx = 0.0;
  double cy = 0.0;
  int width = 0;
  int height = 0;
  double depth_scale = 0.001;  // meters per stored depth unit
};

/// 3x3 projective transform in canonical form: Frobenius norm 1 and a
/// non-negative bottom-right entry, so equal homographies compare equal.
struct Homography {
  Mat3 h = Mat3::Identity() / std::sqrt(3.0);

  static Homography from_matrix(const Mat3& m);
};

Pose compose(const Pose& a, const Pose& b);
Pose invert(const Pose& p);

/// Restores exact orthonormality when numerical drift exceeds 1e-9.
Mat3 reorthonormalize(const Mat3& r);

Pixel project(const Intrinsics& k, const Vec3& p_camera);
Vec3 backproject(const Intrinsics& k, const Pixel& px, double depth);

/// World position of an object seen at depth d_e on the camera's optical
/// axis: T_c * (0, 0, d_e, 1).
Vec3 marker_world(const Pose& t_c, double d_e);

Pixel apply_homography(const Homography& h, const Pixel& px);

Vec3 sim3_apply(const Sim3& s, const Vec3& p);
Sim3 sim3_inverse(const Sim3& s);

Mat3 rot_x(double radians);
Mat3 rot_y(double radians);
Mat3 rot_z(double radians);

}  // namespace objslam
