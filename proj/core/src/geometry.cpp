#include "objslam/geometry.hpp"

#include <cmath>

#include "objslam/errors.hpp"

namespace objslam {

Mat3 reorthonormalize(const Mat3& r) {
  Mat3 q;
  Vec3 c0 = r.col(0).normalized();
  Vec3 c1 = (r.col(1) - c0 * c0.dot(r.col(1))).normalized();
  Vec3 c2 = c0.cross(c1);
  q.col(0) = c0;
  q.col(1) = c1;
  q.col(2) = c2;
  return q;
}

namespace {

bool has_drifted(const Mat3& r) {
  Mat3 err = r.transpose() * r - Mat3::Identity();
  return err.cwiseAbs().maxCoeff() > 1e-9;
}

}  // namespace

Pose compose(const Pose& a, const Pose& b) {
  Pose out;
  out.rotation = a.rotation * b.rotation;
  out.translation = a.rotation * b.translation + a.translation;
  if (has_drifted(out.rotation)) out.rotation = reorthonormalize(out.rotation);
  return out;
}

Pose invert(const Pose& p) {
  Pose out;
  out.rotation = p.rotation.transpose();
  out.translation = -(out.rotation * p.translation);
  return out;
}

Pixel project(const Intrinsics& k, const Vec3& p) {
  if (p.z() <= 1e-6)
    fail(ErrorCode::BehindCamera, "projection of a point with z <= 1e-6");
  return {k.fx * p.x() / p.z() + k.cx, k.fy * p.y() / p.z() + k.cy};
}

Vec3 backproject(const Intrinsics& k, const Pixel& px, double depth) {
  if (!(depth > 0.0) || !std::isfinite(depth))
    fail(ErrorCode::InvalidDepth, "backprojection needs a positive depth");
  return {(px.u - k.cx) / k.fx * depth, (px.v - k.cy) / k.fy * depth, depth};
}

Vec3 marker_world(const Pose& t_c, double d_e) {
  if (!(d_e > 0.0))
    fail(ErrorCode::InvalidDepth, "marker depth must be positive");
  const Mat3& r = t_c.rotation;
  return {r(0, 2) * d_e + t_c.translation.x(),
          r(1, 2) * d_e + t_c.translation.y(),
          r(2, 2) * d_e + t_c.translation.z()};
}

Homography Homography::from_matrix(const Mat3& m) {
  double norm = m.norm();
  Mat3 h = m / norm;
  if (h(2, 2) < 0.0) h = -h;
  return Homography{h};
}

Pixel apply_homography(const Homography& h, const Pixel& px) {
  const Mat3& m = h.h;
  double w = m(2, 0) * px.u + m(2, 1) * px.v + m(2, 2);
  if (std::abs(w) <= 1e-12)
    fail(ErrorCode::AtInfinity, "homography maps pixel to infinity");
  double u = m(0, 0) * px.u + m(0, 1) * px.v + m(0, 2);
  double v = m(1, 0) * px.u + m(1, 1) * px.v + m(1, 2);
  return {u / w, v / w};
}

Vec3 sim3_apply(const Sim3& s, const Vec3& p) {
  return s.scale * (s.rotation * p) + s.translation;
}

Sim3 sim3_inverse(const Sim3& s) {
  Sim3 out;
  out.scale = 1.0 / s.scale;
  out.rotation = s.rotation.transpose();
  out.translation = -out.scale * (out.rotation * s.translation);
  return out;
}

Mat3 rot_x(double a) {
  Mat3 r;
  r << 1, 0, 0, 0, std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a);
  return r;
}

Mat3 rot_y(double a) {
  Mat3 r;
  r << std::cos(a), 0, std::sin(a), 0, 1, 0, -std::sin(a), 0, std::cos(a);
  return r;
}

Mat3 rot_z(double a) {
  Mat3 r;
  r << std::cos(a), -std::sin(a), 0, std::sin(a), std::cos(a), 0, 0, 0, 1;
  return r;
}

}  // namespace objslam
