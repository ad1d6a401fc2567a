#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <set>
#include <vector>

#include <Eigen/Cholesky>
#include <Eigen/Geometry>

#include "objslam/errors.hpp"
#include "objslam/slam.hpp"
#include "slam_internal.hpp"

namespace objslam {

Vec2 ba_residual(const Pose& camera_to_world, const Intrinsics& k,
                 const Vec3& p_world, const Pixel& observed,
                 Eigen::Matrix<double, 2, 6>* j_pose,
                 Eigen::Matrix<double, 2, 3>* j_point) {
  Mat3 r_t = camera_to_world.rotation.transpose();
  Vec3 p_c = r_t * (p_world - camera_to_world.translation);
  double x = p_c.x(), y = p_c.y(), z = p_c.z();
  if (z <= 0.0)
    fail(ErrorCode::BehindCamera, "observation behind the camera");

  Vec2 r(k.fx * x / z + k.cx - observed.u, k.fy * y / z + k.cy - observed.v);
  if (j_pose != nullptr || j_point != nullptr) {
    Eigen::Matrix<double, 2, 3> j_proj;
    j_proj << k.fx / z, 0.0, -k.fx * x / (z * z),  //
        0.0, k.fy / z, -k.fy * y / (z * z);
    if (j_pose != nullptr) {
      // R <- R * exp(w^) gives d p_c / d w = [p_c]x; t <- t + dt gives -R^T.
      Mat3 skew;
      skew << 0.0, -z, y,  //
          z, 0.0, -x,      //
          -y, x, 0.0;
      j_pose->block<2, 3>(0, 0) = j_proj * skew;
      j_pose->block<2, 3>(0, 3) = j_proj * (-r_t);
    }
    if (j_point != nullptr) *j_point = j_proj * r_t;
  }
  return r;
}

namespace {

Mat3 exp_so3(const Vec3& w) {
  double theta = w.norm();
  if (theta < 1e-12) return Mat3::Identity();
  return Eigen::AngleAxisd(theta, w / theta).toRotationMatrix();
}

double huber_cost(double e, double delta) {
  if (e <= delta) return 0.5 * e * e;
  return delta * (e - 0.5 * delta);
}

struct Observation {
  int cam = -1;  // optimized camera index, -1 when the keyframe is fixed
  int point = 0;
  std::uint64_t kf_id = 0;
  Pixel px;
};

struct Problem {
  std::vector<std::uint64_t> cam_ids;
  std::vector<std::uint64_t> point_ids;
  std::vector<Observation> obs;
  std::vector<Pose> poses;   // optimized cameras, parallel to cam_ids
  std::vector<Vec3> points;  // parallel to point_ids
};

double evaluate(const SlamMap& map, const Problem& prob,
                const std::vector<Pose>& poses, const std::vector<Vec3>& pts,
                double delta) {
  double cost = 0.0;
  for (const Observation& o : prob.obs) {
    const Pose& pose = o.cam >= 0
                           ? poses[static_cast<std::size_t>(o.cam)]
                           : map.keyframes.at(o.kf_id).pose;
    try {
      Vec2 r = ba_residual(pose, map.intrinsics,
                           pts[static_cast<std::size_t>(o.point)], o.px);
      cost += huber_cost(r.norm(), delta);
    } catch (const Error&) {
      return std::numeric_limits<double>::infinity();
    }
  }
  return cost;
}

}  // namespace

namespace detail {

double run_ba(SlamMap& map, const std::vector<std::uint64_t>& optimized_kfs,
              const SlamConfig& cfg) {
  Problem prob;
  prob.cam_ids = optimized_kfs;
  std::sort(prob.cam_ids.begin(), prob.cam_ids.end());
  prob.cam_ids.erase(std::unique(prob.cam_ids.begin(), prob.cam_ids.end()),
                     prob.cam_ids.end());
  std::map<std::uint64_t, int> cam_index;
  for (std::size_t i = 0; i < prob.cam_ids.size(); ++i) {
    cam_index[prob.cam_ids[i]] = static_cast<int>(i);
    prob.poses.push_back(map.keyframes.at(prob.cam_ids[i]).pose);
  }

  std::set<std::uint64_t> point_set;
  for (std::uint64_t kf_id : prob.cam_ids)
    for (const auto& [pid, kp] : map.keyframes.at(kf_id).observations)
      point_set.insert(pid);
  std::map<std::uint64_t, int> point_index;
  for (std::uint64_t pid : point_set) {
    // Two residual rows cannot pin three coordinates: a point seen by a
    // single keyframe would only slide along its ray, so leave it out.
    if (map.points.at(pid).observations.size() < 2) continue;
    point_index[pid] = static_cast<int>(prob.point_ids.size());
    prob.point_ids.push_back(pid);
    prob.points.push_back(map.points.at(pid).position);
  }

  for (std::uint64_t pid : prob.point_ids) {
    const MapPoint& pt = map.points.at(pid);
    for (const auto& [kf_id, kp] : pt.observations) {
      const Keyframe& kf = map.keyframes.at(kf_id);
      const Keypoint& obs = kf.keypoints[static_cast<std::size_t>(kp)];
      Observation o;
      auto ci = cam_index.find(kf_id);
      o.cam = ci == cam_index.end() ? -1 : ci->second;
      o.point = point_index.at(pid);
      o.kf_id = kf_id;
      o.px = Pixel{obs.u, obs.v};
      prob.obs.push_back(o);
    }
  }
  if (static_cast<int>(prob.obs.size()) < 10)
    fail(ErrorCode::NotEnoughObservations,
         std::to_string(prob.obs.size()) + " residuals, need 10");

  const int n_cams = static_cast<int>(prob.cam_ids.size());
  const int n_points = static_cast<int>(prob.point_ids.size());
  const double delta = cfg.ba_huber_px;

  double cost = evaluate(map, prob, prob.poses, prob.points, delta);
  double lambda = 1e-4;

  for (int iter = 0; iter < cfg.ba_max_iterations; ++iter) {
    // Accumulate the normal equations at the current state.
    std::vector<Eigen::Matrix<double, 6, 6>> a(
        static_cast<std::size_t>(n_cams), Eigen::Matrix<double, 6, 6>::Zero());
    std::vector<Eigen::Matrix<double, 6, 1>> gc(
        static_cast<std::size_t>(n_cams), Eigen::Matrix<double, 6, 1>::Zero());
    std::vector<Mat3> c(static_cast<std::size_t>(n_points), Mat3::Zero());
    std::vector<Vec3> gp(static_cast<std::size_t>(n_points), Vec3::Zero());
    // Point -> (cam index -> 3x6 coupling block).
    std::vector<std::map<int, Eigen::Matrix<double, 3, 6>>> b(
        static_cast<std::size_t>(n_points));

    bool degenerate = false;
    for (const Observation& o : prob.obs) {
      const Pose& pose = o.cam >= 0
                             ? prob.poses[static_cast<std::size_t>(o.cam)]
                             : map.keyframes.at(o.kf_id).pose;
      Eigen::Matrix<double, 2, 6> jc;
      Eigen::Matrix<double, 2, 3> jp;
      Vec2 r;
      try {
        r = ba_residual(pose, map.intrinsics,
                        prob.points[static_cast<std::size_t>(o.point)], o.px,
                        o.cam >= 0 ? &jc : nullptr, &jp);
      } catch (const Error&) {
        degenerate = true;
        break;
      }
      double e = r.norm();
      double w = e <= delta ? 1.0 : delta / e;
      std::size_t pi = static_cast<std::size_t>(o.point);
      c[pi] += w * jp.transpose() * jp;
      gp[pi] += w * jp.transpose() * r;
      if (o.cam >= 0) {
        std::size_t ci = static_cast<std::size_t>(o.cam);
        a[ci] += w * jc.transpose() * jc;
        gc[ci] += w * jc.transpose() * r;
        auto [cell, fresh] = b[pi].try_emplace(
            o.cam, Eigen::Matrix<double, 3, 6>::Zero());
        cell->second += w * jp.transpose() * jc;
      }
    }
    if (degenerate) break;

    // Damp, then eliminate the points (Schur complement).
    std::vector<Mat3> c_inv(static_cast<std::size_t>(n_points));
    for (int p = 0; p < n_points; ++p) {
      Mat3 damped = c[static_cast<std::size_t>(p)];
      for (int d = 0; d < 3; ++d)
        damped(d, d) += lambda * std::max(damped(d, d), 1e-9);
      c_inv[static_cast<std::size_t>(p)] = damped.inverse();
    }

    Eigen::MatrixXd s = Eigen::MatrixXd::Zero(6 * n_cams, 6 * n_cams);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(6 * n_cams);
    for (int ci = 0; ci < n_cams; ++ci) {
      Eigen::Matrix<double, 6, 6> damped = a[static_cast<std::size_t>(ci)];
      for (int d = 0; d < 6; ++d)
        damped(d, d) += lambda * std::max(damped(d, d), 1e-9);
      s.block<6, 6>(6 * ci, 6 * ci) = damped;
      rhs.segment<6>(6 * ci) = -gc[static_cast<std::size_t>(ci)];
    }
    for (int p = 0; p < n_points; ++p) {
      std::size_t pi = static_cast<std::size_t>(p);
      const Mat3& ci_inv = c_inv[pi];
      for (const auto& [cam_i, b_i] : b[pi]) {
        rhs.segment<6>(6 * cam_i) += b_i.transpose() * (ci_inv * gp[pi]);
        for (const auto& [cam_j, b_j] : b[pi]) {
          s.block<6, 6>(6 * cam_i, 6 * cam_j) -=
              b_i.transpose() * ci_inv * b_j;
        }
      }
    }

    Eigen::VectorXd dc = Eigen::VectorXd::Zero(6 * n_cams);
    if (n_cams > 0) dc = s.ldlt().solve(rhs);

    std::vector<Pose> new_poses = prob.poses;
    for (int ci = 0; ci < n_cams; ++ci) {
      Vec3 w_rot = dc.segment<3>(6 * ci);
      Vec3 dt = dc.segment<3>(6 * ci + 3);
      Pose& pose = new_poses[static_cast<std::size_t>(ci)];
      pose.rotation = reorthonormalize(pose.rotation * exp_so3(w_rot));
      pose.translation += dt;
    }
    std::vector<Vec3> new_points = prob.points;
    double step_sup = n_cams > 0 ? dc.cwiseAbs().maxCoeff() : 0.0;
    for (int p = 0; p < n_points; ++p) {
      std::size_t pi = static_cast<std::size_t>(p);
      Vec3 bdc = Vec3::Zero();
      for (const auto& [cam_i, b_i] : b[pi])
        bdc += b_i * dc.segment<6>(6 * cam_i);
      Vec3 dp = -c_inv[pi] * (gp[pi] + bdc);
      new_points[pi] += dp;
      step_sup = std::max(step_sup, dp.cwiseAbs().maxCoeff());
    }
    if (step_sup < 1e-12) break;  // stationary point, nothing to apply

    double new_cost = evaluate(map, prob, new_poses, new_points, delta);
    if (new_cost < cost) {
      double rel = (cost - new_cost) / std::max(cost, 1e-300);
      prob.poses = std::move(new_poses);
      prob.points = std::move(new_points);
      cost = new_cost;
      lambda = std::max(lambda * 0.1, 1e-12);
      if (rel < 1e-6) break;
    } else {
      lambda = std::min(lambda * 10.0, 1e12);
    }
  }

  for (std::size_t i = 0; i < prob.cam_ids.size(); ++i)
    map.keyframes.at(prob.cam_ids[i]).pose = prob.poses[i];
  for (std::size_t i = 0; i < prob.point_ids.size(); ++i)
    map.points.at(prob.point_ids[i]).position = prob.points[i];

  // Unweighted RMS over the problem's residuals at the final state.
  double ss = 0.0;
  std::size_t n = 0;
  for (const Observation& o : prob.obs) {
    const Pose& pose = o.cam >= 0 ? prob.poses[static_cast<std::size_t>(o.cam)]
                                  : map.keyframes.at(o.kf_id).pose;
    try {
      Vec2 r = ba_residual(pose, map.intrinsics,
                           prob.points[static_cast<std::size_t>(o.point)], o.px);
      ss += r.squaredNorm();
      ++n;
    } catch (const Error&) {
    }
  }
  return n == 0 ? 0.0 : std::sqrt(ss / static_cast<double>(n));
}

}  // namespace detail

double local_ba(SlamMap& map, std::uint64_t center_kf, const SlamConfig& cfg) {
  if (map.keyframes.find(center_kf) == map.keyframes.end())
    fail(ErrorCode::BadParams, "unknown center keyframe");

  std::vector<std::uint64_t> optimized{center_kf};
  for (std::uint64_t n :
       map.covisibility.neighbors(center_kf, cfg.ba_covis_weight))
    optimized.push_back(n);

  // The first keyframe anchors the map whenever something else can move.
  if (optimized.size() > 1) {
    auto it = std::find(optimized.begin(), optimized.end(), std::uint64_t{0});
    if (it != optimized.end()) optimized.erase(it);
  }
  return detail::run_ba(map, optimized, cfg);
}

}  // namespace objslam
