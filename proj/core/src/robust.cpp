#include "objslam/robust.hpp"

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>

#include "objslam/errors.hpp"
#include "objslam/rng.hpp"

namespace objslam {

namespace {

struct Normalization {
  Mat3 t = Mat3::Identity();
};

// Hartley normalization: centroid to origin, mean distance sqrt(2).
Normalization normalize_points(const std::vector<Pixel>& pts,
                               std::vector<Pixel>& out) {
  double cu = 0, cv = 0;
  for (const Pixel& p : pts) {
    cu += p.u;
    cv += p.v;
  }
  cu /= pts.size();
  cv /= pts.size();
  double mean_dist = 0;
  for (const Pixel& p : pts) mean_dist += std::hypot(p.u - cu, p.v - cv);
  mean_dist /= pts.size();
  double s = mean_dist > 1e-12 ? std::sqrt(2.0) / mean_dist : 1.0;

  Normalization n;
  n.t << s, 0, -s * cu, 0, s, -s * cv, 0, 0, 1;
  out.resize(pts.size());
  for (std::size_t i = 0; i < pts.size(); ++i)
    out[i] = {s * (pts[i].u - cu), s * (pts[i].v - cv)};
  return n;
}

int needed_iterations(double inlier_ratio, int sample_size, double confidence,
                      int cap) {
  if (inlier_ratio <= 0) return cap;
  double w = std::pow(inlier_ratio, sample_size);
  if (w >= 1.0) return 1;
  double denom = std::log(1.0 - w);
  if (denom >= -1e-12) return cap;
  // Compare as doubles first: for low ratios the estimate overflows int.
  double n = std::ceil(std::log(1.0 - confidence) / denom);
  if (n >= static_cast<double>(cap)) return cap;
  return std::clamp(static_cast<int>(n), 1, cap);
}

// Draws `count` distinct indices in [0, n) from the stream.
void sample_distinct(SplitMix64& rng, int n, int count, std::vector<int>& out) {
  out.clear();
  while (static_cast<int>(out.size()) < count) {
    int idx = static_cast<int>(rng.next_below(static_cast<std::uint64_t>(n)));
    if (std::find(out.begin(), out.end(), idx) == out.end()) out.push_back(idx);
  }
}

}  // namespace

Homography fit_homography(const std::vector<PixelPair>& corrs) {
  if (corrs.size() < 4)
    fail(ErrorCode::Degenerate, "homography needs at least 4 correspondences");

  std::vector<Pixel> src(corrs.size()), dst(corrs.size());
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    src[i] = corrs[i].first;
    dst[i] = corrs[i].second;
  }
  std::vector<Pixel> ns, nd;
  Normalization tn_src = normalize_points(src, ns);
  Normalization tn_dst = normalize_points(dst, nd);

  Eigen::MatrixXd a(2 * corrs.size(), 9);
  for (std::size_t i = 0; i < corrs.size(); ++i) {
    double x = ns[i].u, y = ns[i].v, u = nd[i].u, v = nd[i].v;
    a.row(2 * i) << x, y, 1, 0, 0, 0, -u * x, -u * y, -u;
    a.row(2 * i + 1) << 0, 0, 0, x, y, 1, -v * x, -v * y, -v;
  }

  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  const auto& sv = svd.singularValues();
  // Collinear sources leave the system rank-deficient beyond the usual
  // one-dimensional null space.
  if (sv(7) <= 1e-9 * sv(0))
    fail(ErrorCode::Degenerate, "rank-deficient homography system");

  Eigen::VectorXd h = svd.matrixV().col(8);
  Mat3 hn;
  hn << h(0), h(1), h(2), h(3), h(4), h(5), h(6), h(7), h(8);

  Mat3 denorm = tn_dst.t.inverse() * hn * tn_src.t;
  Eigen::JacobiSVD<Mat3> cond_svd(denorm);
  double smax = cond_svd.singularValues()(0);
  double smin = cond_svd.singularValues()(2);
  if (!(smin > 0) || smax / smin >= 1e8)
    fail(ErrorCode::Degenerate, "homography is rank deficient");
  return Homography::from_matrix(denorm);
}

double homography_sym_error2(const Homography& h, const Homography& h_inv,
                             const PixelPair& corr) {
  Pixel fwd = apply_homography(h, corr.first);
  Pixel bwd = apply_homography(h_inv, corr.second);
  double d1u = fwd.u - corr.second.u, d1v = fwd.v - corr.second.v;
  double d2u = bwd.u - corr.first.u, d2v = bwd.v - corr.first.v;
  return d1u * d1u + d1v * d1v + d2u * d2u + d2v * d2v;
}

RansacResult<Homography> ransac_homography(const std::vector<PixelPair>& corrs,
                                           const RansacParams& params) {
  const int n = static_cast<int>(corrs.size());
  if (n < 4) fail(ErrorCode::NoModel, "too few correspondences for a homography");

  SplitMix64 rng(params.rng_seed);
  const double thresh2 = params.inlier_threshold * params.inlier_threshold;

  auto score = [&](const Homography& h, std::vector<std::uint8_t>& mask) -> int {
    Mat3 inv_m = h.h.inverse();
    if (!inv_m.allFinite()) return -1;
    Homography h_inv{inv_m};
    mask.assign(n, 0);
    int count = 0;
    for (int i = 0; i < n; ++i) {
      double e2;
      try {
        e2 = homography_sym_error2(h, h_inv, corrs[i]);
      } catch (const Error&) {
        continue;  // AtInfinity: not an inlier
      }
      if (e2 < thresh2) {
        mask[i] = 1;
        ++count;
      }
    }
    return count;
  };

  RansacResult<Homography> best;
  best.inlier_count = -1;
  std::vector<int> sample;
  std::vector<std::uint8_t> mask;
  int needed = params.max_iterations;
  int it = 0;
  for (; it < needed; ++it) {
    sample_distinct(rng, n, 4, sample);
    std::vector<PixelPair> minimal;
    for (int idx : sample) minimal.push_back(corrs[idx]);
    Homography h;
    try {
      h = fit_homography(minimal);
    } catch (const Error&) {
      continue;
    }
    int count = score(h, mask);
    if (count > best.inlier_count) {
      best.model = h;
      best.inlier_count = count;
      best.inlier_mask = mask;
      needed = std::min(needed, needed_iterations(static_cast<double>(count) / n, 4,
                                                  params.confidence,
                                                  params.max_iterations));
    }
  }
  best.iterations_run = it;

  if (best.inlier_count < 4)
    fail(ErrorCode::NoModel, "no homography hypothesis reached 4 inliers");

  // Refit on the consensus set, then recompute the mask so it matches the
  // returned model exactly.
  std::vector<PixelPair> inliers;
  for (int i = 0; i < n; ++i)
    if (best.inlier_mask[i]) inliers.push_back(corrs[i]);
  try {
    Homography refined = fit_homography(inliers);
    int count = score(refined, mask);
    if (count >= 4) {
      best.model = refined;
      best.inlier_count = count;
      best.inlier_mask = mask;
    }
  } catch (const Error&) {
    // keep the sample model
  }
  return best;
}

Vec2 reprojection_residual(const Pose& camera_to_world, const Intrinsics& k,
                           const Vec3& p_world, const Pixel& observed) {
  Vec3 p_c = camera_to_world.rotation.transpose() *
             (p_world - camera_to_world.translation);
  Pixel proj = project(k, p_c);
  return {proj.u - observed.u, proj.v - observed.v};
}

namespace {

// Pose from a 6+ point DLT: solve m ~ [R|t] X with m the normalized ray,
// then factor rotation, scale, and translation out of the projection matrix.
// The result maps world to camera; callers invert it.
bool pnp_dlt(const std::vector<PointPixel>& corrs, const std::vector<int>& idxs,
             const Intrinsics& k, Mat3& r_wc, Vec3& t_wc) {
  Eigen::MatrixXd a(2 * idxs.size(), 12);
  for (std::size_t row = 0; row < idxs.size(); ++row) {
    const auto& [pw, px] = corrs[idxs[row]];
    double mx = (px.u - k.cx) / k.fx;
    double my = (px.v - k.cy) / k.fy;
    a.row(2 * row) << pw.x(), pw.y(), pw.z(), 1, 0, 0, 0, 0, -mx * pw.x(),
        -mx * pw.y(), -mx * pw.z(), -mx;
    a.row(2 * row + 1) << 0, 0, 0, 0, pw.x(), pw.y(), pw.z(), 1, -my * pw.x(),
        -my * pw.y(), -my * pw.z(), -my;
  }
  Eigen::JacobiSVD<Eigen::MatrixXd> svd(a, Eigen::ComputeFullV);
  if (svd.singularValues()(10) <= 1e-9 * svd.singularValues()(0)) return false;
  Eigen::VectorXd p = svd.matrixV().col(11);
  Eigen::Matrix<double, 3, 4> proj;
  proj << p(0), p(1), p(2), p(3), p(4), p(5), p(6), p(7), p(8), p(9), p(10), p(11);

  Mat3 m = proj.leftCols<3>();
  if (m.determinant() < 0) {
    proj = -proj;
    m = -m;
  }
  Eigen::JacobiSVD<Mat3> msvd(m, Eigen::ComputeFullU | Eigen::ComputeFullV);
  double scale = msvd.singularValues().mean();
  if (!(scale > 1e-12)) return false;
  r_wc = msvd.matrixU() * msvd.matrixV().transpose();
  if (r_wc.determinant() < 0) return false;
  t_wc = proj.col(3) / scale;
  return true;
}

// Pose for samples the projection-matrix DLT cannot handle: points sharing a
// plane leave it rank-deficient. Mirrors EPnP's planar branch -- fit the
// plane-to-image homography in a local plane frame and peel rotation, scale,
// and translation out of its columns.
bool pnp_planar(const std::vector<PointPixel>& corrs,
                const std::vector<int>& idxs, const Intrinsics& k, Mat3& r_wc,
                Vec3& t_wc) {
  Vec3 centroid = Vec3::Zero();
  for (int i : idxs) centroid += corrs[i].first;
  centroid /= static_cast<double>(idxs.size());
  Mat3 cov = Mat3::Zero();
  for (int i : idxs) {
    Vec3 d = corrs[i].first - centroid;
    cov += d * d.transpose();
  }
  Eigen::SelfAdjointEigenSolver<Mat3> eig(cov);
  if (!(eig.eigenvalues()(2) > 0) ||
      eig.eigenvalues()(0) > 1e-2 * eig.eigenvalues()(2))
    return false;  // genuinely three-dimensional: the DLT's job, not ours
  Vec3 e1 = eig.eigenvectors().col(2);
  Vec3 e2 = eig.eigenvectors().col(1);

  std::vector<PixelPair> pairs;
  pairs.reserve(idxs.size());
  for (int i : idxs) {
    const auto& [pw, px] = corrs[i];
    Vec3 d = pw - centroid;
    pairs.push_back({Pixel{d.dot(e1), d.dot(e2)},
                     Pixel{(px.u - k.cx) / k.fx, (px.v - k.cy) / k.fy}});
  }
  Mat3 h;
  try {
    h = fit_homography(pairs).h;
  } catch (const Error&) {
    return false;
  }

  // h ~ [r_wc*e1, r_wc*e2, r_wc*centroid + t_wc] up to one global scale.
  double scale = 0.5 * (h.col(0).norm() + h.col(1).norm());
  if (!(scale > 1e-12)) return false;
  Mat3 a = h / scale;
  int front = 0;  // both signs are the same homography; points must sit ahead
  for (const auto& [q, m] : pairs)
    front += (a(2, 0) * q.u + a(2, 1) * q.v + a(2, 2)) > 0 ? 1 : -1;
  if (front < 0) a = -a;

  Mat3 r_cp;  // camera-from-plane
  r_cp.col(0) = a.col(0);
  r_cp.col(1) = a.col(1);
  r_cp.col(2) = a.col(0).cross(a.col(1));
  Eigen::JacobiSVD<Mat3> rsvd(r_cp, Eigen::ComputeFullU | Eigen::ComputeFullV);
  r_cp = rsvd.matrixU() * rsvd.matrixV().transpose();
  if (r_cp.determinant() < 0) return false;

  Mat3 plane;  // plane frame expressed in world coordinates
  plane.col(0) = e1;
  plane.col(1) = e2;
  plane.col(2) = e1.cross(e2);
  r_wc = r_cp * plane.transpose();
  t_wc = a.col(2) - r_wc * centroid;
  return true;
}

// Levenberg-Marquardt over (rotation, translation) of a camera-to-world
// pose, minimizing squared reprojection error of the given correspondences.
// Perturbation: R <- R exp(w^), t <- t + dt.
Pose refine_pose(Pose pose, const std::vector<PointPixel>& corrs,
                 const std::vector<int>& idxs, const Intrinsics& k) {
  auto total_error = [&](const Pose& p) {
    double e = 0;
    for (int i : idxs) {
      try {
        Vec2 r = reprojection_residual(p, k, corrs[i].first, corrs[i].second);
        e += r.squaredNorm();
      } catch (const Error&) {
        e += 1e12;  // point fell behind the camera
      }
    }
    return e;
  };

  double lambda = 1e-3;
  double err = total_error(pose);
  for (int iter = 0; iter < 10; ++iter) {
    Eigen::Matrix<double, 6, 6> h = Eigen::Matrix<double, 6, 6>::Zero();
    Eigen::Matrix<double, 6, 1> g = Eigen::Matrix<double, 6, 1>::Zero();
    Mat3 rt = pose.rotation.transpose();
    for (int i : idxs) {
      Vec3 p_c = rt * (corrs[i].first - pose.translation);
      if (p_c.z() <= 1e-6) continue;
      double x = p_c.x(), y = p_c.y(), z = p_c.z();
      Eigen::Matrix<double, 2, 3> dpi;
      dpi << k.fx / z, 0, -k.fx * x / (z * z), 0, k.fy / z, -k.fy * y / (z * z);
      Eigen::Matrix<double, 3, 6> dpc;
      Mat3 skew;
      skew << 0, -z, y, z, 0, -x, -y, x, 0;
      dpc.leftCols<3>() = skew;   // d p_c / d w = [p_c]x
      dpc.rightCols<3>() = -rt;   // d p_c / d t
      Eigen::Matrix<double, 2, 6> j = dpi * dpc;
      Pixel proj{k.fx * x / z + k.cx, k.fy * y / z + k.cy};
      Vec2 r{proj.u - corrs[i].second.u, proj.v - corrs[i].second.v};
      h += j.transpose() * j;
      g += j.transpose() * r;
    }

    Eigen::Matrix<double, 6, 6> damped = h;
    damped.diagonal() += lambda * h.diagonal();
    Eigen::Matrix<double, 6, 1> delta = damped.ldlt().solve(-g);
    if (!delta.allFinite()) break;

    Pose trial = pose;
    Vec3 w = delta.head<3>();
    double angle = w.norm();
    Mat3 dr = Mat3::Identity();
    if (angle > 1e-12) dr = Eigen::AngleAxisd(angle, w / angle).toRotationMatrix();
    trial.rotation = reorthonormalize(pose.rotation * dr);
    trial.translation += delta.tail<3>();

    double trial_err = total_error(trial);
    if (trial_err < err) {
      double rel = (err - trial_err) / std::max(err, 1e-300);
      pose = trial;
      err = trial_err;
      lambda = std::max(lambda * 0.1, 1e-12);
      if (rel < 1e-6) break;
    } else {
      lambda *= 10;
      if (lambda > 1e8) break;
    }
  }
  return pose;
}

}  // namespace

RansacResult<Pose> ransac_pnp(const std::vector<PointPixel>& corrs,
                              const Intrinsics& k, const RansacParams& params) {
  const int n = static_cast<int>(corrs.size());
  if (n < 6) fail(ErrorCode::NoModel, "too few correspondences for PnP");

  SplitMix64 rng(params.rng_seed);
  const double thresh2 = params.inlier_threshold * params.inlier_threshold;

  auto score = [&](const Pose& pose, std::vector<std::uint8_t>& mask) {
    mask.assign(n, 0);
    int count = 0;
    for (int i = 0; i < n; ++i) {
      try {
        Vec2 r = reprojection_residual(pose, k, corrs[i].first, corrs[i].second);
        if (r.squaredNorm() < thresh2) {
          mask[i] = 1;
          ++count;
        }
      } catch (const Error&) {
      }
    }
    return count;
  };

  RansacResult<Pose> best;
  best.inlier_count = -1;
  std::vector<int> sample;
  std::vector<std::uint8_t> mask;
  int needed = params.max_iterations;
  int it = 0;
  for (; it < needed; ++it) {
    sample_distinct(rng, n, 6, sample);
    // Near-planar samples sit between the two minimal solvers -- the DLT is
    // ill-conditioned and the homography model only approximate -- so let
    // the consensus count pick rather than a hard geometric gate.
    Mat3 r_wc;
    Vec3 t_wc;
    bool any = false;
    if (pnp_dlt(corrs, sample, k, r_wc, t_wc)) {
      any = true;
      Pose pose;
      pose.rotation = r_wc.transpose();
      pose.translation = -(r_wc.transpose() * t_wc);
      int count = score(pose, mask);
      if (count > best.inlier_count) {
        best.model = pose;
        best.inlier_count = count;
        best.inlier_mask = mask;
      }
    }
    if (pnp_planar(corrs, sample, k, r_wc, t_wc)) {
      any = true;
      Pose pose;
      pose.rotation = r_wc.transpose();
      pose.translation = -(r_wc.transpose() * t_wc);
      int count = score(pose, mask);
      if (count > best.inlier_count) {
        best.model = pose;
        best.inlier_count = count;
        best.inlier_mask = mask;
      }
    }
    if (any && best.inlier_count > 0)
      needed = std::min(
          needed, needed_iterations(static_cast<double>(best.inlier_count) / n,
                                    6, params.confidence, params.max_iterations));
  }
  best.iterations_run = it;

  if (best.inlier_count < 6)
    fail(ErrorCode::NoModel, "no pose hypothesis reached 6 inliers");

  std::vector<int> inlier_idx;
  for (int i = 0; i < n; ++i)
    if (best.inlier_mask[i]) inlier_idx.push_back(i);
  Pose refined = refine_pose(best.model, corrs, inlier_idx, k);

  // A refinement that pushes the consensus set behind the camera is a
  // failure, not a pose.
  int behind = 0;
  Mat3 rt = refined.rotation.transpose();
  for (int i : inlier_idx)
    if ((rt * (corrs[i].first - refined.translation)).z() <= 0) ++behind;
  if (behind * 2 > static_cast<int>(inlier_idx.size()))
    fail(ErrorCode::BehindCamera, "refined pose places most inliers behind the camera");

  int count = score(refined, mask);
  if (count >= 6) {
    best.model = refined;
    best.inlier_count = count;
    best.inlier_mask = mask;
  }
  return best;
}

Sim3 fit_sim3(const std::vector<Vec3>& src, const std::vector<Vec3>& dst) {
  if (src.size() < 3 || src.size() != dst.size())
    fail(ErrorCode::Degenerate, "similarity needs 3+ aligned point pairs");
  const int n = static_cast<int>(src.size());

  Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
  for (int i = 0; i < n; ++i) {
    cs += src[i];
    cd += dst[i];
  }
  cs /= n;
  cd /= n;

  Mat3 w = Mat3::Zero();
  double src_rms2 = 0, dst_rms2 = 0;
  for (int i = 0; i < n; ++i) {
    Vec3 a = src[i] - cs, b = dst[i] - cd;
    w += b * a.transpose();
    src_rms2 += a.squaredNorm();
    dst_rms2 += b.squaredNorm();
  }

  Eigen::JacobiSVD<Mat3> svd(w, Eigen::ComputeFullU | Eigen::ComputeFullV);
  const Vec3& sv = svd.singularValues();
  // Collinear points make the covariance rank 1: rotation about the line is
  // unobservable.
  if (sv(1) <= 1e-9 * std::max(sv(0), 1e-300))
    fail(ErrorCode::Degenerate, "collinear points leave rotation unobservable");

  double d = (svd.matrixU() * svd.matrixV().transpose()).determinant();
  Mat3 fix = Mat3::Identity();
  fix(2, 2) = d < 0 ? -1.0 : 1.0;
  Mat3 rot = svd.matrixU() * fix * svd.matrixV().transpose();
  if (rot.determinant() < 0.5)
    fail(ErrorCode::ReflectionOnly, "no proper rotation aligns the point sets");

  if (!(src_rms2 > 1e-300))
    fail(ErrorCode::Degenerate, "source points coincide");
  Sim3 s;
  s.scale = std::sqrt(dst_rms2 / src_rms2);
  s.rotation = rot;
  s.translation = cd - s.scale * (rot * cs);
  return s;
}

RansacResult<Sim3> ransac_sim3(const std::vector<PointPair>& corrs,
                               const RansacParams& params) {
  const int n = static_cast<int>(corrs.size());
  if (n < 3) fail(ErrorCode::NoModel, "too few correspondences for a similarity");

  SplitMix64 rng(params.rng_seed);
  const double thresh2 = params.inlier_threshold * params.inlier_threshold;

  auto score = [&](const Sim3& model, std::vector<std::uint8_t>& mask) {
    mask.assign(n, 0);
    int count = 0;
    for (int i = 0; i < n; ++i) {
      if ((sim3_apply(model, corrs[i].first) - corrs[i].second).squaredNorm() <
          thresh2) {
        mask[i] = 1;
        ++count;
      }
    }
    return count;
  };

  RansacResult<Sim3> best;
  best.inlier_count = -1;
  std::vector<int> sample;
  std::vector<std::uint8_t> mask;
  int needed = params.max_iterations;
  int it = 0;
  for (; it < needed; ++it) {
    sample_distinct(rng, n, 3, sample);
    std::vector<Vec3> src, dst;
    for (int idx : sample) {
      src.push_back(corrs[idx].first);
      dst.push_back(corrs[idx].second);
    }
    Sim3 model;
    try {
      model = fit_sim3(src, dst);
    } catch (const Error&) {
      continue;
    }
    int count = score(model, mask);
    if (count > best.inlier_count) {
      best.model = model;
      best.inlier_count = count;
      best.inlier_mask = mask;
      needed = std::min(needed, needed_iterations(static_cast<double>(count) / n, 3,
                                                  params.confidence,
                                                  params.max_iterations));
    }
  }
  best.iterations_run = it;

  if (best.inlier_count < 3)
    fail(ErrorCode::NoModel, "no similarity hypothesis reached 3 inliers");

  std::vector<Vec3> src, dst;
  for (int i = 0; i < n; ++i)
    if (best.inlier_mask[i]) {
      src.push_back(corrs[i].first);
      dst.push_back(corrs[i].second);
    }
  try {
    Sim3 refined = fit_sim3(src, dst);
    int count = score(refined, mask);
    if (count >= 3) {
      best.model = refined;
      best.inlier_count = count;
      best.inlier_mask = mask;
    }
  } catch (const Error&) {
  }
  return best;
}

}  // namespace objslam
