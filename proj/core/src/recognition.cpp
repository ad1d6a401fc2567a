#include "objslam/recognition.hpp"

#include <algorithm>
#include <cmath>

#include "objslam/errors.hpp"

namespace objslam {

void db_add(ObjectDatabase& db, const GrayImage& image,
            const std::string& name, const RecognitionConfig& cfg) {
  for (const ObjectEntry& e : db.entries)
    if (e.name == name) fail(ErrorCode::DuplicateName, name);

  ObjectEntry e;
  e.name = name;
  e.template_image = image;
  e.features = extract(image, cfg.feature_budget, db.kind);
  if (e.features.size() < 20)
    fail(ErrorCode::TooFewFeatures,
         name + ": template yields " + std::to_string(e.features.size()) +
             " keypoints, need 20");
  double w = image.width - 1, h = image.height - 1;
  e.corners = {Pixel{0, 0}, Pixel{w, 0}, Pixel{w, h}, Pixel{0, h}};
  if (db.kind == DescriptorKind::kFloat)
    e.index = kdtree_build(e.features.floats);
  db.entries.push_back(std::move(e));
}

std::optional<Detection> recognize(const ExtractResult& frame,
                                   const ObjectDatabase& db,
                                   const RecognitionConfig& cfg) {
  std::optional<Detection> best;
  for (const ObjectEntry& entry : db.entries) {
    // Frame -> template matching.
    std::vector<std::vector<MatchPair>> knn(frame.size());
    if (db.kind == DescriptorKind::kFloat) {
      for (std::size_t q = 0; q < frame.size(); ++q) {
        knn[q] = kdtree_knn(entry.index, frame.floats[q], 2, cfg.knn_checks);
        for (MatchPair& m : knn[q]) m.query_idx = static_cast<int>(q);
      }
    } else {
      for (std::size_t q = 0; q < frame.size(); ++q) {
        knn[q] = hamming_knn(entry.features.binary, frame.binary[q], 2);
        for (MatchPair& m : knn[q]) m.query_idx = static_cast<int>(q);
      }
    }
    std::vector<MatchPair> matches = filter_ratio(knn, cfg.ratio);

    std::vector<PixelPair> pairs;
    pairs.reserve(matches.size());
    for (const MatchPair& m : matches) {
      const Keypoint& t = entry.features.keypoints[m.train_idx];
      const Keypoint& f = frame.keypoints[m.query_idx];
      pairs.push_back({Pixel{t.u, t.v}, Pixel{f.u, f.v}});
    }
    if (pairs.size() < 4) continue;

    RansacResult<Homography> fit;
    try {
      fit = ransac_homography(pairs, cfg.ransac);
    } catch (const Error&) {
      continue;  // degenerate geometry counts as no candidate
    }
    if (!decision_accepts(fit.inlier_count, cfg)) continue;
    if (best && fit.inlier_count <= best->inliers) continue;

    Detection d;
    d.name = entry.name;
    d.homography = fit.model;
    d.inliers = fit.inlier_count;
    for (int i = 0; i < 4; ++i)
      d.quad[i] = apply_homography(fit.model, entry.corners[i]);
    best = std::move(d);
  }
  return best;
}

namespace {

double cross2(const Pixel& o, const Pixel& a, const Pixel& b) {
  return (a.u - o.u) * (b.v - o.v) - (a.v - o.v) * (b.u - o.u);
}

// Monotone-chain convex hull; input size is tiny (4 points).
std::vector<Pixel> convex_hull(std::array<Pixel, 4> pts) {
  std::sort(pts.begin(), pts.end(), [](const Pixel& a, const Pixel& b) {
    return a.u < b.u || (a.u == b.u && a.v < b.v);
  });
  std::vector<Pixel> hull;
  for (const Pixel& p : pts) {  // lower chain
    while (hull.size() >= 2 &&
           cross2(hull[hull.size() - 2], hull.back(), p) <= 0)
      hull.pop_back();
    hull.push_back(p);
  }
  std::size_t lower = hull.size() + 1;
  for (int i = 3; i >= 0; --i) {  // upper chain
    const Pixel& p = pts[i];
    while (hull.size() >= lower &&
           cross2(hull[hull.size() - 2], hull.back(), p) <= 0)
      hull.pop_back();
    hull.push_back(p);
  }
  hull.pop_back();  // last point repeats the first
  return hull;
}

bool inside_hull(const std::vector<Pixel>& hull, double x, double y) {
  Pixel p{x, y};
  for (std::size_t i = 0; i < hull.size(); ++i) {
    const Pixel& a = hull[i];
    const Pixel& b = hull[(i + 1) % hull.size()];
    if (cross2(a, b, p) < 0) return false;
  }
  return true;
}

}  // namespace

double estimate_depth(const DepthImage& depth,
                      const std::array<Pixel, 4>& quad) {
  std::vector<Pixel> hull = convex_hull(quad);

  double min_u = quad[0].u, max_u = quad[0].u;
  double min_v = quad[0].v, max_v = quad[0].v;
  for (const Pixel& p : quad) {
    min_u = std::min(min_u, p.u);
    max_u = std::max(max_u, p.u);
    min_v = std::min(min_v, p.v);
    max_v = std::max(max_v, p.v);
  }
  int x0 = std::max(0, static_cast<int>(std::ceil(min_u)));
  int x1 = std::min(depth.width - 1, static_cast<int>(std::floor(max_u)));
  int y0 = std::max(0, static_cast<int>(std::ceil(min_v)));
  int y1 = std::min(depth.height - 1, static_cast<int>(std::floor(max_v)));

  std::vector<float> samples;
  for (int y = y0; y <= y1; ++y)
    for (int x = x0; x <= x1; ++x)
      if (inside_hull(hull, x, y) && depth.valid(x, y))
        samples.push_back(depth.at(x, y));

  if (samples.size() < 10)
    fail(ErrorCode::NoDepth,
         "only " + std::to_string(samples.size()) +
             " valid depth samples inside the quad");

  std::size_t mid = samples.size() / 2;
  std::nth_element(samples.begin(), samples.begin() + mid, samples.end());
  double median = samples[mid];
  if (samples.size() % 2 == 0) {
    auto lower = std::max_element(samples.begin(), samples.begin() + mid);
    median = (median + *lower) / 2;
  }
  return median;
}

}  // namespace objslam
