#pragma once

#include <array>
#include <optional>
#include <string>
#include <vector>

#include "objslam/features.hpp"
#include "objslam/geometry.hpp"
#include "objslam/image.hpp"
#include "objslam/matching.hpp"
#include "objslam/robust.hpp"

namespace objslam {

/// One database object: a single template image with cached features.
struct ObjectEntry {
  std::string name;
  GrayImage template_image;
  ExtractResult features;
  std::array<Pixel, 4> corners;  // template corners, clockwise from (0,0)
  KdTree index;                  // populated for float databases only
};

/// Ordered object list; insertion order breaks detection ties. All entries
/// share one descriptor kind, fixed at construction.
struct ObjectDatabase {
  explicit ObjectDatabase(DescriptorKind k = DescriptorKind::kBinary)
      : kind(k) {}

  DescriptorKind kind;
  std::vector<ObjectEntry> entries;
};

struct Detection {
  std::string name;
  Homography homography;  // template coordinates -> frame coordinates
  int inliers = 0;
  std::array<Pixel, 4> quad;    // template corners mapped into the frame
  std::optional<double> depth;  // D_e in meters, once estimated
};

struct RecognitionConfig {
  int min_inliers = 15;
  DescriptorKind kind = DescriptorKind::kBinary;
  double ratio = 0.7;
  int knn_checks = 64;  // BBF budget per query on float databases
  RansacParams ransac;  // 3 px homography threshold by default
  double frame_budget_ms = 200.0;
  int feature_budget = 1000;  // extraction budget per image
};

/// Extracts and caches features for the template; float databases also get
/// a per-entry kd-tree. Throws DuplicateName or TooFewFeatures (< 20).
void db_add(ObjectDatabase& db, const GrayImage& image,
            const std::string& name,
            const RecognitionConfig& cfg = RecognitionConfig{});

/// The decision rule behind every detection: a candidate is accepted iff
/// its RANSAC inlier count reaches cfg.min_inliers.
inline bool decision_accepts(int inlier_count, const RecognitionConfig& cfg) {
  return inlier_count >= cfg.min_inliers;
}

/// Matches frame features against every template (frame -> template), fits
/// a homography per object, and returns the accepted candidate with the
/// most inliers; ties go to the earlier database entry. Absence is a valid
/// result.
std::optional<Detection> recognize(const ExtractResult& frame,
                                   const ObjectDatabase& db,
                                   const RecognitionConfig& cfg);

/// Median of the valid depth samples inside the quad's convex hull: the
/// paper's D_e. Throws NoDepth when fewer than 10 valid samples fall inside.
double estimate_depth(const DepthImage& depth, const std::array<Pixel, 4>& quad);

}  // namespace objslam
