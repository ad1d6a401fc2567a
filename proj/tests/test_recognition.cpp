#include "objslam/recognition.hpp"

#include <gtest/gtest.h>

#include <cmath>

#include "objslam/errors.hpp"
#include "objslam/rng.hpp"
#include "objslam/sim.hpp"

using namespace objslam;

namespace {

constexpr double kPi = 3.14159265358979323846;

// Three distinct textures standing in for the paper's physical objects.
GrayImage object_texture(int which) {
  return make_texture(100 + which, 256, 192);
}

// Scene with exactly one textured board facing the -z direction at z = 2.
SimScene scene_with(const GrayImage& texture, double width = 2.56,
                    double height = 1.92) {
  SimScene scene;
  scene.seed = 5;
  Board b;
  b.name = "target";
  b.width = width;
  b.height = height;
  b.texture = texture;
  b.pose.translation = Vec3(0, 0, 2);
  Vec3 normal(0, 0, -1), up(0, -1, 0);
  b.pose.rotation.col(0) = up.cross(normal);
  b.pose.rotation.col(1) = up;
  b.pose.rotation.col(2) = normal;
  scene.boards.push_back(std::move(b));
  return scene;
}

ObjectDatabase three_object_db(DescriptorKind kind) {
  ObjectDatabase db(kind);
  RecognitionConfig cfg;
  cfg.kind = kind;
  db_add(db, object_texture(0), "book", cfg);
  db_add(db, object_texture(1), "folder", cfg);
  db_add(db, object_texture(2), "shirt", cfg);
  return db;
}

// Analytic frame position of template corner `i` for a camera viewing the
// board at `cam`: template pixel -> board local -> world -> projection.
Pixel expected_corner(const Board& b, const Pose& cam, const Intrinsics& k,
                      const Pixel& corner) {
  double lx = corner.u / (b.texture.width - 1) * b.width - b.width / 2;
  double ly = b.height / 2 - corner.v / (b.texture.height - 1) * b.height;
  Vec3 world = b.pose.apply(Vec3(lx, ly, 0));
  Vec3 camera_pt = cam.rotation.transpose() * (world - cam.translation);
  return project(k, camera_pt);
}

}  // namespace

TEST(ObjectDb, AddCachesFeaturesAndCorners) {
  ObjectDatabase db;
  db_add(db, object_texture(0), "book");
  ASSERT_EQ(db.entries.size(), 1u);
  const ObjectEntry& e = db.entries[0];
  EXPECT_EQ(e.name, "book");
  EXPECT_GE(e.features.size(), 20u);
  EXPECT_DOUBLE_EQ(e.corners[0].u, 0.0);
  EXPECT_DOUBLE_EQ(e.corners[2].u, 255.0);
  EXPECT_DOUBLE_EQ(e.corners[2].v, 191.0);
}

TEST(ObjectDb, RejectsDuplicateNames) {
  ObjectDatabase db;
  db_add(db, object_texture(0), "book");
  try {
    db_add(db, object_texture(1), "book");
    FAIL() << "expected DuplicateName";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateName);
  }
}

TEST(ObjectDb, RejectsTexturelessTemplate) {
  ObjectDatabase db;
  GrayImage flat(128, 128, 140);
  try {
    db_add(db, flat, "wall");
    FAIL() << "expected TooFewFeatures";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::TooFewFeatures);
  }
}

TEST(Recognize, FindsFrontoParallelObject) {
  ObjectDatabase db = three_object_db(DescriptorKind::kBinary);
  SimScene scene = scene_with(object_texture(1));  // the "folder"
  SimConfig sim;
  Pose cam = camera_facing(scene.boards[0], 1.95);
  auto [gray, depth] = render_rgbd(scene, cam, sim);

  RecognitionConfig cfg;
  ExtractResult frame = extract(gray, cfg.feature_budget, cfg.kind);
  auto det = recognize(frame, db, cfg);
  ASSERT_TRUE(det.has_value());
  EXPECT_EQ(det->name, "folder");
  EXPECT_GE(det->inliers, 15);

  // The returned quad must agree with the analytic projection of the board.
  for (int i = 0; i < 4; ++i) {
    Pixel truth = expected_corner(scene.boards[0], cam, sim.intrinsics,
                                  db.entries[1].corners[i]);
    EXPECT_NEAR(det->quad[i].u, truth.u, 5.0) << "corner " << i;
    EXPECT_NEAR(det->quad[i].v, truth.v, 5.0) << "corner " << i;
  }
}

TEST(Recognize, BackgroundOnlyFrameYieldsNothing) {
  ObjectDatabase db = three_object_db(DescriptorKind::kBinary);
  SimScene empty;
  SimConfig sim;
  auto [gray, depth] = render_rgbd(empty, Pose{}, sim);
  RecognitionConfig cfg;
  ExtractResult frame = extract(gray, cfg.feature_budget, cfg.kind);
  EXPECT_FALSE(recognize(frame, db, cfg).has_value());
}

TEST(Recognize, SurvivesQuarterTurnInPlane) {
  ObjectDatabase db = three_object_db(DescriptorKind::kBinary);
  SimScene scene = scene_with(object_texture(1));
  SimConfig sim;
  Pose cam = camera_facing(scene.boards[0], 1.95, kPi / 2);
  auto [gray, depth] = render_rgbd(scene, cam, sim);
  RecognitionConfig cfg;
  ExtractResult frame = extract(gray, cfg.feature_budget, cfg.kind);
  auto det = recognize(frame, db, cfg);
  ASSERT_TRUE(det.has_value());
  EXPECT_EQ(det->name, "folder");
  EXPECT_GE(det->inliers, 15);
}

TEST(Recognize, FloatPipelineFindsObject) {
  ObjectDatabase db = three_object_db(DescriptorKind::kFloat);
  SimScene scene = scene_with(object_texture(2));  // the "shirt"
  SimConfig sim;
  Pose cam = camera_facing(scene.boards[0], 1.95);
  auto [gray, depth] = render_rgbd(scene, cam, sim);

  RecognitionConfig cfg;
  cfg.kind = DescriptorKind::kFloat;
  ExtractResult frame = extract(gray, cfg.feature_budget, cfg.kind);
  auto det = recognize(frame, db, cfg);
  ASSERT_TRUE(det.has_value());
  EXPECT_EQ(det->name, "shirt");
  EXPECT_GE(det->inliers, 15);
}

TEST(Recognize, TiesGoToEarlierDatabaseEntry) {
  ObjectDatabase db;
  db_add(db, object_texture(0), "first");
  db_add(db, object_texture(0), "second");  // same image, later entry
  SimScene scene = scene_with(object_texture(0));
  SimConfig sim;
  Pose cam = camera_facing(scene.boards[0], 1.95);
  auto [gray, depth] = render_rgbd(scene, cam, sim);
  RecognitionConfig cfg;
  ExtractResult frame = extract(gray, cfg.feature_budget, cfg.kind);
  auto det = recognize(frame, db, cfg);
  ASSERT_TRUE(det.has_value());
  EXPECT_EQ(det->name, "first");
}

TEST(Recognize, DeterministicAcrossCalls) {
  ObjectDatabase db = three_object_db(DescriptorKind::kBinary);
  SimScene scene = scene_with(object_texture(1));
  SimConfig sim;
  Pose cam = camera_facing(scene.boards[0], 1.95, 0.3);
  auto [gray, depth] = render_rgbd(scene, cam, sim);
  RecognitionConfig cfg;
  ExtractResult frame = extract(gray, cfg.feature_budget, cfg.kind);
  auto a = recognize(frame, db, cfg);
  auto b = recognize(frame, db, cfg);
  ASSERT_EQ(a.has_value(), b.has_value());
  ASSERT_TRUE(a.has_value());
  EXPECT_EQ(a->name, b->name);
  EXPECT_EQ(a->inliers, b->inliers);
  for (int i = 0; i < 4; ++i) {
    EXPECT_DOUBLE_EQ(a->quad[i].u, b->quad[i].u);
    EXPECT_DOUBLE_EQ(a->quad[i].v, b->quad[i].v);
  }
}

TEST(DecisionRule, FifteenInliersIsTheBoundary) {
  RecognitionConfig cfg;
  EXPECT_TRUE(decision_accepts(15, cfg));
  EXPECT_FALSE(decision_accepts(14, cfg));
}

TEST(EstimateDepth, MedianOfConstantPlane) {
  DepthImage depth(320, 240, 2.0f);
  std::array<Pixel, 4> quad = {Pixel{100, 80}, Pixel{220, 80},
                               Pixel{220, 160}, Pixel{100, 160}};
  EXPECT_DOUBLE_EQ(estimate_depth(depth, quad), 2.0);
}

TEST(EstimateDepth, RobustToThirtyPercentDropout) {
  DepthImage depth(320, 240, 2.0f);
  SplitMix64 rng(4);
  for (float& d : depth.data)
    if (rng.next_double() < 0.3) d = 0.f;
  std::array<Pixel, 4> quad = {Pixel{100, 80}, Pixel{220, 80},
                               Pixel{220, 160}, Pixel{100, 160}};
  EXPECT_DOUBLE_EQ(estimate_depth(depth, quad), 2.0);
}

TEST(EstimateDepth, QuadOutsideImageHasNoDepth) {
  DepthImage depth(320, 240, 2.0f);
  std::array<Pixel, 4> quad = {Pixel{400, 80}, Pixel{500, 80},
                               Pixel{500, 160}, Pixel{400, 160}};
  try {
    estimate_depth(depth, quad);
    FAIL() << "expected NoDepth";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoDepth);
  }
}

TEST(EstimateDepth, TinyQuadHasNoDepth) {
  DepthImage depth(320, 240, 2.0f);
  std::array<Pixel, 4> quad = {Pixel{10, 10}, Pixel{12, 10}, Pixel{12, 12},
                               Pixel{10, 12}};
  // 3x3 = 9 interior samples, one short of the minimum.
  try {
    estimate_depth(depth, quad);
    FAIL() << "expected NoDepth";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::NoDepth);
  }
}

TEST(EstimateDepth, UsesOnlySamplesInsideTheHull) {
  DepthImage depth(320, 240, 9.0f);
  // Diamond-shaped quad over a 2.0 m disc; outside the diamond the plane
  // reads 9.0 m, which must not leak into the median.
  for (int y = 60; y <= 180; ++y)
    for (int x = 100; x <= 220; ++x)
      if (std::abs(x - 160) + std::abs(y - 120) <= 60) depth.at(x, y) = 2.0f;
  std::array<Pixel, 4> quad = {Pixel{160, 60}, Pixel{220, 120},
                               Pixel{160, 180}, Pixel{100, 120}};
  EXPECT_DOUBLE_EQ(estimate_depth(depth, quad), 2.0);
}
