#include "objslam/image.hpp"

#include <gtest/gtest.h>

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "objslam/errors.hpp"
#include "objslam/rng.hpp"

using namespace objslam;

namespace {

std::filesystem::path temp_file(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "objslam_image_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

}  // namespace

TEST(GrayImage, SampleAtIntegerCoordsIsExact) {
  GrayImage img(4, 3);
  for (int y = 0; y < 3; ++y)
    for (int x = 0; x < 4; ++x) img.at(x, y) = static_cast<std::uint8_t>(10 * y + x);
  EXPECT_DOUBLE_EQ(img.sample(2, 1), 12.0);
  EXPECT_DOUBLE_EQ(img.sample(0, 0), 0.0);
}

TEST(GrayImage, SampleInterpolatesBilinearly) {
  GrayImage img(2, 2);
  img.at(0, 0) = 0;
  img.at(1, 0) = 100;
  img.at(0, 1) = 50;
  img.at(1, 1) = 150;
  // Hand oracle: midpoint = mean of the four corners.
  EXPECT_DOUBLE_EQ(img.sample(0.5, 0.5), 75.0);
  EXPECT_DOUBLE_EQ(img.sample(0.5, 0.0), 50.0);
  EXPECT_DOUBLE_EQ(img.sample(0.0, 0.5), 25.0);
}

TEST(GrayImage, SampleClampsAtBorders) {
  GrayImage img(2, 2);
  img.at(0, 0) = 10;
  img.at(1, 0) = 20;
  img.at(0, 1) = 30;
  img.at(1, 1) = 40;
  EXPECT_DOUBLE_EQ(img.sample(-5, -5), 10.0);
  EXPECT_DOUBLE_EQ(img.sample(10, 10), 40.0);
}

TEST(Pgm8, RoundtripPreservesAllBytes) {
  SplitMix64 rng(31);
  GrayImage img(17, 9);
  for (auto& px : img.data) px = static_cast<std::uint8_t>(rng.next() & 0xff);
  auto path = temp_file("roundtrip.pgm");
  write_pgm8(img, path.string());
  GrayImage back = read_pgm8(path.string());
  EXPECT_EQ(back, img);
}

TEST(Pgm8, ReadsCommentsInHeader) {
  auto path = temp_file("comment.pgm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n# a comment line\n2 1\n255\n";
    out.put(static_cast<char>(7));
    out.put(static_cast<char>(250));
  }
  GrayImage img = read_pgm8(path.string());
  EXPECT_EQ(img.width, 2);
  EXPECT_EQ(img.height, 1);
  EXPECT_EQ(img.at(0, 0), 7);
  EXPECT_EQ(img.at(1, 0), 250);
}

TEST(Pgm8, RejectsBadMagicAndTruncation) {
  auto bad = temp_file("bad.pgm");
  {
    std::ofstream out(bad, std::ios::binary);
    out << "P6\n2 2\n255\n....";
  }
  EXPECT_THROW(read_pgm8(bad.string()), Error);

  auto trunc = temp_file("trunc.pgm");
  {
    std::ofstream out(trunc, std::ios::binary);
    out << "P5\n4 4\n255\n";
    out.put(1);
  }
  EXPECT_THROW(read_pgm8(trunc.string()), Error);
}

TEST(DepthPgm16, RoundtripWithinHalfUnit) {
  DepthImage img(5, 4);
  SplitMix64 rng(37);
  for (auto& d : img.data)
    d = static_cast<float>(0.1 + rng.next_double() * 9.0);
  auto path = temp_file("depth.pgm");
  const double scale = 0.001;
  write_depth_pgm16(img, path.string(), scale);
  DepthImage back = read_depth_pgm16(path.string(), scale);
  ASSERT_EQ(back.width, img.width);
  ASSERT_EQ(back.height, img.height);
  for (std::size_t i = 0; i < img.data.size(); ++i)
    EXPECT_NEAR(back.data[i], img.data[i], scale * 0.5 + 1e-9);
}

TEST(DepthPgm16, InvalidDepthStoredAsZero) {
  DepthImage img(2, 1);
  img.data[0] = 0.0f;
  img.data[1] = 2.5f;
  auto path = temp_file("invalid.pgm");
  write_depth_pgm16(img, path.string(), 0.001);
  DepthImage back = read_depth_pgm16(path.string(), 0.001);
  EXPECT_FLOAT_EQ(back.data[0], 0.0f);
  EXPECT_FALSE(back.valid(0, 0));
  EXPECT_TRUE(back.valid(1, 0));
}

TEST(DepthPgm16, BigEndianSampleBytes) {
  // 0x0102 big-endian = 258 units; at scale 0.001 that is 0.258 m.
  auto path = temp_file("endian.pgm");
  {
    std::ofstream out(path, std::ios::binary);
    out << "P5\n1 1\n65535\n";
    out.put(static_cast<char>(0x01));
    out.put(static_cast<char>(0x02));
  }
  DepthImage img = read_depth_pgm16(path.string(), 0.001);
  EXPECT_FLOAT_EQ(img.data[0], 0.258f);
}
