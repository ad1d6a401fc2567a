#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

namespace objslam {

/// Row-major 8-bit grayscale image.
struct GrayImage {
  int width = 0;
  int height = 0;
  std::vector<std::uint8_t> data;

  GrayImage() = default;
  GrayImage(int w, int h, std::uint8_t fill = 0)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  std::uint8_t at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  std::uint8_t& at(int x, int y) {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }

  /// Bilinear sample at real coordinates; clamps to the border.
  double sample(double x, double y) const;

  bool operator==(const GrayImage&) const = default;
};

/// Per-pixel depth in meters. 0 or non-finite marks an invalid sample.
struct DepthImage {
  int width = 0;
  int height = 0;
  std::vector<float> data;

  DepthImage() = default;
  DepthImage(int w, int h, float fill = 0.f)
      : width(w), height(h), data(static_cast<std::size_t>(w) * h, fill) {}

  float at(int x, int y) const {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  float& at(int x, int y) {
    return data[static_cast<std::size_t>(y) * width + x];
  }
  bool in_bounds(int x, int y) const {
    return x >= 0 && x < width && y >= 0 && y < height;
  }
  bool valid(int x, int y) const {
    float d = at(x, y);
    return std::isfinite(d) && d > 0.f;
  }

  bool operator==(const DepthImage&) const = default;
};

// Binary PGM (P5) I/O. 8-bit for gray frames, 16-bit big-endian for depth
// (meters = raw value * depth_scale, raw 0 = invalid).
GrayImage read_pgm8(const std::string& path);
void write_pgm8(const GrayImage& img, const std::string& path);
DepthImage read_depth_pgm16(const std::string& path, double depth_scale);
void write_depth_pgm16(const DepthImage& img, const std::string& path,
                       double depth_scale);

}  // namespace objslam
