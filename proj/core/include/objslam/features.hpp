#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <vector>

#include "objslam/image.hpp"

namespace objslam {

/// Scale pyramid. Level 0 is the input; each level's dimensions are
/// floor(level-0 dims / scale_factor^i) and its pixels are an area-average
/// downsample of the previous level.
struct ImagePyramid {
  std::vector<GrayImage> levels;
  double scale_factor = 1.2;

  double level_scale(int level) const {
    double s = 1.0;
    for (int i = 0; i < level; ++i) s *= scale_factor;
    return s;
  }
};

struct Keypoint {
  double u = 0.0;  // level-0 scale
  double v = 0.0;
  int level = 0;
  double orientation = 0.0;  // radians in [0, 2pi)
  double score = 0.0;        // Harris response
};

/// 256-bit descriptor packed into four words, bit i = word i/64, bit i%64.
struct BinaryDescriptor {
  std::array<std::uint64_t, 4> words{};

  bool bit(int i) const { return (words[i >> 6] >> (i & 63)) & 1u; }
  void set_bit(int i) { words[i >> 6] |= std::uint64_t{1} << (i & 63); }

  std::array<std::uint8_t, 32> bytes() const {
    std::array<std::uint8_t, 32> out{};
    for (int i = 0; i < 32; ++i)
      out[i] = static_cast<std::uint8_t>(words[i >> 3] >> ((i & 7) * 8));
    return out;
  }
  static BinaryDescriptor from_bytes(const std::array<std::uint8_t, 32>& in) {
    BinaryDescriptor d;
    for (int i = 0; i < 32; ++i)
      d.words[i >> 3] |= std::uint64_t{in[i]} << ((i & 7) * 8);
    return d;
  }

  bool operator==(const BinaryDescriptor&) const = default;
};

inline int hamming(const BinaryDescriptor& a, const BinaryDescriptor& b) {
  int d = 0;
  for (int i = 0; i < 4; ++i) d += std::popcount(a.words[i] ^ b.words[i]);
  return d;
}

/// 128-dim gradient-histogram descriptor, L2 norm 1 or all-zero when the
/// patch has no texture.
using FloatDescriptor = std::array<float, 128>;

/// 256 point-pair offsets used by the steered binary descriptor. Offsets lie
/// within a radius-15 disc so every steering stays inside the 37x37 patch.
struct BriefPattern {
  std::array<std::array<std::int8_t, 4>, 256> pairs{};  // x1, y1, x2, y2
};

ImagePyramid build_pyramid(const GrayImage& img, int levels = 8,
                           double scale_factor = 1.2);

/// Segment test for one pixel: a contiguous arc of >= `arc` of the 16 circle
/// pixels all brighter than center+threshold or all darker than
/// center-threshold.
bool fast_segment_test(const GrayImage& img, int x, int y, int threshold,
                       int arc);

/// FAST corners with 3x3 Harris non-maximum suppression. Keypoints within
/// 16 px of the border are dropped; coordinates are in img's frame with
/// level 0 and orientation 0.
std::vector<Keypoint> detect_fast(const GrayImage& img, int threshold = 20,
                                  int arc = 9);

/// Harris corner response from Sobel gradients over a 7x7 window.
double harris_score(const GrayImage& img, int x, int y);

/// Intensity-centroid orientation over a circular patch: atan2(m01, m10)
/// mapped into [0, 2pi). Throws Undefined when both moments vanish.
double orientation_ic(const GrayImage& img, const Keypoint& kp,
                      int radius = 15);

/// Greedy decorrelation of Gaussian-sampled point pairs against a seeded
/// corpus of synthetic patches. Deterministic for a fixed seed.
BriefPattern generate_pattern(std::uint64_t seed);

/// Corpus the pattern learner scores candidate pairs on: `count` box-smoothed
/// random patches of `size` x `size` pixels.
std::vector<GrayImage> synthetic_patch_corpus(std::uint64_t seed, int count,
                                              int size);

/// The process-wide pattern (generate_pattern with a fixed seed, memoized).
const BriefPattern& default_pattern();

/// Steered binary descriptor at kp (coordinates in img's frame). Pair offsets
/// rotate with kp.orientation discretized to 12-degree bins; intensities are
/// 5x5 box smoothed.
BinaryDescriptor describe_orb(const GrayImage& img, const Keypoint& kp,
                              const BriefPattern& pattern);

/// 4x4 spatial grid x 8 orientation bins over a rotated 16x16 sample grid,
/// trilinear binning, clamp at 0.2, renormalize. All-zero for textureless
/// patches.
FloatDescriptor describe_gradhist(const GrayImage& img, const Keypoint& kp);

enum class DescriptorKind { kBinary, kFloat };

/// Keypoints plus descriptors. Exactly one of `binary`/`floats` is populated
/// (index-aligned with `keypoints`), selected by `kind`.
struct ExtractResult {
  DescriptorKind kind = DescriptorKind::kBinary;
  std::vector<Keypoint> keypoints;
  std::vector<BinaryDescriptor> binary;
  std::vector<FloatDescriptor> floats;

  std::size_t size() const { return keypoints.size(); }
};

/// Full pipeline: pyramid, FAST per level with an area-proportional budget,
/// Harris top-N, orientation, then the chosen descriptor. Level count adapts
/// downward so the top level stays at least 32x32.
ExtractResult extract(const GrayImage& img, int budget = 1000,
                      DescriptorKind kind = DescriptorKind::kBinary);

}  // namespace objslam
