#include "objslam/features.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <set>

#include "objslam/errors.hpp"
#include "objslam/rng.hpp"

namespace objslam {

namespace {

constexpr double kTwoPi = 6.283185307179586;

// 16-pixel Bresenham circle of radius 3, clockwise from 12 o'clock.
constexpr int kCircleDx[16] = {0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3, -3, -3, -2, -1};
constexpr int kCircleDy[16] = {-3, -3, -2, -1, 0, 1, 2, 3, 3, 3, 2, 1, 0, -1, -2, -3};

// Border margins: FAST keeps 16 px clear; the steered descriptor needs the
// rotated pattern plus box smoothing (37x37 patch); the gradient descriptor
// needs the rotated 16x16 grid plus central differences.
constexpr int kFastBorder = 16;
constexpr int kOrbMargin = 18;
constexpr int kGradMargin = 13;

constexpr std::uint64_t kPatternSeed = 0x0b5e55ed5eedULL;

GrayImage resize_area(const GrayImage& src, int dw, int dh) {
  GrayImage out(dw, dh);
  double rx = static_cast<double>(src.width) / dw;
  double ry = static_cast<double>(src.height) / dh;
  for (int dy = 0; dy < dh; ++dy) {
    double y0 = dy * ry, y1 = y0 + ry;
    int iy0 = static_cast<int>(y0), iy1 = std::min(static_cast<int>(std::ceil(y1)), src.height);
    for (int dx = 0; dx < dw; ++dx) {
      double x0 = dx * rx, x1 = x0 + rx;
      int ix0 = static_cast<int>(x0), ix1 = std::min(static_cast<int>(std::ceil(x1)), src.width);
      double sum = 0.0, area = 0.0;
      for (int iy = iy0; iy < iy1; ++iy) {
        double hy = std::min<double>(iy + 1, y1) - std::max<double>(iy, y0);
        for (int ix = ix0; ix < ix1; ++ix) {
          double hx = std::min<double>(ix + 1, x1) - std::max<double>(ix, x0);
          double w = hx * hy;
          sum += w * src.at(ix, iy);
          area += w;
        }
      }
      out.at(dx, dy) = static_cast<std::uint8_t>(std::lround(sum / area));
    }
  }
  return out;
}

}  // namespace

ImagePyramid build_pyramid(const GrayImage& img, int levels, double scale_factor) {
  if (levels < 1 || scale_factor <= 1.0)
    fail(ErrorCode::BadParams, "pyramid needs levels >= 1 and scale_factor > 1");
  double top = std::pow(scale_factor, levels - 1);
  if (std::floor(img.width / top) < 32 || std::floor(img.height / top) < 32)
    fail(ErrorCode::TooSmall, "top pyramid level would fall under 32x32");

  ImagePyramid pyr;
  pyr.scale_factor = scale_factor;
  pyr.levels.push_back(img);
  double s = 1.0;
  for (int i = 1; i < levels; ++i) {
    s *= scale_factor;
    int w = static_cast<int>(std::floor(img.width / s));
    int h = static_cast<int>(std::floor(img.height / s));
    pyr.levels.push_back(resize_area(pyr.levels.back(), w, h));
  }
  return pyr;
}

bool fast_segment_test(const GrayImage& img, int x, int y, int threshold, int arc) {
  int center = img.at(x, y);
  int hi = center + threshold;
  int lo = center - threshold;

  if (arc >= 9) {
    // Any run of >= 9 must include one of {0, 8} and one of {4, 12}.
    int p0 = img.at(x + kCircleDx[0], y + kCircleDy[0]);
    int p4 = img.at(x + kCircleDx[4], y + kCircleDy[4]);
    int p8 = img.at(x + kCircleDx[8], y + kCircleDy[8]);
    int p12 = img.at(x + kCircleDx[12], y + kCircleDy[12]);
    bool bright_possible = (p0 > hi || p8 > hi) && (p4 > hi || p12 > hi);
    bool dark_possible = (p0 < lo || p8 < lo) && (p4 < lo || p12 < lo);
    if (!bright_possible && !dark_possible) return false;
  }

  int vals[16];
  for (int i = 0; i < 16; ++i) vals[i] = img.at(x + kCircleDx[i], y + kCircleDy[i]);

  for (int pass = 0; pass < 2; ++pass) {
    int run = 0;
    for (int i = 0; i < 16 + arc - 1; ++i) {
      int v = vals[i & 15];
      bool on = pass == 0 ? v > hi : v < lo;
      run = on ? run + 1 : 0;
      if (run >= arc) return true;
    }
  }
  return false;
}

double harris_score(const GrayImage& img, int x, int y) {
  double a = 0, b = 0, c = 0;
  for (int dy = -3; dy <= 3; ++dy) {
    for (int dx = -3; dx <= 3; ++dx) {
      int px = x + dx, py = y + dy;
      double gx = (img.at(px + 1, py - 1) + 2.0 * img.at(px + 1, py) + img.at(px + 1, py + 1)) -
                  (img.at(px - 1, py - 1) + 2.0 * img.at(px - 1, py) + img.at(px - 1, py + 1));
      double gy = (img.at(px - 1, py + 1) + 2.0 * img.at(px, py + 1) + img.at(px + 1, py + 1)) -
                  (img.at(px - 1, py - 1) + 2.0 * img.at(px, py - 1) + img.at(px + 1, py - 1));
      a += gx * gx;
      b += gy * gy;
      c += gx * gy;
    }
  }
  return a * b - c * c - 0.04 * (a + b) * (a + b);
}

std::vector<Keypoint> detect_fast(const GrayImage& img, int threshold, int arc) {
  std::vector<Keypoint> out;
  if (img.width < 2 * kFastBorder + 1 || img.height < 2 * kFastBorder + 1)
    return out;

  struct Candidate {
    int x, y;
    double score;
  };
  std::vector<Candidate> cands;
  std::vector<double> score_map(static_cast<std::size_t>(img.width) * img.height, 0.0);
  std::vector<std::uint8_t> is_cand(score_map.size(), 0);

  for (int y = kFastBorder; y <= img.height - 1 - kFastBorder; ++y) {
    for (int x = kFastBorder; x <= img.width - 1 - kFastBorder; ++x) {
      if (!fast_segment_test(img, x, y, threshold, arc)) continue;
      double s = harris_score(img, x, y);
      std::size_t idx = static_cast<std::size_t>(y) * img.width + x;
      score_map[idx] = s;
      is_cand[idx] = 1;
      cands.push_back({x, y, s});
    }
  }

  // 3x3 non-maximum suppression; raster order breaks exact-score ties.
  for (const Candidate& c : cands) {
    bool suppressed = false;
    for (int dy = -1; dy <= 1 && !suppressed; ++dy) {
      for (int dx = -1; dx <= 1; ++dx) {
        if (dx == 0 && dy == 0) continue;
        std::size_t nidx = static_cast<std::size_t>(c.y + dy) * img.width + (c.x + dx);
        if (!is_cand[nidx]) continue;
        double ns = score_map[nidx];
        if (ns > c.score || (ns == c.score && (dy < 0 || (dy == 0 && dx < 0)))) {
          suppressed = true;
          break;
        }
      }
    }
    if (!suppressed) {
      Keypoint kp;
      kp.u = c.x;
      kp.v = c.y;
      kp.score = c.score;
      out.push_back(kp);
    }
  }
  return out;
}

double orientation_ic(const GrayImage& img, const Keypoint& kp, int radius) {
  int cx = static_cast<int>(std::lround(kp.u));
  int cy = static_cast<int>(std::lround(kp.v));
  if (cx - radius < 0 || cx + radius >= img.width || cy - radius < 0 ||
      cy + radius >= img.height)
    fail(ErrorCode::NearBorder, "orientation patch exits the image");

  double m10 = 0, m01 = 0;
  for (int dy = -radius; dy <= radius; ++dy) {
    int span = static_cast<int>(std::floor(std::sqrt(
        static_cast<double>(radius) * radius - static_cast<double>(dy) * dy)));
    for (int dx = -span; dx <= span; ++dx) {
      double v = img.at(cx + dx, cy + dy);
      m10 += dx * v;
      m01 += dy * v;
    }
  }
  if (std::abs(m10) < 1e-9 && std::abs(m01) < 1e-9)
    fail(ErrorCode::Undefined, "intensity centroid coincides with the corner");
  double theta = std::atan2(m01, m10);
  if (theta < 0) theta += kTwoPi;
  return theta;
}

std::vector<GrayImage> synthetic_patch_corpus(std::uint64_t seed, int count, int size) {
  std::vector<GrayImage> corpus;
  corpus.reserve(count);
  for (int n = 0; n < count; ++n) {
    SplitMix64 rng(hash_mix(seed, static_cast<std::uint64_t>(n)));
    std::vector<double> buf(static_cast<std::size_t>(size) * size);
    for (auto& v : buf) v = rng.next_double() * 255.0;
    // Two box-smoothing passes give spatial correlation; a min-max stretch
    // restores the contrast the smoothing removed.
    for (int pass = 0; pass < 2; ++pass) {
      std::vector<double> tmp(buf.size());
      for (int y = 0; y < size; ++y) {
        for (int x = 0; x < size; ++x) {
          double sum = 0;
          int cnt = 0;
          for (int dy = -2; dy <= 2; ++dy) {
            int yy = std::clamp(y + dy, 0, size - 1);
            for (int dx = -2; dx <= 2; ++dx) {
              int xx = std::clamp(x + dx, 0, size - 1);
              sum += buf[static_cast<std::size_t>(yy) * size + xx];
              ++cnt;
            }
          }
          tmp[static_cast<std::size_t>(y) * size + x] = sum / cnt;
        }
      }
      buf.swap(tmp);
    }
    auto [mn, mx] = std::minmax_element(buf.begin(), buf.end());
    double lo = *mn, span = std::max(*mx - lo, 1e-9);
    GrayImage patch(size, size);
    for (std::size_t i = 0; i < buf.size(); ++i)
      patch.data[i] = static_cast<std::uint8_t>(std::lround((buf[i] - lo) / span * 255.0));
    corpus.push_back(std::move(patch));
  }
  return corpus;
}

namespace {

// 5x5 box sum (unnormalized) used by the binary descriptor's comparisons.
inline int box_sum5(const GrayImage& img, int x, int y) {
  int s = 0;
  for (int dy = -2; dy <= 2; ++dy)
    for (int dx = -2; dx <= 2; ++dx) s += img.at(x + dx, y + dy);
  return s;
}

}  // namespace

BriefPattern generate_pattern(std::uint64_t seed) {
  constexpr int kCorpusSize = 1000;
  constexpr int kPatch = 37;  // radius-15 offsets + 2 px smoothing margin
  constexpr int kCenter = kPatch / 2;
  constexpr int kCandidates = 3000;
  constexpr double kSigma = 31.0 / 5.0;

  std::vector<GrayImage> corpus = synthetic_patch_corpus(hash_mix(seed, 1), kCorpusSize, kPatch);

  // Smoothed lookups are reused across every candidate evaluation.
  std::vector<std::vector<int>> smoothed(corpus.size());
  for (std::size_t n = 0; n < corpus.size(); ++n) {
    smoothed[n].assign(static_cast<std::size_t>(kPatch) * kPatch, 0);
    for (int y = 2; y < kPatch - 2; ++y)
      for (int x = 2; x < kPatch - 2; ++x)
        smoothed[n][static_cast<std::size_t>(y) * kPatch + x] = box_sum5(corpus[n], x, y);
  }

  SplitMix64 rng(hash_mix(seed, 2));
  auto draw_offset = [&](int& ox, int& oy) {
    for (;;) {
      int x = static_cast<int>(std::lround(rng.next_gaussian() * kSigma));
      int y = static_cast<int>(std::lround(rng.next_gaussian() * kSigma));
      if (x * x + y * y <= 15 * 15) {
        ox = x;
        oy = y;
        return;
      }
    }
  };

  struct Cand {
    std::array<std::int8_t, 4> pair;
    std::array<std::uint64_t, 16> bits;  // one bit per corpus patch
    double mean = 0;
  };
  std::vector<Cand> cands;
  std::set<std::array<std::int8_t, 4>> seen;
  while (static_cast<int>(cands.size()) < kCandidates) {
    int x1, y1, x2, y2;
    draw_offset(x1, y1);
    draw_offset(x2, y2);
    if (x1 == x2 && y1 == y2) continue;
    std::array<std::int8_t, 4> pair = {static_cast<std::int8_t>(x1), static_cast<std::int8_t>(y1),
                                       static_cast<std::int8_t>(x2), static_cast<std::int8_t>(y2)};
    if (!seen.insert(pair).second) continue;
    Cand c;
    c.pair = pair;
    c.bits = {};
    int ones = 0;
    for (int n = 0; n < kCorpusSize; ++n) {
      int a = smoothed[n][static_cast<std::size_t>(kCenter + y1) * kPatch + (kCenter + x1)];
      int b = smoothed[n][static_cast<std::size_t>(kCenter + y2) * kPatch + (kCenter + x2)];
      if (a < b) {
        c.bits[n >> 6] |= std::uint64_t{1} << (n & 63);
        ++ones;
      }
    }
    c.mean = static_cast<double>(ones) / kCorpusSize;
    cands.push_back(c);
  }

  // Highest-variance candidates first; index breaks ties deterministically.
  std::vector<int> order(cands.size());
  std::iota(order.begin(), order.end(), 0);
  std::stable_sort(order.begin(), order.end(), [&](int a, int b) {
    double va = cands[a].mean * (1 - cands[a].mean);
    double vb = cands[b].mean * (1 - cands[b].mean);
    return va > vb;
  });

  auto correlation = [&](const Cand& a, const Cand& b) {
    double va = a.mean * (1 - a.mean), vb = b.mean * (1 - b.mean);
    if (va < 1e-12 || vb < 1e-12) return 1.0;  // flat bits carry no signal
    int both = 0;
    for (int w = 0; w < 16; ++w) both += std::popcount(a.bits[w] & b.bits[w]);
    double eab = static_cast<double>(both) / kCorpusSize;
    return (eab - a.mean * b.mean) / std::sqrt(va * vb);
  };

  std::vector<int> kept;
  std::vector<char> used(cands.size(), 0);
  double bound = 0.2;
  while (static_cast<int>(kept.size()) < 256 && bound < 2.0) {
    for (int idx : order) {
      if (used[idx]) continue;
      bool ok = true;
      for (int k : kept) {
        if (std::abs(correlation(cands[idx], cands[k])) >= bound) {
          ok = false;
          break;
        }
      }
      if (ok) {
        kept.push_back(idx);
        used[idx] = 1;
        if (kept.size() == 256) break;
      }
    }
    bound += 0.1;
  }

  BriefPattern pattern;
  for (std::size_t i = 0; i < kept.size() && i < 256; ++i) pattern.pairs[i] = cands[kept[i]].pair;
  return pattern;
}

const BriefPattern& default_pattern() {
  static const BriefPattern pattern = generate_pattern(kPatternSeed);
  return pattern;
}

BinaryDescriptor describe_orb(const GrayImage& img, const Keypoint& kp,
                              const BriefPattern& pattern) {
  int cx = static_cast<int>(std::lround(kp.u));
  int cy = static_cast<int>(std::lround(kp.v));
  if (cx - kOrbMargin < 0 || cx + kOrbMargin >= img.width || cy - kOrbMargin < 0 ||
      cy + kOrbMargin >= img.height)
    fail(ErrorCode::NearBorder, "rotated descriptor patch exits the image");

  // 12-degree steering bins, 30 in the full circle.
  double norm = std::fmod(kp.orientation, kTwoPi);
  if (norm < 0) norm += kTwoPi;
  int bin = static_cast<int>(std::lround(norm / (kTwoPi / 30.0))) % 30;
  double theta = bin * (kTwoPi / 30.0);
  double c = std::cos(theta), s = std::sin(theta);

  BinaryDescriptor d;
  for (int i = 0; i < 256; ++i) {
    const auto& p = pattern.pairs[i];
    int x1 = static_cast<int>(std::lround(c * p[0] - s * p[1]));
    int y1 = static_cast<int>(std::lround(s * p[0] + c * p[1]));
    int x2 = static_cast<int>(std::lround(c * p[2] - s * p[3]));
    int y2 = static_cast<int>(std::lround(s * p[2] + c * p[3]));
    if (box_sum5(img, cx + x1, cy + y1) < box_sum5(img, cx + x2, cy + y2)) d.set_bit(i);
  }
  return d;
}

FloatDescriptor describe_gradhist(const GrayImage& img, const Keypoint& kp) {
  int cxi = static_cast<int>(std::lround(kp.u));
  int cyi = static_cast<int>(std::lround(kp.v));
  if (cxi - kGradMargin < 0 || cxi + kGradMargin >= img.width ||
      cyi - kGradMargin < 0 || cyi + kGradMargin >= img.height)
    fail(ErrorCode::NearBorder, "gradient descriptor grid exits the image");

  double theta = kp.orientation;
  double ct = std::cos(theta), st = std::sin(theta);
  double hist[4][4][8] = {};
  double energy = 0.0;

  for (int i = 0; i < 16; ++i) {
    for (int j = 0; j < 16; ++j) {
      double lx = j - 7.5, ly = i - 7.5;
      double ox = ct * lx - st * ly;
      double oy = st * lx + ct * ly;
      double px = kp.u + ox, py = kp.v + oy;
      double gx = img.sample(px + 1, py) - img.sample(px - 1, py);
      double gy = img.sample(px, py + 1) - img.sample(px, py - 1);
      double mag = std::sqrt(gx * gx + gy * gy);
      if (mag <= 0) continue;
      double phi = std::atan2(gy, gx) - theta;
      phi = std::fmod(phi, kTwoPi);
      if (phi < 0) phi += kTwoPi;
      double w = std::exp(-(lx * lx + ly * ly) / (2.0 * 64.0)) * mag;
      energy += w;

      double rbin = (i + 0.5) / 4.0 - 0.5;
      double cbin = (j + 0.5) / 4.0 - 0.5;
      double obin = phi / (kTwoPi / 8.0);
      int r0 = static_cast<int>(std::floor(rbin));
      int c0 = static_cast<int>(std::floor(cbin));
      int o0 = static_cast<int>(std::floor(obin)) % 8;
      double dr = rbin - std::floor(rbin);
      double dc = cbin - std::floor(cbin);
      double dob = obin - std::floor(obin);
      for (int ri = 0; ri < 2; ++ri) {
        int r = r0 + ri;
        if (r < 0 || r > 3) continue;
        double wr = ri == 0 ? 1 - dr : dr;
        for (int ci = 0; ci < 2; ++ci) {
          int cc = c0 + ci;
          if (cc < 0 || cc > 3) continue;
          double wc = ci == 0 ? 1 - dc : dc;
          for (int oi = 0; oi < 2; ++oi) {
            int o = (o0 + oi) & 7;
            double wo = oi == 0 ? 1 - dob : dob;
            hist[r][cc][o] += w * wr * wc * wo;
          }
        }
      }
    }
  }

  FloatDescriptor d{};
  if (energy < 1e-9) return d;  // textureless: all-zero by contract

  double norm2 = 0;
  for (int r = 0; r < 4; ++r)
    for (int cc = 0; cc < 4; ++cc)
      for (int o = 0; o < 8; ++o) norm2 += hist[r][cc][o] * hist[r][cc][o];
  double inv = 1.0 / std::sqrt(norm2);
  double clamped2 = 0;
  for (int r = 0; r < 4; ++r)
    for (int cc = 0; cc < 4; ++cc)
      for (int o = 0; o < 8; ++o) {
        double v = std::min(hist[r][cc][o] * inv, 0.2);
        hist[r][cc][o] = v;
        clamped2 += v * v;
      }
  double inv2 = 1.0 / std::sqrt(clamped2);
  for (int r = 0; r < 4; ++r)
    for (int cc = 0; cc < 4; ++cc)
      for (int o = 0; o < 8; ++o)
        d[static_cast<std::size_t>(r * 4 + cc) * 8 + o] =
            static_cast<float>(hist[r][cc][o] * inv2);
  return d;
}

ExtractResult extract(const GrayImage& img, int budget, DescriptorKind kind) {
  if (img.width < 64 || img.height < 64)
    fail(ErrorCode::TooSmall, "extraction needs at least a 64x64 image");

  int levels = 1;
  while (levels < 8) {
    double s = std::pow(1.2, levels);
    if (std::floor(std::min(img.width, img.height) / s) < 32) break;
    ++levels;
  }
  ImagePyramid pyr = build_pyramid(img, levels, 1.2);

  // Area-proportional budgets, largest remainder rounding.
  std::vector<double> area(levels);
  double total = 0;
  for (int i = 0; i < levels; ++i) {
    area[i] = static_cast<double>(pyr.levels[i].width) * pyr.levels[i].height;
    total += area[i];
  }
  std::vector<int> quota(levels);
  std::vector<std::pair<double, int>> frac;
  int assigned = 0;
  for (int i = 0; i < levels; ++i) {
    double exact = budget * area[i] / total;
    quota[i] = static_cast<int>(std::floor(exact));
    assigned += quota[i];
    frac.push_back({exact - quota[i], i});
  }
  std::stable_sort(frac.begin(), frac.end(),
                   [](const auto& a, const auto& b) { return a.first > b.first; });
  for (int r = 0; r < budget - assigned && r < levels; ++r) ++quota[frac[r].second];

  int margin = kind == DescriptorKind::kBinary ? kOrbMargin : kGradMargin;
  ExtractResult out;
  out.kind = kind;

  for (int lvl = 0; lvl < levels; ++lvl) {
    const GrayImage& im = pyr.levels[lvl];
    std::vector<Keypoint> kps = detect_fast(im, 20, 9);
    std::erase_if(kps, [&](const Keypoint& k) {
      return k.u < margin || k.u >= im.width - margin || k.v < margin ||
             k.v >= im.height - margin;
    });
    std::stable_sort(kps.begin(), kps.end(),
                     [](const Keypoint& a, const Keypoint& b) { return a.score > b.score; });
    if (static_cast<int>(kps.size()) > quota[lvl]) kps.resize(quota[lvl]);

    double scale = pyr.level_scale(lvl);
    for (Keypoint kp : kps) {
      try {
        kp.orientation = orientation_ic(im, kp);
      } catch (const Error& e) {
        if (e.code() != ErrorCode::Undefined) throw;
        kp.orientation = 0.0;
      }
      try {
        if (kind == DescriptorKind::kBinary)
          out.binary.push_back(describe_orb(im, kp, default_pattern()));
        else
          out.floats.push_back(describe_gradhist(im, kp));
      } catch (const Error& e) {
        if (e.code() != ErrorCode::NearBorder) throw;
        continue;
      }
      kp.u *= scale;
      kp.v *= scale;
      kp.level = lvl;
      out.keypoints.push_back(kp);
    }
  }
  return out;
}

}  // namespace objslam
