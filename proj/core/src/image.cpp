#include "objslam/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "objslam/errors.hpp"

namespace objslam {

double GrayImage::sample(double x, double y) const {
  x = std::clamp(x, 0.0, static_cast<double>(width - 1));
  y = std::clamp(y, 0.0, static_cast<double>(height - 1));
  int x0 = static_cast<int>(x);
  int y0 = static_cast<int>(y);
  int x1 = std::min(x0 + 1, width - 1);
  int y1 = std::min(y0 + 1, height - 1);
  double fx = x - x0;
  double fy = y - y0;
  double top = at(x0, y0) * (1.0 - fx) + at(x1, y0) * fx;
  double bot = at(x0, y1) * (1.0 - fx) + at(x1, y1) * fx;
  return top * (1.0 - fy) + bot * fy;
}

namespace {

// Reads one whitespace-delimited PGM header token, skipping '#' comments.
std::string next_token(std::istream& in) {
  std::string tok;
  for (;;) {
    int c = in.get();
    if (c == EOF) fail(ErrorCode::Truncated, "unexpected end of PGM header");
    if (std::isspace(c)) {
      if (!tok.empty()) return tok;
      continue;
    }
    if (c == '#') {
      while (c != EOF && c != '\n') c = in.get();
      continue;
    }
    tok.push_back(static_cast<char>(c));
  }
}

struct PgmHeader {
  int width, height, maxval;
};

PgmHeader read_header(std::istream& in, const std::string& path) {
  std::string magic = next_token(in);
  if (magic != "P5") fail(ErrorCode::BadMagic, path + ": not a binary PGM");
  PgmHeader h{};
  h.width = std::stoi(next_token(in));
  h.height = std::stoi(next_token(in));
  h.maxval = std::stoi(next_token(in));
  if (h.width <= 0 || h.height <= 0)
    fail(ErrorCode::ParseError, path + ": bad PGM dimensions");
  return h;
}

}  // namespace

GrayImage read_pgm8(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  PgmHeader h = read_header(in, path);
  if (h.maxval != 255)
    fail(ErrorCode::ParseError, path + ": expected 8-bit PGM");
  GrayImage img(h.width, h.height);
  in.read(reinterpret_cast<char*>(img.data.data()),
          static_cast<std::streamsize>(img.data.size()));
  if (in.gcount() != static_cast<std::streamsize>(img.data.size()))
    fail(ErrorCode::Truncated, path + ": short PGM payload");
  return img;
}

void write_pgm8(const GrayImage& img, const std::string& path) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path);
  out << "P5\n" << img.width << " " << img.height << "\n255\n";
  out.write(reinterpret_cast<const char*>(img.data.data()),
            static_cast<std::streamsize>(img.data.size()));
  if (!out) fail(ErrorCode::IoError, "write failed for " + path);
}

DepthImage read_depth_pgm16(const std::string& path, double depth_scale) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  PgmHeader h = read_header(in, path);
  if (h.maxval != 65535)
    fail(ErrorCode::ParseError, path + ": expected 16-bit PGM");
  std::vector<std::uint8_t> raw(static_cast<std::size_t>(h.width) * h.height * 2);
  in.read(reinterpret_cast<char*>(raw.data()),
          static_cast<std::streamsize>(raw.size()));
  if (in.gcount() != static_cast<std::streamsize>(raw.size()))
    fail(ErrorCode::Truncated, path + ": short PGM payload");
  DepthImage img(h.width, h.height);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    // big-endian per the Netpbm spec
    std::uint16_t v = static_cast<std::uint16_t>((raw[2 * i] << 8) | raw[2 * i + 1]);
    img.data[i] = static_cast<float>(v * depth_scale);
  }
  return img;
}

void write_depth_pgm16(const DepthImage& img, const std::string& path,
                       double depth_scale) {
  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path);
  out << "P5\n" << img.width << " " << img.height << "\n65535\n";
  std::vector<std::uint8_t> raw(img.data.size() * 2);
  for (std::size_t i = 0; i < img.data.size(); ++i) {
    float d = img.data[i];
    std::uint16_t v = 0;
    if (std::isfinite(d) && d > 0.f) {
      double units = std::round(d / depth_scale);
      v = static_cast<std::uint16_t>(std::clamp(units, 0.0, 65535.0));
    }
    raw[2 * i] = static_cast<std::uint8_t>(v >> 8);
    raw[2 * i + 1] = static_cast<std::uint8_t>(v & 0xff);
  }
  out.write(reinterpret_cast<const char*>(raw.data()),
            static_cast<std::streamsize>(raw.size()));
  if (!out) fail(ErrorCode::IoError, "write failed for " + path);
}

}  // namespace objslam
