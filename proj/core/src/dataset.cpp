#include "objslam/dataset.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "objslam/errors.hpp"

namespace objslam {

std::string frame_basename(int index) {
  char buf[16];
  std::snprintf(buf, sizeof buf, "%06d", index);
  return buf;
}

namespace {

std::string gray_path(const std::string& dir, int index) {
  return dir + "/" + frame_basename(index) + ".pgm";
}

std::string depth_path(const std::string& dir, int index) {
  return dir + "/" + frame_basename(index) + ".depth.pgm";
}

// Full round-trippable precision and locale-independent formatting.
void print_double(std::ostream& out, double v) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  out << buf;
}

}  // namespace

void write_frame(const std::string& dir, int index, const GrayImage& gray,
                 const DepthImage& depth, double depth_scale) {
  write_pgm8(gray, gray_path(dir, index));
  write_depth_pgm16(depth, depth_path(dir, index), depth_scale);
}

GrayImage read_frame_gray(const std::string& dir, int index) {
  return read_pgm8(gray_path(dir, index));
}

DepthImage read_frame_depth(const std::string& dir, int index,
                            double depth_scale) {
  return read_depth_pgm16(depth_path(dir, index), depth_scale);
}

void write_timestamps(const std::string& dir,
                      const std::vector<double>& seconds) {
  std::string path = dir + "/timestamps.txt";
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path);
  for (double s : seconds) {
    print_double(out, s);
    out << "\n";
  }
  if (!out) fail(ErrorCode::IoError, "write failed for " + path);
}

std::vector<double> read_timestamps(const std::string& dir) {
  std::string path = dir + "/timestamps.txt";
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  std::vector<double> out;
  double s;
  while (in >> s) out.push_back(s);
  return out;
}

void write_trajectory(const std::string& path,
                      const std::vector<TrajectoryEntry>& entries) {
  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path);
  for (const TrajectoryEntry& e : entries) {
    print_double(out, e.timestamp);
    for (int i = 0; i < 3; ++i) {
      out << " ";
      print_double(out, e.pose.translation[i]);
    }
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) {
        out << " ";
        print_double(out, e.pose.rotation(r, c));
      }
    out << "\n";
  }
  if (!out) fail(ErrorCode::IoError, "write failed for " + path);
}

std::vector<TrajectoryEntry> read_trajectory(const std::string& path) {
  std::ifstream in(path);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  std::vector<TrajectoryEntry> out;
  std::string line;
  int lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty()) continue;
    std::istringstream ls(line);
    TrajectoryEntry e;
    ls >> e.timestamp;
    for (int i = 0; i < 3; ++i) ls >> e.pose.translation[i];
    for (int r = 0; r < 3; ++r)
      for (int c = 0; c < 3; ++c) ls >> e.pose.rotation(r, c);
    if (!ls)
      fail(ErrorCode::ParseError,
           path + ":" + std::to_string(lineno) + ": bad trajectory line");
    out.push_back(e);
  }
  return out;
}

int record_sequence(const std::string& dir, const SimScene& scene,
                    const std::vector<Pose>& trajectory,
                    const SimConfig& cfg) {
  std::filesystem::create_directories(dir);
  std::vector<double> times;
  std::vector<TrajectoryEntry> truth;
  times.reserve(trajectory.size());
  truth.reserve(trajectory.size());
  for (std::size_t i = 0; i < trajectory.size(); ++i) {
    auto [gray, depth] =
        render_rgbd(scene, trajectory[i], cfg, static_cast<std::uint64_t>(i));
    write_frame(dir, static_cast<int>(i), gray, depth,
                cfg.intrinsics.depth_scale);
    double t = static_cast<double>(i) / cfg.fps;
    times.push_back(t);
    truth.push_back({t, trajectory[i]});
  }
  write_timestamps(dir, times);
  write_trajectory(dir + "/groundtruth.txt", truth);
  return static_cast<int>(trajectory.size());
}

}  // namespace objslam
