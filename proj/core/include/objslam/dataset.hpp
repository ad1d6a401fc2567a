#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "objslam/geometry.hpp"
#include "objslam/image.hpp"
#include "objslam/sim.hpp"

namespace objslam {

/// One trajectory sample: `timestamp tx ty tz r11 r12 r13 ... r33` on disk.
struct TrajectoryEntry {
  double timestamp = 0.0;
  Pose pose;
};

/// Frame directories hold NNNNNN.pgm (8-bit gray), NNNNNN.depth.pgm (16-bit
/// big-endian, meters = value * depth_scale) and timestamps.txt with one
/// float seconds per line.
std::string frame_basename(int index);

void write_frame(const std::string& dir, int index, const GrayImage& gray,
                 const DepthImage& depth, double depth_scale);
GrayImage read_frame_gray(const std::string& dir, int index);
DepthImage read_frame_depth(const std::string& dir, int index,
                            double depth_scale);

void write_timestamps(const std::string& dir,
                      const std::vector<double>& seconds);
std::vector<double> read_timestamps(const std::string& dir);

void write_trajectory(const std::string& path,
                      const std::vector<TrajectoryEntry>& entries);
std::vector<TrajectoryEntry> read_trajectory(const std::string& path);

/// Renders every trajectory pose into `dir` (frames + timestamps.txt at
/// cfg.fps) and writes the exact poses to `dir`/groundtruth.txt. Noise salt
/// is the frame index. Returns the number of frames written.
int record_sequence(const std::string& dir, const SimScene& scene,
                    const std::vector<Pose>& trajectory, const SimConfig& cfg);

}  // namespace objslam
