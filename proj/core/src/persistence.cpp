#include "objslam/persistence.hpp"

#include <zlib.h>

#include <algorithm>
#include <fstream>
#include <iterator>

#include "objslam/errors.hpp"
#include "wire.hpp"

namespace objslam {

namespace {

constexpr char kMapMagic[6] = {'S', 'P', 'M', 'A', 'P', '1'};
constexpr std::uint32_t kMapVersion = 1;

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

// Rotation is written row-major, then the translation: 12 doubles per pose.
void put_pose(wire::Writer& w, const Pose& p) {
  for (int r = 0; r < 3; ++r)
    for (int c = 0; c < 3; ++c) w.f64(p.rotation(r, c));
  for (int i = 0; i < 3; ++i) w.f64(p.translation(i));
}

Pose get_pose(wire::Reader& r) {
  Pose p;
  for (int row = 0; row < 3; ++row)
    for (int col = 0; col < 3; ++col) p.rotation(row, col) = r.f64();
  for (int i = 0; i < 3; ++i) p.translation(i) = r.f64();
  return p;
}

void put_descriptor(wire::Writer& w, const BinaryDescriptor& d) {
  auto bytes = d.bytes();
  w.raw(bytes.data(), bytes.size());
}

BinaryDescriptor get_descriptor(wire::Reader& r) {
  std::array<std::uint8_t, 32> bytes;
  const std::uint8_t* p = r.raw(bytes.size());
  std::copy(p, p + bytes.size(), bytes.begin());
  return BinaryDescriptor::from_bytes(bytes);
}

void put_observations(wire::Writer& w,
                      const std::map<std::uint64_t, int>& obs) {
  w.u32(static_cast<std::uint32_t>(obs.size()));
  for (const auto& [id, idx] : obs) {
    w.u64(id);
    w.u32(static_cast<std::uint32_t>(idx));
  }
}

std::map<std::uint64_t, int> get_observations(wire::Reader& r) {
  std::map<std::uint64_t, int> obs;
  std::uint32_t n = r.u32();
  for (std::uint32_t i = 0; i < n; ++i) {
    std::uint64_t id = r.u64();
    obs[id] = static_cast<int>(r.u32());
  }
  return obs;
}

wire::Writer map_payload(const SlamMap& map) {
  wire::Writer w;
  w.raw(kMapMagic, sizeof kMapMagic);
  w.u32(kMapVersion);
  w.u64(map.keyframes.size());
  w.u64(map.points.size());
  w.u64(map.markers.size());
  w.u32(vocab_checksum(*map.vocabulary));

  for (const auto& [kf_id, kf] : map.keyframes) {
    w.u64(kf_id);
    put_pose(w, kf.pose);
    w.u32(static_cast<std::uint32_t>(kf.keypoints.size()));
    for (const Keypoint& kp : kf.keypoints) {
      w.f64(kp.u);
      w.f64(kp.v);
      w.u32(static_cast<std::uint32_t>(kp.level));
      w.f64(kp.orientation);
      w.f64(kp.score);
    }
    w.u32(static_cast<std::uint32_t>(kf.descriptors.size()));
    for (const BinaryDescriptor& d : kf.descriptors) put_descriptor(w, d);
    w.u32(static_cast<std::uint32_t>(kf.bow.size()));
    for (const auto& [word, weight] : kf.bow) {
      w.u32(word);
      w.f64(weight);
    }
    put_observations(w, kf.observations);
  }

  for (const auto& [pid, pt] : map.points) {
    w.u64(pid);
    for (int i = 0; i < 3; ++i) w.f64(pt.position(i));
    put_descriptor(w, pt.descriptor);
    w.u32(static_cast<std::uint32_t>(pt.visible_count));
    w.u32(static_cast<std::uint32_t>(pt.found_count));
    w.u64(pt.first_kf);
    put_observations(w, pt.observations);
  }

  // Undirected edges once each, ascending (a, b) with a < b.
  std::uint64_t edges = 0;
  for (const auto& [a, row] : map.covisibility.adjacency)
    for (const auto& [b, weight] : row)
      if (a < b) ++edges;
  w.u64(edges);
  for (const auto& [a, row] : map.covisibility.adjacency)
    for (const auto& [b, weight] : row)
      if (a < b) {
        w.u64(a);
        w.u64(b);
        w.u32(static_cast<std::uint32_t>(weight));
      }

  for (const ObjectMarker& m : map.markers) {
    w.str(m.name);
    for (int i = 0; i < 3; ++i) w.f64(m.position(i));
  }
  return w;
}

std::vector<std::uint8_t> read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  return std::vector<std::uint8_t>((std::istreambuf_iterator<char>(in)),
                                   std::istreambuf_iterator<char>());
}

}  // namespace

std::size_t save_map(const SlamMap& map, const std::string& path) {
  std::vector<std::string> issues = audit_map(map);
  if (!issues.empty())
    fail(ErrorCode::IntegrityError, "map fails audit: " + issues.front());
  if (map.vocabulary == nullptr)
    fail(ErrorCode::IntegrityError, "map has no vocabulary to checksum");

  wire::Writer w = map_payload(map);
  w.u32(crc_of(w.bytes.data(), w.bytes.size()));

  std::ofstream out(path, std::ios::binary);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path);
  out.write(reinterpret_cast<const char*>(w.bytes.data()),
            static_cast<std::streamsize>(w.bytes.size()));
  if (!out) fail(ErrorCode::IoError, "write failed for " + path);
  return w.bytes.size();
}

SlamMap load_map(const std::string& path, const Vocabulary& vocab,
                 const Intrinsics& intrinsics) {
  std::vector<std::uint8_t> buf = read_file(path);
  wire::Reader r(buf, ErrorCode::Truncated);

  const std::uint8_t* magic = r.raw(sizeof kMapMagic);
  if (std::memcmp(magic, kMapMagic, sizeof kMapMagic) != 0)
    fail(ErrorCode::BadMagic, path);
  std::uint32_t version = r.u32();
  if (version != kMapVersion)
    fail(ErrorCode::VersionMismatch,
         path + ": version " + std::to_string(version));

  SlamMap map;
  map.intrinsics = intrinsics;
  map.vocabulary = &vocab;

  std::uint64_t n_keyframes = r.u64();
  std::uint64_t n_points = r.u64();
  std::uint64_t n_markers = r.u64();
  std::uint32_t vocab_crc = r.u32();

  for (std::uint64_t i = 0; i < n_keyframes; ++i) {
    Keyframe kf;
    kf.id = r.u64();
    kf.pose = get_pose(r);
    std::uint32_t n_kp = r.u32();
    kf.keypoints.reserve(n_kp);
    for (std::uint32_t k = 0; k < n_kp; ++k) {
      Keypoint kp;
      kp.u = r.f64();
      kp.v = r.f64();
      kp.level = static_cast<int>(r.u32());
      kp.orientation = r.f64();
      kp.score = r.f64();
      kf.keypoints.push_back(kp);
    }
    std::uint32_t n_desc = r.u32();
    kf.descriptors.reserve(n_desc);
    for (std::uint32_t k = 0; k < n_desc; ++k)
      kf.descriptors.push_back(get_descriptor(r));
    std::uint32_t n_bow = r.u32();
    for (std::uint32_t k = 0; k < n_bow; ++k) {
      std::uint32_t word = r.u32();
      kf.bow[word] = r.f64();
    }
    kf.observations = get_observations(r);
    std::uint64_t id = kf.id;
    map.keyframes.emplace(id, std::move(kf));
  }

  for (std::uint64_t i = 0; i < n_points; ++i) {
    MapPoint pt;
    pt.id = r.u64();
    for (int k = 0; k < 3; ++k) pt.position(k) = r.f64();
    pt.descriptor = get_descriptor(r);
    pt.visible_count = static_cast<int>(r.u32());
    pt.found_count = static_cast<int>(r.u32());
    pt.first_kf = r.u64();
    pt.observations = get_observations(r);
    std::uint64_t id = pt.id;
    map.points.emplace(id, std::move(pt));
  }

  std::uint64_t n_edges = r.u64();
  for (std::uint64_t i = 0; i < n_edges; ++i) {
    std::uint64_t a = r.u64();
    std::uint64_t b = r.u64();
    int weight = static_cast<int>(r.u32());
    map.covisibility.set_weight(a, b, weight);
  }

  for (std::uint64_t i = 0; i < n_markers; ++i) {
    ObjectMarker m;
    m.name = r.str();
    for (int k = 0; k < 3; ++k) m.position(k) = r.f64();
    map.markers.push_back(std::move(m));
  }

  std::size_t payload_end = r.offset;
  std::uint32_t stored_crc = r.u32();
  if (crc_of(buf.data(), payload_end) != stored_crc)
    fail(ErrorCode::ChecksumMismatch, path);
  if (vocab_crc != vocab_checksum(vocab))
    fail(ErrorCode::VocabularyMismatch,
         path + ": map was built with a different vocabulary");

  for (const auto& [kf_id, kf] : map.keyframes)
    index_add(map.index, kf_id, kf.bow);
  if (!map.keyframes.empty())
    map.next_keyframe_id = map.keyframes.rbegin()->first + 1;
  if (!map.points.empty()) map.next_point_id = map.points.rbegin()->first + 1;
  return map;
}

MapFileInfo map_file_info(const std::string& path) {
  std::vector<std::uint8_t> buf = read_file(path);
  wire::Reader r(buf, ErrorCode::Truncated);
  const std::uint8_t* magic = r.raw(sizeof kMapMagic);
  if (std::memcmp(magic, kMapMagic, sizeof kMapMagic) != 0)
    fail(ErrorCode::BadMagic, path);
  MapFileInfo info;
  info.version = r.u32();
  info.keyframe_count = r.u64();
  info.point_count = r.u64();
  info.marker_count = r.u64();
  info.vocabulary_checksum = r.u32();
  return info;
}

}  // namespace objslam
