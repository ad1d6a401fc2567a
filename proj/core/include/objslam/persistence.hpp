#pragma once

#include <cstddef>
#include <cstdint>
#include <string>

#include "objslam/slam.hpp"

namespace objslam {

/// Header fields of a map file, as `map-info` prints them.
struct MapFileInfo {
  std::uint32_t version = 0;
  std::uint64_t keyframe_count = 0;
  std::uint64_t point_count = 0;
  std::uint64_t marker_count = 0;
  std::uint32_t vocabulary_checksum = 0;
};

/// Writes the map as one self-contained binary file: "SPMAP1", version,
/// counts, vocabulary checksum, then keyframes, map points, covisibility
/// edges and markers in ascending id order, closed by a CRC32 trailer.
/// Byte-deterministic for a given map. The map must pass the referential
/// integrity audit and carry a vocabulary (IntegrityError otherwise).
/// Returns the number of bytes written.
std::size_t save_map(const SlamMap& map, const std::string& path);

/// Parses the file back into a map, rebuilding the inverted index from the
/// stored BoW vectors and restoring the id counters, so the result
/// relocalizes immediately. `vocab` must be the vocabulary the map was built
/// with (checksum match); intrinsics are runtime configuration and are
/// supplied by the caller, not the file.
/// Errors: BadMagic, VersionMismatch, Truncated, ChecksumMismatch,
/// VocabularyMismatch, IoError.
SlamMap load_map(const std::string& path, const Vocabulary& vocab,
                 const Intrinsics& intrinsics);

/// Reads just the header (magic and length validated, nothing else).
MapFileInfo map_file_info(const std::string& path);

}  // namespace objslam
