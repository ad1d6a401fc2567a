#pragma once

#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "objslam/features.hpp"

namespace objslam {

inline constexpr std::uint64_t kNoParent = ~std::uint64_t{0};

/// Vocabulary tree node. Ids equal creation (breadth-first) order and the
/// index in Vocabulary::nodes; children hold node ids in ascending order.
/// Leaves are the visual words.
struct VocabNode {
  std::uint64_t id = 0;
  std::uint64_t parent = kNoParent;
  BinaryDescriptor centroid;
  double weight = 0.0;  // idf for words, 0 for interior nodes
  std::vector<std::uint32_t> children;
  std::int64_t word_id = -1;  // >= 0 iff leaf

  bool operator==(const VocabNode&) const = default;
};

/// Hierarchical k-medians vocabulary over binary descriptors. Immutable
/// after build; lookups are concurrent-safe.
struct Vocabulary {
  std::uint32_t k = 10;
  std::uint32_t levels = 3;
  std::uint64_t build_seed = 0;  // metadata, not part of equality
  std::vector<VocabNode> nodes;
  std::uint32_t word_count = 0;
  std::vector<std::uint32_t> word_nodes;  // word id -> node id

  bool operator==(const Vocabulary& o) const {
    return k == o.k && levels == o.levels && nodes == o.nodes;
  }
};

/// Sparse word-id -> weight map; L1 norm 1 unless empty.
using BowVector = std::map<std::uint32_t, double>;

/// Builds the tree by seeded k-means++-style initialization and per-bit
/// majority-vote centroid updates under Hamming distance; idf weights come
/// from the corpus split into pseudo-documents of 500 descriptors.
Vocabulary vocab_build(const std::vector<BinaryDescriptor>& corpus, int k = 10,
                       int levels = 3, std::uint64_t seed = 0);

/// Greedy tree descent: at every node, follow the child with the smallest
/// Hamming distance (ties toward the earlier child).
std::uint32_t vocab_word(const Vocabulary& v, const BinaryDescriptor& d);

/// tf-idf vector, L1-normalized. When every matched word carries zero idf
/// (degenerate single-document corpora) the weights fall back to plain
/// term frequencies so non-empty inputs still produce a unit vector.
BowVector bow_transform(const Vocabulary& v,
                        const std::vector<BinaryDescriptor>& descs);

/// L1 score: 1 - 0.5 * sum |a_i - b_i| over the union support.
double bow_similarity(const BowVector& a, const BowVector& b);

struct ScoredKeyframe {
  std::uint64_t id = 0;
  double score = 0.0;
};

/// Word -> keyframe postings plus the stored vectors needed for scoring.
struct InvertedIndex {
  std::map<std::uint32_t, std::vector<std::uint64_t>> postings;
  std::map<std::uint64_t, BowVector> vectors;

  bool operator==(const InvertedIndex&) const = default;
};

void index_add(InvertedIndex& ix, std::uint64_t kf_id, const BowVector& bow);

/// Scores every keyframe sharing at least one word with the query; returns
/// the top_k by score descending, ties toward the lower keyframe id.
std::vector<ScoredKeyframe> index_query(const InvertedIndex& ix,
                                        const BowVector& bow, int top_k);

enum class VocabFormat { kText, kBinary };

/// Text: header line then one node per line (id, parent, centroid hex,
/// weight). Binary: SPVOC1 with a trailing CRC32 (see vocab_load).
void vocab_save(const Vocabulary& v, const std::string& path,
                VocabFormat format);

/// Auto-detects the format. Binary loads are measurably faster than text.
Vocabulary vocab_load(const std::string& path);

/// CRC32 of the vocabulary's binary serialization (without the trailer);
/// map files store it to pin the vocabulary they were built with.
std::uint32_t vocab_checksum(const Vocabulary& v);

}  // namespace objslam
