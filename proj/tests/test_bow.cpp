#include "objslam/bow.hpp"

#include <gtest/gtest.h>

#include <chrono>
#include <filesystem>
#include <fstream>

#include "objslam/errors.hpp"
#include "objslam/rng.hpp"

using namespace objslam;

namespace {

std::filesystem::path temp_file(const char* name) {
  auto dir = std::filesystem::temp_directory_path() / "objslam_bow_test";
  std::filesystem::create_directories(dir);
  return dir / name;
}

BinaryDescriptor random_descriptor(SplitMix64& rng) {
  BinaryDescriptor d;
  for (auto& w : d.words) w = rng.next();
  return d;
}

// Perturbs `base` by flipping `flips` distinct random bits.
BinaryDescriptor near_copy(const BinaryDescriptor& base, int flips,
                           SplitMix64& rng) {
  BinaryDescriptor d = base;
  for (int i = 0; i < flips; ++i) {
    int bit = static_cast<int>(rng.next_below(256));
    d.words[bit >> 6] ^= std::uint64_t{1} << (bit & 63);
  }
  return d;
}

// `n_clusters` tight Hamming clusters of `per_cluster` members each;
// cluster labels returned alongside.
std::pair<std::vector<BinaryDescriptor>, std::vector<int>> clustered_corpus(
    int n_clusters, int per_cluster, std::uint64_t seed) {
  SplitMix64 rng(seed);
  std::vector<BinaryDescriptor> centers;
  for (int c = 0; c < n_clusters; ++c) {
    // Keep regenerating until the new center is far from all previous ones.
    for (;;) {
      BinaryDescriptor cand = random_descriptor(rng);
      bool far = true;
      for (const auto& prev : centers)
        if (hamming(cand, prev) < 90) far = false;
      if (far) {
        centers.push_back(cand);
        break;
      }
    }
  }
  std::vector<BinaryDescriptor> corpus;
  std::vector<int> labels;
  for (int c = 0; c < n_clusters; ++c)
    for (int i = 0; i < per_cluster; ++i) {
      corpus.push_back(near_copy(centers[c], static_cast<int>(rng.next_below(6)), rng));
      labels.push_back(c);
    }
  return {corpus, labels};
}

}  // namespace

TEST(VocabBuild, TwoTightClustersSeparateExactly) {
  auto [corpus, labels] = clustered_corpus(2, 100, 3);
  Vocabulary v = vocab_build(corpus, 2, 1, 7);
  ASSERT_EQ(v.word_count, 2u);
  std::uint32_t word_of_cluster[2] = {vocab_word(v, corpus[0]),
                                      vocab_word(v, corpus[100])};
  EXPECT_NE(word_of_cluster[0], word_of_cluster[1]);
  for (std::size_t i = 0; i < corpus.size(); ++i)
    EXPECT_EQ(vocab_word(v, corpus[i]), word_of_cluster[labels[i]]) << i;
}

TEST(VocabBuild, DeterministicPerSeed) {
  auto [corpus, labels] = clustered_corpus(10, 60, 11);
  Vocabulary a = vocab_build(corpus, 5, 2, 42);
  Vocabulary b = vocab_build(corpus, 5, 2, 42);
  EXPECT_TRUE(a == b);

  auto pa = temp_file("det_a.voc"), pb = temp_file("det_b.voc");
  vocab_save(a, pa.string(), VocabFormat::kBinary);
  vocab_save(b, pb.string(), VocabFormat::kBinary);
  std::ifstream fa(pa, std::ios::binary), fb(pb, std::ios::binary);
  std::string bytes_a((std::istreambuf_iterator<char>(fa)), {});
  std::string bytes_b((std::istreambuf_iterator<char>(fb)), {});
  EXPECT_EQ(bytes_a, bytes_b);
}

TEST(VocabBuild, RejectsTinyCorpus) {
  SplitMix64 rng(1);
  std::vector<BinaryDescriptor> corpus;
  for (int i = 0; i < 5; ++i) corpus.push_back(random_descriptor(rng));
  try {
    vocab_build(corpus, 10, 3, 0);
    FAIL() << "expected CorpusTooSmall";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::CorpusTooSmall);
  }
}

TEST(VocabBuild, IdfWeightsAreNonNegative) {
  auto [corpus, labels] = clustered_corpus(8, 150, 5);  // 1200 descs, 3 docs
  Vocabulary v = vocab_build(corpus, 4, 2, 9);
  for (std::uint32_t w = 0; w < v.word_count; ++w)
    EXPECT_GE(v.nodes[v.word_nodes[w]].weight, 0.0);
}

TEST(Transform, EmptyListGivesEmptyVector) {
  auto [corpus, labels] = clustered_corpus(4, 50, 2);
  Vocabulary v = vocab_build(corpus, 4, 1, 0);
  EXPECT_TRUE(bow_transform(v, {}).empty());
}

TEST(Transform, NonEmptyListHasUnitL1Norm) {
  auto [corpus, labels] = clustered_corpus(10, 120, 21);  // 1200 descs
  Vocabulary v = vocab_build(corpus, 5, 2, 1);
  SplitMix64 rng(77);
  std::vector<BinaryDescriptor> descs;
  for (int i = 0; i < 40; ++i)
    descs.push_back(corpus[rng.next_below(corpus.size())]);
  BowVector bow = bow_transform(v, descs);
  ASSERT_FALSE(bow.empty());
  double sum = 0;
  for (const auto& [word, weight] : bow) {
    EXPECT_GT(weight, 0.0);
    sum += weight;
  }
  EXPECT_NEAR(sum, 1.0, 1e-9);
}

TEST(Transform, CentroidMapsToItsOwnSingleWord) {
  auto [corpus, labels] = clustered_corpus(6, 200, 13);  // 1200 descs
  Vocabulary v = vocab_build(corpus, 3, 2, 4);
  for (std::uint32_t w = 0; w < v.word_count; ++w) {
    const BinaryDescriptor& centroid = v.nodes[v.word_nodes[w]].centroid;
    BowVector bow = bow_transform(v, {centroid});
    // Greedy descent of a word's own centroid can stray only if two words
    // coincide; on this corpus each must land on exactly one word.
    ASSERT_EQ(bow.size(), 1u) << "word " << w;
    EXPECT_NEAR(bow.begin()->second, 1.0, 1e-12);
  }
}

TEST(Similarity, IdenticalVectorsScoreOne) {
  BowVector a{{3, 0.25}, {9, 0.5}, {17, 0.25}};
  EXPECT_DOUBLE_EQ(bow_similarity(a, a), 1.0);
}

TEST(Similarity, DisjointSupportsScoreZero) {
  BowVector a{{1, 0.5}, {2, 0.5}};
  BowVector b{{3, 0.5}, {4, 0.5}};
  EXPECT_DOUBLE_EQ(bow_similarity(a, b), 0.0);
}

TEST(Similarity, HandEvaluatedExample) {
  BowVector a{{1, 1.0}};
  BowVector b{{1, 0.5}, {2, 0.5}};
  EXPECT_DOUBLE_EQ(bow_similarity(a, b), 0.5);
}

TEST(Similarity, SymmetricAndBounded) {
  SplitMix64 rng(31);
  for (int trial = 0; trial < 50; ++trial) {
    auto random_bow = [&rng]() {
      BowVector v;
      int n = 1 + static_cast<int>(rng.next_below(8));
      double total = 0;
      for (int i = 0; i < n; ++i) {
        double w = rng.next_double() + 1e-3;
        v[static_cast<std::uint32_t>(rng.next_below(30))] += w;
        total += w;
      }
      for (auto& [word, weight] : v) weight /= total;
      return v;
    };
    BowVector a = random_bow(), b = random_bow();
    double sab = bow_similarity(a, b);
    EXPECT_DOUBLE_EQ(sab, bow_similarity(b, a));
    EXPECT_GE(sab, 0.0);
    EXPECT_LE(sab, 1.0);
  }
}

TEST(Index, SelfQueryRanksFirstWithScoreOne) {
  auto [corpus, labels] = clustered_corpus(8, 150, 17);
  Vocabulary v = vocab_build(corpus, 4, 2, 2);
  InvertedIndex ix;
  std::vector<BinaryDescriptor> descs(corpus.begin(), corpus.begin() + 60);
  BowVector bow = bow_transform(v, descs);
  index_add(ix, 12, bow);
  auto hits = index_query(ix, bow, 5);
  ASSERT_EQ(hits.size(), 1u);
  EXPECT_EQ(hits[0].id, 12u);
  EXPECT_DOUBLE_EQ(hits[0].score, 1.0);
}

TEST(Index, DuplicateKeyframeRejected) {
  InvertedIndex ix;
  index_add(ix, 1, BowVector{{0, 1.0}});
  try {
    index_add(ix, 1, BowVector{{1, 1.0}});
    FAIL() << "expected DuplicateKeyframe";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::DuplicateKeyframe);
  }
}

TEST(Index, DisjointQueryReturnsNothing) {
  InvertedIndex ix;
  index_add(ix, 1, BowVector{{0, 0.5}, {1, 0.5}});
  EXPECT_TRUE(index_query(ix, BowVector{{9, 1.0}}, 5).empty());
}

TEST(Index, RankingMatchesExhaustiveScoring) {
  auto [corpus, labels] = clustered_corpus(10, 150, 23);  // 1500 descs
  Vocabulary v = vocab_build(corpus, 5, 2, 6);
  SplitMix64 rng(99);

  InvertedIndex ix;
  std::vector<BowVector> vectors;
  for (std::uint64_t kf = 0; kf < 10; ++kf) {
    std::vector<BinaryDescriptor> descs;
    for (int i = 0; i < 50; ++i)
      descs.push_back(corpus[rng.next_below(corpus.size())]);
    BowVector bow = bow_transform(v, descs);
    vectors.push_back(bow);
    index_add(ix, kf, bow);
  }

  // Query with #7's own vector: #7 must rank first.
  auto hits = index_query(ix, vectors[7], 10);
  ASSERT_FALSE(hits.empty());
  EXPECT_EQ(hits[0].id, 7u);
  EXPECT_DOUBLE_EQ(hits[0].score, 1.0);

  // Full ranking equals the exhaustive oracle over shared-word keyframes.
  for (int q = 0; q < 10; ++q) {
    std::vector<ScoredKeyframe> oracle;
    for (std::uint64_t kf = 0; kf < 10; ++kf) {
      bool shares = false;
      for (const auto& [word, weight] : vectors[q])
        if (vectors[kf].count(word)) shares = true;
      if (shares) oracle.push_back({kf, bow_similarity(vectors[q], vectors[kf])});
    }
    std::stable_sort(oracle.begin(), oracle.end(),
                     [](const ScoredKeyframe& a, const ScoredKeyframe& b) {
                       if (a.score != b.score) return a.score > b.score;
                       return a.id < b.id;
                     });
    auto got = index_query(ix, vectors[q], 10);
    ASSERT_EQ(got.size(), oracle.size()) << "query " << q;
    for (std::size_t i = 0; i < oracle.size(); ++i) {
      EXPECT_EQ(got[i].id, oracle[i].id) << "query " << q << " rank " << i;
      EXPECT_DOUBLE_EQ(got[i].score, oracle[i].score);
    }
  }
}

// The greedy descent is approximate; on clustered corpora it must agree
// with exhaustive search over all leaf centroids nearly always.
TEST(VocabWord, GreedyDescentAgreesWithExhaustiveSearch) {
  auto [corpus, labels] = clustered_corpus(40, 50, 29);  // 2000 descs
  Vocabulary v = vocab_build(corpus, 8, 2, 3);
  SplitMix64 rng(55);

  int agree = 0, total = 0;
  for (int trial = 0; trial < 500; ++trial) {
    BinaryDescriptor q =
        near_copy(corpus[rng.next_below(corpus.size())], 8, rng);
    std::uint32_t greedy = vocab_word(v, q);

    std::uint32_t best_word = 0;
    int best_d = 257;
    for (std::uint32_t w = 0; w < v.word_count; ++w) {
      int d = hamming(q, v.nodes[v.word_nodes[w]].centroid);
      if (d < best_d) {
        best_d = d;
        best_word = w;
      }
    }
    if (greedy == best_word) ++agree;
    ++total;
  }
  EXPECT_GE(agree, total * 95 / 100) << agree << "/" << total;
}

TEST(VocabIo, TextRoundTripReproducesVocabulary) {
  auto [corpus, labels] = clustered_corpus(10, 80, 37);
  Vocabulary v = vocab_build(corpus, 4, 2, 8);
  auto path = temp_file("roundtrip.voctxt");
  vocab_save(v, path.string(), VocabFormat::kText);
  Vocabulary loaded = vocab_load(path.string());
  EXPECT_TRUE(v == loaded);
  EXPECT_EQ(vocab_checksum(v), vocab_checksum(loaded));
}

TEST(VocabIo, BinaryRoundTripReproducesVocabulary) {
  auto [corpus, labels] = clustered_corpus(10, 80, 41);
  Vocabulary v = vocab_build(corpus, 4, 2, 8);
  auto path = temp_file("roundtrip.voc");
  vocab_save(v, path.string(), VocabFormat::kBinary);
  Vocabulary loaded = vocab_load(path.string());
  EXPECT_TRUE(v == loaded);
  EXPECT_EQ(vocab_checksum(v), vocab_checksum(loaded));
}

TEST(VocabIo, RejectsForeignAndDamagedFiles) {
  auto garbage = temp_file("garbage.voc");
  {
    std::ofstream out(garbage, std::ios::binary);
    out << "NOTAVOCABULARY but long enough to not be truncated";
  }
  try {
    vocab_load(garbage.string());
    FAIL() << "expected BadMagic";
  } catch (const Error& e) {
    EXPECT_EQ(e.code(), ErrorCode::BadMagic);
  }

  auto [corpus, labels] = clustered_corpus(4, 60, 43);
  Vocabulary v = vocab_build(corpus, 4, 1, 0);
  auto good = temp_file("good.voc");
  vocab_save(v, good.string(), VocabFormat::kBinary);
  std::ifstream in(good, std::ios::binary);
  std::string bytes((std::istreambuf_iterator<char>(in)), {});
  in.close();

  {  // bump the version field (offset 6, little-endian u32)
    std::string tampered = bytes;
    tampered[6] = 9;
    auto path = temp_file("version.voc");
    std::ofstream out(path, std::ios::binary);
    out << tampered;
    out.close();
    try {
      vocab_load(path.string());
      FAIL() << "expected VersionMismatch";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::VersionMismatch);
    }
  }
  {  // drop the last 10 bytes
    std::string truncated = bytes.substr(0, bytes.size() - 10);
    auto path = temp_file("short.voc");
    std::ofstream out(path, std::ios::binary);
    out << truncated;
    out.close();
    try {
      vocab_load(path.string());
      FAIL() << "expected TruncatedFile";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::TruncatedFile);
    }
  }
  {  // flip one payload byte: CRC must catch it
    std::string corrupt = bytes;
    corrupt[bytes.size() / 2] ^= 0x40;
    auto path = temp_file("corrupt.voc");
    std::ofstream out(path, std::ios::binary);
    out << corrupt;
    out.close();
    try {
      vocab_load(path.string());
      FAIL() << "expected ChecksumMismatch";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ChecksumMismatch);
    }
  }
  {  // corrupt a text line
    auto path = temp_file("bad_line.voctxt");
    vocab_save(v, path.string(), VocabFormat::kText);
    std::ifstream tin(path);
    std::string text((std::istreambuf_iterator<char>(tin)), {});
    tin.close();
    std::size_t second_line = text.find('\n') + 1;
    text.insert(second_line, "not a node ");
    std::ofstream out(path);
    out << text;
    out.close();
    try {
      vocab_load(path.string());
      FAIL() << "expected ParseError";
    } catch (const Error& e) {
      EXPECT_EQ(e.code(), ErrorCode::ParseError);
    }
  }
}

TEST(VocabIo, BinaryLoadsFasterThanText) {
  // Full-size vocabulary: k=10, L=3.
  auto [corpus, labels] = clustered_corpus(60, 60, 47);  // 3600 descs
  Vocabulary v = vocab_build(corpus, 10, 3, 12);
  ASSERT_GE(v.word_count, 100u);

  auto text_path = temp_file("speed.voctxt");
  auto bin_path = temp_file("speed.voc");
  vocab_save(v, text_path.string(), VocabFormat::kText);
  vocab_save(v, bin_path.string(), VocabFormat::kBinary);

  std::size_t sink = 0;  // keeps the loads observable
  auto time_load = [&sink](const std::string& path) {
    double best = 1e18;
    for (int i = 0; i < 3; ++i) {
      auto t0 = std::chrono::steady_clock::now();
      Vocabulary loaded = vocab_load(path);
      auto t1 = std::chrono::steady_clock::now();
      best = std::min(best, std::chrono::duration<double>(t1 - t0).count());
      sink += loaded.nodes.size();
    }
    return best;
  };
  double text_time = time_load(text_path.string());
  double bin_time = time_load(bin_path.string());
  EXPECT_LT(bin_time, text_time)
      << "binary " << bin_time << "s vs text " << text_time << "s";
}
