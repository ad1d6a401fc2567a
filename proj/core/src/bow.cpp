#include "objslam/bow.hpp"

#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <deque>
#include <fstream>
#include <sstream>

#include "objslam/errors.hpp"
#include "objslam/rng.hpp"
#include "wire.hpp"

namespace objslam {

namespace {

constexpr std::size_t kPseudoDocSize = 500;
constexpr std::uint32_t kVocabVersion = 1;
constexpr char kVocabMagic[6] = {'S', 'P', 'V', 'O', 'C', '1'};

struct Cluster {
  BinaryDescriptor centroid;
  std::vector<int> members;  // indices into the corpus
};

// One k-medians pass over `members`. Deterministic given the rng state;
// empty clusters are dropped from the result.
std::vector<Cluster> kmedians(const std::vector<BinaryDescriptor>& corpus,
                              const std::vector<int>& members, int k,
                              SplitMix64& rng) {
  const int n = static_cast<int>(members.size());

  // Seeded k-means++-style init: each new centroid is drawn with
  // probability proportional to the squared distance to the nearest one.
  std::vector<BinaryDescriptor> centroids;
  centroids.push_back(corpus[members[rng.next_below(n)]]);
  std::vector<double> dist2(n);
  std::vector<int> nearest_d(n);
  for (int i = 0; i < n; ++i) {
    nearest_d[i] = hamming(corpus[members[i]], centroids[0]);
    dist2[i] = static_cast<double>(nearest_d[i]) * nearest_d[i];
  }
  while (static_cast<int>(centroids.size()) < k) {
    double total = 0;
    for (double d : dist2) total += d;
    int pick;
    if (total <= 0) {
      pick = static_cast<int>(rng.next_below(n));
    } else {
      double r = rng.next_double() * total;
      double acc = 0;
      pick = n - 1;
      for (int i = 0; i < n; ++i) {
        acc += dist2[i];
        if (acc > r) {
          pick = i;
          break;
        }
      }
    }
    centroids.push_back(corpus[members[pick]]);
    for (int i = 0; i < n; ++i) {
      int d = hamming(corpus[members[i]], centroids.back());
      if (d < nearest_d[i]) {
        nearest_d[i] = d;
        dist2[i] = static_cast<double>(d) * d;
      }
    }
  }

  std::vector<int> assign(n, -1);
  for (int iter = 0; iter < 25; ++iter) {
    bool changed = false;
    for (int i = 0; i < n; ++i) {
      int best = 0, best_d = hamming(corpus[members[i]], centroids[0]);
      for (int j = 1; j < k; ++j) {
        int d = hamming(corpus[members[i]], centroids[j]);
        if (d < best_d) {
          best_d = d;
          best = j;
        }
      }
      if (best != assign[i]) {
        assign[i] = best;
        changed = true;
      }
    }

    // Re-seed empty clusters from the farthest member of the largest one.
    std::vector<int> sizes(k, 0);
    for (int a : assign) ++sizes[a];
    for (int j = 0; j < k; ++j) {
      if (sizes[j] > 0) continue;
      int largest = static_cast<int>(
          std::max_element(sizes.begin(), sizes.end()) - sizes.begin());
      int far_i = -1, far_d = -1;
      for (int i = 0; i < n; ++i)
        if (assign[i] == largest) {
          int d = hamming(corpus[members[i]], centroids[largest]);
          if (d > far_d) {
            far_d = d;
            far_i = i;
          }
        }
      if (far_i < 0 || far_d == 0) continue;  // nothing distinct to donate
      centroids[j] = corpus[members[far_i]];
      assign[far_i] = j;
      --sizes[largest];
      ++sizes[j];
      changed = true;
    }

    if (!changed) break;

    // Per-bit majority vote.
    for (int j = 0; j < k; ++j) {
      int count[256] = {};
      int total = 0;
      for (int i = 0; i < n; ++i) {
        if (assign[i] != j) continue;
        ++total;
        const BinaryDescriptor& d = corpus[members[i]];
        for (int b = 0; b < 256; ++b)
          if (d.bit(b)) ++count[b];
      }
      if (total == 0) continue;
      BinaryDescriptor c;
      for (int b = 0; b < 256; ++b)
        if (2 * count[b] > total) c.set_bit(b);
      centroids[j] = c;
    }
  }

  std::vector<Cluster> out;
  for (int j = 0; j < k; ++j) {
    Cluster c;
    c.centroid = centroids[j];
    for (int i = 0; i < n; ++i)
      if (assign[i] == j) c.members.push_back(members[i]);
    if (!c.members.empty()) out.push_back(std::move(c));
  }
  return out;
}

// Serializes everything but the CRC trailer.
wire::Writer vocab_payload(const Vocabulary& v) {
  wire::Writer w;
  w.raw(kVocabMagic, sizeof kVocabMagic);
  w.u32(kVocabVersion);
  w.u32(v.k);
  w.u32(v.levels);
  w.u64(v.nodes.size());
  for (const VocabNode& n : v.nodes) {
    w.u64(n.id);
    w.u64(n.parent);
    auto bytes = n.centroid.bytes();
    w.raw(bytes.data(), bytes.size());
    w.f64(n.weight);
  }
  return w;
}

std::uint32_t crc_of(const std::uint8_t* data, std::size_t n) {
  return static_cast<std::uint32_t>(
      ::crc32(::crc32(0L, Z_NULL, 0), data, static_cast<uInt>(n)));
}

// Children lists and word ids are derived from the parent links: nodes are
// stored in creation order, so scanning ascending rebuilds both.
void relink(Vocabulary& v) {
  for (VocabNode& n : v.nodes) {
    n.children.clear();
    n.word_id = -1;
  }
  for (const VocabNode& n : v.nodes) {
    if (n.parent == kNoParent) continue;
    if (n.parent >= v.nodes.size())
      fail(ErrorCode::ParseError, "vocabulary node has an unknown parent");
    v.nodes[n.parent].children.push_back(static_cast<std::uint32_t>(n.id));
  }
  v.word_count = 0;
  v.word_nodes.clear();
  for (VocabNode& n : v.nodes)
    if (n.children.empty()) {
      n.word_id = v.word_count++;
      v.word_nodes.push_back(static_cast<std::uint32_t>(n.id));
    }
}

std::string hex_encode(const std::array<std::uint8_t, 32>& bytes) {
  static const char* digits = "0123456789abcdef";
  std::string s(64, '0');
  for (int i = 0; i < 32; ++i) {
    s[2 * i] = digits[bytes[i] >> 4];
    s[2 * i + 1] = digits[bytes[i] & 0xf];
  }
  return s;
}

int hex_value(char c) {
  if (c >= '0' && c <= '9') return c - '0';
  if (c >= 'a' && c <= 'f') return c - 'a' + 10;
  if (c >= 'A' && c <= 'F') return c - 'A' + 10;
  return -1;
}

}  // namespace

Vocabulary vocab_build(const std::vector<BinaryDescriptor>& corpus, int k,
                       int levels, std::uint64_t seed) {
  if (k < 2 || levels < 1)
    fail(ErrorCode::BadParams, "vocabulary needs k >= 2 and levels >= 1");
  if (corpus.size() < static_cast<std::size_t>(k))
    fail(ErrorCode::CorpusTooSmall,
         std::to_string(corpus.size()) + " descriptors for k=" +
             std::to_string(k));

  Vocabulary v;
  v.k = static_cast<std::uint32_t>(k);
  v.levels = static_cast<std::uint32_t>(levels);
  v.build_seed = seed;
  v.nodes.push_back(VocabNode{});

  SplitMix64 rng(seed);
  struct Pending {
    std::uint32_t node;
    int depth;
    std::vector<int> members;
  };
  std::deque<Pending> queue;
  std::vector<int> all(corpus.size());
  for (std::size_t i = 0; i < corpus.size(); ++i) all[i] = static_cast<int>(i);
  queue.push_back({0, 0, std::move(all)});

  while (!queue.empty()) {
    Pending p = std::move(queue.front());
    queue.pop_front();
    if (p.depth == levels ||
        p.members.size() < static_cast<std::size_t>(k))
      continue;  // leaf
    std::vector<Cluster> clusters = kmedians(corpus, p.members, k, rng);
    if (clusters.size() < 2) continue;  // indivisible subset: leaf
    for (Cluster& c : clusters) {
      std::uint32_t id = static_cast<std::uint32_t>(v.nodes.size());
      VocabNode n;
      n.id = id;
      n.parent = p.node;
      n.centroid = c.centroid;
      v.nodes.push_back(std::move(n));
      queue.push_back({id, p.depth + 1, std::move(c.members)});
    }
  }

  relink(v);

  // idf over pseudo-documents. Scanning the corpus in order keeps the
  // per-word "last document seen" trick valid.
  std::size_t ndocs = (corpus.size() + kPseudoDocSize - 1) / kPseudoDocSize;
  std::vector<std::int64_t> last_doc(v.word_count, -1);
  std::vector<std::size_t> occurrences(v.word_count, 0);
  for (std::size_t i = 0; i < corpus.size(); ++i) {
    std::uint32_t word = vocab_word(v, corpus[i]);
    auto doc = static_cast<std::int64_t>(i / kPseudoDocSize);
    if (last_doc[word] != doc) {
      last_doc[word] = doc;
      ++occurrences[word];
    }
  }
  for (std::uint32_t w = 0; w < v.word_count; ++w) {
    double idf = occurrences[w] == 0
                     ? 0.0
                     : std::log(static_cast<double>(ndocs) / occurrences[w]);
    v.nodes[v.word_nodes[w]].weight = idf;
  }
  return v;
}

std::uint32_t vocab_word(const Vocabulary& v, const BinaryDescriptor& d) {
  const VocabNode* node = &v.nodes[0];
  while (!node->children.empty()) {
    const VocabNode* best = &v.nodes[node->children[0]];
    int best_d = hamming(d, best->centroid);
    for (std::size_t i = 1; i < node->children.size(); ++i) {
      const VocabNode* c = &v.nodes[node->children[i]];
      int dist = hamming(d, c->centroid);
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    node = best;
  }
  return static_cast<std::uint32_t>(node->word_id);
}

BowVector bow_transform(const Vocabulary& v,
                        const std::vector<BinaryDescriptor>& descs) {
  BowVector out;
  if (descs.empty()) return out;

  std::map<std::uint32_t, std::size_t> counts;
  for (const BinaryDescriptor& d : descs) ++counts[vocab_word(v, d)];

  double total = 0;
  for (const auto& [word, count] : counts) {
    double tf = static_cast<double>(count) / descs.size();
    double weight = tf * v.nodes[v.word_nodes[word]].weight;
    if (weight > 0) {
      out[word] = weight;
      total += weight;
    }
  }
  if (total <= 0) {
    // Degenerate idf (e.g. a single pseudo-document): fall back to plain
    // term frequencies so non-empty inputs still normalize.
    out.clear();
    for (const auto& [word, count] : counts) {
      double tf = static_cast<double>(count) / descs.size();
      out[word] = tf;
      total += tf;
    }
  }
  for (auto& [word, weight] : out) weight /= total;
  return out;
}

double bow_similarity(const BowVector& a, const BowVector& b) {
  double l1 = 0;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() || ib != b.end()) {
    if (ib == b.end() || (ia != a.end() && ia->first < ib->first)) {
      l1 += std::abs(ia->second);
      ++ia;
    } else if (ia == a.end() || ib->first < ia->first) {
      l1 += std::abs(ib->second);
      ++ib;
    } else {
      l1 += std::abs(ia->second - ib->second);
      ++ia;
      ++ib;
    }
  }
  return 1.0 - 0.5 * l1;
}

void index_add(InvertedIndex& ix, std::uint64_t kf_id, const BowVector& bow) {
  if (ix.vectors.count(kf_id))
    fail(ErrorCode::DuplicateKeyframe, "keyframe " + std::to_string(kf_id));
  ix.vectors[kf_id] = bow;
  for (const auto& [word, weight] : bow) {
    auto& posting = ix.postings[word];
    posting.insert(std::lower_bound(posting.begin(), posting.end(), kf_id),
                   kf_id);
  }
}

std::vector<ScoredKeyframe> index_query(const InvertedIndex& ix,
                                        const BowVector& bow, int top_k) {
  std::vector<std::uint64_t> candidates;
  for (const auto& [word, weight] : bow) {
    auto it = ix.postings.find(word);
    if (it == ix.postings.end()) continue;
    candidates.insert(candidates.end(), it->second.begin(), it->second.end());
  }
  std::sort(candidates.begin(), candidates.end());
  candidates.erase(std::unique(candidates.begin(), candidates.end()),
                   candidates.end());

  std::vector<ScoredKeyframe> scored;
  scored.reserve(candidates.size());
  for (std::uint64_t kf : candidates)
    scored.push_back({kf, bow_similarity(bow, ix.vectors.at(kf))});
  std::stable_sort(scored.begin(), scored.end(),
                   [](const ScoredKeyframe& x, const ScoredKeyframe& y) {
                     if (x.score != y.score) return x.score > y.score;
                     return x.id < y.id;
                   });
  if (top_k >= 0 && scored.size() > static_cast<std::size_t>(top_k))
    scored.resize(top_k);
  return scored;
}

void vocab_save(const Vocabulary& v, const std::string& path,
                VocabFormat format) {
  if (format == VocabFormat::kBinary) {
    wire::Writer w = vocab_payload(v);
    std::uint32_t crc = crc_of(w.bytes.data(), w.bytes.size());
    w.u32(crc);
    std::ofstream out(path, std::ios::binary);
    if (!out) fail(ErrorCode::IoError, "cannot write " + path);
    out.write(reinterpret_cast<const char*>(w.bytes.data()),
              static_cast<std::streamsize>(w.bytes.size()));
    if (!out) fail(ErrorCode::IoError, "write failed for " + path);
    return;
  }

  std::ofstream out(path);
  if (!out) fail(ErrorCode::IoError, "cannot write " + path);
  out << "SPVOC1t " << kVocabVersion << " " << v.k << " " << v.levels << " "
      << v.nodes.size() << "\n";
  char buf[32];
  for (const VocabNode& n : v.nodes) {
    std::snprintf(buf, sizeof buf, "%.17g", n.weight);
    out << n.id << " " << n.parent << " " << hex_encode(n.centroid.bytes())
        << " " << buf << "\n";
  }
  if (!out) fail(ErrorCode::IoError, "write failed for " + path);
}

namespace {

Vocabulary vocab_load_binary(const std::vector<std::uint8_t>& buf,
                             const std::string& path) {
  wire::Reader r(buf, ErrorCode::TruncatedFile);
  r.raw(sizeof kVocabMagic);  // magic checked by the caller
  std::uint32_t version = r.u32();
  if (version != kVocabVersion)
    fail(ErrorCode::VersionMismatch,
         path + ": vocabulary version " + std::to_string(version));

  Vocabulary v;
  v.k = r.u32();
  v.levels = r.u32();
  std::uint64_t count = r.u64();
  v.nodes.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    VocabNode n;
    n.id = r.u64();
    n.parent = r.u64();
    const std::uint8_t* c = r.raw(32);
    std::array<std::uint8_t, 32> bytes;
    std::copy(c, c + 32, bytes.begin());
    n.centroid = BinaryDescriptor::from_bytes(bytes);
    n.weight = r.f64();
    if (n.id != i)
      fail(ErrorCode::ParseError, path + ": nodes out of order");
    v.nodes.push_back(std::move(n));
  }
  std::uint32_t stored_crc = r.u32();
  std::uint32_t actual = crc_of(buf.data(), buf.size() - 4);
  if (stored_crc != actual)
    fail(ErrorCode::ChecksumMismatch, path + ": vocabulary CRC mismatch");
  relink(v);
  return v;
}

Vocabulary vocab_load_text(std::istream& in, const std::string& path) {
  std::string line;
  if (!std::getline(in, line))
    fail(ErrorCode::TruncatedFile, path + ": empty vocabulary file");
  std::istringstream header(line);
  std::string magic;
  std::uint32_t version = 0;
  Vocabulary v;
  std::uint64_t count = 0;
  header >> magic >> version >> v.k >> v.levels >> count;
  if (magic != "SPVOC1t") fail(ErrorCode::BadMagic, path);
  if (!header)
    fail(ErrorCode::ParseError, path + ":1: bad vocabulary header");
  if (version != kVocabVersion)
    fail(ErrorCode::VersionMismatch,
         path + ": vocabulary version " + std::to_string(version));

  v.nodes.reserve(count);
  for (std::uint64_t i = 0; i < count; ++i) {
    if (!std::getline(in, line))
      fail(ErrorCode::TruncatedFile,
           path + ": " + std::to_string(count) + " nodes promised, file ends at " +
               std::to_string(i));
    std::string lineno = std::to_string(i + 2);
    std::istringstream ls(line);
    VocabNode n;
    std::string hex;
    ls >> n.id >> n.parent >> hex;
    double weight;
    ls >> weight;
    if (!ls || hex.size() != 64)
      fail(ErrorCode::ParseError, path + ":" + lineno + ": bad node line");
    n.weight = weight;
    std::array<std::uint8_t, 32> bytes{};
    for (int b = 0; b < 32; ++b) {
      int hi = hex_value(hex[2 * b]), lo = hex_value(hex[2 * b + 1]);
      if (hi < 0 || lo < 0)
        fail(ErrorCode::ParseError,
             path + ":" + lineno + ": bad centroid hex");
      bytes[b] = static_cast<std::uint8_t>((hi << 4) | lo);
    }
    n.centroid = BinaryDescriptor::from_bytes(bytes);
    if (n.id != i)
      fail(ErrorCode::ParseError, path + ":" + lineno + ": nodes out of order");
    v.nodes.push_back(std::move(n));
  }
  relink(v);
  return v;
}

}  // namespace

Vocabulary vocab_load(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) fail(ErrorCode::IoError, "cannot open " + path);
  std::vector<std::uint8_t> buf(
      (std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (buf.size() < 7) fail(ErrorCode::TruncatedFile, path + ": too short");
  if (std::memcmp(buf.data(), kVocabMagic, sizeof kVocabMagic) != 0)
    fail(ErrorCode::BadMagic, path);
  if (buf[6] == 't') {
    std::istringstream text(
        std::string(reinterpret_cast<const char*>(buf.data()), buf.size()));
    return vocab_load_text(text, path);
  }
  return vocab_load_binary(buf, path);
}

std::uint32_t vocab_checksum(const Vocabulary& v) {
  wire::Writer w = vocab_payload(v);
  return crc_of(w.bytes.data(), w.bytes.size());
}

}  // namespace objslam
