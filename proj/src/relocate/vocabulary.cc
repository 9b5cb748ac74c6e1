#include "endoslam/relocate/vocabulary.h"

#include <algorithm>
#include <array>
#include <cmath>
#include <cstring>
#include <fstream>
#include <iterator>
#include <limits>
#include <numeric>

#include "endoslam/util/error.h"
#include "endoslam/util/random.h"

namespace endoslam {

namespace {

Descriptor256 majority(const std::vector<const Descriptor256*>& members) {
  std::array<int, 256> ones{};
  for (const Descriptor256* d : members)
    for (int b = 0; b < 256; ++b) ones[b] += d->bit(b);
  Descriptor256 c;
  // Ties round down (bit cleared) as long as it is not a strict majority.
  for (int b = 0; b < 256; ++b)
    if (2 * ones[b] > static_cast<int>(members.size())) c.set_bit(b);
  return c;
}

// k-means++ seeding followed by k-majority iterations under Hamming
// distance. Returns the members of each non-empty cluster.
std::vector<std::vector<const Descriptor256*>> cluster(
    const std::vector<const Descriptor256*>& data, int k, Rng& rng) {
  std::vector<std::vector<const Descriptor256*>> groups;
  if (static_cast<int>(data.size()) <= k) {
    // One cluster per distinct descriptor.
    for (const Descriptor256* d : data) {
      auto it = std::find_if(groups.begin(), groups.end(), [&](const auto& g) { return *g[0] == *d; });
      if (it == groups.end()) groups.push_back({d});
      else it->push_back(d);
    }
    return groups;
  }
  std::vector<Descriptor256> centers{*data[rng.index(data.size())]};
  std::vector<double> d2(data.size());
  while (static_cast<int>(centers.size()) < k) {
    double total = 0.0;
    for (std::size_t i = 0; i < data.size(); ++i) {
      int best = 257;
      for (const auto& c : centers) best = std::min(best, hamming(*data[i], c));
      d2[i] = static_cast<double>(best) * best;
      total += d2[i];
    }
    if (total == 0.0) break;  // fewer distinct descriptors than k
    double r = rng.uniform() * total;
    std::size_t pick = 0;
    for (; pick + 1 < data.size(); ++pick) {
      r -= d2[pick];
      if (r < 0.0) break;
    }
    centers.push_back(*data[pick]);
  }
  std::vector<int> assign(data.size(), -1);
  for (int it = 0; it < 20; ++it) {
    bool changed = false;
    for (std::size_t i = 0; i < data.size(); ++i) {
      int best = 0, best_d = 257;
      for (std::size_t c = 0; c < centers.size(); ++c) {
        const int d = hamming(*data[i], centers[c]);
        if (d < best_d) {
          best_d = d;
          best = static_cast<int>(c);
        }
      }
      changed |= assign[i] != best;
      assign[i] = best;
    }
    groups.assign(centers.size(), {});
    for (std::size_t i = 0; i < data.size(); ++i) groups[assign[i]].push_back(data[i]);
    if (!changed) break;
    for (std::size_t c = 0; c < centers.size(); ++c)
      if (!groups[c].empty()) centers[c] = majority(groups[c]);
  }
  groups.erase(std::remove_if(groups.begin(), groups.end(), [](const auto& g) { return g.empty(); }),
               groups.end());
  return groups;
}

}  // namespace

Vocabulary Vocabulary::train(const std::vector<std::vector<Descriptor256>>& documents, int k,
                             int depth, std::uint64_t seed) {
  if (k < 2 || depth < 1) fail(ErrorCode::kInvalidArgument, "vocabulary needs k >= 2 and depth >= 1");
  std::vector<const Descriptor256*> all;
  for (const auto& doc : documents)
    for (const auto& d : doc) all.push_back(&d);
  if (all.empty()) fail(ErrorCode::kEmptyCorpus, "no training descriptors");

  Vocabulary v;
  v.k_ = k;
  v.depth_ = depth;
  Rng rng(seed);
  v.nodes_.push_back({majority(all), 0, 0, kNoWord});
  // Breadth-first expansion keeps children of a node contiguous.
  struct Pending {
    std::uint32_t node;
    int level;
    std::vector<const Descriptor256*> members;
  };
  std::vector<Pending> queue{{0, 0, std::move(all)}};
  std::uint32_t n_words = 0;
  for (std::size_t q = 0; q < queue.size(); ++q) {
    Pending p = std::move(queue[q]);
    const auto groups = p.level < depth ? cluster(p.members, k, rng)
                                        : std::vector<std::vector<const Descriptor256*>>{};
    if (groups.size() <= 1 && p.level > 0) {
      v.nodes_[p.node].word = n_words++;
      continue;
    }
    if (groups.empty()) {
      v.nodes_[p.node].word = n_words++;
      continue;
    }
    v.nodes_[p.node].first_child = static_cast<std::uint32_t>(v.nodes_.size());
    v.nodes_[p.node].n_children = static_cast<std::uint32_t>(groups.size());
    for (const auto& g : groups) {
      queue.push_back({static_cast<std::uint32_t>(v.nodes_.size()), p.level + 1, g});
      v.nodes_.push_back({majority(g), 0, 0, kNoWord});
    }
  }

  // Smoothed idf: log(1 + N / n_w); words seen in no document get log(1 + N).
  std::vector<int> doc_count(n_words, 0);
  for (const auto& doc : documents) {
    std::vector<bool> seen(n_words, false);
    for (const auto& d : doc) seen[v.word(d)] = true;
    for (std::uint32_t w = 0; w < n_words; ++w) doc_count[w] += seen[w];
  }
  const double n = static_cast<double>(documents.size());
  v.idf_.resize(n_words);
  for (std::uint32_t w = 0; w < n_words; ++w) v.idf_[w] = std::log(1.0 + n / std::max(1, doc_count[w]));
  return v;
}

std::uint32_t Vocabulary::word(const Descriptor256& d) const { return word(d, 0, nullptr); }

std::uint32_t Vocabulary::word(const Descriptor256& d, int node_depth, std::uint32_t* node) const {
  if (nodes_.empty()) fail(ErrorCode::kInvalidArgument, "empty vocabulary");
  std::uint32_t cur = 0;
  int level = 0;
  if (node && node_depth == 0) *node = 0;
  while (nodes_[cur].n_children > 0) {
    const VocabularyNode& n = nodes_[cur];
    std::uint32_t best = n.first_child;
    int best_d = 257;
    for (std::uint32_t c = n.first_child; c < n.first_child + n.n_children; ++c) {
      const int dist = hamming(d, nodes_[c].center);
      if (dist < best_d) {
        best_d = dist;
        best = c;
      }
    }
    cur = best;
    ++level;
    if (node && level == node_depth) *node = cur;
  }
  // Leaves shallower than the requested depth stand for themselves.
  if (node && level < node_depth) *node = cur;
  return nodes_[cur].word;
}

BowVector Vocabulary::bow(std::span<const Descriptor256> descriptors) const {
  return bow(descriptors, 0, nullptr);
}

BowVector Vocabulary::bow(std::span<const Descriptor256> descriptors, int node_depth,
                          FeatureVector* features) const {
  BowVector v;
  if (features) features->clear();
  for (std::size_t i = 0; i < descriptors.size(); ++i) {
    std::uint32_t node = 0;
    const std::uint32_t w = word(descriptors[i], node_depth, features ? &node : nullptr);
    v[w] += idf_[w];
    if (features) (*features)[node].push_back(i);
  }
  double total = 0.0;
  for (const auto& [w, x] : v) total += x;
  if (total > 0.0)
    for (auto& [w, x] : v) x /= total;
  return v;
}

double bow_score(const BowVector& a, const BowVector& b) {
  // |a - b|_1 = 2 - sum over shared words of (|a| + |b| - |a - b|).
  double shared = 0.0, total_a = 0.0, total_b = 0.0;
  for (const auto& [w, x] : a) total_a += x;
  for (const auto& [w, x] : b) total_b += x;
  auto ia = a.begin();
  auto ib = b.begin();
  while (ia != a.end() && ib != b.end()) {
    if (ia->first < ib->first) {
      ++ia;
    } else if (ib->first < ia->first) {
      ++ib;
    } else {
      shared += std::abs(ia->second) + std::abs(ib->second) - std::abs(ia->second - ib->second);
      ++ia;
      ++ib;
    }
  }
  const double l1 = total_a + total_b - shared;
  return 1.0 - 0.5 * l1;
}

bool operator==(const VocabularyNode& a, const VocabularyNode& b) {
  return a.center == b.center && a.first_child == b.first_child && a.n_children == b.n_children &&
         a.word == b.word;
}

bool Vocabulary::operator==(const Vocabulary& o) const {
  return k_ == o.k_ && depth_ == o.depth_ && nodes_ == o.nodes_ && idf_ == o.idf_;
}

// Layout (little endian):
//   "ESVOC" u8[5], version u32 = 1, k u32, depth u32, words u32, nodes u32
//   nodes x { center u64[4], first_child u32, n_children u32, word u32 }
//   words x { idf f64 }
namespace {

constexpr char kMagic[5] = {'E', 'S', 'V', 'O', 'C'};
constexpr std::uint32_t kVersion = 1;

void put_u32(std::vector<std::uint8_t>& out, std::uint32_t v) {
  for (int i = 0; i < 4; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}
void put_u64(std::vector<std::uint8_t>& out, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) out.push_back(static_cast<std::uint8_t>(v >> (8 * i)));
}

class Reader {
 public:
  explicit Reader(std::span<const std::uint8_t> b) : bytes_(b) {}
  std::uint64_t get(int n) {
    if (pos_ + n > bytes_.size()) fail(ErrorCode::kParse, "truncated vocabulary");
    std::uint64_t v = 0;
    for (int i = 0; i < n; ++i) v |= std::uint64_t{bytes_[pos_ + i]} << (8 * i);
    pos_ += n;
    return v;
  }
  bool done() const { return pos_ == bytes_.size(); }

 private:
  std::span<const std::uint8_t> bytes_;
  std::size_t pos_ = 0;
};

}  // namespace

std::vector<std::uint8_t> Vocabulary::serialize() const {
  std::vector<std::uint8_t> out(std::begin(kMagic), std::end(kMagic));
  put_u32(out, kVersion);
  put_u32(out, static_cast<std::uint32_t>(k_));
  put_u32(out, static_cast<std::uint32_t>(depth_));
  put_u32(out, static_cast<std::uint32_t>(idf_.size()));
  put_u32(out, static_cast<std::uint32_t>(nodes_.size()));
  for (const auto& n : nodes_) {
    for (std::uint64_t w : n.center.words) put_u64(out, w);
    put_u32(out, n.first_child);
    put_u32(out, n.n_children);
    put_u32(out, n.word);
  }
  for (double x : idf_) {
    std::uint64_t bits;
    std::memcpy(&bits, &x, sizeof bits);
    put_u64(out, bits);
  }
  return out;
}

Vocabulary Vocabulary::deserialize(std::span<const std::uint8_t> bytes) {
  Reader r(bytes);
  for (char c : kMagic)
    if (static_cast<char>(r.get(1)) != c) fail(ErrorCode::kParse, "not a vocabulary file");
  if (r.get(4) != kVersion) fail(ErrorCode::kParse, "unsupported vocabulary version");
  Vocabulary v;
  v.k_ = static_cast<int>(r.get(4));
  v.depth_ = static_cast<int>(r.get(4));
  const std::uint64_t n_words = r.get(4);
  const std::uint64_t n_nodes = r.get(4);
  if (n_nodes == 0 || n_nodes > bytes.size() / 44) fail(ErrorCode::kParse, "bad vocabulary node count");
  v.nodes_.resize(n_nodes);
  std::uint64_t leaves = 0;
  for (auto& n : v.nodes_) {
    for (auto& w : n.center.words) w = r.get(8);
    n.first_child = static_cast<std::uint32_t>(r.get(4));
    n.n_children = static_cast<std::uint32_t>(r.get(4));
    n.word = static_cast<std::uint32_t>(r.get(4));
    if (n.n_children == 0) {
      if (n.word >= n_words) fail(ErrorCode::kParse, "vocabulary leaf without a valid word");
      ++leaves;
    } else if (std::uint64_t{n.first_child} + n.n_children > n_nodes) {
      fail(ErrorCode::kParse, "vocabulary child index out of range");
    }
  }
  if (leaves != n_words) fail(ErrorCode::kParse, "vocabulary word count mismatch");
  v.idf_.resize(n_words);
  for (double& x : v.idf_) {
    const std::uint64_t bits = r.get(8);
    std::memcpy(&x, &bits, sizeof x);
  }
  if (!r.done()) fail(ErrorCode::kParse, "trailing bytes in vocabulary");
  return v;
}

void Vocabulary::save(const std::filesystem::path& path) const {
  const auto bytes = serialize();
  std::ofstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::kIo, "cannot write " + path.string());
  f.write(reinterpret_cast<const char*>(bytes.data()), static_cast<std::streamsize>(bytes.size()));
  if (!f) fail(ErrorCode::kIo, "cannot write " + path.string());
}

Vocabulary Vocabulary::load(const std::filesystem::path& path) {
  std::ifstream f(path, std::ios::binary);
  if (!f) fail(ErrorCode::kIo, "cannot read " + path.string());
  const std::vector<std::uint8_t> bytes((std::istreambuf_iterator<char>(f)),
                                        std::istreambuf_iterator<char>());
  return deserialize(bytes);
}

}  // namespace endoslam
