#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <vector>

#include "endoslam/map/map_types.h"

namespace endoslam {

struct VocabularyNode {
  Descriptor256 center;
  std::uint32_t first_child = 0;
  std::uint32_t n_children = 0;
  // Leaf word id, kNoWord for interior nodes.
  std::uint32_t word = 0;
};

inline constexpr std::uint32_t kNoWord = ~std::uint32_t{0};

// Hierarchical k-majority tree over binary descriptors. Leaves are words,
// each weighted by a smoothed inverse document frequency.
class Vocabulary {
 public:
  Vocabulary() = default;

  // Every inner vector is one training document (image). Throws
  // kEmptyCorpus when there is no descriptor.
  static Vocabulary train(const std::vector<std::vector<Descriptor256>>& documents, int k, int depth,
                          std::uint64_t seed);

  int branching() const { return k_; }
  int depth() const { return depth_; }
  std::size_t size() const { return idf_.size(); }
  bool empty() const { return nodes_.empty(); }
  const std::vector<VocabularyNode>& nodes() const { return nodes_; }
  double idf(std::uint32_t word) const { return idf_[word]; }

  std::uint32_t word(const Descriptor256& d) const;
  // Word of d together with its ancestor node at `node_depth` (root = 0).
  std::uint32_t word(const Descriptor256& d, int node_depth, std::uint32_t* node) const;

  // L1-normalized tf-idf vector. Empty input gives an empty vector.
  BowVector bow(std::span<const Descriptor256> descriptors) const;
  // Also groups descriptor indices by their node at `node_depth`.
  BowVector bow(std::span<const Descriptor256> descriptors, int node_depth,
                FeatureVector* features) const;

  // Versioned little-endian binary format; save/load round trips exactly.
  void save(const std::filesystem::path& path) const;
  static Vocabulary load(const std::filesystem::path& path);
  std::vector<std::uint8_t> serialize() const;
  static Vocabulary deserialize(std::span<const std::uint8_t> bytes);

  bool operator==(const Vocabulary&) const;

 private:
  int k_ = 0, depth_ = 0;
  std::vector<VocabularyNode> nodes_;  // nodes_[0] is the root
  std::vector<double> idf_;
};

bool operator==(const VocabularyNode& a, const VocabularyNode& b);

// s(a, b) = 1 - |a - b|_1 / 2 for L1-normalized vectors.
double bow_score(const BowVector& a, const BowVector& b);

}  // namespace endoslam
