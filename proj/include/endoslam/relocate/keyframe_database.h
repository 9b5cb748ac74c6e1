#pragma once

#include <map>
#include <vector>

#include "endoslam/map/world_map.h"

namespace endoslam {

struct DatabaseQueryOptions {
  int min_common_words = 1;
  // Candidates must share at least this fraction of the best word count.
  double common_ratio = 0.8;
  // Covisible keyframes forming a candidate's group.
  std::size_t group_size = 10;
  // Groups scoring below this fraction of the best group are dropped.
  double group_ratio = 0.75;
};

struct CandidateGroup {
  KeyFrameId best = 0;  // highest scoring keyframe of the group
  std::vector<KeyFrameId> keyframes;  // best first, then its covisible neighbours
  double score = 0.0;  // accumulated over the group's candidates
};

// Inverted index word -> keyframes.
class KeyframeDatabase {
 public:
  void add(KeyFrameId id, const BowVector& bow);
  void erase(KeyFrameId id);
  void clear();
  bool contains(KeyFrameId id) const { return docs_.count(id) != 0; }
  std::size_t size() const { return docs_.size(); }

  // Groups ranked by accumulated score; only keyframes alive in `map` are
  // considered. Empty when nothing shares a word with the query.
  std::vector<CandidateGroup> query(const BowVector& bow, const WorldMap& map,
                                    const DatabaseQueryOptions& options = {}) const;

 private:
  std::map<std::uint32_t, std::vector<KeyFrameId>> index_;
  std::map<KeyFrameId, BowVector> docs_;
};

}  // namespace endoslam
