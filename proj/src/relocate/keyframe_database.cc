#include "endoslam/relocate/keyframe_database.h"

#include <algorithm>

#include "endoslam/relocate/vocabulary.h"

namespace endoslam {

void KeyframeDatabase::add(KeyFrameId id, const BowVector& bow) {
  erase(id);
  docs_[id] = bow;
  for (const auto& [w, x] : bow) index_[w].push_back(id);
}

void KeyframeDatabase::erase(KeyFrameId id) {
  const auto it = docs_.find(id);
  if (it == docs_.end()) return;
  for (const auto& [w, x] : it->second) {
    auto& list = index_[w];
    list.erase(std::remove(list.begin(), list.end(), id), list.end());
    if (list.empty()) index_.erase(w);
  }
  docs_.erase(it);
}

void KeyframeDatabase::clear() {
  index_.clear();
  docs_.clear();
}

std::vector<CandidateGroup> KeyframeDatabase::query(const BowVector& bow, const WorldMap& map,
                                                    const DatabaseQueryOptions& o) const {
  std::map<KeyFrameId, int> common;
  for (const auto& [w, x] : bow) {
    const auto it = index_.find(w);
    if (it == index_.end()) continue;
    for (KeyFrameId id : it->second)
      if (map.has_keyframe(id)) ++common[id];
  }
  if (common.empty()) return {};
  int max_common = 0;
  for (const auto& [id, n] : common) max_common = std::max(max_common, n);
  const int min_common = std::max(o.min_common_words, static_cast<int>(o.common_ratio * max_common));

  std::map<KeyFrameId, double> score;
  for (const auto& [id, n] : common)
    if (n >= min_common) score[id] = bow_score(bow, docs_.at(id));
  if (score.empty()) return {};

  std::vector<CandidateGroup> groups;
  double best_total = 0.0;
  for (const auto& [id, s] : score) {
    CandidateGroup g;
    g.best = id;
    g.score = s;
    double best_score = s;
    const auto neighbors = map.covisible(id, o.group_size);
    for (KeyFrameId n : neighbors) {
      const auto it = score.find(n);
      if (it == score.end()) continue;
      g.score += it->second;
      if (it->second > best_score || (it->second == best_score && n < g.best)) {
        best_score = it->second;
        g.best = n;
      }
    }
    g.keyframes.push_back(g.best);
    if (g.best != id) g.keyframes.push_back(id);
    for (KeyFrameId n : (g.best == id ? neighbors : map.covisible(g.best, o.group_size)))
      if (std::find(g.keyframes.begin(), g.keyframes.end(), n) == g.keyframes.end())
        g.keyframes.push_back(n);
    best_total = std::max(best_total, g.score);
    groups.push_back(std::move(g));
  }
  // One group per best keyframe, keeping its highest accumulated score.
  std::sort(groups.begin(), groups.end(), [](const auto& a, const auto& b) {
    return a.score != b.score ? a.score > b.score : a.best < b.best;
  });
  std::vector<CandidateGroup> out;
  for (auto& g : groups) {
    if (g.score < o.group_ratio * best_total) break;
    const bool seen = std::any_of(out.begin(), out.end(), [&](const auto& x) { return x.best == g.best; });
    if (!seen) out.push_back(std::move(g));
  }
  return out;
}

}  // namespace endoslam
