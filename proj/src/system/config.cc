#include "endoslam/system/config.h"

#include <algorithm>
#include <charconv>
#include <fstream>
#include <functional>
#include <set>
#include <sstream>
#include <variant>

#include "endoslam/util/error.h"
#include "endoslam/util/strings.h"

namespace endoslam {

namespace {

using Field = std::variant<int*, double*, bool*, std::uint64_t*>;

struct Entry {
  const char* section;
  const char* key;
  Field field;
};

std::vector<Entry> registry(SystemConfig& c) {
  return {
      {"features", "n_features", &c.n_features},
      {"features", "n_levels", &c.n_levels},
      {"features", "scale_factor", &c.scale_factor},
      {"features", "fast_threshold", &c.fast_threshold},
      {"features", "min_fast_threshold", &c.min_fast_threshold},
      {"features", "cell_size", &c.cell_size},
      {"matching", "max_hamming", &c.max_hamming},
      {"gates", "min_parallax_deg", &c.min_parallax_deg},
      {"gates", "max_reprojection_sq", &c.max_reprojection_sq},
      {"gates", "huber_delta", &c.huber_delta},
      {"initializer", "min_matches", &c.init_min_matches},
      {"initializer", "match_ratio", &c.init_match_ratio},
      {"initializer", "search_radius", &c.init_search_radius},
      {"initializer", "ransac_iterations", &c.init_ransac_iterations},
      {"initializer", "ransac_threshold_px", &c.init_ransac_threshold_px},
      {"initializer", "max_reprojection_sq", &c.init_max_reprojection_sq},
      {"initializer", "min_points", &c.init_min_points},
      {"initializer", "max_frames", &c.init_max_frames},
      {"initializer", "seed", &c.init_seed},
      {"tracking", "base_search_radius", &c.base_search_radius},
      {"tracking", "search_factor", &c.search_factor},
      {"tracking", "min_inliers", &c.min_inliers},
      {"tracking", "local_keyframes", &c.local_keyframes},
      {"tracking", "min_view_cos", &c.min_view_cos},
      {"tracking", "wide_search_multiplier", &c.wide_search_multiplier},
      {"tracking", "pose_rounds", &c.pose_rounds},
      {"tracking", "pose_iterations", &c.pose_iterations},
      {"semidense", "enabled", &c.semidense},
      {"semidense", "lk_levels", &c.lk_levels},
      {"semidense", "lk_window", &c.lk_window},
      {"semidense", "lk_fb_threshold", &c.lk_fb_threshold},
      {"semidense", "lk_min_eigenvalue", &c.lk_min_eigenvalue},
      {"semidense", "min_zncc", &c.semidense_min_zncc},
      {"semidense", "max_epipolar_distance", &c.semidense_max_epipolar_distance},
      {"semidense", "depth_band", &c.semidense_depth_band},
      {"semidense", "max_flow_deviation", &c.semidense_max_flow_deviation},
      {"keyframes", "max_frames_between", &c.kf_max_frames_between},
      {"keyframes", "min_tracked_ratio", &c.kf_min_tracked_ratio},
      {"keyframes", "min_inliers", &c.kf_min_inliers},
      {"mapping", "triangulation_keyframes", &c.triangulation_keyframes},
      {"mapping", "max_epipolar_sq", &c.triangulation_max_epipolar_sq},
      {"mapping", "min_baseline_ratio", &c.triangulation_min_baseline_ratio},
      {"mapping", "ba_window", &c.ba_window},
      {"mapping", "ba_iterations", &c.ba_iterations},
      {"mapping", "queue_capacity", &c.queue_capacity},
      {"culling", "min_found_ratio", &c.min_found_ratio},
      {"culling", "provisional_frames", &c.provisional_frames},
      {"culling", "keyframe_redundant_fraction", &c.kf_redundant_fraction},
      {"culling", "keyframe_min_other_observers", &c.kf_min_other_observers},
      {"densify", "enabled", &c.densify},
      {"densify", "neighbors", &c.densify_neighbors},
      {"densify", "min_baseline_ratio", &c.densify_min_baseline_ratio},
      {"densify", "min_depth_factor", &c.densify_min_depth_factor},
      {"densify", "max_depth_factor", &c.densify_max_depth_factor},
      {"densify", "min_zncc", &c.densify_min_zncc},
      {"densify", "max_second_ratio", &c.densify_max_second_ratio},
      {"densify", "max_epipolar_distance", &c.densify_max_epipolar_distance},
      {"densify", "depth_band", &c.densify_depth_band},
      {"densify", "patch_half", &c.patch_half},
      {"relocalization", "common_ratio", &c.reloc_common_ratio},
      {"relocalization", "group_size", &c.reloc_group_size},
      {"relocalization", "group_ratio", &c.reloc_group_ratio},
      {"relocalization", "match_ratio", &c.reloc_match_ratio},
      {"relocalization", "node_depth", &c.reloc_node_depth},
      {"relocalization", "ransac_confidence", &c.ransac_confidence},
      {"relocalization", "ransac_max_iterations", &c.ransac_max_iterations},
      {"relocalization", "seed", &c.reloc_seed},
  };
}

template <typename T>
bool parse_number(const std::string& s, T& out) {
  const auto r = std::from_chars(s.data(), s.data() + s.size(), out);
  return r.ec == std::errc() && r.ptr == s.data() + s.size();
}

void validate(const SystemConfig& c) {
  auto require = [](bool ok, const char* what) {
    if (!ok) fail(ErrorCode::kParse, std::string("invalid configuration: ") + what);
  };
  require(c.n_features > 0, "features.n_features must be positive");
  require(c.n_levels >= 1, "features.n_levels must be >= 1");
  require(c.scale_factor > 1.0, "features.scale_factor must exceed 1");
  require(c.max_hamming >= 0 && c.max_hamming <= 256, "matching.max_hamming must lie in [0, 256]");
  require(c.max_reprojection_sq > 0.0, "gates.max_reprojection_sq must be positive");
  require(c.huber_delta > 0.0, "gates.huber_delta must be positive");
  require(c.min_inliers >= 4, "tracking.min_inliers must be >= 4");
  require(c.lk_window >= 3 && c.lk_window % 2 == 1, "semidense.lk_window must be odd and >= 3");
  require(c.queue_capacity >= 1, "mapping.queue_capacity must be >= 1");
  require(c.densify_neighbors >= 1, "densify.neighbors must be >= 1");
  require(c.patch_half >= 1, "densify.patch_half must be >= 1");
  require(c.ransac_confidence > 0.0 && c.ransac_confidence < 1.0,
          "relocalization.ransac_confidence must lie in (0, 1)");
}

}  // namespace

SystemConfig parse_config(const std::string& text) {
  SystemConfig c;
  auto entries = registry(c);
  std::set<std::string> sections;
  for (const auto& e : entries) sections.insert(e.section);
  std::set<std::string> seen;
  std::string section;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line.erase(hash);
    line = trim(line);
    if (line.empty()) continue;
    const std::string where = "config line " + std::to_string(line_no) + ": ";
    if (line.front() == '[') {
      if (line.back() != ']') fail(ErrorCode::kParse, where + "malformed section header");
      section = trim(line.substr(1, line.size() - 2));
      if (!sections.count(section)) fail(ErrorCode::kParse, where + "unknown section [" + section + "]");
      continue;
    }
    const auto eq = line.find('=');
    if (eq == std::string::npos) fail(ErrorCode::kParse, where + "expected key = value");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (section.empty()) fail(ErrorCode::kParse, where + "key outside a section");
    const auto it = std::find_if(entries.begin(), entries.end(),
                                 [&](const Entry& e) { return section == e.section && key == e.key; });
    if (it == entries.end()) fail(ErrorCode::kParse, where + "unknown key " + section + "." + key);
    if (!seen.insert(section + "." + key).second)
      fail(ErrorCode::kParse, where + "duplicate key " + section + "." + key);
    const bool ok = std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, bool>) {
            if (value == "1" || value == "true" || value == "on") return *p = true, true;
            if (value == "0" || value == "false" || value == "off") return *p = false, true;
            return false;
          } else {
            return parse_number(value, *p);
          }
        },
        it->field);
    if (!ok) fail(ErrorCode::kParse, where + "bad value '" + value + "' for " + section + "." + key);
  }
  validate(c);
  return c;
}

SystemConfig load_config(const std::filesystem::path& path) {
  std::ifstream f(path);
  if (!f) fail(ErrorCode::kIo, "cannot read config " + path.string());
  std::stringstream ss;
  ss << f.rdbuf();
  return parse_config(ss.str());
}

std::string format_config(const SystemConfig& config) {
  SystemConfig copy = config;
  std::ostringstream out;
  std::string section;
  for (const auto& e : registry(copy)) {
    if (section != e.section) {
      if (!section.empty()) out << '\n';
      section = e.section;
      out << '[' << section << "]\n";
    }
    out << e.key << " = ";
    std::visit(
        [&](auto* p) {
          using T = std::remove_pointer_t<decltype(p)>;
          if constexpr (std::is_same_v<T, bool>) out << (*p ? "on" : "off");
          else if constexpr (std::is_same_v<T, double>) out << format_double(*p);
          else out << *p;
        },
        e.field);
    out << '\n';
  }
  return out.str();
}

FrameOptions SystemConfig::frame_options() const {
  FrameOptions o;
  o.n_levels = n_levels;
  o.scale_factor = scale_factor;
  o.detector.target_count = n_features;
  o.detector.fast_threshold = fast_threshold;
  o.detector.min_fast_threshold = min_fast_threshold;
  o.detector.cell_size = cell_size;
  return o;
}

InitializerOptions SystemConfig::initializer_options() const {
  InitializerOptions o;
  o.min_matches = init_min_matches;
  o.min_parallax_deg = min_parallax_deg;
  o.max_hamming = max_hamming;
  o.match_ratio = init_match_ratio;
  o.search_radius = init_search_radius;
  o.ransac_iterations = init_ransac_iterations;
  o.ransac_threshold_px = init_ransac_threshold_px;
  o.max_reprojection_sq = init_max_reprojection_sq;
  o.min_points = init_min_points;
  o.seed = init_seed;
  return o;
}

PoseOptimizerOptions SystemConfig::optimizer_options() const {
  PoseOptimizerOptions o;
  o.rounds = pose_rounds;
  o.iterations = pose_iterations;
  o.inlier_threshold = max_reprojection_sq;
  o.huber_delta = huber_delta;
  o.scale_factor = scale_factor;
  return o;
}

TrackingOptions SystemConfig::tracking_options() const {
  TrackingOptions o;
  o.base_search_radius = base_search_radius;
  o.search_factor = search_factor;
  o.max_hamming = max_hamming;
  o.min_inliers = min_inliers;
  o.local_keyframes = local_keyframes;
  o.min_view_cos = min_view_cos;
  o.wide_search_multiplier = wide_search_multiplier;
  o.optimizer = optimizer_options();
  return o;
}

SemidenseOptions SystemConfig::semidense_options() const {
  SemidenseOptions o;
  o.lk.levels = lk_levels;
  o.lk.window = lk_window;
  o.lk.fb_threshold = lk_fb_threshold;
  o.lk.min_eigenvalue = lk_min_eigenvalue;
  o.min_zncc = semidense_min_zncc;
  o.max_epipolar_distance = semidense_max_epipolar_distance;
  o.patch_half = patch_half;
  o.depth_band = semidense_depth_band;
  o.max_flow_deviation = semidense_max_flow_deviation;
  return o;
}

KeyframePolicyOptions SystemConfig::keyframe_policy() const {
  return {kf_max_frames_between, kf_min_tracked_ratio, kf_min_inliers};
}

TriangulationOptions SystemConfig::triangulation_options() const {
  TriangulationOptions o;
  o.covisible_keyframes = static_cast<std::size_t>(triangulation_keyframes);
  o.max_hamming = max_hamming;
  o.min_parallax_deg = min_parallax_deg;
  o.max_reprojection_sq = max_reprojection_sq;
  o.max_epipolar_sq = triangulation_max_epipolar_sq;
  o.min_baseline_ratio = triangulation_min_baseline_ratio;
  return o;
}

LocalBaOptions SystemConfig::local_ba_options() const {
  LocalBaOptions o;
  o.window = static_cast<std::size_t>(ba_window);
  o.ba.max_iterations = ba_iterations;
  o.ba.huber_delta = huber_delta;
  o.ba.outlier_threshold = max_reprojection_sq;
  o.ba.scale_factor = scale_factor;
  return o;
}

PointCullingOptions SystemConfig::point_culling() const {
  PointCullingOptions o;
  o.min_found_ratio = min_found_ratio;
  o.provisional_frames = provisional_frames;
  o.min_parallax_deg = min_parallax_deg;
  o.max_reprojection_sq = max_reprojection_sq;
  return o;
}

KeyFrameCullingOptions SystemConfig::keyframe_culling() const {
  KeyFrameCullingOptions o;
  o.redundant_fraction = kf_redundant_fraction;
  o.min_other_observers = kf_min_other_observers;
  return o;
}

DensifyOptions SystemConfig::densify_options() const {
  DensifyOptions o;
  o.max_neighbors = static_cast<std::size_t>(densify_neighbors);
  o.min_baseline_ratio = densify_min_baseline_ratio;
  o.min_depth_factor = densify_min_depth_factor;
  o.max_depth_factor = densify_max_depth_factor;
  o.min_zncc = densify_min_zncc;
  o.max_second_ratio = densify_max_second_ratio;
  o.max_epipolar_distance = densify_max_epipolar_distance;
  o.max_reprojection_sq = max_reprojection_sq;
  o.depth_band = densify_depth_band;
  o.search.patch_half = patch_half;
  return o;
}

RelocalizationOptions SystemConfig::relocalization_options() const {
  RelocalizationOptions o;
  o.query.common_ratio = reloc_common_ratio;
  o.query.group_size = static_cast<std::size_t>(reloc_group_size);
  o.query.group_ratio = reloc_group_ratio;
  o.max_hamming = max_hamming;
  o.ratio = reloc_match_ratio;
  o.node_depth = reloc_node_depth;
  o.min_inliers = min_inliers;
  o.ransac.confidence = ransac_confidence;
  o.ransac.max_iterations = ransac_max_iterations;
  o.ransac.inlier_threshold = max_reprojection_sq;
  o.ransac.scale_factor = scale_factor;
  o.ransac.seed = reloc_seed;
  o.optimizer = optimizer_options();
  return o;
}

}  // namespace endoslam
