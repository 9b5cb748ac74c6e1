#pragma once

#include <filesystem>
#include <string>

#include "endoslam/densify/densify.h"
#include "endoslam/map/world_map.h"
#include "endoslam/mapping/local_mapping.h"
#include "endoslam/relocate/relocalizer.h"
#include "endoslam/tracking/frame.h"
#include "endoslam/tracking/initializer.h"
#include "endoslam/tracking/tracking.h"

namespace endoslam {

// Every tunable of the pipeline. Values shared by several stages (the
// descriptor distance, the parallax and reprojection gates, the pyramid)
// appear once and are distributed by the accessors below.
struct SystemConfig {
  // [features]
  int n_features = 1000;
  int n_levels = 8;
  double scale_factor = 1.2;
  int fast_threshold = 20;
  int min_fast_threshold = 7;
  int cell_size = 30;
  // [matching]
  int max_hamming = 45;
  // [gates]
  double min_parallax_deg = 1.4035;
  double max_reprojection_sq = 0.5991;
  double huber_delta = 0.7740155;
  // [initializer]
  int init_min_matches = 60;
  double init_match_ratio = 0.9;
  double init_search_radius = 100.0;
  int init_ransac_iterations = 200;
  double init_ransac_threshold_px = 1.5;
  double init_max_reprojection_sq = 5.991;
  int init_min_points = 50;
  int init_max_frames = 40;
  std::uint64_t init_seed = 7;
  // [tracking]
  double base_search_radius = 4.0;
  double search_factor = 1.5;
  int min_inliers = 15;
  int local_keyframes = 10;
  double min_view_cos = 0.5;
  double wide_search_multiplier = 4.0;
  int pose_rounds = 4;
  int pose_iterations = 10;
  // [semidense]
  bool semidense = true;
  int lk_levels = 3;
  int lk_window = 21;
  double lk_fb_threshold = 0.5;
  double lk_min_eigenvalue = 1.0;
  double semidense_min_zncc = 0.8;
  double semidense_max_epipolar_distance = 2.0;
  double semidense_depth_band = 1.25;
  double semidense_max_flow_deviation = 6.0;
  // [keyframes]
  int kf_max_frames_between = 20;
  double kf_min_tracked_ratio = 0.9;
  int kf_min_inliers = 50;
  // [mapping]
  int triangulation_keyframes = 10;
  double triangulation_max_epipolar_sq = 3.84;
  double triangulation_min_baseline_ratio = 0.01;
  int ba_window = 10;
  int ba_iterations = 20;
  int queue_capacity = 2;
  // [culling]
  double min_found_ratio = 0.25;
  int provisional_frames = 25;
  double kf_redundant_fraction = 0.9;
  int kf_min_other_observers = 3;
  // [densify]
  bool densify = true;
  int densify_neighbors = 4;
  double densify_min_baseline_ratio = 0.02;
  double densify_min_depth_factor = 0.3;
  double densify_max_depth_factor = 3.0;
  double densify_min_zncc = 0.8;
  double densify_max_second_ratio = 0.9;
  double densify_max_epipolar_distance = 2.0;
  double densify_depth_band = 2.5;
  int patch_half = 5;
  // [relocalization]
  double reloc_common_ratio = 0.8;
  int reloc_group_size = 10;
  double reloc_group_ratio = 0.75;
  double reloc_match_ratio = 0.75;
  int reloc_node_depth = 2;
  double ransac_confidence = 0.99;
  int ransac_max_iterations = 500;
  std::uint64_t reloc_seed = 11;

  FrameOptions frame_options() const;
  InitializerOptions initializer_options() const;
  PoseOptimizerOptions optimizer_options() const;
  TrackingOptions tracking_options() const;
  SemidenseOptions semidense_options() const;
  KeyframePolicyOptions keyframe_policy() const;
  TriangulationOptions triangulation_options() const;
  LocalBaOptions local_ba_options() const;
  PointCullingOptions point_culling() const;
  KeyFrameCullingOptions keyframe_culling() const;
  DensifyOptions densify_options() const;
  RelocalizationOptions relocalization_options() const;
};

// Sectioned key=value text: "[section]" headers, "key = value" lines,
// '#' comments. Keys must belong to their section; unknown sections or
// keys, duplicates and malformed values throw kParse. Keys not mentioned
// keep their defaults.
SystemConfig parse_config(const std::string& text);
SystemConfig load_config(const std::filesystem::path& path);
// Effective configuration in the same format, every key listed.
std::string format_config(const SystemConfig& config);

}  // namespace endoslam
