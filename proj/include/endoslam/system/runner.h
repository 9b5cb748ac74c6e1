#pragma once

#include <filesystem>
#include <functional>
#include <optional>
#include <string>
#include <vector>

#include "endoslam/eval/alignment.h"
#include "endoslam/eval/mesh.h"
#include "endoslam/map/world_map.h"
#include "endoslam/system/slam_system.h"

namespace endoslam {

struct RunOptions {
  std::filesystem::path dataset;
  std::optional<std::filesystem::path> config;  // defaults when absent
  std::filesystem::path out_dir;
  std::optional<bool> densify;  // overrides the config when set
  bool deterministic = false;
  // Vocabulary file; empty disables relocalization.
  std::filesystem::path vocabulary;
  long max_frames = -1;
  // Called after every frame, e.g. for progress output.
  std::function<void(const FrameReport&)> on_frame;
};

struct RunSummary {
  SystemStats stats;
  Trajectory trajectory;
  std::size_t n_frames = 0;
};

// Runs the pipeline over a dataset directory and writes trajectory.txt,
// map.txt, stats.txt and timing.txt into out_dir. On any error the files
// written so far are removed and the error is rethrown.
RunSummary run_dataset(const RunOptions& options);

// Shipped vocabulary, or an empty path when it is not installed.
std::filesystem::path default_vocabulary_path();

enum class PointSelection { kAll, kOrb, kDensified };
std::vector<Point3> exported_points(const MapExport& map, PointSelection selection);

// The mesh expressed in the camera frame of the map's first keyframe,
// using the ground-truth pose with the same timestamp. The map's world
// frame is that camera's frame up to scale, so only scale and roll about
// the optical axis remain.
TriangleMesh anchor_mesh(const TriangleMesh& mesh, const MapExport& map, const Trajectory& groundtruth);

// Text report followed by a key=value block.
std::string format_alignment_report(const AlignmentResult& result, std::size_t n_points);

}  // namespace endoslam
