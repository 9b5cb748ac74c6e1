#pragma once

#include <filesystem>
#include <string>
#include <vector>

#include "endoslam/geometry/camera.h"
#include "endoslam/synth/render.h"
#include "endoslam/synth/trajectory_gen.h"
#include "endoslam/tracking/trajectory.h"

namespace endoslam {

struct OccluderSpec {
  int first_frame = 0;
  int last_frame = -1;  // inclusive
  Occluder occluder;
};

struct DatasetSpec {
  CameraModel camera;
  SurfaceParams surface;
  TrajectoryParams trajectory;
  RenderOptions render;
  std::vector<OccluderSpec> occluders;
  double fps = 30.0;
};

// Named presets: plane, hemisphere, relief, lowtex, breathing, kidnap,
// occlusion. Throws kInvalidArgument for an unknown name.
DatasetSpec dataset_preset(const std::string& name, std::uint64_t seed);
std::vector<std::string> dataset_preset_names();
CameraModel default_synthetic_camera();

// Writes frame_%06d.pgm, calib.txt, groundtruth.txt, surface.obj and
// visibility.csv ("frame,off_scene,occluded_fraction").
void write_dataset(const DatasetSpec& spec, const std::filesystem::path& dir);

// Frames and metadata of a dataset directory.
struct Dataset {
  std::filesystem::path dir;
  CameraModel camera;
  std::vector<std::filesystem::path> frames;
  std::vector<double> timestamps;
  Trajectory groundtruth;  // empty when absent
  double fps = 30.0;
};

// Throws kIo / kParse with a message naming the offending file.
Dataset open_dataset(const std::filesystem::path& dir);

}  // namespace endoslam
