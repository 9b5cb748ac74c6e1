#include "endoslam/synth/dataset.h"

#include <cstdio>
#include <sstream>

#include "endoslam/util/error.h"
#include "endoslam/util/strings.h"

namespace endoslam {

CameraModel default_synthetic_camera() {
  CameraModel cam;
  cam.fx = 520.0;
  cam.fy = 520.0;
  cam.cx = 320.0;
  cam.cy = 240.0;
  cam.k1 = -0.08;
  cam.k2 = 0.01;
  cam.width = 640;
  cam.height = 480;
  return cam;
}

std::vector<std::string> dataset_preset_names() {
  return {"plane", "hemisphere", "relief", "lowtex", "breathing", "kidnap", "occlusion"};
}

DatasetSpec dataset_preset(const std::string& name, std::uint64_t seed) {
  DatasetSpec s;
  s.camera = default_synthetic_camera();
  s.surface.seed = seed;
  s.surface.texture.seed = seed;
  s.render.noise_seed = seed;
  s.render.noise_sigma = 1.0;
  s.trajectory.kind = TrajectoryKind::kArc;
  s.trajectory.n_frames = 240;
  s.trajectory.height = 60.0;
  s.trajectory.arc_length = 30.0;

  // The bowl presets hover over its bottom, 60 mm above it.
  const auto bowl = [&] {
    s.surface.kind = SurfaceKind::kHemisphere;
    s.surface.extent = 100.0;
    s.trajectory.base = Vec3(0.0, 0.0, -100.0);
  };
  if (name == "plane") {
    s.surface.kind = SurfaceKind::kPlane;
    s.surface.extent = 200.0;
  } else if (name == "relief") {
    s.surface.kind = SurfaceKind::kRelief;
    s.surface.extent = 200.0;
  } else if (name == "hemisphere") {
    bowl();
  } else if (name == "lowtex") {
    bowl();
    s.surface.texture.contrast = 1.0;
    s.surface.texture.blob_amplitude = 6.0;
    s.surface.texture.fine_amplitude = 10.0;
    s.surface.texture.spot_density = 4.0;
    s.render.noise_sigma = 1.5;
  } else if (name == "breathing") {
    bowl();
    s.trajectory.kind = TrajectoryKind::kBreathing;
    s.trajectory.n_frames = 360;
    s.trajectory.settle_frames = 90;
    s.trajectory.amplitude = 3.0;
    s.trajectory.period_frames = 45.0;
  } else if (name == "kidnap") {
    bowl();
    s.trajectory.kind = TrajectoryKind::kKidnap;
    s.trajectory.n_frames = 360;
    s.trajectory.kidnap_start = 200;
    s.trajectory.kidnap_length = 60;
    s.trajectory.kidnap_offset = Vec3(0.0, 60.0, 0.0);
  } else if (name == "occlusion") {
    bowl();
    OccluderSpec o;
    o.first_frame = 100;
    o.last_frame = 140;
    o.occluder.a = Pixel(-40.0, 380.0);
    o.occluder.b = Pixel(330.0, 250.0);
    o.occluder.half_width = 75.0;
    s.occluders.push_back(o);
  } else {
    fail(ErrorCode::kInvalidArgument, "unknown dataset preset '" + name + "'");
  }
  return s;
}

void write_dataset(const DatasetSpec& spec, const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) fail(ErrorCode::kIo, "cannot create " + dir.string());
  const SyntheticSurface surface(spec.surface);
  const SyntheticTrajectory traj = make_trajectory(spec.trajectory);
  const Renderer renderer(spec.camera);

  Trajectory gt;
  std::ostringstream vis;
  vis << "frame,off_scene,occluded_fraction\n";
  const double n_pixels = static_cast<double>(spec.camera.width) * spec.camera.height;
  for (std::size_t k = 0; k < traj.poses.size(); ++k) {
    Rendering r = renderer.render(surface, traj.poses[k], spec.render, k);
    std::size_t occluded = 0;
    GrayImage visible(r.image.width(), r.image.height(), 1);
    for (const auto& o : spec.occluders)
      if (static_cast<int>(k) >= o.first_frame && static_cast<int>(k) <= o.last_frame)
        paint_occluder(r.image, o.occluder, &visible);
    for (auto v : visible.data()) occluded += v == 0;
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06zu.pgm", k);
    write_pgm(r.image, dir / name);
    gt.push_back({static_cast<double>(k) / spec.fps, traj.poses[k]});
    vis << k << ',' << (traj.off_scene[k] ? 1 : 0) << ','
        << format_double(static_cast<double>(occluded) / n_pixels) << '\n';
  }
  save_calibration(spec.camera, dir / "calib.txt");
  save_trajectory(gt, dir / "groundtruth.txt");
  save_mesh(surface.mesh(), dir / "surface.obj");
  write_text_file(dir / "visibility.csv", vis.str());
}

Dataset open_dataset(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorCode::kIo, "no dataset directory " + dir.string());
  Dataset ds;
  ds.dir = dir;
  ds.camera = load_calibration(dir / "calib.txt");
  for (std::size_t k = 0;; ++k) {
    char name[32];
    std::snprintf(name, sizeof(name), "frame_%06zu.pgm", k);
    const auto path = dir / name;
    if (!std::filesystem::exists(path)) break;
    ds.frames.push_back(path);
  }
  if (ds.frames.empty()) fail(ErrorCode::kIo, "no frame_000000.pgm in " + dir.string());
  if (std::filesystem::exists(dir / "groundtruth.txt")) ds.groundtruth = load_trajectory(dir / "groundtruth.txt");
  for (std::size_t k = 0; k < ds.frames.size(); ++k)
    ds.timestamps.push_back(k < ds.groundtruth.size() ? ds.groundtruth[k].timestamp
                                                      : static_cast<double>(k) / ds.fps);
  return ds;
}

}  // namespace endoslam
