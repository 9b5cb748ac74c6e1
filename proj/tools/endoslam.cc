#include <CLI11.hpp>

#include <algorithm>
#include <cstdio>
#include <iostream>

#include "endoslam/eval/alignment.h"
#include "endoslam/eval/trajectory_error.h"
#include "endoslam/image/image.h"
#include "endoslam/relocate/vocabulary.h"
#include "endoslam/synth/dataset.h"
#include "endoslam/system/config.h"
#include "endoslam/system/runner.h"
#include "endoslam/util/error.h"
#include "endoslam/util/strings.h"

using namespace endoslam;

namespace {

int exit_code(ErrorCode code) {
  switch (code) {
    case ErrorCode::kInvalidArgument:
    case ErrorCode::kParse:
    case ErrorCode::kIo:
    case ErrorCode::kImageTooSmall:
    case ErrorCode::kEmptyCorpus:
    case ErrorCode::kEmptyGrid:
      return 2;
    default:
      return 1;
  }
}

Vec3 parse_axis(const std::string& text) {
  std::string s = text;
  std::replace(s.begin(), s.end(), ',', ' ');
  const auto f = split_whitespace(s);
  Vec3 a;
  for (int i = 0; i < 3; ++i) {
    const auto v = f.size() == 3 ? parse_double(f[i]) : std::nullopt;
    if (!v) fail(ErrorCode::kInvalidArgument, "axis must be three numbers, got '" + text + "'");
    a[i] = *v;
  }
  if (!(a.norm() > 0.0)) fail(ErrorCode::kInvalidArgument, "axis must be nonzero");
  return a.normalized();
}

// Images of a corpus: every *.pgm below the directory, sorted by path.
std::vector<std::filesystem::path> corpus_images(const std::filesystem::path& dir) {
  if (!std::filesystem::is_directory(dir)) fail(ErrorCode::kIo, "no corpus directory " + dir.string());
  std::vector<std::filesystem::path> out;
  for (const auto& e : std::filesystem::recursive_directory_iterator(dir))
    if (e.is_regular_file() && e.path().extension() == ".pgm") out.push_back(e.path());
  std::sort(out.begin(), out.end());
  return out;
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Monocular keyframe SLAM with epipolar-guided densification"};
  app.require_subcommand(1);

  RunOptions run;
  std::string config_path, densify, vocab_path;
  bool no_vocab = false, quiet = false;
  auto* run_cmd = app.add_subcommand("run", "Track and map a dataset directory");
  run_cmd->add_option("dataset", run.dataset, "Dataset directory")->required();
  run_cmd->add_option("-c,--config", config_path, "Configuration file");
  run_cmd->add_option("-o,--out", run.out_dir, "Output directory")->required();
  run_cmd->add_option("--densify", densify, "on|off, overrides the configuration")
      ->check(CLI::IsMember({"on", "off"}));
  run_cmd->add_flag("--deterministic", run.deterministic, "Single-threaded, reproducible run");
  run_cmd->add_option("--vocabulary", vocab_path, "Vocabulary file (default: shipped)");
  run_cmd->add_flag("--no-relocalization", no_vocab, "Run without a vocabulary");
  run_cmd->add_option("--max-frames", run.max_frames, "Process at most this many frames");
  run_cmd->add_flag("-q,--quiet", quiet, "No per-frame progress");

  std::string map_file, surface_file, axis_text = "0,0,1", gt_file, residual_csv, selection = "all";
  AlignmentGrid grid;
  double keep = 0.8;
  auto* eval_cmd = app.add_subcommand("eval-align", "Scale and roll alignment of a map to a surface");
  eval_cmd->add_option("map", map_file, "Exported map")->required();
  eval_cmd->add_option("surface", surface_file, "Reference mesh")->required();
  eval_cmd->add_option("--axis", axis_text, "Roll axis x,y,z");
  eval_cmd->add_option("--anchor-groundtruth", gt_file,
                       "Ground-truth trajectory; expresses the surface in the first keyframe's frame");
  eval_cmd->add_option("--points", selection, "all|orb|dense")
      ->check(CLI::IsMember({"all", "orb", "dense"}));
  eval_cmd->add_option("--lambda-min", grid.lambda_min);
  eval_cmd->add_option("--lambda-max", grid.lambda_max);
  eval_cmd->add_option("--lambda-steps", grid.lambda_steps);
  eval_cmd->add_flag("!--linear-scale", grid.log_scale, "Linear instead of log-spaced scales");
  eval_cmd->add_option("--theta-min", grid.theta_min_deg);
  eval_cmd->add_option("--theta-max", grid.theta_max_deg);
  eval_cmd->add_option("--theta-step", grid.theta_step_deg);
  eval_cmd->add_option("--refine", grid.refine_factor);
  eval_cmd->add_option("--keep", keep, "Fraction of residuals kept in the RMSE");
  eval_cmd->add_option("--residuals", residual_csv, "Per-point residual CSV output");

  std::string estimate_file, truth_file;
  bool rigid = false;
  auto* traj_cmd = app.add_subcommand("eval-trajectory", "Absolute trajectory error after alignment");
  traj_cmd->add_option("estimate", estimate_file)->required();
  traj_cmd->add_option("groundtruth", truth_file)->required();
  traj_cmd->add_flag("--rigid", rigid, "Align without scale");

  std::string preset = "hemisphere", synth_out;
  std::uint64_t seed = 1;
  int n_frames = -1;
  auto* synth_cmd = app.add_subcommand("synth", "Render a synthetic dataset");
  synth_cmd->add_option("--kind", preset, "Preset")->check(CLI::IsMember(dataset_preset_names()));
  synth_cmd->add_option("--seed", seed);
  synth_cmd->add_option("--frames", n_frames, "Override the preset's frame count");
  synth_cmd->add_option("-o,--out", synth_out)->required();

  std::string corpus, vocab_out;
  int k = 10, levels = 4, max_images = -1;
  std::uint64_t vocab_seed = 1;
  auto* vocab_cmd = app.add_subcommand("vocab", "Train a vocabulary from a directory of images");
  vocab_cmd->add_option("corpus", corpus)->required();
  vocab_cmd->add_option("-k,--branching", k);
  vocab_cmd->add_option("-L,--levels", levels);
  vocab_cmd->add_option("--seed", vocab_seed);
  vocab_cmd->add_option("--max-images", max_images);
  vocab_cmd->add_option("-o,--out", vocab_out)->required();

  std::string dump_config;
  auto* config_cmd = app.add_subcommand("config", "Configuration utilities");
  auto* dump_cmd = config_cmd->add_subcommand("dump", "Print the effective configuration");
  dump_cmd->add_option("config", dump_config, "Configuration file (defaults when absent)");
  config_cmd->require_subcommand(1);

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int rc = app.exit(e);
    return rc == 0 ? 0 : 2;
  }

  try {
    if (*run_cmd) {
      if (!config_path.empty()) run.config = config_path;
      if (!densify.empty()) run.densify = densify == "on";
      run.vocabulary = no_vocab ? std::filesystem::path()
                                : vocab_path.empty() ? default_vocabulary_path() : std::filesystem::path(vocab_path);
      if (!no_vocab && run.vocabulary.empty())
        std::cerr << "warning: no vocabulary found, relocalization disabled\n";
      if (!quiet)
        run.on_frame = [](const FrameReport& r) {
          std::fprintf(stderr, "frame %6llu %-12s inliers %4d semidense %4d%s%s\n",
                       static_cast<unsigned long long>(r.frame), to_string(r.status), r.n_inliers,
                       r.semidense, r.keyframe ? " keyframe" : "", r.relocalized ? " relocalized" : "");
        };
      const RunSummary s = run_dataset(run);
      std::cout << "tracked " << s.stats.tracked_frames << " of " << s.n_frames << " frames, "
                << s.stats.keyframes_created - s.stats.keyframes_culled << " keyframes, outputs in "
                << run.out_dir.string() << '\n'
                << format_timing(s.stats);
    } else if (*eval_cmd) {
      const MapExport map = load_map_export(map_file);
      TriangleMesh mesh = load_mesh(surface_file);
      if (!gt_file.empty()) mesh = anchor_mesh(mesh, map, load_trajectory(gt_file));
      const PointSelection sel = selection == "orb"     ? PointSelection::kOrb
                                 : selection == "dense" ? PointSelection::kDensified
                                                        : PointSelection::kAll;
      const std::vector<Point3> points = exported_points(map, sel);
      if (points.empty()) fail(ErrorCode::kInsufficientData, "no map points selected");
      const SurfaceIndex index(std::move(mesh));
      const AlignmentResult r = align_scale_roll(points, index, parse_axis(axis_text), grid, keep);
      std::cout << format_alignment_report(r, points.size());
      if (r.lambda_at_edge) std::cerr << "warning: best scale on the grid edge\n";
      if (!residual_csv.empty()) {
        std::string csv = "index,residual_mm\n";
        for (std::size_t i = 0; i < r.residuals.size(); ++i)
          csv += std::to_string(i) + ',' + format_double(r.residuals[i]) + '\n';
        write_text_file(residual_csv, csv);
      }
    } else if (*traj_cmd) {
      const TrajectoryError e =
          trajectory_error(load_trajectory(estimate_file), load_trajectory(truth_file), !rigid);
      std::cout << "ate_rmse=" << format_double(e.ate_rmse) << '\n'
                << "pairs=" << e.errors.size() << '\n'
                << "scale=" << format_double(e.alignment.scale) << '\n';
    } else if (*synth_cmd) {
      DatasetSpec spec = dataset_preset(preset, seed);
      if (n_frames > 0) spec.trajectory.n_frames = n_frames;
      write_dataset(spec, synth_out);
    } else if (*vocab_cmd) {
      std::vector<std::filesystem::path> images = corpus_images(corpus);
      if (max_images >= 0 && images.size() > static_cast<std::size_t>(max_images))
        images.resize(static_cast<std::size_t>(max_images));
      std::vector<std::vector<Descriptor256>> docs;
      const CameraModel identity_cam = [] {
        CameraModel c;
        c.fx = c.fy = 1.0;
        return c;
      }();
      const FrameOptions frame_opts = SystemConfig{}.frame_options();
      for (const auto& path : images) {
        GrayImage img = read_pgm(path);
        CameraModel cam = identity_cam;
        cam.width = img.width();
        cam.height = img.height();
        docs.push_back(make_frame(std::move(img), 0, 0.0, cam, frame_opts).descriptors);
      }
      const Vocabulary v = Vocabulary::train(docs, k, levels, vocab_seed);
      v.save(vocab_out);
      std::cout << "vocabulary with " << v.size() << " words from " << docs.size() << " images\n";
    } else if (*config_cmd) {
      const SystemConfig c = dump_config.empty() ? SystemConfig{} : load_config(dump_config);
      std::cout << format_config(c);
    }
  } catch (const Error& e) {
    std::cerr << "error: " << e.what() << '\n';
    return exit_code(e.code());
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << '\n';
    return 1;
  }
  return 0;
}
