#include "endoslam/system/runner.h"

#include <cmath>
#include <cstdio>
#include <sstream>

#include "endoslam/image/image.h"
#include "endoslam/synth/dataset.h"
#include "endoslam/util/error.h"
#include "endoslam/util/strings.h"

namespace endoslam {

namespace {

// Files written by a run; removed again unless the run completes.
class OutputGuard {
 public:
  explicit OutputGuard(std::filesystem::path dir) : dir_(std::move(dir)) {}
  ~OutputGuard() {
    if (committed_) return;
    std::error_code ec;
    for (const auto& f : files_) std::filesystem::remove(f, ec);
    if (created_dir_) std::filesystem::remove(dir_, ec);
  }
  void prepare() {
    std::error_code ec;
    if (!std::filesystem::exists(dir_)) {
      std::filesystem::create_directories(dir_, ec);
      if (ec) fail(ErrorCode::kIo, "cannot create output directory " + dir_.string());
      created_dir_ = true;
    }
  }
  void write(const std::string& name, const std::string& text) {
    files_.push_back(dir_ / name);
    write_text_file(dir_ / name, text);
  }
  void commit() { committed_ = true; }

 private:
  std::filesystem::path dir_;
  std::vector<std::filesystem::path> files_;
  bool created_dir_ = false;
  bool committed_ = false;
};

}  // namespace

std::filesystem::path default_vocabulary_path() {
  const std::filesystem::path p = std::filesystem::path(ENDOSLAM_DATA_DIR) / "vocabulary.esv";
  return std::filesystem::exists(p) ? p : std::filesystem::path();
}

RunSummary run_dataset(const RunOptions& options) {
  SystemConfig config = options.config ? load_config(*options.config) : SystemConfig{};
  if (options.densify) config.densify = *options.densify;
  const Dataset ds = open_dataset(options.dataset);
  std::shared_ptr<const Vocabulary> vocab;
  if (!options.vocabulary.empty())
    vocab = std::make_shared<const Vocabulary>(Vocabulary::load(options.vocabulary));

  OutputGuard out(options.out_dir);
  out.prepare();
  RunSummary summary;
  {
    SlamSystem slam(ds.camera, config, vocab, !options.deterministic);
    std::size_t n = ds.frames.size();
    if (options.max_frames >= 0) n = std::min(n, static_cast<std::size_t>(options.max_frames));
    for (std::size_t k = 0; k < n; ++k) {
      GrayImage image = read_pgm(ds.frames[k]);
      if (image.width() != ds.camera.width || image.height() != ds.camera.height)
        fail(ErrorCode::kInvalidArgument, ds.frames[k].string() + " does not match the calibration size");
      const FrameReport r = slam.process(std::move(image), ds.timestamps[k]);
      if (options.on_frame) options.on_frame(r);
    }
    slam.finish();
    summary.n_frames = n;
    summary.stats = slam.stats();
    summary.trajectory = slam.trajectory();
    out.write("trajectory.txt", format_trajectory(summary.trajectory));
    out.write("map.txt", slam.map_export());
  }
  out.write("stats.txt", format_stats(summary.stats, config, !options.deterministic));
  out.write("timing.txt", format_timing(summary.stats));
  out.commit();
  return summary;
}

std::vector<Point3> exported_points(const MapExport& map, PointSelection selection) {
  std::vector<Point3> out;
  for (const ExportedPoint& p : map.points) {
    if (selection == PointSelection::kOrb && p.provenance != Provenance::kOrbTriangulated) continue;
    if (selection == PointSelection::kDensified && p.provenance != Provenance::kDensified) continue;
    out.push_back(p.position);
  }
  return out;
}

TriangleMesh anchor_mesh(const TriangleMesh& mesh, const MapExport& map, const Trajectory& groundtruth) {
  if (map.keyframes.empty()) fail(ErrorCode::kInsufficientData, "map has no keyframes");
  const ExportedKeyFrame* first = &map.keyframes.front();
  for (const auto& k : map.keyframes)
    if (k.id < first->id) first = &k;
  for (const StampedPose& g : groundtruth)
    if (std::abs(g.timestamp - first->timestamp) <= 1e-6) return mesh.transformed(g.pose);
  fail(ErrorCode::kInvalidArgument, "no ground-truth pose at the first keyframe's timestamp");
}

std::string format_alignment_report(const AlignmentResult& r, std::size_t n_points) {
  std::ostringstream out;
  out << "scale " << format_double(r.lambda) << ", roll " << format_double(r.theta_deg)
      << " deg, trimmed rmse " << format_double(r.rmse) << " mm over " << n_points << " points\n";
  if (r.lambda_at_edge)
    out << "warning: the best scale lies on the edge of the scale grid; widen the range\n";
  out << "lambda=" << format_double(r.lambda) << '\n'
      << "theta_deg=" << format_double(r.theta_deg) << '\n'
      << "rmse_mm=" << format_double(r.rmse) << '\n'
      << "n_points=" << n_points << '\n'
      << "kept_fraction=" << format_double(r.kept_fraction) << '\n';
  return out.str();
}

}  // namespace endoslam
