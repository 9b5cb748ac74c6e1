#include "endoslam/geometry/camera.h"

#include <charconv>
#include <cmath>
#include <fstream>
#include <limits>
#include <map>
#include <sstream>

#include "endoslam/util/error.h"
#include "endoslam/util/strings.h"

namespace endoslam {
namespace {

constexpr int kUndistortIterations = 10;
constexpr double kUndistortTolerance = 1e-8;

}  // namespace

void CameraModel::validate() const {
  if (!(fx > 0.0) || !(fy > 0.0))
    fail(ErrorCode::kInvalidArgument, "focal lengths must be positive");
  if (width <= 0 || height <= 0)
    fail(ErrorCode::kInvalidArgument, "image size must be positive");
  if (!(cx > 0.0 && cx < width) || !(cy > 0.0 && cy < height))
    fail(ErrorCode::kInvalidArgument, "principal point outside the image");
}

Vec2 CameraModel::distort(const Vec2& xn) const {
  const double x = xn.x(), y = xn.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (k1 + r2 * k2);
  return {x * radial + 2.0 * p1 * x * y + p2 * (r2 + 2.0 * x * x),
          y * radial + p1 * (r2 + 2.0 * y * y) + 2.0 * p2 * x * y};
}

Eigen::Matrix2d CameraModel::distort_jacobian(const Vec2& xn) const {
  const double x = xn.x(), y = xn.y();
  const double r2 = x * x + y * y;
  const double radial = 1.0 + r2 * (k1 + r2 * k2);
  const double dradial = k1 + 2.0 * k2 * r2;  // d(radial)/d(r2)
  Eigen::Matrix2d j;
  j(0, 0) = radial + 2.0 * x * x * dradial + 2.0 * p1 * y + 6.0 * p2 * x;
  j(0, 1) = 2.0 * x * y * dradial + 2.0 * p1 * x + 2.0 * p2 * y;
  j(1, 0) = 2.0 * x * y * dradial + 2.0 * p1 * x + 2.0 * p2 * y;
  j(1, 1) = radial + 2.0 * y * y * dradial + 6.0 * p1 * y + 2.0 * p2 * x;
  return j;
}

std::optional<Vec2> CameraModel::undistort(const Vec2& xd) const {
  if (!has_distortion()) return xd;
  Vec2 x = xd;
  double step = std::numeric_limits<double>::infinity();
  for (int it = 0; it < kUndistortIterations; ++it) {
    const Vec2 residual = distort(x) - xd;
    const Eigen::Matrix2d j = distort_jacobian(x);
    const double det = j.determinant();
    if (!(std::abs(det) > 1e-12)) return std::nullopt;
    const Vec2 dx = j.inverse() * residual;
    x -= dx;
    step = dx.norm();
    if (step < 1e-15) break;
  }
  if (!(step <= kUndistortTolerance) || x.squaredNorm() > max_radius2())
    return std::nullopt;
  return x;
}

double CameraModel::max_radius2() const {
  // d/dr [r (1 + k1 r^2 + k2 r^4)] = 1 + 3 k1 s + 5 k2 s^2 with s = r^2.
  const double a = 5.0 * k2, b = 3.0 * k1, c = 1.0;
  double limit = std::numeric_limits<double>::infinity();
  if (std::abs(a) < 1e-300) {
    if (b < 0.0) limit = -c / b;
  } else {
    const double disc = b * b - 4.0 * a * c;
    if (disc >= 0.0) {
      const double sq = std::sqrt(disc);
      for (double root : {(-b - sq) / (2.0 * a), (-b + sq) / (2.0 * a)})
        if (root > 0.0) limit = std::min(limit, root);
    }
  }
  // Keep a safety band below the fold.
  return std::isfinite(limit) ? 0.9 * limit : limit;
}

std::optional<Pixel> CameraModel::project_camera(const Vec3& pc) const {
  if (!(pc.z() > 0.0)) return std::nullopt;
  const Vec2 xn(pc.x() / pc.z(), pc.y() / pc.z());
  if (has_distortion() && xn.squaredNorm() > max_radius2()) return std::nullopt;
  return normalized_to_pixel(xn);
}

Mat23 CameraModel::projection_jacobian(const Vec3& pc) const {
  const double iz = 1.0 / pc.z();
  const Vec2 xn(pc.x() * iz, pc.y() * iz);
  Mat23 dxn;
  dxn << iz, 0.0, -xn.x() * iz,
         0.0, iz, -xn.y() * iz;
  const Eigen::Matrix2d dd = distort_jacobian(xn);
  Eigen::Matrix2d k;
  k << fx, 0.0, 0.0, fy;
  return k * dd * dxn;
}

Pixel CameraModel::normalized_to_pixel(const Vec2& xn) const {
  const Vec2 xd = distort(xn);
  return {fx * xd.x() + cx, fy * xd.y() + cy};
}

std::optional<Vec2> CameraModel::pixel_to_normalized(const Pixel& px) const {
  const Vec2 xd((px.x() - cx) / fx, (px.y() - cy) / fy);
  return undistort(xd);
}

std::optional<Pixel> project(const Point3& p, const Pose& pose,
                             const CameraModel& cam, double margin) {
  const auto px = cam.project_camera(pose.transform(p));
  if (!px || !cam.in_bounds(*px, margin)) return std::nullopt;
  return px;
}

std::optional<Vec3> unproject(const Pixel& px, const CameraModel& cam) {
  if (!cam.in_bounds(px)) return std::nullopt;
  const auto xn = cam.pixel_to_normalized(px);
  if (!xn) return std::nullopt;
  return Vec3(xn->x(), xn->y(), 1.0).normalized();
}

CameraModel parse_calibration(const std::string& text) {
  static const char* kKeys[] = {"fx", "fy", "cx", "cy", "k1",
                                "k2", "p1", "p2", "width", "height"};
  std::map<std::string, double> values;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string trimmed = trim(line);
    if (trimmed.empty() || trimmed[0] == '#') continue;
    const auto eq = trimmed.find('=');
    if (eq == std::string::npos)
      fail(ErrorCode::kParse, "calibration line " + std::to_string(line_no) +
                                  ": expected key=value");
    const std::string key = trim(trimmed.substr(0, eq));
    const std::string value = trim(trimmed.substr(eq + 1));
    if (std::find(std::begin(kKeys), std::end(kKeys), key) == std::end(kKeys))
      fail(ErrorCode::kParse, "calibration: unknown key '" + key + "'");
    if (values.count(key))
      fail(ErrorCode::kParse, "calibration: duplicate key '" + key + "'");
    const auto number = parse_double(value);
    if (!number)
      fail(ErrorCode::kParse, "calibration: bad value for '" + key + "'");
    values[key] = *number;
  }
  CameraModel cam;
  const auto get = [&](const char* key, bool required, double fallback) {
    const auto it = values.find(key);
    if (it == values.end()) {
      if (required)
        fail(ErrorCode::kParse, std::string("calibration: missing key '") + key + "'");
      return fallback;
    }
    return it->second;
  };
  cam.fx = get("fx", true, 0.0);
  cam.fy = get("fy", true, 0.0);
  cam.cx = get("cx", true, 0.0);
  cam.cy = get("cy", true, 0.0);
  cam.k1 = get("k1", false, 0.0);
  cam.k2 = get("k2", false, 0.0);
  cam.p1 = get("p1", false, 0.0);
  cam.p2 = get("p2", false, 0.0);
  const double w = get("width", true, 0.0);
  const double h = get("height", true, 0.0);
  if (w != std::floor(w) || h != std::floor(h))
    fail(ErrorCode::kParse, "calibration: width/height must be integers");
  cam.width = static_cast<int>(w);
  cam.height = static_cast<int>(h);
  try {
    cam.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kParse, std::string("calibration: ") + e.what());
  }
  return cam;
}

CameraModel load_calibration(const std::filesystem::path& path) {
  return parse_calibration(read_text_file(path));
}

std::string format_calibration(const CameraModel& cam) {
  std::ostringstream out;
  out.precision(17);
  out << "fx=" << cam.fx << "\nfy=" << cam.fy << "\ncx=" << cam.cx
      << "\ncy=" << cam.cy << "\nk1=" << cam.k1 << "\nk2=" << cam.k2
      << "\np1=" << cam.p1 << "\np2=" << cam.p2 << "\nwidth=" << cam.width
      << "\nheight=" << cam.height << "\n";
  return out.str();
}

void save_calibration(const CameraModel& cam, const std::filesystem::path& path) {
  write_text_file(path, format_calibration(cam));
}

}  // namespace endoslam
