#include "endoslam/tracking/trajectory.h"

#include <sstream>

#include "endoslam/util/error.h"
#include "endoslam/util/strings.h"

namespace endoslam {

std::string format_trajectory(const Trajectory& trajectory) {
  std::ostringstream out;
  for (const auto& s : trajectory) {
    const Pose twc = s.pose.inverse();
    const Eigen::Quaterniond q = twc.quaternion();
    out << format_double(s.timestamp) << ' ' << format_double(twc.translation.x()) << ' '
        << format_double(twc.translation.y()) << ' ' << format_double(twc.translation.z())
        << ' ' << format_double(q.x()) << ' ' << format_double(q.y()) << ' '
        << format_double(q.z()) << ' ' << format_double(q.w()) << '\n';
  }
  return out.str();
}

Trajectory parse_trajectory(const std::string& text) {
  Trajectory out;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto f = split_whitespace(t);
    if (f.size() != 8) fail(ErrorCode::kParse, "trajectory line " + std::to_string(line_no));
    double v[8];
    for (int i = 0; i < 8; ++i) {
      const auto d = parse_double(f[i]);
      if (!d) fail(ErrorCode::kParse, "trajectory line " + std::to_string(line_no));
      v[i] = *d;
    }
    const Eigen::Quaterniond q(v[7], v[4], v[5], v[6]);
    if (std::abs(q.norm() - 1.0) > 1e-3)
      fail(ErrorCode::kParse, "non-unit quaternion on trajectory line " + std::to_string(line_no));
    out.push_back({v[0], Pose::from_quaternion(q.normalized(), Vec3(v[1], v[2], v[3])).inverse()});
  }
  return out;
}

Trajectory load_trajectory(const std::filesystem::path& path) {
  return parse_trajectory(read_text_file(path));
}

void save_trajectory(const Trajectory& trajectory, const std::filesystem::path& path) {
  write_text_file(path, format_trajectory(trajectory));
}

}  // namespace endoslam
