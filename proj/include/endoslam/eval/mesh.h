#pragma once

#include <array>
#include <filesystem>
#include <string>
#include <vector>

#include "endoslam/geometry/pose.h"
#include "endoslam/geometry/types.h"

namespace endoslam {

// Triangle mesh in millimeters.
struct TriangleMesh {
  std::vector<Point3> vertices;
  std::vector<std::array<int, 3>> faces;  // 0-based vertex indices

  // Throws kInvalidArgument on out-of-range indices or zero-area faces.
  void validate() const;
  // Copy with every vertex mapped through `pose`.
  TriangleMesh transformed(const Pose& pose) const;
};

// ASCII mesh: "v x y z" and "f i j k" lines, 1-based indices. Other lines
// starting with '#' or blank are ignored.
std::string format_mesh(const TriangleMesh& mesh);
TriangleMesh parse_mesh(const std::string& text);
TriangleMesh load_mesh(const std::filesystem::path& path);
void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path);

// Closest point of triangle abc to p.
Point3 closest_point_on_triangle(const Point3& p, const Point3& a, const Point3& b,
                                 const Point3& c);

struct SurfacePoint {
  Point3 point = Point3::Zero();
  double distance = 0.0;
  int face = -1;
};

// Exhaustive scan over all faces; the reference for SurfaceIndex.
SurfacePoint closest_point_brute_force(const Point3& p, const TriangleMesh& mesh);

// Bounding-volume hierarchy over the faces of a mesh.
class SurfaceIndex {
 public:
  explicit SurfaceIndex(TriangleMesh mesh);

  const TriangleMesh& mesh() const { return mesh_; }
  SurfacePoint closest(const Point3& p) const;
  // Same result, with `hint` a surface point believed to be close to p; its
  // distance seeds the pruning bound.
  SurfacePoint closest(const Point3& p, const Point3& hint) const;

 private:
  struct Node {
    Vec3 lo, hi;
    int first = 0, count = 0;  // leaf range into order_ when count > 0
    int left = -1, right = -1;
  };
  int build(int first, int count, int depth);
  SurfacePoint search(const Point3& p, double bound2) const;

  TriangleMesh mesh_;
  // Unit normal and offset of each face plane, in leaf order.
  std::vector<Vec3> normals_;
  std::vector<double> offsets_;
  std::vector<int> order_;
  std::vector<Node> nodes_;
};

}  // namespace endoslam
