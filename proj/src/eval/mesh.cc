#include "endoslam/eval/mesh.h"

#include <algorithm>
#include <limits>
#include <numeric>
#include <sstream>

#include "endoslam/util/error.h"
#include "endoslam/util/strings.h"

namespace endoslam {

void TriangleMesh::validate() const {
  const int n = static_cast<int>(vertices.size());
  for (std::size_t f = 0; f < faces.size(); ++f) {
    for (int i : faces[f])
      if (i < 0 || i >= n)
        fail(ErrorCode::kInvalidArgument, "face " + std::to_string(f) + " index out of range");
    const Vec3 e1 = vertices[faces[f][1]] - vertices[faces[f][0]];
    const Vec3 e2 = vertices[faces[f][2]] - vertices[faces[f][0]];
    if (!(e1.cross(e2).norm() > 0.0))
      fail(ErrorCode::kInvalidArgument, "face " + std::to_string(f) + " is degenerate");
  }
}

TriangleMesh TriangleMesh::transformed(const Pose& pose) const {
  TriangleMesh out = *this;
  for (auto& v : out.vertices) v = pose.transform(v);
  return out;
}

std::string format_mesh(const TriangleMesh& mesh) {
  std::ostringstream out;
  for (const auto& v : mesh.vertices)
    out << "v " << format_double(v.x()) << ' ' << format_double(v.y()) << ' '
        << format_double(v.z()) << '\n';
  for (const auto& f : mesh.faces)
    out << "f " << f[0] + 1 << ' ' << f[1] + 1 << ' ' << f[2] + 1 << '\n';
  return out.str();
}

TriangleMesh parse_mesh(const std::string& text) {
  TriangleMesh mesh;
  std::istringstream in(text);
  std::string line;
  int line_no = 0;
  const auto bad = [&](const char* why) {
    fail(ErrorCode::kParse, std::string("mesh line ") + std::to_string(line_no) + ": " + why);
  };
  while (std::getline(in, line)) {
    ++line_no;
    const std::string t = trim(line);
    if (t.empty() || t[0] == '#') continue;
    const auto f = split_whitespace(t);
    if (f[0] == "v") {
      if (f.size() != 4) bad("expected 3 coordinates");
      Point3 p;
      for (int i = 0; i < 3; ++i) {
        const auto d = parse_double(f[i + 1]);
        if (!d) bad("bad coordinate");
        p[i] = *d;
      }
      mesh.vertices.push_back(p);
    } else if (f[0] == "f") {
      if (f.size() != 4) bad("expected 3 indices");
      std::array<int, 3> face{};
      for (int i = 0; i < 3; ++i) {
        // Accept "i/t/n" forms by keeping the vertex index.
        const std::string head = f[i + 1].substr(0, f[i + 1].find('/'));
        const auto k = parse_int(head);
        if (!k || *k < 1) bad("bad index");
        face[i] = static_cast<int>(*k - 1);
      }
      mesh.faces.push_back(face);
    } else {
      bad("unknown record");
    }
  }
  if (mesh.faces.empty()) fail(ErrorCode::kParse, "mesh has no faces");
  try {
    mesh.validate();
  } catch (const Error& e) {
    fail(ErrorCode::kParse, e.what());
  }
  return mesh;
}

TriangleMesh load_mesh(const std::filesystem::path& path) {
  return parse_mesh(read_text_file(path));
}

void save_mesh(const TriangleMesh& mesh, const std::filesystem::path& path) {
  write_text_file(path, format_mesh(mesh));
}

// Region-based closest point (Ericson, Real-Time Collision Detection 5.1.5).
Point3 closest_point_on_triangle(const Point3& p, const Point3& a, const Point3& b,
                                 const Point3& c) {
  const Vec3 ab = b - a, ac = c - a, ap = p - a;
  const double d1 = ab.dot(ap), d2 = ac.dot(ap);
  if (d1 <= 0 && d2 <= 0) return a;
  const Vec3 bp = p - b;
  const double d3 = ab.dot(bp), d4 = ac.dot(bp);
  if (d3 >= 0 && d4 <= d3) return b;
  const double vc = d1 * d4 - d3 * d2;
  if (vc <= 0 && d1 >= 0 && d3 <= 0) return a + (d1 / (d1 - d3)) * ab;
  const Vec3 cp = p - c;
  const double d5 = ab.dot(cp), d6 = ac.dot(cp);
  if (d6 >= 0 && d5 <= d6) return c;
  const double vb = d5 * d2 - d1 * d6;
  if (vb <= 0 && d2 >= 0 && d6 <= 0) return a + (d2 / (d2 - d6)) * ac;
  const double va = d3 * d6 - d5 * d4;
  if (va <= 0 && (d4 - d3) >= 0 && (d5 - d6) >= 0)
    return b + ((d4 - d3) / ((d4 - d3) + (d5 - d6))) * (c - b);
  const double denom = 1.0 / (va + vb + vc);
  return a + ab * (vb * denom) + ac * (vc * denom);
}

SurfacePoint closest_point_brute_force(const Point3& p, const TriangleMesh& mesh) {
  SurfacePoint best;
  double best2 = std::numeric_limits<double>::infinity();
  for (std::size_t f = 0; f < mesh.faces.size(); ++f) {
    const auto& t = mesh.faces[f];
    const Point3 q =
        closest_point_on_triangle(p, mesh.vertices[t[0]], mesh.vertices[t[1]], mesh.vertices[t[2]]);
    const double d2 = (q - p).squaredNorm();
    if (d2 < best2) {
      best2 = d2;
      best = {q, 0.0, static_cast<int>(f)};
    }
  }
  best.distance = std::sqrt(best2);
  return best;
}

namespace {

constexpr int kLeafSize = 4;

double box_distance2(const Point3& p, const Vec3& lo, const Vec3& hi) {
  const Vec3 d = (lo - p).cwiseMax(p - hi).cwiseMax(0.0);
  return d.squaredNorm();
}

}  // namespace

SurfaceIndex::SurfaceIndex(TriangleMesh mesh) : mesh_(std::move(mesh)) {
  if (mesh_.faces.empty()) fail(ErrorCode::kInvalidArgument, "surface has no faces");
  mesh_.validate();
  order_.resize(mesh_.faces.size());
  std::iota(order_.begin(), order_.end(), 0);
  nodes_.reserve(2 * mesh_.faces.size() / kLeafSize + 2);
  build(0, static_cast<int>(order_.size()), 0);
  for (int f : order_) {
    const auto& t = mesh_.faces[f];
    const Vec3 n = (mesh_.vertices[t[1]] - mesh_.vertices[t[0]])
                       .cross(mesh_.vertices[t[2]] - mesh_.vertices[t[0]])
                       .normalized();
    normals_.push_back(n);
    offsets_.push_back(n.dot(mesh_.vertices[t[0]]));
  }
}

int SurfaceIndex::build(int first, int count, int depth) {
  const int id = static_cast<int>(nodes_.size());
  nodes_.emplace_back();
  Vec3 lo = Vec3::Constant(std::numeric_limits<double>::infinity()), hi = -lo;
  Vec3 clo = lo, chi = hi;
  for (int i = first; i < first + count; ++i) {
    const auto& f = mesh_.faces[order_[i]];
    Vec3 centroid = Vec3::Zero();
    for (int v : f) {
      lo = lo.cwiseMin(mesh_.vertices[v]);
      hi = hi.cwiseMax(mesh_.vertices[v]);
      centroid += mesh_.vertices[v] / 3.0;
    }
    clo = clo.cwiseMin(centroid);
    chi = chi.cwiseMax(centroid);
  }
  nodes_[id].lo = lo;
  nodes_[id].hi = hi;
  if (count <= kLeafSize || depth > 60) {
    nodes_[id].first = first;
    nodes_[id].count = count;
    return id;
  }
  int axis = 0;
  (chi - clo).maxCoeff(&axis);
  const auto centroid = [&](int f) {
    const auto& t = mesh_.faces[f];
    return mesh_.vertices[t[0]][axis] + mesh_.vertices[t[1]][axis] + mesh_.vertices[t[2]][axis];
  };
  const int half = count / 2;
  std::nth_element(order_.begin() + first, order_.begin() + first + half,
                   order_.begin() + first + count, [&](int a, int b) {
                     const double ca = centroid(a), cb = centroid(b);
                     return ca != cb ? ca < cb : a < b;
                   });
  const int left = build(first, half, depth + 1);
  const int right = build(first + half, count - half, depth + 1);
  nodes_[id].left = left;
  nodes_[id].right = right;
  return id;
}

SurfacePoint SurfaceIndex::search(const Point3& p, double bound2) const {
  SurfacePoint best;
  double best2 = bound2;
  int stack[128];
  int top = 0;
  stack[top++] = 0;
  while (top > 0) {
    const Node& node = nodes_[stack[--top]];
    if (box_distance2(p, node.lo, node.hi) > best2) continue;
    if (node.count > 0) {
      for (int i = node.first; i < node.first + node.count; ++i) {
        // The plane distance bounds the triangle distance from below.
        const double plane = normals_[i].dot(p) - offsets_[i];
        if (plane * plane > best2) continue;
        const auto& t = mesh_.faces[order_[i]];
        const Point3 q = closest_point_on_triangle(p, mesh_.vertices[t[0]], mesh_.vertices[t[1]],
                                                   mesh_.vertices[t[2]]);
        const double d2 = (q - p).squaredNorm();
        if (d2 < best2 || (d2 == best2 && best.face < 0) ||
            (d2 == best2 && order_[i] < best.face)) {
          best2 = d2;
          best = {q, 0.0, order_[i]};
        }
      }
      continue;
    }
    const double dl = box_distance2(p, nodes_[node.left].lo, nodes_[node.left].hi);
    const double dr = box_distance2(p, nodes_[node.right].lo, nodes_[node.right].hi);
    // Push the farther child first so the nearer one is searched first.
    if (dl <= dr) {
      stack[top++] = node.right;
      stack[top++] = node.left;
    } else {
      stack[top++] = node.left;
      stack[top++] = node.right;
    }
  }
  best.distance = std::sqrt(best2);
  return best;
}

SurfacePoint SurfaceIndex::closest(const Point3& p) const {
  return search(p, std::numeric_limits<double>::infinity());
}

SurfacePoint SurfaceIndex::closest(const Point3& p, const Point3& hint) const {
  // The hint lies on the surface, so its distance bounds the true minimum.
  // A slightly inflated bound keeps the exact minimizer reachable.
  const double d2 = (hint - p).squaredNorm();
  SurfacePoint r = search(p, d2 * (1.0 + 1e-9) + 1e-300);
  if (r.face < 0) r = closest(p);
  return r;
}

}  // namespace endoslam
