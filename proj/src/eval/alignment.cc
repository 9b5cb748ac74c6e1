#include "endoslam/eval/alignment.h"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <queue>

#include "endoslam/util/error.h"

namespace endoslam {

double trimmed_rmse(std::vector<double> residuals, double keep) {
  if (residuals.empty()) fail(ErrorCode::kInvalidArgument, "no residuals");
  if (!(keep > 0.0 && keep <= 1.0)) fail(ErrorCode::kInvalidArgument, "keep must be in (0, 1]");
  const std::size_t n = std::max<std::size_t>(
      1, static_cast<std::size_t>(std::floor(keep * static_cast<double>(residuals.size()) + 1e-9)));
  std::nth_element(residuals.begin(), residuals.begin() + static_cast<long>(n - 1),
                   residuals.end());
  std::sort(residuals.begin(), residuals.begin() + static_cast<long>(n));
  double sum = 0.0;
  for (std::size_t i = 0; i < n; ++i) sum += residuals[i] * residuals[i];
  return std::sqrt(sum / static_cast<double>(n));
}

std::vector<double> AlignmentGrid::lambdas() const {
  if (lambda_steps < 1 || !(lambda_min > 0.0) || lambda_max < lambda_min)
    fail(ErrorCode::kEmptyGrid, "invalid scale grid");
  std::vector<double> out;
  for (int i = 0; i < lambda_steps; ++i) {
    const double t = lambda_steps == 1 ? 0.0 : static_cast<double>(i) / (lambda_steps - 1);
    out.push_back(log_scale ? lambda_min * std::pow(lambda_max / lambda_min, t)
                            : lambda_min + t * (lambda_max - lambda_min));
  }
  return out;
}

std::vector<double> AlignmentGrid::thetas_deg() const {
  if (!(theta_step_deg > 0.0)) fail(ErrorCode::kEmptyGrid, "invalid roll step");
  std::vector<double> out;
  for (long j = 0;; ++j) {
    const double t = theta_min_deg + static_cast<double>(j) * theta_step_deg;
    if (t >= theta_max_deg - 1e-9 * theta_step_deg) break;
    out.push_back(t);
  }
  if (out.empty()) fail(ErrorCode::kEmptyGrid, "empty roll grid");
  return out;
}

Mat3 roll_rotation(const Vec3& axis, double theta_deg) {
  return Eigen::AngleAxisd(theta_deg * std::numbers::pi / 180.0, axis.normalized())
      .toRotationMatrix();
}

double alignment_cost(const std::vector<Point3>& points, const SurfaceIndex& surface,
                      const Vec3& axis, double lambda, double theta_deg, double keep,
                      std::vector<double>* residuals) {
  const Mat3 m = lambda * roll_rotation(axis, theta_deg);
  std::vector<double> d(points.size());
  for (std::size_t i = 0; i < points.size(); ++i) d[i] = surface.closest(m * points[i]).distance;
  const double cost = trimmed_rmse(d, keep);
  if (residuals) *residuals = std::move(d);
  return cost;
}

namespace {

struct Box {
  std::size_t i0, i1, j0, j1;  // inclusive index ranges
  double lower = 0.0;
  std::vector<Point3> feet;  // closest surface points at the box center

  std::size_t ic() const { return (i0 + i1) / 2; }
  std::size_t jc() const { return (j0 + j1) / 2; }
  bool single() const { return i0 == i1 && j0 == j1; }
};

struct BoxOrder {
  bool operator()(const Box& a, const Box& b) const {
    if (a.lower != b.lower) return a.lower > b.lower;
    return std::tie(a.i0, a.j0) > std::tie(b.i0, b.j0);
  }
};

class GridSearch {
 public:
  GridSearch(const std::vector<Point3>& points, const SurfaceIndex& surface, const Vec3& axis,
             const std::vector<double>& lambdas, const std::vector<double>& thetas, double keep)
      : points_(points), surface_(surface), axis_(axis.normalized()), lambdas_(lambdas),
        thetas_(thetas), keep_(keep) {
    norms_.reserve(points.size());
    radial_.reserve(points.size());
    for (const auto& q : points) {
      norms_.push_back(q.norm());
      radial_.push_back((q - axis_.dot(q) * axis_).norm());
    }
  }

  GridOptimum run() {
    Box root{0, lambdas_.size() - 1, 0, thetas_.size() - 1, 0.0, {}};
    evaluate(root, nullptr);
    std::priority_queue<Box, std::vector<Box>, BoxOrder> queue;
    queue.push(std::move(root));
    while (!queue.empty()) {
      Box box = queue.top();
      queue.pop();
      if (prunable(box.lower)) break;
      if (box.single()) continue;
      Box a = box, b = box;
      if (box.i1 - box.i0 >= box.j1 - box.j0) {
        const std::size_t mid = box.i0 + (box.i1 - box.i0) / 2;
        a.i1 = mid;
        b.i0 = mid + 1;
      } else {
        const std::size_t mid = box.j0 + (box.j1 - box.j0) / 2;
        a.j1 = mid;
        b.j0 = mid + 1;
      }
      for (Box* child : {&a, &b}) {
        evaluate(*child, &box.feet);
        if (!prunable(child->lower) && !child->single()) queue.push(std::move(*child));
      }
    }
    return best_;
  }

  long evaluations() const { return evaluations_; }

 private:
  bool prunable(double lower) const {
    return lower > best_.cost * (1.0 + 1e-12) + 1e-12;
  }

  // Exact cost at the box center plus a lower bound over the whole box.
  void evaluate(Box& box, const std::vector<Point3>* hints) {
    const std::size_t ic = box.ic(), jc = box.jc();
    const double lc = lambdas_[ic];
    const Mat3 m = lc * roll_rotation(axis_, thetas_[jc]);
    std::vector<double> d(points_.size());
    box.feet.resize(points_.size());
    for (std::size_t k = 0; k < points_.size(); ++k) {
      const Point3 x = m * points_[k];
      const SurfacePoint sp = hints ? surface_.closest(x, (*hints)[k]) : surface_.closest(x);
      d[k] = sp.distance;
      box.feet[k] = sp.point;
    }
    ++evaluations_;
    const double cost = trimmed_rmse(d, keep_);
    if (evaluations_ == 1 || cost < best_.cost ||
        (cost == best_.cost && std::tie(ic, jc) < std::tie(best_.lambda_index, best_.theta_index)))
      best_ = {ic, jc, cost};
    if (box.single()) {
      box.lower = cost;
      return;
    }
    const double dl = std::max(lc - lambdas_[box.i0], lambdas_[box.i1] - lc);
    const double dt_deg = std::max(thetas_[jc] - thetas_[box.j0], thetas_[box.j1] - thetas_[jc]);
    const double chord = 2.0 * std::sin(std::min(dt_deg * std::numbers::pi / 360.0,
                                                 std::numbers::pi / 2));
    for (std::size_t k = 0; k < d.size(); ++k)
      d[k] = std::max(0.0, d[k] - (dl * norms_[k] + lc * chord * radial_[k]));
    box.lower = trimmed_rmse(std::move(d), keep_);
  }

  const std::vector<Point3>& points_;
  const SurfaceIndex& surface_;
  Vec3 axis_;
  const std::vector<double>& lambdas_;
  const std::vector<double>& thetas_;
  double keep_;
  std::vector<double> norms_, radial_;
  GridOptimum best_;
  long evaluations_ = 0;
};

}  // namespace

GridOptimum grid_search(const std::vector<Point3>& points, const SurfaceIndex& surface,
                        const Vec3& axis, const std::vector<double>& lambdas,
                        const std::vector<double>& thetas_deg, double keep, long* evaluations) {
  if (lambdas.empty() || thetas_deg.empty()) fail(ErrorCode::kEmptyGrid, "empty grid");
  if (points.empty()) fail(ErrorCode::kInvalidArgument, "no points to align");
  GridSearch search(points, surface, axis, lambdas, thetas_deg, keep);
  const GridOptimum best = search.run();
  if (evaluations) *evaluations += search.evaluations();
  return best;
}

GridOptimum grid_search_brute_force(const std::vector<Point3>& points,
                                    const SurfaceIndex& surface, const Vec3& axis,
                                    const std::vector<double>& lambdas,
                                    const std::vector<double>& thetas_deg, double keep) {
  if (lambdas.empty() || thetas_deg.empty()) fail(ErrorCode::kEmptyGrid, "empty grid");
  GridOptimum best{0, 0, std::numeric_limits<double>::infinity()};
  for (std::size_t i = 0; i < lambdas.size(); ++i)
    for (std::size_t j = 0; j < thetas_deg.size(); ++j) {
      const double c = alignment_cost(points, surface, axis, lambdas[i], thetas_deg[j], keep);
      if (c < best.cost) best = {i, j, c};
    }
  return best;
}

AlignmentResult align_scale_roll(const std::vector<Point3>& points,
                                 const SurfaceIndex& surface, const Vec3& axis,
                                 const AlignmentGrid& grid, double keep) {
  if (points.empty()) fail(ErrorCode::kInvalidArgument, "no points to align");
  if (!(axis.norm() > 0.0)) fail(ErrorCode::kInvalidArgument, "zero roll axis");
  const std::vector<double> lambdas = grid.lambdas();
  const std::vector<double> thetas = grid.thetas_deg();
  AlignmentResult r;
  r.kept_fraction = keep;
  const GridOptimum coarse = grid_search(points, surface, axis, lambdas, thetas, keep, &r.evaluations);
  r.coarse_lambda = lambdas[coarse.lambda_index];
  r.coarse_theta_deg = thetas[coarse.theta_index];
  r.coarse_rmse = coarse.cost;
  r.lambda_at_edge = lambdas.size() > 1 &&
                     (coarse.lambda_index == 0 || coarse.lambda_index + 1 == lambdas.size());

  // Refinement: one coarse step either side, subdivided.
  const int f = std::max(1, grid.refine_factor);
  std::vector<double> fine_l, fine_t;
  const std::size_t i = coarse.lambda_index;
  for (int k = -f; k <= f; ++k) {
    double v;
    if (k < 0) {
      if (i == 0) continue;
      v = grid.log_scale
              ? lambdas[i] * std::pow(lambdas[i - 1] / lambdas[i], static_cast<double>(-k) / f)
              : lambdas[i] + (lambdas[i - 1] - lambdas[i]) * (-k) / f;
    } else if (k > 0) {
      if (i + 1 >= lambdas.size()) continue;
      v = grid.log_scale
              ? lambdas[i] * std::pow(lambdas[i + 1] / lambdas[i], static_cast<double>(k) / f)
              : lambdas[i] + (lambdas[i + 1] - lambdas[i]) * k / f;
    } else {
      v = lambdas[i];
    }
    fine_l.push_back(v);
  }
  for (int k = -f; k <= f; ++k)
    fine_t.push_back(r.coarse_theta_deg + grid.theta_step_deg * k / f);
  const GridOptimum fine = grid_search(points, surface, axis, fine_l, fine_t, keep, &r.evaluations);
  r.lambda = fine_l[fine.lambda_index];
  r.theta_deg = fine_t[fine.theta_index];
  r.rmse = alignment_cost(points, surface, axis, r.lambda, r.theta_deg, keep, &r.residuals);
  // Report roll in [-180, 180).
  r.theta_deg = std::remainder(r.theta_deg, 360.0);
  if (r.theta_deg >= 180.0) r.theta_deg -= 360.0;
  return r;
}

}  // namespace endoslam
