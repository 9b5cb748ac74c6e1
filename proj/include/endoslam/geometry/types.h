#pragma once

#include <Eigen/Core>
#include <vector>

namespace endoslam {

// World-frame point, scene units.
using Point3 = Eigen::Vector3d;
// Image position in pixels, (u, v).
using Pixel = Eigen::Vector2d;

using Vec2 = Eigen::Vector2d;
using Vec3 = Eigen::Vector3d;
using Vec6 = Eigen::Matrix<double, 6, 1>;
using Mat3 = Eigen::Matrix3d;
using Mat23 = Eigen::Matrix<double, 2, 3>;
using Mat26 = Eigen::Matrix<double, 2, 6>;
using Mat6 = Eigen::Matrix<double, 6, 6>;

}  // namespace endoslam
