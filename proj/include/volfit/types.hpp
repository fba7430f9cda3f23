#pragma once

#include <cstdint>
#include <limits>
#include <vector>

#include <Eigen/Core>
#include <Eigen/Geometry>

namespace volfit {

template <typename Scalar>
using Vec2 = Eigen::Matrix<Scalar, 2, 1>;
template <typename Scalar>
using Vec3 = Eigen::Matrix<Scalar, 3, 1>;
template <typename Scalar>
using Mat3 = Eigen::Matrix<Scalar, 3, 3>;

using Vec2d = Vec2<double>;
using Vec3d = Vec3<double>;
using Vec3i = Eigen::Vector3i;
using Mat3d = Mat3<double>;

// N x 3 point clouds, one point per row (meters).
template <typename Scalar>
using PointsT = Eigen::Matrix<Scalar, Eigen::Dynamic, 3, Eigen::RowMajor>;
using Points = PointsT<double>;
using Points2 = Eigen::Matrix<double, Eigen::Dynamic, 2, Eigen::RowMajor>;

// Triangle vertex-index triples, one face per row.
using Faces = Eigen::Matrix<int, Eigen::Dynamic, 3, Eigen::RowMajor>;

using IndexList = std::vector<int>;

struct Aabb {
    Vec3d min = Vec3d::Constant(std::numeric_limits<double>::infinity());
    Vec3d max = Vec3d::Constant(-std::numeric_limits<double>::infinity());

    void extend(const Vec3d& p) {
        min = min.cwiseMin(p);
        max = max.cwiseMax(p);
    }
    void extend(const Aabb& o) {
        min = min.cwiseMin(o.min);
        max = max.cwiseMax(o.max);
    }
    bool empty() const { return (min.array() > max.array()).any(); }
    Vec3d center() const { return 0.5 * (min + max); }
    Vec3d extent() const { return max - min; }
    // Squared distance from p to the box (0 inside).
    double squared_distance(const Vec3d& p) const {
        const Vec3d d = (min - p).cwiseMax(p - max).cwiseMax(0.0);
        return d.squaredNorm();
    }
};

inline Aabb bounds_of(const Points& pts) {
    Aabb box;
    for (Eigen::Index i = 0; i < pts.rows(); ++i) box.extend(pts.row(i).transpose());
    return box;
}

inline Vec3d row3(const Points& pts, Eigen::Index i) { return pts.row(i).transpose(); }

Points stack_points(const std::vector<Vec3d>& pts);

}  // namespace volfit
