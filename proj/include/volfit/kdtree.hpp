#pragma once

#include <vector>

#include "volfit/types.hpp"

namespace volfit {

struct Neighbor {
    int index = -1;
    double distance = 0.0;
};

// Exact nearest-neighbour index over a fixed point set (k-d tree with leaf buckets).
// Results equal a linear scan, ties broken by lowest index.
class PointIndex {
public:
    PointIndex() = default;
    explicit PointIndex(const Points& points);

    bool empty() const { return points_.rows() == 0; }
    Eigen::Index size() const { return points_.rows(); }
    const Points& points() const { return points_; }

    // Throws EmptyIndex on an empty index.
    Neighbor nearest(const Vec3d& q) const;

private:
    struct Node {
        int begin = 0, end = 0;  // range into order_
        int left = -1, right = -1;
        int axis = -1;  // -1 for leaves
        double split = 0.0;
        Aabb box;
    };

    int build(int begin, int end);

    Points points_;
    Points sorted_;  // points_ reordered by order_, for cache-friendly leaf scans
    std::vector<int> order_;
    std::vector<Node> nodes_;
};

Neighbor nearest_point(const PointIndex& index, const Vec3d& q);

}  // namespace volfit
