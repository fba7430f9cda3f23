#include "volfit/kdtree.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "volfit/errors.hpp"

namespace volfit {

namespace {
constexpr int kLeafSize = 8;
}

PointIndex::PointIndex(const Points& points) : points_(points) {
    const int n = static_cast<int>(points_.rows());
    if (n == 0) return;
    if (!points_.allFinite()) throw NonFiniteInput("point index built from non-finite points");
    order_.resize(static_cast<std::size_t>(n));
    std::iota(order_.begin(), order_.end(), 0);
    nodes_.reserve(static_cast<std::size_t>(2 * n / kLeafSize + 2));
    build(0, n);
    sorted_.resize(n, 3);
    for (int i = 0; i < n; ++i) sorted_.row(i) = points_.row(order_[i]);
}

int PointIndex::build(int begin, int end) {
    const int id = static_cast<int>(nodes_.size());
    nodes_.emplace_back();
    Aabb box;
    for (int i = begin; i < end; ++i) box.extend(row3(points_, order_[i]));
    nodes_[id].begin = begin;
    nodes_[id].end = end;
    nodes_[id].box = box;
    if (end - begin <= kLeafSize) return id;
    int axis = 0;
    box.extent().maxCoeff(&axis);
    const int mid = (begin + end) / 2;
    std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end, [&](int a, int b) {
        const double pa = points_(a, axis), pb = points_(b, axis);
        return pa < pb || (pa == pb && a < b);
    });
    nodes_[id].axis = axis;
    nodes_[id].split = points_(order_[mid], axis);
    const int left = build(begin, mid);
    const int right = build(mid, end);
    nodes_[id].left = left;
    nodes_[id].right = right;
    return id;
}

Neighbor PointIndex::nearest(const Vec3d& q) const {
    if (nodes_.empty()) throw EmptyIndex("nearest-neighbour query on an empty index");
    double best_sq = std::numeric_limits<double>::infinity();
    int best = -1;
    std::pair<double, int> stack[96];
    int top = 0;
    stack[top++] = {0.0, 0};
    while (top > 0) {
        const auto [bound, id] = stack[--top];
        // Equal bounds must still be visited: a lower index may sit at the same distance.
        if (bound > best_sq) continue;
        const Node& node = nodes_[id];
        if (node.axis < 0) {
            for (int i = node.begin; i < node.end; ++i) {
                const double d = (sorted_.row(i).transpose() - q).squaredNorm();
                const int idx = order_[i];
                if (d < best_sq || (d == best_sq && idx < best)) {
                    best_sq = d;
                    best = idx;
                }
            }
            continue;
        }
        const double dl = nodes_[node.left].box.squared_distance(q);
        const double dr = nodes_[node.right].box.squared_distance(q);
        if (dl <= dr) {
            if (dr <= best_sq) stack[top++] = {dr, node.right};
            if (dl <= best_sq) stack[top++] = {dl, node.left};
        } else {
            if (dl <= best_sq) stack[top++] = {dl, node.left};
            if (dr <= best_sq) stack[top++] = {dr, node.right};
        }
    }
    return {best, std::sqrt(best_sq)};
}

Neighbor nearest_point(const PointIndex& index, const Vec3d& q) { return index.nearest(q); }

}  // namespace volfit
