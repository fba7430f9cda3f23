#include "volfit/sampling.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <stdexcept>
#include <string>

#include "volfit/errors.hpp"

namespace volfit {

IndexList farthest_point_sampling(const Points& points, int k, int seed_index) {
    const Eigen::Index n = points.rows();
    if (k < 1) throw std::invalid_argument("farthest_point_sampling: k must be >= 1");
    if (k > n)
        throw InsufficientPoints("farthest_point_sampling: requested " + std::to_string(k) + " of " +
                                 std::to_string(n) + " points");
    if (seed_index < 0 || seed_index >= n) throw std::invalid_argument("farthest_point_sampling: bad seed index");
    IndexList picked;
    picked.reserve(static_cast<std::size_t>(k));
    Eigen::VectorXd dist = Eigen::VectorXd::Constant(n, std::numeric_limits<double>::infinity());
    std::vector<char> taken(static_cast<std::size_t>(n), 0);
    int current = seed_index;
    for (int i = 0; i < k; ++i) {
        picked.push_back(current);
        taken[current] = 1;
        const Eigen::RowVector3d c = points.row(current);
        int next = -1;
        double best = -1.0;
        for (Eigen::Index j = 0; j < n; ++j) {
            if (taken[j]) continue;
            const double d = (points.row(j) - c).squaredNorm();
            if (d < dist(j)) dist(j) = d;
            if (dist(j) > best) {
                best = dist(j);
                next = static_cast<int>(j);
            }
        }
        current = next;
    }
    return picked;
}

Points select_rows(const Points& points, const IndexList& rows) {
    Points out(static_cast<Eigen::Index>(rows.size()), 3);
    for (std::size_t i = 0; i < rows.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = points.row(rows[i]);
    return out;
}

double uniform01(Rng& rng) {
    // 53 random mantissa bits.
    return static_cast<double>(rng() >> 11) * (1.0 / 9007199254740992.0);
}

double standard_normal(Rng& rng) {
    // Box-Muller; one value per call keeps the stream position simple.
    double u1 = uniform01(rng);
    while (u1 <= 0.0) u1 = uniform01(rng);
    const double u2 = uniform01(rng);
    return std::sqrt(-2.0 * std::log(u1)) * std::cos(2.0 * M_PI * u2);
}

Points sample_surface(const TriMesh& mesh, int count, Rng& rng, std::vector<int>* faces) {
    const Eigen::Index nf = mesh.num_faces();
    if (nf == 0 || count <= 0) return Points(0, 3);
    std::vector<double> cdf(static_cast<std::size_t>(nf));
    double acc = 0.0;
    for (Eigen::Index f = 0; f < nf; ++f) cdf[f] = (acc += mesh.face_area(f));
    Points out(count, 3);
    if (faces) faces->assign(static_cast<std::size_t>(count), -1);
    for (int i = 0; i < count; ++i) {
        const double r = uniform01(rng) * acc;
        const auto it = std::upper_bound(cdf.begin(), cdf.end(), r);
        const int f = static_cast<int>(std::min<std::ptrdiff_t>(it - cdf.begin(), nf - 1));
        double a = uniform01(rng), b = uniform01(rng);
        if (a + b > 1.0) {
            a = 1.0 - a;
            b = 1.0 - b;
        }
        out.row(i) = (mesh.corner(f, 0) + a * (mesh.corner(f, 1) - mesh.corner(f, 0)) +
                      b * (mesh.corner(f, 2) - mesh.corner(f, 0)))
                         .transpose();
        if (faces) (*faces)[i] = f;
    }
    return out;
}

}  // namespace volfit
