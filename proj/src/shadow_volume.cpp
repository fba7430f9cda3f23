#include "volfit/shadow_volume.hpp"

#include <cmath>

#include "volfit/errors.hpp"
#include "volfit/parallel.hpp"
#include "volfit/ply.hpp"

namespace volfit {

namespace {

constexpr double kRayStart = 1e-6;
constexpr double kLatticeSlack = 1e-9;

}  // namespace

void TsvConfig::validate() const {
    if (!(interval > 0.0) || !(interval <= max_length) || !std::isfinite(max_length))
        throw ConfigError("TSV needs 0 < interval <= max_length");
}

int tsv_sample_count(double length, const TsvConfig& config) {
    if (!(length > 0.0)) return 0;
    return static_cast<int>(std::floor(std::min(length, config.max_length) / config.interval + kLatticeSlack));
}

TsvPoints compute_tsv(const Vec3d& camera_position, const Points& body_points, const TriangleBvh& scene,
                      const TsvConfig& config) {
    config.validate();
    const auto n = static_cast<int>(body_points.rows());
    std::vector<std::vector<Vec3d>> per_ray(static_cast<std::size_t>(n));
    parallel_for(n, 64, [&](int b, int e) {
        for (int i = b; i < e; ++i) {
            const Vec3d ps = body_points.row(i).transpose();
            const Vec3d offset = ps - camera_position;
            if (offset.norm() == 0.0) throw DegenerateConfiguration("camera coincides with a body point");
            const Ray ray(ps, offset);
            double length = config.max_length;
            if (!scene.empty())
                if (const auto hit = scene.first_hit(ray, kRayStart, config.max_length)) length = hit->distance;
            const int count = tsv_sample_count(length, config);
            auto& out = per_ray[static_cast<std::size_t>(i)];
            out.reserve(static_cast<std::size_t>(count));
            for (int k = 1; k <= count; ++k) out.push_back(ray.at(k * config.interval));
        }
    });
    TsvPoints tsv;
    std::size_t total = 0;
    for (const auto& r : per_ray) total += r.size();
    tsv.points.resize(static_cast<Eigen::Index>(total), 3);
    tsv.source.reserve(total);
    Eigen::Index row = 0;
    for (int i = 0; i < n; ++i)
        for (const Vec3d& p : per_ray[static_cast<std::size_t>(i)]) {
            tsv.points.row(row++) = p.transpose();
            tsv.source.push_back(i);
        }
    return tsv;
}

TsvPoints compute_tsv(const Vec3d& camera_position, const Points& body_points, const TriMesh& scene,
                      const TsvConfig& config) {
    return compute_tsv(camera_position, body_points, TriangleBvh(scene), config);
}

void write_tsv_ply(const std::filesystem::path& path, const TsvPoints& tsv) {
    write_points_ply(path, tsv.points, &tsv.source, "source");
}

}  // namespace volfit
