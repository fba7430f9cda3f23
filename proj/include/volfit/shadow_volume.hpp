#pragma once

#include <filesystem>
#include <vector>

#include "volfit/bvh.hpp"

namespace volfit {

struct TsvConfig {
    double max_length = 0.1;  // d_l
    double interval = 0.01;
    void validate() const;  // ConfigError unless 0 < interval <= max_length
};

// Truncated shadow volume: samples behind each scanned body point, along the
// camera ray, stopped at the scene or after max_length.
struct TsvPoints {
    Points points;
    std::vector<int> source;  // index into P_b per point
    Eigen::Index size() const { return points.rows(); }
};

// Distances are measured from the body point; the scene is the only occluder.
TsvPoints compute_tsv(const Vec3d& camera_position, const Points& body_points, const TriangleBvh& scene,
                      const TsvConfig& config = {});
TsvPoints compute_tsv(const Vec3d& camera_position, const Points& body_points, const TriMesh& scene,
                      const TsvConfig& config = {});

// Number of samples on one ray of usable length `length`.
int tsv_sample_count(double length, const TsvConfig& config);

void write_tsv_ply(const std::filesystem::path& path, const TsvPoints& tsv);

}  // namespace volfit
