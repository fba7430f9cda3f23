#pragma once

#include <filesystem>
#include <functional>
#include <vector>

#include "volfit/mesh.hpp"

namespace volfit {

// Dense signed distance volume, negative inside. Grid point (i,j,k) sits at
// origin + voxel_size * (i,j,k); values are stored x-fastest.
class SdfGrid {
public:
    SdfGrid() = default;
    SdfGrid(const Vec3d& origin, double voxel_size, const Vec3i& dims, std::vector<float> values);

    const Vec3d& origin() const { return origin_; }
    double voxel_size() const { return voxel_size_; }
    const Vec3i& dims() const { return dims_; }
    const std::vector<float>& values() const { return values_; }
    bool empty() const { return values_.empty(); }

    std::size_t index(int i, int j, int k) const {
        return static_cast<std::size_t>(i) +
               static_cast<std::size_t>(dims_.x()) * (static_cast<std::size_t>(j) +
                                                      static_cast<std::size_t>(dims_.y()) * static_cast<std::size_t>(k));
    }
    double at(int i, int j, int k) const { return values_[index(i, j, k)]; }
    Vec3d grid_point(int i, int j, int k) const { return origin_ + voxel_size_ * Vec3d(i, j, k); }
    Vec3d max_corner() const { return origin_ + voxel_size_ * (dims_ - Vec3i::Ones()).cast<double>(); }

    // Trilinear interpolation. Outside the grid the value at the clamped point plus
    // the distance to it is returned, so exterior queries never read as inside.
    double sample(const Vec3d& p, Vec3d* gradient = nullptr) const;

    // Interpolation cell containing the (clamped) point; used to detect cell switches.
    Vec3i cell_of(const Vec3d& p) const;

    static SdfGrid from_function(const Vec3d& origin, double voxel_size, const Vec3i& dims,
                                 const std::function<double(const Vec3d&)>& fn);

private:
    Vec3d origin_ = Vec3d::Zero();
    double voxel_size_ = 1.0;
    Vec3i dims_ = Vec3i::Zero();
    std::vector<float> values_;
};

// Exact unsigned distance to the nearest triangle; sign from ray-crossing parity
// along x-aligned rows (odd = inside). Throws NonWatertightMesh for open meshes.
SdfGrid build_sdf_grid(const TriMesh& mesh, double padding, double voxel_size);

inline double sample_sdf(const SdfGrid& grid, const Vec3d& p) { return grid.sample(p); }

// Binary layout: "SDFG", uint32 dims[3], float64 origin[3], float64 voxel_size,
// float32 values (x-fastest), all little-endian.
void write_sdf_grid(const std::filesystem::path& path, const SdfGrid& grid);
SdfGrid read_sdf_grid(const std::filesystem::path& path);

}  // namespace volfit
