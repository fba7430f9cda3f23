#pragma once

#include <filesystem>
#include <optional>

#include "volfit/mesh.hpp"

namespace volfit {

// ASCII PLY. Meshes use `vertex` (float x,y,z) and `face` (list uchar int vertex_indices).
void write_mesh_ply(const std::filesystem::path& path, const TriMesh& mesh);
TriMesh read_mesh_ply(const std::filesystem::path& path);

// Point clouds with an optional per-vertex int property (e.g. `source`).
void write_points_ply(const std::filesystem::path& path, const Points& points,
                      const std::vector<int>* int_property = nullptr,
                      const std::string& property_name = "source");

struct PointCloudFile {
    Points points;
    std::optional<std::vector<int>> int_property;
};
PointCloudFile read_points_ply(const std::filesystem::path& path,
                               const std::string& property_name = "source");

}  // namespace volfit
