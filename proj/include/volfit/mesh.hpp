#pragma once

#include <vector>

#include "volfit/types.hpp"

namespace volfit {

// Triangle mesh with validated topology. Faces with area below kMinFaceArea and
// out-of-range indices are rejected at construction.
class TriMesh {
public:
    static constexpr double kMinFaceArea = 1e-12;

    TriMesh() = default;
    TriMesh(Points vertices, Faces faces);

    const Points& vertices() const { return vertices_; }
    const Faces& faces() const { return faces_; }
    Eigen::Index num_vertices() const { return vertices_.rows(); }
    Eigen::Index num_faces() const { return faces_.rows(); }
    bool empty() const { return faces_.rows() == 0; }

    // True iff every undirected edge is shared by exactly two faces.
    bool watertight() const { return watertight_; }

    Vec3d vertex(Eigen::Index i) const { return vertices_.row(i).transpose(); }
    Vec3d corner(Eigen::Index f, int k) const { return vertices_.row(faces_(f, k)).transpose(); }
    Vec3d face_normal(Eigen::Index f) const;  // unit
    double face_area(Eigen::Index f) const;
    double surface_area() const;
    Aabb bounds() const { return bounds_of(vertices_); }

    // Per-vertex area (one third of incident face areas) and area-weighted normals.
    Eigen::VectorXd vertex_areas() const;
    Points vertex_normals() const;

    // Number of connected components over shared vertices.
    int count_components() const;

    // Signed enclosed volume (positive for outward-oriented closed meshes).
    double signed_volume() const;

private:
    Points vertices_;
    Faces faces_;
    bool watertight_ = false;
};

bool is_watertight(const Faces& faces, Eigen::Index num_vertices);

// Vertex normals for an arbitrary vertex buffer sharing `faces`; no validation.
Points vertex_normals(const Points& vertices, const Faces& faces);

TriMesh merge_meshes(const std::vector<TriMesh>& parts);

TriMesh make_box(const Vec3d& center, const Vec3d& half_extents);
TriMesh make_cylinder(const Vec3d& base_center, double radius, double height, int segments);
TriMesh make_icosphere(const Vec3d& center, double radius, int subdivisions);

}  // namespace volfit
