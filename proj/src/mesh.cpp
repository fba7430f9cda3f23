#include "volfit/mesh.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <numeric>
#include <string>
#include <unordered_map>

#include "volfit/errors.hpp"

namespace volfit {

Points stack_points(const std::vector<Vec3d>& pts) {
    Points out(static_cast<Eigen::Index>(pts.size()), 3);
    for (std::size_t i = 0; i < pts.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = pts[i].transpose();
    return out;
}

namespace {

std::uint64_t edge_key(int a, int b) {
    if (a > b) std::swap(a, b);
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(a)) << 32) | static_cast<std::uint32_t>(b);
}

}  // namespace

bool is_watertight(const Faces& faces, Eigen::Index num_vertices) {
    if (faces.rows() == 0 || num_vertices == 0) return false;
    std::unordered_map<std::uint64_t, int> counts;
    counts.reserve(static_cast<std::size_t>(faces.rows()) * 3);
    for (Eigen::Index f = 0; f < faces.rows(); ++f)
        for (int k = 0; k < 3; ++k) ++counts[edge_key(faces(f, k), faces(f, (k + 1) % 3))];
    return std::all_of(counts.begin(), counts.end(), [](const auto& kv) { return kv.second == 2; });
}

TriMesh::TriMesh(Points vertices, Faces faces) : vertices_(std::move(vertices)), faces_(std::move(faces)) {
    const Eigen::Index n = vertices_.rows();
    if (!vertices_.allFinite()) throw InvalidMesh("mesh has non-finite vertex coordinates");
    for (Eigen::Index f = 0; f < faces_.rows(); ++f) {
        for (int k = 0; k < 3; ++k)
            if (faces_(f, k) < 0 || faces_(f, k) >= n)
                throw InvalidMesh("face " + std::to_string(f) + " references vertex out of range");
        if (face_area(f) < kMinFaceArea) throw DegenerateFace("face " + std::to_string(f) + " has zero area");
    }
    watertight_ = is_watertight(faces_, n);
}

Vec3d TriMesh::face_normal(Eigen::Index f) const {
    const Vec3d a = corner(f, 0), b = corner(f, 1), c = corner(f, 2);
    return (b - a).cross(c - a).normalized();
}

double TriMesh::face_area(Eigen::Index f) const {
    const Vec3d a = corner(f, 0), b = corner(f, 1), c = corner(f, 2);
    return 0.5 * (b - a).cross(c - a).norm();
}

double TriMesh::surface_area() const {
    double total = 0.0;
    for (Eigen::Index f = 0; f < faces_.rows(); ++f) total += face_area(f);
    return total;
}

Eigen::VectorXd TriMesh::vertex_areas() const {
    Eigen::VectorXd areas = Eigen::VectorXd::Zero(vertices_.rows());
    for (Eigen::Index f = 0; f < faces_.rows(); ++f) {
        const double a = face_area(f) / 3.0;
        for (int k = 0; k < 3; ++k) areas(faces_(f, k)) += a;
    }
    return areas;
}

Points vertex_normals(const Points& vertices, const Faces& faces) {
    Points normals = Points::Zero(vertices.rows(), 3);
    for (Eigen::Index f = 0; f < faces.rows(); ++f) {
        const Eigen::RowVector3d a = vertices.row(faces(f, 0));
        const Eigen::RowVector3d n = (vertices.row(faces(f, 1)) - a).cross(vertices.row(faces(f, 2)) - a);
        for (int k = 0; k < 3; ++k) normals.row(faces(f, k)) += n;
    }
    for (Eigen::Index i = 0; i < normals.rows(); ++i) {
        const double len = normals.row(i).norm();
        if (len > 0) normals.row(i) /= len;
    }
    return normals;
}

Points TriMesh::vertex_normals() const { return volfit::vertex_normals(vertices_, faces_); }

int TriMesh::count_components() const {
    std::vector<int> parent(static_cast<std::size_t>(vertices_.rows()));
    std::iota(parent.begin(), parent.end(), 0);
    auto find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };
    for (Eigen::Index f = 0; f < faces_.rows(); ++f)
        for (int k = 1; k < 3; ++k) {
            const int a = find(faces_(f, 0)), b = find(faces_(f, k));
            if (a != b) parent[std::max(a, b)] = std::min(a, b);
        }
    std::vector<char> used(parent.size(), 0);
    for (Eigen::Index f = 0; f < faces_.rows(); ++f)
        for (int k = 0; k < 3; ++k) used[faces_(f, k)] = 1;
    int count = 0;
    for (std::size_t i = 0; i < parent.size(); ++i)
        if (used[i] && find(static_cast<int>(i)) == static_cast<int>(i)) ++count;
    return count;
}

double TriMesh::signed_volume() const {
    double vol = 0.0;
    for (Eigen::Index f = 0; f < faces_.rows(); ++f)
        vol += corner(f, 0).dot(corner(f, 1).cross(corner(f, 2)));
    return vol / 6.0;
}

TriMesh merge_meshes(const std::vector<TriMesh>& parts) {
    Eigen::Index nv = 0, nf = 0;
    for (const auto& p : parts) {
        nv += p.num_vertices();
        nf += p.num_faces();
    }
    Points v(nv, 3);
    Faces f(nf, 3);
    Eigen::Index vo = 0, fo = 0;
    for (const auto& p : parts) {
        v.middleRows(vo, p.num_vertices()) = p.vertices();
        f.middleRows(fo, p.num_faces()) = p.faces().array() + static_cast<int>(vo);
        vo += p.num_vertices();
        fo += p.num_faces();
    }
    return TriMesh(std::move(v), std::move(f));
}

TriMesh make_box(const Vec3d& center, const Vec3d& h) {
    Points v(8, 3);
    for (int i = 0; i < 8; ++i) {
        const Vec3d s((i & 1) ? 1.0 : -1.0, (i & 2) ? 1.0 : -1.0, (i & 4) ? 1.0 : -1.0);
        v.row(i) = (center + s.cwiseProduct(h)).transpose();
    }
    // Outward-oriented, two triangles per side.
    Faces f(12, 3);
    f << 0, 2, 3, 0, 3, 1,   // -z
        4, 5, 7, 4, 7, 6,    // +z
        0, 1, 5, 0, 5, 4,    // -y
        2, 6, 7, 2, 7, 3,    // +y
        0, 4, 6, 0, 6, 2,    // -x
        1, 3, 7, 1, 7, 5;    // +x
    return TriMesh(std::move(v), std::move(f));
}

TriMesh make_cylinder(const Vec3d& base, double radius, double height, int segments) {
    segments = std::max(segments, 3);
    Points v(2 * segments + 2, 3);
    for (int i = 0; i < segments; ++i) {
        const double a = 2.0 * M_PI * i / segments;
        const Vec3d d(radius * std::cos(a), radius * std::sin(a), 0.0);
        v.row(i) = (base + d).transpose();
        v.row(segments + i) = (base + d + Vec3d(0, 0, height)).transpose();
    }
    const int bottom = 2 * segments, top = 2 * segments + 1;
    v.row(bottom) = base.transpose();
    v.row(top) = (base + Vec3d(0, 0, height)).transpose();
    Faces f(4 * segments, 3);
    for (int i = 0; i < segments; ++i) {
        const int j = (i + 1) % segments;
        f.row(4 * i + 0) << i, j, segments + j;
        f.row(4 * i + 1) << i, segments + j, segments + i;
        f.row(4 * i + 2) << bottom, j, i;
        f.row(4 * i + 3) << top, segments + i, segments + j;
    }
    return TriMesh(std::move(v), std::move(f));
}

TriMesh make_icosphere(const Vec3d& center, double radius, int subdivisions) {
    const double t = (1.0 + std::sqrt(5.0)) / 2.0;
    std::vector<Vec3d> verts = {{-1, t, 0}, {1, t, 0}, {-1, -t, 0}, {1, -t, 0}, {0, -1, t}, {0, 1, t},
                                {0, -1, -t}, {0, 1, -t}, {t, 0, -1}, {t, 0, 1}, {-t, 0, -1}, {-t, 0, 1}};
    for (auto& p : verts) p.normalize();
    std::vector<std::array<int, 3>> faces = {{0, 11, 5}, {0, 5, 1},  {0, 1, 7},   {0, 7, 10}, {0, 10, 11},
                                             {1, 5, 9},  {5, 11, 4}, {11, 10, 2}, {10, 7, 6}, {7, 1, 8},
                                             {3, 9, 4},  {3, 4, 2},  {3, 2, 6},   {3, 6, 8},  {3, 8, 9},
                                             {4, 9, 5},  {2, 4, 11}, {6, 2, 10},  {8, 6, 7},  {9, 8, 1}};
    for (int s = 0; s < subdivisions; ++s) {
        std::map<std::pair<int, int>, int> mid;
        auto midpoint = [&](int a, int b) {
            const auto key = std::minmax(a, b);
            auto it = mid.find(key);
            if (it != mid.end()) return it->second;
            verts.push_back((verts[a] + verts[b]).normalized());
            const int id = static_cast<int>(verts.size()) - 1;
            mid.emplace(key, id);
            return id;
        };
        std::vector<std::array<int, 3>> next;
        next.reserve(faces.size() * 4);
        for (const auto& f : faces) {
            const int a = midpoint(f[0], f[1]), b = midpoint(f[1], f[2]), c = midpoint(f[2], f[0]);
            next.push_back({f[0], a, c});
            next.push_back({f[1], b, a});
            next.push_back({f[2], c, b});
            next.push_back({a, b, c});
        }
        faces.swap(next);
    }
    Points v(static_cast<Eigen::Index>(verts.size()), 3);
    for (std::size_t i = 0; i < verts.size(); ++i) v.row(i) = (center + radius * verts[i]).transpose();
    Faces f(static_cast<Eigen::Index>(faces.size()), 3);
    for (std::size_t i = 0; i < faces.size(); ++i) f.row(i) << faces[i][0], faces[i][1], faces[i][2];
    return TriMesh(std::move(v), std::move(f));
}

}  // namespace volfit
