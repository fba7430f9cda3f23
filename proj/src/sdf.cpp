#include "volfit/sdf.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <fstream>
#include <stdexcept>

#include "volfit/bvh.hpp"
#include "volfit/errors.hpp"
#include "volfit/parallel.hpp"

namespace volfit {

static_assert(std::endian::native == std::endian::little, "SDFG I/O assumes a little-endian host");

SdfGrid::SdfGrid(const Vec3d& origin, double voxel_size, const Vec3i& dims, std::vector<float> values)
    : origin_(origin), voxel_size_(voxel_size), dims_(dims), values_(std::move(values)) {
    if (!(voxel_size > 0.0)) throw std::invalid_argument("SdfGrid: voxel_size must be positive");
    if ((dims.array() < 2).any()) throw std::invalid_argument("SdfGrid: dims must be >= 2 per axis");
    const std::size_t n = static_cast<std::size_t>(dims.x()) * dims.y() * dims.z();
    if (values_.size() != n) throw std::invalid_argument("SdfGrid: value count does not match dims");
    for (float v : values_)
        if (!std::isfinite(v)) throw std::invalid_argument("SdfGrid: non-finite value");
}

Vec3i SdfGrid::cell_of(const Vec3d& p) const {
    Vec3i cell;
    for (int a = 0; a < 3; ++a) {
        const double g = (p(a) - origin_(a)) / voxel_size_;
        cell(a) = std::clamp(static_cast<int>(std::floor(g)), 0, dims_(a) - 2);
    }
    return cell;
}

double SdfGrid::sample(const Vec3d& p, Vec3d* gradient) const {
    const Vec3d hi = max_corner();
    const Vec3d c = p.cwiseMax(origin_).cwiseMin(hi);
    Vec3i cell;
    Vec3d f;
    for (int a = 0; a < 3; ++a) {
        const double g = (c(a) - origin_(a)) / voxel_size_;
        cell(a) = std::clamp(static_cast<int>(std::floor(g)), 0, dims_(a) - 2);
        f(a) = g - cell(a);
    }
    const int i = cell.x(), j = cell.y(), k = cell.z();
    const double v000 = at(i, j, k), v100 = at(i + 1, j, k), v010 = at(i, j + 1, k), v110 = at(i + 1, j + 1, k);
    const double v001 = at(i, j, k + 1), v101 = at(i + 1, j, k + 1), v011 = at(i, j + 1, k + 1),
                 v111 = at(i + 1, j + 1, k + 1);
    const double x0 = v000 + f.x() * (v100 - v000), x1 = v010 + f.x() * (v110 - v010);
    const double x2 = v001 + f.x() * (v101 - v001), x3 = v011 + f.x() * (v111 - v011);
    const double y0 = x0 + f.y() * (x1 - x0), y1 = x2 + f.y() * (x3 - x2);
    double value = y0 + f.z() * (y1 - y0);

    const Vec3d off = p - c;
    const double out = off.norm();
    if (gradient) {
        const double dx0 = v100 - v000, dx1 = v110 - v010, dx2 = v101 - v001, dx3 = v111 - v011;
        const double dx_y0 = dx0 + f.y() * (dx1 - dx0), dx_y1 = dx2 + f.y() * (dx3 - dx2);
        Vec3d g;
        g.x() = dx_y0 + f.z() * (dx_y1 - dx_y0);
        g.y() = (x1 - x0) + f.z() * ((x3 - x2) - (x1 - x0));
        g.z() = y1 - y0;
        g /= voxel_size_;
        // Clamped axes do not move the interpolation point.
        for (int a = 0; a < 3; ++a)
            if (p(a) < origin_(a) || p(a) > hi(a)) g(a) = 0.0;
        if (out > 0.0) g += off / out;
        *gradient = g;
    }
    if (out > 0.0) value = std::max(value + out, out);
    return value;
}

SdfGrid SdfGrid::from_function(const Vec3d& origin, double voxel_size, const Vec3i& dims,
                               const std::function<double(const Vec3d&)>& fn) {
    std::vector<float> values(static_cast<std::size_t>(dims.x()) * dims.y() * dims.z());
    for (int k = 0; k < dims.z(); ++k)
        for (int j = 0; j < dims.y(); ++j)
            for (int i = 0; i < dims.x(); ++i)
                values[static_cast<std::size_t>(i) + static_cast<std::size_t>(dims.x()) * (j + static_cast<std::size_t>(dims.y()) * k)] =
                    static_cast<float>(fn(origin + voxel_size * Vec3d(i, j, k)));
    return SdfGrid(origin, voxel_size, dims, std::move(values));
}

namespace {

// Deterministic per-row jitter in [-0.5, 0.5).
double row_hash(std::uint64_t a, std::uint64_t b, std::uint64_t attempt, std::uint64_t salt) {
    std::uint64_t x = a * 0x9E3779B97F4A7C15ull ^ (b + 0x632BE59BD9B4E019ull) * 0xC2B2AE3D27D4EB4Full ^
                      (attempt + 1) * 0x165667B19E3779F9ull ^ salt;
    x ^= x >> 33;
    x *= 0xff51afd7ed558ccdull;
    x ^= x >> 33;
    x *= 0xc4ceb9fe1a85ec53ull;
    x ^= x >> 33;
    return static_cast<double>(x >> 11) / 9007199254740992.0 - 0.5;
}

}  // namespace

SdfGrid build_sdf_grid(const TriMesh& mesh, double padding, double voxel_size) {
    if (!mesh.watertight()) throw NonWatertightMesh("build_sdf_grid requires a watertight mesh");
    if (!(voxel_size > 0.0)) throw std::invalid_argument("build_sdf_grid: voxel_size must be positive");
    const Aabb box = mesh.bounds();
    const Vec3d origin = box.min - Vec3d::Constant(padding);
    const Vec3d extent = box.extent() + Vec3d::Constant(2.0 * padding);
    Vec3i dims;
    for (int a = 0; a < 3; ++a) dims(a) = std::max(2, static_cast<int>(std::ceil(extent(a) / voxel_size - 1e-9)) + 1);

    const TriangleBvh bvh(mesh);
    std::vector<float> values(static_cast<std::size_t>(dims.x()) * dims.y() * dims.z());
    const std::size_t rows = static_cast<std::size_t>(dims.y()) * dims.z();
    const double start_x = origin.x() - 1.0;

    parallel_for(rows, 16, [&](std::size_t r0, std::size_t r1) {
        std::vector<double> crossings;
        for (std::size_t r = r0; r < r1; ++r) {
            const int j = static_cast<int>(r % dims.y()), k = static_cast<int>(r / dims.y());
            const double y = origin.y() + j * voxel_size, z = origin.z() + k * voxel_size;
            // Jitter the row line off exact geometry; retry if a crossing grazes an edge.
            for (int attempt = 0; attempt < 32; ++attempt) {
                const double jy = 1e-6 * voxel_size * row_hash(j, k, attempt, 1);
                const double jz = 1e-6 * voxel_size * row_hash(j, k, attempt, 2);
                const Ray ray(Vec3d(start_x, y + jy, z + jz), Vec3d::UnitX());
                crossings.clear();
                bool grazing = false;
                bvh.for_each_hit(ray, 0.0, std::numeric_limits<double>::infinity(), [&](const RayHit& h) {
                    const double w = 1.0 - h.u - h.v;
                    if (std::min({h.u, h.v, w}) < 1e-9) grazing = true;
                    crossings.push_back(h.distance);
                });
                if (!grazing) break;
            }
            std::sort(crossings.begin(), crossings.end());
            std::size_t passed = 0;
            for (int i = 0; i < dims.x(); ++i) {
                const double t = (origin.x() + i * voxel_size) - start_x;
                while (passed < crossings.size() && crossings[passed] < t) ++passed;
                const Vec3d p(origin.x() + i * voxel_size, y, z);
                const double d = bvh.closest_point(p).distance;
                values[static_cast<std::size_t>(i) + static_cast<std::size_t>(dims.x()) * r] =
                    static_cast<float>((passed % 2 == 1) ? -d : d);
            }
        }
    });
    return SdfGrid(origin, voxel_size, dims, std::move(values));
}

void write_sdf_grid(const std::filesystem::path& path, const SdfGrid& grid) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot open " + path.string() + " for writing");
    out.write("SDFG", 4);
    for (int a = 0; a < 3; ++a) {
        const std::uint32_t d = static_cast<std::uint32_t>(grid.dims()(a));
        out.write(reinterpret_cast<const char*>(&d), 4);
    }
    for (int a = 0; a < 3; ++a) {
        const double o = grid.origin()(a);
        out.write(reinterpret_cast<const char*>(&o), 8);
    }
    const double vs = grid.voxel_size();
    out.write(reinterpret_cast<const char*>(&vs), 8);
    out.write(reinterpret_cast<const char*>(grid.values().data()),
              static_cast<std::streamsize>(grid.values().size() * sizeof(float)));
    if (!out) throw IoError("write failed: " + path.string());
}

SdfGrid read_sdf_grid(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    char magic[4];
    in.read(magic, 4);
    if (!in || std::memcmp(magic, "SDFG", 4) != 0) throw IoError(path.string() + ": bad SDFG magic");
    std::uint32_t d[3];
    double o[3], vs;
    in.read(reinterpret_cast<char*>(d), sizeof(d));
    in.read(reinterpret_cast<char*>(o), sizeof(o));
    in.read(reinterpret_cast<char*>(&vs), sizeof(vs));
    if (!in) throw IoError(path.string() + ": truncated SDFG header");
    std::vector<float> values(static_cast<std::size_t>(d[0]) * d[1] * d[2]);
    in.read(reinterpret_cast<char*>(values.data()), static_cast<std::streamsize>(values.size() * sizeof(float)));
    if (!in) throw IoError(path.string() + ": truncated SDFG payload");
    return SdfGrid(Vec3d(o[0], o[1], o[2]), vs, Vec3i(static_cast<int>(d[0]), static_cast<int>(d[1]), static_cast<int>(d[2])),
                   std::move(values));
}

}  // namespace volfit
