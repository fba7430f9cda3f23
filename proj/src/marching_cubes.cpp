#include "volfit/marching_cubes.hpp"

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <tuple>
#include <vector>

#include "volfit/errors.hpp"

namespace volfit {

namespace {

// Corner c of a cell sits at offset (c & 1, (c >> 1) & 1, (c >> 2) & 1).
// Edge e = 4 * axis + m joins corner kEdgeCorners[e][0] to kEdgeCorners[e][1].
struct CubeTopology {
    std::array<std::array<int, 2>, 12> edge_corners{};
    std::array<std::array<int, 4>, 6> face_corners{};  // counter-clockwise seen from outside
    std::array<std::uint8_t, 12> edge_faces{};          // bitmask of faces containing each edge

    CubeTopology() {
        int e = 0;
        for (int axis = 0; axis < 3; ++axis)
            for (int c = 0; c < 8; ++c)
                if (!(c & (1 << axis))) edge_corners[e++] = {c, c | (1 << axis)};
        int f = 0;
        for (int axis = 0; axis < 3; ++axis)
            for (int side = 0; side < 2; ++side) {
                std::array<int, 4> cs{};
                int n = 0;
                for (int c = 0; c < 8; ++c)
                    if (((c >> axis) & 1) == side) cs[n++] = c;
                // Order around the face center, then orient along the outward normal.
                const Vec3d normal = (side ? 1.0 : -1.0) * Vec3d::Unit(axis);
                const int u = (axis + 1) % 3, v = (axis + 2) % 3;
                std::sort(cs.begin(), cs.end(), [&](int a, int b) {
                    const double aa = std::atan2(((a >> v) & 1) - 0.5, ((a >> u) & 1) - 0.5);
                    const double ab = std::atan2(((b >> v) & 1) - 0.5, ((b >> u) & 1) - 0.5);
                    return aa < ab;
                });
                const Vec3d p0 = offset(cs[0]), p1 = offset(cs[1]), p2 = offset(cs[2]);
                if ((p1 - p0).cross(p2 - p0).dot(normal) < 0) std::reverse(cs.begin(), cs.end());
                face_corners[f++] = cs;
            }
        for (int ed = 0; ed < 12; ++ed) {
            std::uint8_t mask = 0;
            for (int fc = 0; fc < 6; ++fc) {
                const auto& cs = face_corners[fc];
                const bool a = std::find(cs.begin(), cs.end(), edge_corners[ed][0]) != cs.end();
                const bool b = std::find(cs.begin(), cs.end(), edge_corners[ed][1]) != cs.end();
                if (a && b) mask |= static_cast<std::uint8_t>(1u << fc);
            }
            edge_faces[ed] = mask;
        }
    }

    static Vec3d offset(int c) { return Vec3d(c & 1, (c >> 1) & 1, (c >> 2) & 1); }

    int edge_between(int a, int b) const {
        for (int e = 0; e < 12; ++e)
            if ((edge_corners[e][0] == a && edge_corners[e][1] == b) ||
                (edge_corners[e][0] == b && edge_corners[e][1] == a))
                return e;
        return -1;
    }
};

// Per-case crossing loops, derived from face-local rules: on every cell face each
// outside->inside crossing (walking counter-clockwise) is joined to the next
// inside->outside crossing. Inside corners on ambiguous faces are thereby always
// separated, and since both cells sharing a face apply the same rule the surface
// has no cracks.
struct CaseTable {
    CubeTopology topo;
    std::array<std::vector<std::vector<int>>, 256> loops;

    CaseTable() {
        for (int cfg = 0; cfg < 256; ++cfg) {
            auto inside = [&](int c) { return (cfg >> c) & 1; };
            std::array<int, 12> next;
            next.fill(-1);
            for (const auto& cs : topo.face_corners) {
                std::array<int, 4> cross{};
                std::array<int, 4> kind{};  // +1 entering inside, -1 leaving
                int n = 0;
                for (int i = 0; i < 4; ++i) {
                    const int a = cs[i], b = cs[(i + 1) % 4];
                    if (inside(a) != inside(b)) {
                        cross[n] = topo.edge_between(a, b);
                        kind[n] = inside(b) ? 1 : -1;
                        ++n;
                    }
                }
                for (int i = 0; i < n; ++i) {
                    if (kind[i] != 1) continue;
                    for (int s = 1; s < n; ++s) {
                        const int j = (i + s) % n;
                        if (kind[j] == -1) {
                            next[cross[i]] = cross[j];
                            break;
                        }
                    }
                }
            }
            std::array<bool, 12> used{};
            for (int e = 0; e < 12; ++e) {
                if (next[e] < 0 || used[e]) continue;
                std::vector<int> loop;
                for (int cur = e; !used[cur]; cur = next[cur]) {
                    used[cur] = true;
                    loop.push_back(cur);
                }
                loops[cfg].push_back(std::move(loop));
            }
        }
    }
};

const CaseTable& case_table() {
    static const CaseTable table;
    return table;
}

}  // namespace

TriMesh marching_cubes(const SdfGrid& field, double iso) {
    const Vec3i dims = field.dims();
    bool below = false, above = false;
    for (float v : field.values()) {
        if (v < iso) below = true;
        else above = true;
    }
    if (!below || !above) throw EmptyIsoSurface("field does not cross the iso level");

    const auto& table = case_table();
    const auto& topo = table.topo;
    std::vector<Vec3d> verts;
    std::vector<std::array<int, 3>> tris;
    // Vertex id per grid edge: (grid point, axis) -> id.
    std::vector<int> edge_vertex(static_cast<std::size_t>(dims.x()) * dims.y() * dims.z() * 3, -1);

    auto vertex_on = [&](const Vec3i& base, int e) {
        const int c0 = topo.edge_corners[e][0], c1 = topo.edge_corners[e][1];
        const int axis = e / 4;
        const Vec3i p0 = base + CubeTopology::offset(c0).cast<int>();
        const std::size_t key = field.index(p0.x(), p0.y(), p0.z()) * 3 + static_cast<std::size_t>(axis);
        if (edge_vertex[key] >= 0) return edge_vertex[key];
        const Vec3i p1 = base + CubeTopology::offset(c1).cast<int>();
        const double v0 = field.at(p0.x(), p0.y(), p0.z()), v1 = field.at(p1.x(), p1.y(), p1.z());
        double t = (iso - v0) / (v1 - v0);
        // Keep vertices off grid points so adjacent edges never produce coincident vertices.
        t = std::clamp(t, 1e-3, 1.0 - 1e-3);
        const Vec3d a = field.grid_point(p0.x(), p0.y(), p0.z()), b = field.grid_point(p1.x(), p1.y(), p1.z());
        verts.push_back(a + t * (b - a));
        return edge_vertex[key] = static_cast<int>(verts.size()) - 1;
    };

    auto tri_area = [&](int a, int b, int c) { return 0.5 * (verts[b] - verts[a]).cross(verts[c] - verts[a]).norm(); };

    for (int k = 0; k + 1 < dims.z(); ++k)
        for (int j = 0; j + 1 < dims.y(); ++j)
            for (int i = 0; i + 1 < dims.x(); ++i) {
                int cfg = 0;
                for (int c = 0; c < 8; ++c)
                    if (field.at(i + (c & 1), j + ((c >> 1) & 1), k + ((c >> 2) & 1)) < iso) cfg |= 1 << c;
                if (cfg == 0 || cfg == 255) continue;
                const Vec3i base(i, j, k);
                for (const auto& loop : table.loops[cfg]) {
                    const int n = static_cast<int>(loop.size());
                    std::vector<int> ids(static_cast<std::size_t>(n));
                    for (int m = 0; m < n; ++m) ids[m] = vertex_on(base, loop[m]);
                    // Fan apex: fewest chords lying on a cell face (those could be
                    // duplicated by the neighbour), then the largest smallest triangle.
                    int best_apex = 0;
                    std::tuple<bool, int, double> best{false, std::numeric_limits<int>::max(), -1.0};
                    for (int apex = 0; apex < n; ++apex) {
                        int chords = 0;
                        double min_area = std::numeric_limits<double>::infinity();
                        for (int s = 1; s + 1 < n; ++s) {
                            const int b = (apex + s) % n, c = (apex + s + 1) % n;
                            min_area = std::min(min_area, tri_area(ids[apex], ids[b], ids[c]));
                            if (s >= 2 && (topo.edge_faces[loop[apex]] & topo.edge_faces[loop[b]])) ++chords;
                        }
                        const bool ok = min_area >= 10.0 * TriMesh::kMinFaceArea;
                        const auto& [bok, bchords, barea] = best;
                        if (apex == 0 || (ok && !bok) ||
                            (ok == bok && (chords < bchords || (chords == bchords && min_area > barea)))) {
                            best = {ok, chords, min_area};
                            best_apex = apex;
                        }
                    }
                    for (int s = 1; s + 1 < n; ++s)
                        tris.push_back({ids[best_apex], ids[(best_apex + s) % n], ids[(best_apex + s + 1) % n]});
                }
            }

    Points v(static_cast<Eigen::Index>(verts.size()), 3);
    for (std::size_t m = 0; m < verts.size(); ++m) v.row(static_cast<Eigen::Index>(m)) = verts[m].transpose();
    Faces f(static_cast<Eigen::Index>(tris.size()), 3);
    for (std::size_t m = 0; m < tris.size(); ++m) f.row(static_cast<Eigen::Index>(m)) << tris[m][0], tris[m][1], tris[m][2];
    return TriMesh(std::move(v), std::move(f));
}

}  // namespace volfit
