#pragma once

#include <vector>

#include "volfit/camera.hpp"

namespace volfit {

// Per-pixel depth along the optical axis, +inf where nothing was hit.
struct DepthBuffer {
    int width = 0;
    int height = 0;
    std::vector<float> depth;

    DepthBuffer() = default;
    DepthBuffer(int w, int h);
    float at(int u, int v) const { return depth[static_cast<std::size_t>(v) * width + u]; }
    float& at(int u, int v) { return depth[static_cast<std::size_t>(v) * width + u]; }
};

// Ray-cast depth of a static mesh (used once per fit for the scene).
DepthBuffer render_depth(const TriangleBvh& mesh, const Camera& camera);

// Z-buffer rasterization with perspective-correct depth; pixel centres inside a
// projected triangle are covered. Triangles with a corner closer than 1 cm are skipped.
void rasterize_depth(const Points& vertices, const Faces& faces, const Camera& camera, DepthBuffer& buffer);

// Vertices whose pixel shows them: not behind the scene and within `tolerance`
// of the body's own z-buffer.
constexpr double kVisibilityTolerance = 0.02;
IndexList visible_vertices(const Points& vertices, const Faces& faces, const Camera& camera,
                           const DepthBuffer& scene_depth, double tolerance = kVisibilityTolerance);

}  // namespace volfit
