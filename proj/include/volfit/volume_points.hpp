#pragma once

#include "volfit/body_model.hpp"

namespace volfit {

constexpr int kPointsPerPair = 6;
constexpr int kDefaultFrontSamples = 256;
constexpr double kPairCameraDistance = 3.0;

// Pairs a camera-facing vertex with the back vertex where its line of sight
// leaves the mesh. `camera` is the virtual viewpoint; rays run from it through
// each front vertex. Throws NoPairsFound when no front ray exits the mesh.
InterpolationPairSet compute_pairs(const TriMesh& mesh, const Vec3d& camera, int n_front);

// Template version: camera 3 m in front of the pelvis (the body faces -y).
InterpolationPairSet compute_pairs(const BodyTemplate& body, int n_front = kDefaultFrontSamples);

// Visibility split used by compute_pairs: true for vertices seen from `camera`.
std::vector<bool> front_vertices(const TriMesh& mesh, const Vec3d& camera);

// Interior points v_f + (k/7)(v_b - v_f), k = 1..6, pair-major order.
Points internal_points(const Points& vertices, const InterpolationPairSet& pairs);

// Adjoint of internal_points: adds dE/dP_int into dE/dV.
void internal_points_backward(const Points& grad_points, const InterpolationPairSet& pairs, Points& grad_vertices);

}  // namespace volfit
