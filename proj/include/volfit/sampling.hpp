#pragma once

#include <cstdint>
#include <random>

#include "volfit/mesh.hpp"

namespace volfit {

using Rng = std::mt19937_64;

// Greedy farthest point sampling from `seed_index`. The i-th pick maximizes the
// distance to the already selected set; ties go to the lowest index.
// Throws InsufficientPoints if k > |points| and std::invalid_argument if k < 1.
IndexList farthest_point_sampling(const Points& points, int k, int seed_index = 0);

Points select_rows(const Points& points, const IndexList& rows);

// Area-weighted uniform samples on the surface; optionally reports the source face.
Points sample_surface(const TriMesh& mesh, int count, Rng& rng, std::vector<int>* faces = nullptr);

// Portable uniform/normal draws (std distributions are implementation defined).
double uniform01(Rng& rng);
double standard_normal(Rng& rng);

}  // namespace volfit
