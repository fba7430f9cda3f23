#pragma once

#include "volfit/sdf.hpp"

namespace volfit {

// Iso-surface of a sampled scalar field. Values below `iso` are inside; the
// output is oriented with normals toward increasing field values.
// Throws EmptyIsoSurface when the field does not straddle `iso`.
TriMesh marching_cubes(const SdfGrid& field, double iso = 0.0);

}  // namespace volfit
