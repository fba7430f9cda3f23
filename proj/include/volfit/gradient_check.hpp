#pragma once

#include <string>
#include <vector>

#include "volfit/energy.hpp"
#include "volfit/sampling.hpp"

namespace volfit {

enum class EnergyTerm { joints, depth, reg, penetration, contact, fz, tsv };
std::string to_string(EnergyTerm t);
const std::vector<EnergyTerm>& all_energy_terms();

// Copy of ctx whose total energy is exactly the given term (unit weight), with
// the terms it needs switched on.
EnergyContext isolate_term(const EnergyContext& ctx, EnergyTerm term, TermSet* terms);

struct GradientCheck {
    bool skipped = false;  // a nearest-neighbour choice changed within the step
    double value = 0.0;
    double gradient_norm = 0.0;
    // Largest |finite difference - analytic| over the probed directions,
    // divided by the gradient norm.
    double relative_error = 0.0;
};

// Central differences with step h along the normalized gradient and
// `random_directions` random unit directions.
GradientCheck check_gradient(const EnergyContext& ctx, const TermSet& terms, const BodyState& state, double h,
                             int random_directions, Rng& rng);

}  // namespace volfit
