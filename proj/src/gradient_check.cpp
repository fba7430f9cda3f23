#include "volfit/gradient_check.hpp"

#include <algorithm>
#include <cmath>

#include "volfit/errors.hpp"

namespace volfit {

std::string to_string(EnergyTerm t) {
    switch (t) {
        case EnergyTerm::joints: return "joints";
        case EnergyTerm::depth: return "depth";
        case EnergyTerm::reg: return "reg";
        case EnergyTerm::penetration: return "penetration";
        case EnergyTerm::contact: return "contact";
        case EnergyTerm::fz: return "fz";
        case EnergyTerm::tsv: return "tsv";
    }
    return "unknown";
}

const std::vector<EnergyTerm>& all_energy_terms() {
    static const std::vector<EnergyTerm> terms = {EnergyTerm::joints,  EnergyTerm::depth, EnergyTerm::reg,
                                                  EnergyTerm::penetration, EnergyTerm::contact, EnergyTerm::fz,
                                                  EnergyTerm::tsv};
    return terms;
}

EnergyContext isolate_term(const EnergyContext& ctx, EnergyTerm term, TermSet* terms) {
    EnergyContext out = ctx;
    EnergyWeights& w = out.weights;
    w.lambda_j = w.lambda_d = w.lambda_r = w.lambda_p = w.lambda_c = w.lambda_fz = w.lambda_tsv = 0.0;
    TermSet t;
    switch (term) {
        case EnergyTerm::joints: w.lambda_j = 1.0; break;
        case EnergyTerm::depth: w.lambda_d = 1.0; break;
        case EnergyTerm::reg: w.lambda_r = 1.0; break;
        case EnergyTerm::penetration:
            w.lambda_p = 1.0;
            t.penetration = true;
            break;
        case EnergyTerm::contact:
            w.lambda_c = 1.0;
            t.contact = true;
            break;
        case EnergyTerm::fz:
            w.lambda_fz = 1.0;
            t.fz = true;
            break;
        case EnergyTerm::tsv:
            w.lambda_tsv = 1.0;
            t.tsv = true;
            break;
    }
    if (terms) *terms = t;
    return out;
}

namespace {

BodyState shifted(const BodyState& s, const ParamVector& d, double h) {
    return BodyState::from_vector(s.to_vector() + h * d);
}

}  // namespace

GradientCheck check_gradient(const EnergyContext& ctx, const TermSet& terms, const BodyState& state, double h,
                             int random_directions, Rng& rng) {
    if (!(h > 0.0)) throw ConfigError("finite-difference step must be positive");
    GradientCheck out;
    ParamVector grad;
    ArgminLog base_log;
    out.value = total_energy(ctx, terms, state, &grad, &base_log).total;
    out.gradient_norm = grad.norm();

    std::vector<ParamVector> directions;
    if (out.gradient_norm > 0.0) directions.push_back(grad / out.gradient_norm);
    for (int k = 0; k < random_directions; ++k) {
        ParamVector d;
        for (int i = 0; i < kNumParams; ++i) d(i) = standard_normal(rng);
        directions.push_back(d.normalized());
    }

    for (const ParamVector& d : directions) {
        ArgminLog plus_log, minus_log;
        const double plus = total_energy(ctx, terms, shifted(state, d, h), nullptr, &plus_log).total;
        const double minus = total_energy(ctx, terms, shifted(state, d, -h), nullptr, &minus_log).total;
        if (plus_log != base_log || minus_log != base_log) {
            out.skipped = true;
            return out;
        }
        const double fd = (plus - minus) / (2.0 * h);
        const double err = std::abs(fd - grad.dot(d));
        const double scale = out.gradient_norm > 0.0 ? out.gradient_norm : 1.0;
        out.relative_error = std::max(out.relative_error, err / scale);
    }
    return out;
}

}  // namespace volfit
