#pragma once

#include <memory>

#include "volfit/fitter.hpp"
#include "volfit/volume_points.hpp"

namespace volfit::testing {

// Template with interpolation pairs, built once per test binary.
inline std::shared_ptr<const BodyTemplate> shared_body() {
    static const std::shared_ptr<const BodyTemplate> body = [] {
        auto t = std::make_shared<BodyTemplate>(build_template(64));
        t->pairs = compute_pairs(*t);
        return std::shared_ptr<const BodyTemplate>(t);
    }();
    return body;
}

inline const std::vector<Scenario>& shared_suite() {
    static const std::vector<Scenario> suite = scenario_suite(*shared_body(), 7);
    return suite;
}

inline const Scenario& scenario_with_tag(const std::string& tag, int variant = 0) {
    for (const auto& s : shared_suite())
        if (s.tag == tag && variant-- == 0) return s;
    throw std::runtime_error("no scenario " + tag);
}

// State near `base` with Gaussian noise on every parameter group.
inline BodyState perturbed(const BodyState& base, Rng& rng, double pose_std, double trans_std = 0.0,
                           double shape_std = 0.0) {
    BodyState s = base;
    for (int i = 0; i < kNumPoseParams; ++i) s.pose(i) += pose_std * standard_normal(rng);
    for (int i = 0; i < 3; ++i) {
        s.root_orient(i) += 0.5 * pose_std * standard_normal(rng);
        s.translation(i) += trans_std * standard_normal(rng);
    }
    for (int i = 0; i < kNumShapeParams; ++i) s.shape(i) += shape_std * standard_normal(rng);
    s.project();
    return s;
}

}  // namespace volfit::testing
