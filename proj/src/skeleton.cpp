#include "volfit/skeleton.hpp"

#include <algorithm>

namespace volfit::skeleton {

const std::array<int, kNumJoints> kParent = {-1, 0, 0, 0, 1, 2, 3, 4, 5, 6, 7, 8, 9, 9, 9, 12, 13, 14, 16, 17, 18, 19};

const std::array<const char*, kNumJoints> kJointName = {
    "pelvis",      "left_hip",     "right_hip",     "spine1",     "left_knee",   "right_knee",
    "spine2",      "left_ankle",   "right_ankle",   "spine3",     "left_foot",   "right_foot",
    "neck",        "left_collar",  "right_collar",  "head",       "left_shoulder", "right_shoulder",
    "left_elbow",  "right_elbow",  "left_wrist",    "right_wrist"};

namespace {

// Roughly a 1.70 m adult: head top at +0.75, soles at -0.95 relative to the pelvis.
const std::array<std::array<double, 3>, kNumJoints> kJoints = {{
    {0.0, 0.0, 0.0},      {0.09, 0.0, -0.07},   {-0.09, 0.0, -0.07},  {0.0, 0.0, 0.10},
    {0.09, 0.0, -0.45},   {-0.09, 0.0, -0.45},  {0.0, 0.0, 0.23},     {0.09, 0.0, -0.85},
    {-0.09, 0.0, -0.85},  {0.0, 0.0, 0.35},     {0.09, -0.13, -0.91}, {-0.09, -0.13, -0.91},
    {0.0, 0.0, 0.53},     {0.07, 0.0, 0.47},    {-0.07, 0.0, 0.47},   {0.0, 0.0, 0.65},
    {0.18, 0.0, 0.47},    {-0.18, 0.0, 0.47},   {0.44, 0.0, 0.47},    {-0.44, 0.0, 0.47},
    {0.68, 0.0, 0.47},    {-0.68, 0.0, 0.47},
}};

const std::array<double, kNumJoints> kRadius = {0.0,  0.09, 0.09, 0.11, 0.07,  0.07,  0.11, 0.05,
                                                0.05, 0.12, 0.04, 0.04, 0.06,  0.06,  0.06, 0.10,
                                                0.055, 0.055, 0.045, 0.045, 0.04, 0.04};

const std::array<int, kNumJoints> kRegion = {-1,       kLeftLeg, kRightLeg, kTorso,    kLeftLeg, kRightLeg,
                                             kTorso,   kLeftLeg, kRightLeg, kTorso,    kLeftLeg, kRightLeg,
                                             kHead,    kLeftArm, kRightArm, kHead,     kLeftArm, kRightArm,
                                             kLeftArm, kRightArm, kLeftArm, kRightArm};

}  // namespace

Vec3d canonical_joint(int j) { return Vec3d(kJoints[j][0], kJoints[j][1], kJoints[j][2]); }
double bone_radius(int j) { return kRadius[j]; }
int bone_region(int j) { return kRegion[j]; }

const std::vector<std::array<int, 2>>& self_penetration_pairs() {
    // Upper arms / forearms against the trunk, head, legs and the other arm;
    // thighs / shins / feet against the other leg.
    static const std::vector<std::array<int, 2>> pairs = [] {
        std::vector<std::array<int, 2>> out;
        const std::array<int, 4> arms = {18, 20, 19, 21};
        const std::array<int, 4> trunk = {3, 6, 9, 15};
        for (int a : arms) {
            for (int t : trunk) out.push_back({a, t});
            for (int l : {4, 7, 5, 8}) out.push_back({a, l});
        }
        for (int a : {18, 20})
            for (int b : {19, 21}) out.push_back({a, b});
        for (int l : {4, 7, 10})
            for (int r : {5, 8, 11}) out.push_back({l, r});
        return out;
    }();
    return pairs;
}

}  // namespace volfit::skeleton
