#pragma once

#include <array>

#include "volfit/types.hpp"

namespace volfit::skeleton {

// 22-joint body skeleton in the canonical T-pose frame: pelvis at the origin,
// +z up, +x toward the body's left, -y anterior (the body faces -y).
//
//  idx name          parent   idx name          parent
//   0  pelvis          -       11  right_foot      8
//   1  left_hip        0       12  neck            9
//   2  right_hip       0       13  left_collar     9
//   3  spine1          0       14  right_collar    9
//   4  left_knee       1       15  head           12
//   5  right_knee      2       16  left_shoulder  13
//   6  spine2          3       17  right_shoulder 14
//   7  left_ankle      4       18  left_elbow     16
//   8  right_ankle     5       19  right_elbow    17
//   9  spine3          6       20  left_wrist     18
//  10  left_foot       7       21  right_wrist    19
//
// Every non-root joint j owns one bone, the capsule from parent(j) to j, which is
// driven by the parent's global rotation. Parents always precede children.
constexpr int kNumJoints = 22;
constexpr int kNumBones = 21;
constexpr int kNumRegions = 6;

enum Region : int { kTorso = 0, kHead = 1, kLeftArm = 2, kRightArm = 3, kLeftLeg = 4, kRightLeg = 5 };

extern const std::array<int, kNumJoints> kParent;
extern const std::array<const char*, kNumJoints> kJointName;

Vec3d canonical_joint(int j);
// Capsule radius (m) and shape region of the bone ending at joint j (j >= 1).
double bone_radius(int j);
int bone_region(int j);

// Non-adjacent bone pairs (by child joint) checked by the self-penetration prior.
// None of them overlap in the canonical T-pose at unit shape.
const std::vector<std::array<int, 2>>& self_penetration_pairs();

}  // namespace volfit::skeleton
