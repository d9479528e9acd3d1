#pragma once

#include <array>
#include <cmath>

#include "dovs/errors.hpp"
#include "dovs/kinematics.hpp"

namespace dovs {

inline constexpr int kNumActions = 8;

/// Fixed slot semantics of the discrete action set.
enum ActionSlot : int {
    kAccelerate = 0,      // window vertex, +v
    kDecelerate = 1,      // window vertex, -v
    kTurnLeft = 2,        // window vertex, +w
    kTurnRight = 3,       // window vertex, -w
    kKeepVelocity = 4,    // current velocity
    kGoalLineMaxV = 5,    // goal-line/window intersection, max v
    kGoalLineMinV = 6,    // goal-line/window intersection, min v
    kHeadGoalCurrentV = 7 // goal-line point at the current linear velocity
};

/// Per-step availability; slots 0-4 are always selectable.
using ActionMask = std::array<bool, kNumActions>;

/// The 8 candidate commands plus their validity mask for one control period.
struct ActionTable {
    std::array<Velocity, kNumActions> commands{};
    ActionMask mask{};
};

/// Enumerates the action set relative to the dynamic window and the goal
/// line. Slots 5-6 require the goal line to intersect the window; slot 7
/// additionally requires the point at the current linear velocity to lie
/// inside the window (the command must be reachable this control period).
inline ActionTable enumerate_actions(const DynamicWindow& dw, const GoalArc& arc) {
    ActionTable out;
    out.commands[kAccelerate] = dw.v_plus;
    out.commands[kDecelerate] = dw.v_minus;
    out.commands[kTurnLeft] = dw.w_plus;
    out.commands[kTurnRight] = dw.w_minus;
    out.commands[kKeepVelocity] = dw.center;
    for (int s = 0; s <= kKeepVelocity; ++s) out.mask[s] = true;

    const auto inter = goal_line_window_intersection(dw, arc);
    if (inter) {
        out.commands[kGoalLineMaxV] = inter->second;
        out.commands[kGoalLineMinV] = inter->first;
        out.mask[kGoalLineMaxV] = true;
        out.mask[kGoalLineMinV] = true;
    }

    Velocity head{dw.center.v, arc.kind == CurvatureKind::straight
                                   ? 0.0
                                   : dw.center.v / arc.radius};
    if (point_in_window(head, dw)) {
        // Containment has a boundary tolerance; snap into the vertex box so
        // the command stays inside the one-step acceleration envelope.
        head.w = std::clamp(head.w, dw.w_minus.w, dw.w_plus.w);
        head.v = std::clamp(head.v, dw.v_minus.v, dw.v_plus.v);
        out.commands[kHeadGoalCurrentV] = head;
        out.mask[kHeadGoalCurrentV] = true;
    }
    return out;
}

/// Command lookup for a selected slot. Throws InvalidAction when the slot is
/// masked out.
inline Velocity action_to_command(int slot, const ActionTable& table) {
    if (slot < 0 || slot >= kNumActions)
        throw InvalidAction("action_to_command: slot out of range");
    if (!table.mask[slot])
        throw InvalidAction("action_to_command: slot is masked out");
    return table.commands[slot];
}

}  // namespace dovs
