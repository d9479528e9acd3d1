#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <limits>
#include <optional>
#include <utility>

#include "dovs/errors.hpp"
#include "dovs/geometry.hpp"

namespace dovs {

/// Velocity and acceleration envelope of the platform. Reverse motion is
/// disallowed (v_min = 0), matching a differential-drive base that only
/// navigates forward.
struct KinodynamicLimits {
    double v_max = 0.7;    // m/s
    double w_max = 1.5;    // rad/s
    double a_v_max = 0.7;  // m/s^2
    double a_w_max = 2.0;  // rad/s^2
    double dt = 0.2;       // control period, s
};

/// Below this |w| a commanded trajectory is treated as a straight line.
inline constexpr double kStraightOmegaThreshold = 1e-6;

/// Numeric slack for boundary points produced by clipping/intersection.
inline constexpr double kAdmissibleSlack = 1e-12;

/// True iff the velocity is reachable by the platform at all: v in [0, v_max],
/// |w| <= w_max, and the coupling v/v_max + |w|/w_max <= 1 (the robot cannot
/// be at maximum linear and angular velocity at the same time).
inline bool admissible(const Velocity& vel, const KinodynamicLimits& lim) {
    const double vn = vel.v / lim.v_max;
    const double wn = std::abs(vel.w) / lim.w_max;
    return vn >= -kAdmissibleSlack && vn <= 1.0 + kAdmissibleSlack &&
           wn <= 1.0 + kAdmissibleSlack && vn + wn <= 1.0 + kAdmissibleSlack;
}

/// Exact constant-(v, w) arc integration over dt. Total function; for
/// |w| below the straight threshold the limit formula is used.
inline Pose propagate_unicycle(const Pose& p, const Velocity& cmd, double dt) {
    if (std::abs(cmd.w) >= kStraightOmegaThreshold) {
        const double th1 = p.theta + cmd.w * dt;
        const double r = cmd.v / cmd.w;
        return {p.x + r * (std::sin(th1) - std::sin(p.theta)),
                p.y - r * (std::cos(th1) - std::cos(p.theta)),
                wrap_angle(th1)};
    }
    return {p.x + cmd.v * std::cos(p.theta) * dt,
            p.y + cmd.v * std::sin(p.theta) * dt,
            wrap_angle(p.theta + cmd.w * dt)};
}

/// Velocities reachable within one control period: a rhombus spanned by the
/// four acceleration extremes around the current velocity, with every vertex
/// clipped back into the admissible set.
struct DynamicWindow {
    Velocity center;
    Velocity v_plus;   // max linear acceleration
    Velocity v_minus;  // max linear deceleration
    Velocity w_plus;   // max angular acceleration, ccw
    Velocity w_minus;  // max angular acceleration, cw

    /// Vertices in cyclic order (top, right, bottom, left in (w, v) space).
    std::array<Velocity, 4> vertices() const { return {v_plus, w_plus, v_minus, w_minus}; }
};

namespace detail {

inline double triangle_load(const Velocity& q, const KinodynamicLimits& lim) {
    return q.v / lim.v_max + std::abs(q.w) / lim.w_max;
}

/// Axis clamp, then scale toward the (admissible) center until the triangle
/// coupling holds. The coupling is piecewise linear along the segment with at
/// most one kink where w crosses zero, so the crossing point is solved exactly.
inline Velocity clip_vertex(Velocity q, const Velocity& center, const KinodynamicLimits& lim) {
    q.v = std::clamp(q.v, 0.0, lim.v_max);
    q.w = std::clamp(q.w, -lim.w_max, lim.w_max);
    if (triangle_load(q, lim) <= 1.0) return q;

    auto at = [&](double t) {
        return Velocity{center.v + t * (q.v - center.v), center.w + t * (q.w - center.w)};
    };
    double lo = 0.0;
    double hi = 1.0;
    if (center.w != q.w) {
        const double tk = center.w / (center.w - q.w);
        if (tk > 0.0 && tk < 1.0) {
            if (triangle_load(at(tk), lim) <= 1.0) lo = tk; else hi = tk;
        }
    }
    const double f_lo = triangle_load(at(lo), lim);
    const double f_hi = triangle_load(at(hi), lim);
    double t = lo;
    if (f_hi > f_lo) t = lo + (1.0 - f_lo) / (f_hi - f_lo) * (hi - lo);
    return at(std::clamp(t, 0.0, 1.0));
}

}  // namespace detail

/// Window around the current velocity under maximum accelerations over one
/// control period. Requires admissible(cur).
inline DynamicWindow dynamic_window(const Velocity& cur, const KinodynamicLimits& lim) {
    const double dv = lim.a_v_max * lim.dt;
    const double dw = lim.a_w_max * lim.dt;
    DynamicWindow out;
    out.center = cur;
    out.v_plus = detail::clip_vertex({cur.v + dv, cur.w}, cur, lim);
    out.v_minus = detail::clip_vertex({cur.v - dv, cur.w}, cur, lim);
    out.w_plus = detail::clip_vertex({cur.v, cur.w + dw}, cur, lim);
    out.w_minus = detail::clip_vertex({cur.v, cur.w - dw}, cur, lim);
    return out;
}

enum class CurvatureKind { straight, arc_left, arc_right };

/// The circular trajectory through the goal: the unique circle through the
/// origin of the robot frame, tangent to the heading axis, passing through the
/// goal. In velocity space it is the line v = radius * w (w = 0 if straight).
/// Radius is signed: positive means the goal lies to the left of the heading.
struct GoalArc {
    CurvatureKind kind = CurvatureKind::straight;
    double radius = std::numeric_limits<double>::infinity();
};

/// Goal expressed in the robot frame. Throws ZeroDistance if the goal
/// coincides with the robot position (distance <= 1e-9).
inline GoalArc goal_arc(double goal_x, double goal_y) {
    if (goal_x * goal_x + goal_y * goal_y <= 1e-18)
        throw ZeroDistance("goal_arc: goal coincides with robot position");
    if (std::abs(goal_y) < 1e-6)
        return {CurvatureKind::straight, std::numeric_limits<double>::infinity()};
    const double radius = (goal_x * goal_x + goal_y * goal_y) / (2.0 * goal_y);
    return {goal_y > 0.0 ? CurvatureKind::arc_left : CurvatureKind::arc_right, radius};
}

/// Signed residual of a velocity against the goal line; zero on the line.
inline double goal_line_residual(const Velocity& p, const GoalArc& arc) {
    return arc.kind == CurvatureKind::straight ? p.w : p.v - arc.radius * p.w;
}

/// Intersection of the goal line with the clipped window polygon, as the
/// (min-v, max-v) pair of boundary points. Tangency returns the same point
/// twice; a miss returns nullopt.
inline std::optional<std::pair<Velocity, Velocity>> goal_line_window_intersection(
        const DynamicWindow& dw, const GoalArc& arc) {
    const double scale =
        arc.kind == CurvatureKind::straight ? 1.0 : 1.0 + std::abs(arc.radius);
    const double on_line_tol = 1e-12 * scale;

    const auto poly = dw.vertices();
    std::array<Velocity, 8> pts;
    int n = 0;
    auto push_unique = [&](const Velocity& p) {
        for (int i = 0; i < n; ++i)
            if (std::abs(pts[i].v - p.v) < 1e-9 && std::abs(pts[i].w - p.w) < 1e-9) return;
        pts[n++] = p;
    };
    for (int i = 0; i < 4; ++i) {
        const Velocity& a = poly[i];
        const Velocity& b = poly[(i + 1) % 4];
        const double sa = goal_line_residual(a, arc);
        const double sb = goal_line_residual(b, arc);
        const bool za = std::abs(sa) <= on_line_tol;
        const bool zb = std::abs(sb) <= on_line_tol;
        if (za) push_unique(a);
        if (zb) push_unique(b);
        if (!za && !zb && (sa < 0.0) != (sb < 0.0)) {
            const double t = sa / (sa - sb);
            push_unique({a.v + t * (b.v - a.v), a.w + t * (b.w - a.w)});
        }
    }
    if (n == 0) return std::nullopt;
    Velocity lo = pts[0];
    Velocity hi = pts[0];
    for (int i = 1; i < n; ++i) {
        if (pts[i].v < lo.v) lo = pts[i];
        if (pts[i].v > hi.v) hi = pts[i];
    }
    return std::make_pair(lo, hi);
}

/// Containment test against the clipped window polygon, boundary inclusive;
/// tol is a distance in velocity units. Degenerate polygons fall back to a
/// distance-to-edges test.
inline bool point_in_window(const Velocity& p, const DynamicWindow& dw, double tol = 1e-9) {
    const auto poly = dw.vertices();
    double area2 = 0.0;
    for (int i = 0; i < 4; ++i) {
        const Velocity& a = poly[i];
        const Velocity& b = poly[(i + 1) % 4];
        area2 += a.w * b.v - b.w * a.v;
    }
    if (std::abs(area2) < 1e-15) {
        // Collapsed window: accept points within tol of some edge segment.
        for (int i = 0; i < 4; ++i) {
            const Velocity& a = poly[i];
            const Velocity& b = poly[(i + 1) % 4];
            const double ew = b.w - a.w;
            const double ev = b.v - a.v;
            const double len2 = ew * ew + ev * ev;
            double t = 0.0;
            if (len2 > 0.0) t = std::clamp(((p.w - a.w) * ew + (p.v - a.v) * ev) / len2, 0.0, 1.0);
            const double dw_ = p.w - (a.w + t * ew);
            const double dv_ = p.v - (a.v + t * ev);
            if (dw_ * dw_ + dv_ * dv_ <= tol * tol) return true;
        }
        return false;
    }
    const double orient = area2 > 0.0 ? 1.0 : -1.0;
    for (int i = 0; i < 4; ++i) {
        const Velocity& a = poly[i];
        const Velocity& b = poly[(i + 1) % 4];
        const double ew = b.w - a.w;
        const double ev = b.v - a.v;
        const double len = std::hypot(ew, ev);
        if (len < 1e-15) continue;
        const double cross = ew * (p.v - a.v) - ev * (p.w - a.w);
        if (orient * cross < -tol * len) return false;
    }
    return true;
}

}  // namespace dovs
