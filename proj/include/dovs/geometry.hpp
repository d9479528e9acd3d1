#pragma once

#include <cmath>

namespace dovs {

inline constexpr double kPi = 3.14159265358979323846;

/// Wraps an angle to (-pi, pi].
inline double wrap_angle(double a) {
    a = std::fmod(a + kPi, 2.0 * kPi);
    if (a <= 0.0) a += 2.0 * kPi;
    return a - kPi;
}

/// Planar pose; theta is kept wrapped to (-pi, pi].
struct Pose {
    double x = 0.0;
    double y = 0.0;
    double theta = 0.0;
};

/// Differential-drive velocity: linear v [m/s] and angular w [rad/s].
struct Velocity {
    double v = 0.0;
    double w = 0.0;
};

struct Vec2 {
    double x = 0.0;
    double y = 0.0;
};

inline double distance(const Vec2& a, const Vec2& b) {
    return std::hypot(b.x - a.x, b.y - a.y);
}

inline double squared_distance(double ax, double ay, double bx, double by) {
    const double dx = bx - ax;
    const double dy = by - ay;
    return dx * dx + dy * dy;
}

/// Expresses a world point in the frame of the given pose (x forward, y left).
inline Vec2 to_robot_frame(const Pose& robot, const Vec2& world) {
    const double dx = world.x - robot.x;
    const double dy = world.y - robot.y;
    const double c = std::cos(robot.theta);
    const double s = std::sin(robot.theta);
    return {c * dx + s * dy, -s * dx + c * dy};
}

/// Bearing of a world point as seen from the pose, in (-pi, pi].
inline double bearing_to(const Pose& robot, const Vec2& world) {
    return wrap_angle(std::atan2(world.y - robot.y, world.x - robot.x) - robot.theta);
}

}  // namespace dovs
