#pragma once

#include <cmath>
#include <stdexcept>
#include <vector>

namespace wtp {

// Planar 2-D point in meters. Used both for global (easting/northing)
// and ego-frame (+x forward, +y left) coordinates.
struct Waypoint2D {
    double x = 0.0;
    double y = 0.0;

    Waypoint2D() = default;
    Waypoint2D(double x_, double y_) : x(x_), y(y_) {}

    Waypoint2D operator+(const Waypoint2D& o) const { return {x + o.x, y + o.y}; }
    Waypoint2D operator-(const Waypoint2D& o) const { return {x - o.x, y - o.y}; }
    Waypoint2D operator*(double s) const { return {x * s, y * s}; }

    double norm() const { return std::hypot(x, y); }
    double dot(const Waypoint2D& o) const { return x * o.x + y * o.y; }

    bool finite() const { return std::isfinite(x) && std::isfinite(y); }
};

inline double distance(const Waypoint2D& a, const Waypoint2D& b) {
    return std::hypot(a.x - b.x, a.y - b.y);
}

// Normalize an angle to (-pi, pi].
inline double wrap_angle(double a) {
    constexpr double two_pi = 2.0 * M_PI;
    a = std::fmod(a, two_pi);
    if (a <= -M_PI) a += two_pi;
    if (a > M_PI) a -= two_pi;
    return a;
}

// Rotate a point counterclockwise by `angle` radians.
inline Waypoint2D rotate(const Waypoint2D& p, double angle) {
    const double c = std::cos(angle), s = std::sin(angle);
    return {c * p.x - s * p.y, s * p.x + c * p.y};
}

struct EgoPose {
    Waypoint2D position;
    double heading = 0.0;  // radians, CCW from +x

    EgoPose() = default;
    EgoPose(Waypoint2D pos, double h) : position(pos), heading(wrap_angle(h)) {}

    // Global -> ego frame (+x forward, +y left).
    Waypoint2D to_ego(const Waypoint2D& global) const {
        return rotate(global - position, -heading);
    }
    // Ego -> global frame.
    Waypoint2D to_global(const Waypoint2D& ego) const {
        return rotate(ego, heading) + position;
    }
};

// Distance from point p to segment [a, b].
inline double point_segment_distance(const Waypoint2D& p, const Waypoint2D& a,
                                     const Waypoint2D& b) {
    const Waypoint2D d = b - a;
    const double len2 = d.dot(d);
    if (len2 <= 0.0) return distance(p, a);
    double t = (p - a).dot(d) / len2;
    t = std::max(0.0, std::min(1.0, t));
    return distance(p, a + d * t);
}

inline double polyline_length(const std::vector<Waypoint2D>& pts) {
    double len = 0.0;
    for (size_t i = 1; i < pts.size(); ++i) len += distance(pts[i - 1], pts[i]);
    return len;
}

}  // namespace wtp
