#pragma once

#include <algorithm>
#include <array>
#include <cmath>

namespace strokesimp {

struct Point {
    double x = 0.0;
    double y = 0.0;

    friend constexpr Point operator+(Point a, Point b) { return {a.x + b.x, a.y + b.y}; }
    friend constexpr Point operator-(Point a, Point b) { return {a.x - b.x, a.y - b.y}; }
    friend constexpr Point operator*(Point a, double s) { return {a.x * s, a.y * s}; }
    friend constexpr bool operator==(Point a, Point b) = default;
};

constexpr double dot(Point a, Point b) { return a.x * b.x + a.y * b.y; }

inline double distance(Point a, Point b) { return std::hypot(a.x - b.x, a.y - b.y); }

constexpr Point midpoint(Point a, Point b) { return {(a.x + b.x) * 0.5, (a.y + b.y) * 0.5}; }

/// Squared distance from p to the closed segment [a, b]. A zero-length
/// segment degenerates to the point a.
constexpr double squared_distance_to_segment(Point p, Point a, Point b) {
    const Point ab = b - a;
    const Point ap = p - a;
    const double len2 = dot(ab, ab);
    double t = 0.0;
    if (len2 > 0.0) {
        t = std::clamp(dot(ap, ab) / len2, 0.0, 1.0);
    }
    const Point d = ap - ab * t;
    return dot(d, d);
}

inline double distance_to_segment(Point p, Point a, Point b) {
    return std::sqrt(squared_distance_to_segment(p, a, b));
}

/// Pen coverage predicate: p lies inside the round-capped capsule of squared
/// radius r2 around [a, b]. Every rasterization path uses this exact
/// predicate, which is what makes composited and single-pass renders agree
/// bit for bit.
constexpr bool inside_capsule(Point p, Point a, Point b, double r2) {
    return squared_distance_to_segment(p, a, b) <= r2;
}

/// Cubic Bézier segment given by its four control points.
struct CubicSegment {
    std::array<Point, 4> p{};

    Point start() const { return p[0]; }
    Point end() const { return p[3]; }

    Point eval(double t) const {
        const double u = 1.0 - t;
        const double b0 = u * u * u;
        const double b1 = 3.0 * u * u * t;
        const double b2 = 3.0 * u * t * t;
        const double b3 = t * t * t;
        return {b0 * p[0].x + b1 * p[1].x + b2 * p[2].x + b3 * p[3].x,
                b0 * p[0].y + b1 * p[1].y + b2 * p[2].y + b3 * p[3].y};
    }

    friend bool operator==(const CubicSegment&, const CubicSegment&) = default;
};

/// de Casteljau split at t = 1/2.
inline std::array<CubicSegment, 2> split_half(const CubicSegment& c) {
    const Point p01 = midpoint(c.p[0], c.p[1]);
    const Point p12 = midpoint(c.p[1], c.p[2]);
    const Point p23 = midpoint(c.p[2], c.p[3]);
    const Point p012 = midpoint(p01, p12);
    const Point p123 = midpoint(p12, p23);
    const Point mid = midpoint(p012, p123);
    return {CubicSegment{{c.p[0], p01, p012, mid}}, CubicSegment{{mid, p123, p23, c.p[3]}}};
}

} // namespace strokesimp
