#pragma once

// Planar geometry for the driving environment: polylines with arc-length
// parameterization, ray casting against segments, and oriented-box overlap.

#include <array>
#include <limits>
#include <vector>

#include "dmgpt/common.hpp"

namespace dmgpt::sim {

struct Vec2 {
    double x = 0, y = 0;
    Vec2 operator+(Vec2 o) const { return {x + o.x, y + o.y}; }
    Vec2 operator-(Vec2 o) const { return {x - o.x, y - o.y}; }
    Vec2 operator*(double s) const { return {x * s, y * s}; }
    double dot(Vec2 o) const { return x * o.x + y * o.y; }
    double cross(Vec2 o) const { return x * o.y - y * o.x; }
    double norm() const;
    Vec2 normalized() const;
    Vec2 rotated(double angle) const;
};

struct Segment {
    Vec2 a, b;
};

// Open polyline with cached cumulative arc length.
class Polyline {
  public:
    Polyline() = default;
    explicit Polyline(std::vector<Vec2> pts);

    const std::vector<Vec2>& points() const { return pts_; }
    double length() const { return cum_.empty() ? 0.0 : cum_.back(); }
    size_t segment_count() const { return pts_.size() < 2 ? 0 : pts_.size() - 1; }
    double segment_start(size_t i) const { return cum_[i]; }
    Segment segment(size_t i) const { return {pts_[i], pts_[i + 1]}; }

    Vec2 point_at(double s) const;    // clamped to [0, length]
    Vec2 tangent_at(double s) const;  // unit tangent of the containing segment
    double heading_at(double s) const;

    struct Projection {
        double s = 0;        // arc length of the foot point
        double lateral = 0;  // signed offset, positive to the left of travel
        double dist = 0;     // unsigned distance to the foot point
    };
    Projection project(Vec2 p) const;

    // Parallel polyline offset by `d` to the left (negative = right), miter
    // joins at vertices.
    Polyline offset(double d) const;

  private:
    std::vector<Vec2> pts_;
    std::vector<double> cum_;
};

// Distance along ray (origin, unit dir) to segment, or +inf when it misses.
double ray_segment_distance(Vec2 origin, Vec2 dir, const Segment& seg);

// Oriented rectangle (vehicle footprint, static obstacle).
struct Obb {
    Vec2 center;
    double heading = 0;
    double half_len = 0;  // along heading
    double half_wid = 0;

    std::array<Vec2, 4> corners() const;
    std::array<Segment, 4> edges() const;
};

// Separating-axis overlap test for two oriented rectangles.
bool obb_overlap(const Obb& a, const Obb& b);

// Sampled circular arc from angle a0 to a1 (radians, signed sweep), max
// `step` meters between samples.
std::vector<Vec2> arc_points(Vec2 center, double radius, double a0, double a1,
                             double step = 2.0);

}  // namespace dmgpt::sim
