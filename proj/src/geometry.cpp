#include "dmgpt/geometry.hpp"

#include <algorithm>
#include <cmath>

namespace dmgpt::sim {

double Vec2::norm() const { return std::sqrt(x * x + y * y); }

Vec2 Vec2::normalized() const {
    double n = norm();
    if (n < 1e-12) return {0, 0};
    return {x / n, y / n};
}

Vec2 Vec2::rotated(double angle) const {
    double c = std::cos(angle), s = std::sin(angle);
    return {c * x - s * y, s * x + c * y};
}

Polyline::Polyline(std::vector<Vec2> pts) : pts_(std::move(pts)) {
    if (pts_.size() < 2) throw ConfigError("polyline needs at least 2 points");
    cum_.resize(pts_.size());
    cum_[0] = 0;
    for (size_t i = 1; i < pts_.size(); i++) {
        double d = (pts_[i] - pts_[i - 1]).norm();
        if (d < 1e-9) throw ConfigError("polyline has duplicate consecutive points");
        cum_[i] = cum_[i - 1] + d;
    }
}

Vec2 Polyline::point_at(double s) const {
    s = std::clamp(s, 0.0, length());
    auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
    size_t i = std::min(pts_.size() - 2, static_cast<size_t>(std::max<ptrdiff_t>(
                                             0, (it - cum_.begin()) - 1)));
    double seg_len = cum_[i + 1] - cum_[i];
    double t = (s - cum_[i]) / seg_len;
    return pts_[i] + (pts_[i + 1] - pts_[i]) * t;
}

Vec2 Polyline::tangent_at(double s) const {
    s = std::clamp(s, 0.0, length());
    auto it = std::upper_bound(cum_.begin(), cum_.end(), s);
    size_t i = std::min(pts_.size() - 2, static_cast<size_t>(std::max<ptrdiff_t>(
                                             0, (it - cum_.begin()) - 1)));
    return (pts_[i + 1] - pts_[i]).normalized();
}

double Polyline::heading_at(double s) const {
    Vec2 t = tangent_at(s);
    return std::atan2(t.y, t.x);
}

Polyline::Projection Polyline::project(Vec2 p) const {
    Projection best;
    best.dist = std::numeric_limits<double>::infinity();
    for (size_t i = 0; i + 1 < pts_.size(); i++) {
        Vec2 a = pts_[i], b = pts_[i + 1];
        Vec2 ab = b - a;
        double len2 = ab.dot(ab);
        double t = std::clamp((p - a).dot(ab) / len2, 0.0, 1.0);
        Vec2 foot = a + ab * t;
        double d = (p - foot).norm();
        if (d < best.dist) {
            best.dist = d;
            best.s = cum_[i] + t * std::sqrt(len2);
            Vec2 dir = ab.normalized();
            best.lateral = dir.cross(p - foot);
        }
    }
    return best;
}

Polyline Polyline::offset(double d) const {
    std::vector<Vec2> out;
    out.reserve(pts_.size());
    for (size_t i = 0; i < pts_.size(); i++) {
        Vec2 dir_in = i > 0 ? (pts_[i] - pts_[i - 1]).normalized() : Vec2{};
        Vec2 dir_out = i + 1 < pts_.size() ? (pts_[i + 1] - pts_[i]).normalized() : Vec2{};
        Vec2 avg;
        if (i == 0) avg = dir_out;
        else if (i + 1 == pts_.size()) avg = dir_in;
        else avg = (dir_in + dir_out).normalized();
        if (avg.norm() < 1e-9) avg = dir_out;  // 180-degree turn, degenerate miter
        Vec2 normal{-avg.y, avg.x};
        // miter scale keeps the offset curve parallel through the corner
        double scale = 1.0;
        if (i > 0 && i + 1 < pts_.size()) {
            double c = avg.dot(dir_out);
            if (c > 0.1) scale = 1.0 / c;
        }
        out.push_back(pts_[i] + normal * (d * scale));
    }
    return Polyline(std::move(out));
}

double ray_segment_distance(Vec2 origin, Vec2 dir, const Segment& seg) {
    // Solve origin + t*dir = a + u*(b-a), t >= 0, u in [0,1].
    Vec2 e = seg.b - seg.a;
    double denom = dir.cross(e);
    if (std::abs(denom) < 1e-12) return std::numeric_limits<double>::infinity();
    Vec2 ao = seg.a - origin;
    double t = ao.cross(e) / denom;
    double u = ao.cross(dir) / denom;
    if (t < 0 || u < 0 || u > 1) return std::numeric_limits<double>::infinity();
    return t;
}

std::array<Vec2, 4> Obb::corners() const {
    Vec2 fwd{std::cos(heading), std::sin(heading)};
    Vec2 left{-fwd.y, fwd.x};
    Vec2 dl = fwd * half_len, dw = left * half_wid;
    return {center + dl + dw, center + dl - dw, center - dl - dw, center - dl + dw};
}

std::array<Segment, 4> Obb::edges() const {
    auto c = corners();
    return {Segment{c[0], c[1]}, Segment{c[1], c[2]}, Segment{c[2], c[3]}, Segment{c[3], c[0]}};
}

static bool separated_on_axes(const Obb& a, const std::array<Vec2, 4>& ca,
                              const std::array<Vec2, 4>& cb) {
    Vec2 axes[2] = {{std::cos(a.heading), std::sin(a.heading)},
                    {-std::sin(a.heading), std::cos(a.heading)}};
    for (const Vec2& ax : axes) {
        double amin = std::numeric_limits<double>::infinity(), amax = -amin;
        double bmin = amin, bmax = amax;
        for (const Vec2& p : ca) {
            double v = p.dot(ax);
            amin = std::min(amin, v);
            amax = std::max(amax, v);
        }
        for (const Vec2& p : cb) {
            double v = p.dot(ax);
            bmin = std::min(bmin, v);
            bmax = std::max(bmax, v);
        }
        if (amax < bmin || bmax < amin) return true;
    }
    return false;
}

bool obb_overlap(const Obb& a, const Obb& b) {
    auto ca = a.corners(), cb = b.corners();
    if (separated_on_axes(a, ca, cb)) return false;
    if (separated_on_axes(b, cb, ca)) return false;
    return true;
}

std::vector<Vec2> arc_points(Vec2 center, double radius, double a0, double a1, double step) {
    double sweep = a1 - a0;
    int n = std::max(2, static_cast<int>(std::ceil(std::abs(sweep) * radius / step)) + 1);
    std::vector<Vec2> pts;
    pts.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; i++) {
        double a = a0 + sweep * i / (n - 1);
        pts.push_back({center.x + radius * std::cos(a), center.y + radius * std::sin(a)});
    }
    return pts;
}

}  // namespace dmgpt::sim
