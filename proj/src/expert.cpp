#include "dmgpt/expert.hpp"

#include <algorithm>
#include <cmath>

namespace dmgpt::data {

using sim::Vec2;

double forward_headway(const sim::World& world, double max_dist) {
    const auto& ego = world.ego();
    Vec2 fwd{std::cos(ego.heading), std::sin(ego.heading)};
    double best = std::numeric_limits<double>::infinity();
    auto consider = [&](Vec2 pos, double extra_halfwidth) {
        Vec2 d = pos - ego.pos();
        double ahead = d.dot(fwd);
        double lat = std::abs(fwd.cross(d));
        if (ahead > 0 && ahead < max_dist && lat < 1.2 + extra_halfwidth)
            best = std::min(best, ahead);
    };
    for (const auto& t : world.traffic()) consider(t.vehicle.pos(), t.vehicle.width / 2);
    for (const auto& o : world.obstacles()) consider(o.center, o.half_wid);
    return best;
}

std::pair<double, double> expert_action(const sim::World& world, const ExpertParams& p) {
    const auto& ego = world.ego();
    const auto& center = world.centerline();
    const auto& par = world.params();

    // pure pursuit: chase a point `lookahead` meters further along the route
    double lookahead = std::clamp(p.lookahead_min + p.lookahead_gain * ego.speed,
                                  p.lookahead_min, p.lookahead_max);
    double target_s = std::min(world.route_progress_s() + lookahead, center.length());
    Vec2 target = center.point_at(target_s);
    Vec2 d = target - ego.pos();
    double chord = d.norm();
    double alpha = wrap_angle(std::atan2(d.y, d.x) - ego.heading);
    double steer_cmd = 0.0;
    if (chord > 1e-6) {
        double delta = std::atan2(2.0 * par.wheelbase * std::sin(alpha), chord);
        steer_cmd = std::clamp(delta / par.steer_max, -1.0, 1.0);
    }

    // speed control with headway-proportional braking
    double headway = forward_headway(world, p.brake_dist);
    double accel_cmd;
    if (headway < p.brake_dist) {
        double span = std::max(p.brake_dist - p.stop_dist, 1e-6);
        accel_cmd = -std::clamp((p.brake_dist - headway) / span, 0.0, 1.0);
    } else {
        accel_cmd = std::clamp(p.speed_kp * (p.target_speed - ego.speed), -1.0, 1.0);
    }
    return {steer_cmd, accel_cmd};
}

}  // namespace dmgpt::data
