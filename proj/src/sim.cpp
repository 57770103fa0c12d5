#include "dmgpt/sim.hpp"

#include <algorithm>
#include <cmath>

namespace dmgpt::sim {

ActionCommand map_action(double a1, double a2, const SimParams& p) {
    if (std::isnan(a1) || std::isnan(a2)) throw NumericError("map_action: NaN action component");
    a1 = std::clamp(a1, -1.0, 1.0);
    a2 = std::clamp(a2, -1.0, 1.0);
    ActionCommand cmd;
    cmd.steer = p.steer_max * a1;
    cmd.engine_force = p.force_max * std::max(0.0, a2);
    cmd.brake_force = -p.brake_max * std::min(0.0, a2);
    return cmd;
}

double compute_reward(double progress, double speed, bool reached_destination,
                      const SimParams& p) {
    if (!std::isfinite(progress)) throw NumericError("compute_reward: non-finite progress");
    return progress + 0.1 * (speed / p.v_max) + (reached_destination ? 10.0 : 0.0);
}

double compute_cost(bool out_of_road, bool crash_vehicle, bool crash_object) {
    return 5.0 * out_of_road + 5.0 * crash_vehicle + 5.0 * crash_object;
}

const char* termination_name(Termination t) {
    switch (t) {
        case Termination::none: return "none";
        case Termination::destination: return "destination";
        case Termination::crash_vehicle: return "crash_vehicle";
        case Termination::crash_object: return "crash_object";
        case Termination::out_of_road: return "out_of_road";
        case Termination::timeout: return "timeout";
    }
    return "none";
}

std::optional<Termination> termination_from_name(const std::string& s) {
    for (Termination t : {Termination::none, Termination::destination, Termination::crash_vehicle,
                          Termination::crash_object, Termination::out_of_road,
                          Termination::timeout})
        if (s == termination_name(t)) return t;
    return std::nullopt;
}

World::World(ScenarioSpec spec, SimParams params, uint64_t seed)
    : spec_(std::move(spec)), params_(params), seed_(seed), rng_(seed) {
    spec_.validate(params_);
    center_ = Polyline(spec_.centerline);
    rebuild_static_geometry();
    reset(seed);
}

void World::rebuild_static_geometry() {
    boundary_.clear();
    const double hw = spec_.road_half_width;
    for (int side : {+1, -1}) {
        Polyline edge = center_.offset(side * hw);
        for (size_t i = 0; i < edge.segment_count(); i++) {
            // gap windows are expressed in centerline arc length; segment i of
            // the offset polyline parallels centerline segment i
            double mid_s = 0.5 * (center_.segment_start(i) + center_.segment_start(i + 1));
            bool open = false;
            for (const auto& g : spec_.gaps)
                if (g.side == side && mid_s >= g.s0 && mid_s <= g.s1) open = true;
            if (!open) boundary_.push_back(edge.segment(i));
        }
    }
    obstacles_.clear();
    for (const auto& o : spec_.obstacles)
        obstacles_.push_back({{o.x, o.y}, o.heading, o.half_len, o.half_wid});

    checkpoints_.clear();
    const double len = center_.length();
    for (double s = spec_.checkpoint_interval; s < len - 1e-9; s += spec_.checkpoint_interval)
        checkpoints_.push_back(s);
    checkpoints_.push_back(len);  // destination
}

Observation World::reset() { return reset(seed_); }

Observation World::reset(uint64_t seed) {
    seed_ = seed;
    rng_ = Rng(seed);
    ego_ = VehicleState{};
    ego_.length = params_.veh_len;
    ego_.width = params_.veh_wid;
    Vec2 start = center_.point_at(0);
    ego_.x = start.x;
    ego_.y = start.y;
    ego_.heading = center_.heading_at(0);
    ego_.speed = 0;
    spawn_traffic();
    next_checkpoint_ = 0;
    route_s_ = 0;
    lateral_ = 0;
    step_count_ = 0;
    terminated_ = false;
    reason_ = Termination::none;
    return make_observation();
}

void World::spawn_traffic() {
    traffic_.clear();
    for (const auto& t : spec_.traffic) {
        TrafficState st;
        st.path = Polyline(t.path);
        double jitter = rng_.uniform(-t.spawn_jitter, t.spawn_jitter);
        st.s = std::clamp(t.spawn_s + jitter, 0.0, st.path.length());
        st.target_speed = t.target_speed * rng_.uniform(0.9, 1.1);
        st.speed = st.target_speed;
        st.vehicle.length = params_.veh_len;
        st.vehicle.width = params_.veh_wid;
        Vec2 p = st.path.point_at(st.s);
        st.vehicle.x = p.x;
        st.vehicle.y = p.y;
        st.vehicle.heading = st.path.heading_at(st.s);
        st.vehicle.speed = st.speed;
        traffic_.push_back(std::move(st));
    }
}

std::vector<double> World::traffic_spawn_s() const {
    std::vector<double> out;
    for (const auto& t : traffic_) out.push_back(t.s);
    return out;
}

void World::update_traffic() {
    const double dt = params_.dt;
    // decide speeds from the pre-move snapshot, in index order
    std::vector<double> new_speed(traffic_.size());
    for (size_t i = 0; i < traffic_.size(); i++) {
        auto& me = traffic_[i];
        Vec2 fwd{std::cos(me.vehicle.heading), std::sin(me.vehicle.heading)};
        bool blocked = false;
        for (size_t j = 0; j < traffic_.size(); j++) {
            if (j == i) continue;
            Vec2 d = traffic_[j].vehicle.pos() - me.vehicle.pos();
            double ahead = d.dot(fwd);
            double lat = std::abs(fwd.cross(d));
            if (ahead > 0 && ahead < 5.0 && lat < 2.5) blocked = true;
        }
        // traffic never yields to the ego; headway control applies to other
        // traffic only
        if (blocked)
            new_speed[i] = std::max(0.0, me.speed - 8.0 * dt);
        else
            new_speed[i] = std::min(me.target_speed, me.speed + 3.0 * dt);
    }
    for (size_t i = 0; i < traffic_.size(); i++) {
        auto& me = traffic_[i];
        me.speed = new_speed[i];
        me.s = std::min(me.s + me.speed * dt, me.path.length());
        if (me.s >= me.path.length()) me.speed = 0;  // parked at path end
        Vec2 p = me.path.point_at(me.s);
        me.vehicle.x = p.x;
        me.vehicle.y = p.y;
        me.vehicle.heading = me.path.heading_at(me.s);
        me.vehicle.speed = me.speed;
    }
}

StepOutcome World::step(double a1, double a2) {
    if (terminated_) throw UsageError("step() called on a terminated episode");
    ActionCommand cmd = map_action(a1, a2, params_);

    // kinematic bicycle, semi-implicit Euler: speed first, then heading and
    // position from the updated speed
    const double dt = params_.dt;
    double accel = (cmd.engine_force - cmd.brake_force) / params_.mass - params_.drag * ego_.speed;
    ego_.speed = std::clamp(ego_.speed + dt * accel, 0.0, params_.v_max);
    ego_.heading = wrap_angle(ego_.heading +
                              dt * (ego_.speed / params_.wheelbase) * std::tan(cmd.steer));
    ego_.x += dt * ego_.speed * std::cos(ego_.heading);
    ego_.y += dt * ego_.speed * std::sin(ego_.heading);

    update_traffic();
    step_count_ += 1;

    auto proj = center_.project(ego_.pos());
    double progress = proj.s - route_s_;
    route_s_ = proj.s;
    lateral_ = proj.lateral;

    // consume checkpoints by proximity, or once the route projection has
    // passed them
    while (next_checkpoint_ < checkpoints_.size()) {
        Vec2 cp = center_.point_at(checkpoints_[next_checkpoint_]);
        bool close = (ego_.pos() - cp).norm() <= params_.checkpoint_radius;
        bool passed = route_s_ > checkpoints_[next_checkpoint_] + params_.checkpoint_radius;
        if (close || passed)
            next_checkpoint_++;
        else
            break;
    }

    StepOutcome out;
    Vec2 dest = center_.point_at(center_.length());
    bool at_destination = (ego_.pos() - dest).norm() <= params_.checkpoint_radius;
    out.out_of_road = std::abs(lateral_) > spec_.road_half_width;
    Obb ego_box = ego_.footprint();
    for (const auto& t : traffic_)
        if (obb_overlap(ego_box, t.vehicle.footprint())) out.crash_vehicle = true;
    for (const auto& o : obstacles_)
        if (obb_overlap(ego_box, o)) out.crash_object = true;

    out.progress = progress;
    out.reward = compute_reward(progress, ego_.speed, at_destination, params_);
    out.cost = compute_cost(out.out_of_road, out.crash_vehicle, out.crash_object);

    if (out.crash_vehicle)
        reason_ = Termination::crash_vehicle;
    else if (out.crash_object)
        reason_ = Termination::crash_object;
    else if (out.out_of_road)
        reason_ = Termination::out_of_road;
    else if (at_destination)
        reason_ = Termination::destination;
    else if (step_count_ >= spec_.max_steps)
        reason_ = Termination::timeout;
    terminated_ = reason_ != Termination::none;
    out.terminated = terminated_;
    out.reason = reason_;
    out.observation = make_observation();
    return out;
}

std::vector<double> World::lidar_scan(Vec2 origin, double heading, int n_beams,
                                      double max_range) const {
    if (n_beams < 1) throw UsageError("lidar_scan: n_beams must be >= 1");
    std::vector<double> out(static_cast<size_t>(n_beams), 1.0);
    std::vector<Segment> dynamic;
    for (const auto& t : traffic_) {
        // skip vehicles entirely beyond range (cheap reject on center dist)
        if ((t.vehicle.pos() - origin).norm() > max_range + t.vehicle.length) continue;
        for (const auto& e : t.vehicle.footprint().edges()) dynamic.push_back(e);
    }
    for (const auto& o : obstacles_)
        for (const auto& e : o.edges()) dynamic.push_back(e);
    for (int k = 0; k < n_beams; k++) {
        double ang = heading + 2.0 * kPi * k / n_beams;
        Vec2 dir{std::cos(ang), std::sin(ang)};
        double best = max_range;
        for (const auto& s : boundary_) best = std::min(best, ray_segment_distance(origin, dir, s));
        for (const auto& s : dynamic) best = std::min(best, ray_segment_distance(origin, dir, s));
        out[static_cast<size_t>(k)] = best / max_range;
    }
    return out;
}

std::pair<double, double> World::nav_features() const {
    if (next_checkpoint_ >= checkpoints_.size()) return {0.0, 0.0};
    Vec2 cp = center_.point_at(checkpoints_[next_checkpoint_]);
    Vec2 d = cp - ego_.pos();
    double dist = d.norm();
    double err = dist > 1e-9 ? wrap_angle(std::atan2(d.y, d.x) - ego_.heading) : 0.0;
    return {dist / params_.nav_dist_norm, err / kPi};
}

Observation World::make_observation() const {
    Observation obs;
    obs.v.reserve(static_cast<size_t>(params_.observation_width()));
    const double hw = spec_.road_half_width;
    double dis_bound = (hw - std::abs(lateral_)) / hw;
    Vec2 vel = ego_.velocity();
    obs.v.push_back(ego_.x / params_.pos_norm);
    obs.v.push_back(ego_.y / params_.pos_norm);
    obs.v.push_back(vel.x / params_.v_max);
    obs.v.push_back(vel.y / params_.v_max);
    obs.v.push_back(ego_.heading / kPi);
    obs.v.push_back(dis_bound);

    auto [nav_d, nav_h] = nav_features();
    obs.v.push_back(nav_d);
    obs.v.push_back(nav_h);

    auto beams = lidar_scan(ego_.pos(), ego_.heading, params_.n_beams, params_.lidar_range);
    obs.v.insert(obs.v.end(), beams.begin(), beams.end());

    // nearest neighbors in ego frame, zero padded
    std::vector<std::pair<double, size_t>> order;
    for (size_t i = 0; i < traffic_.size(); i++) {
        double d = (traffic_[i].vehicle.pos() - ego_.pos()).norm();
        if (d <= params_.neighbor_range) order.emplace_back(d, i);
    }
    std::sort(order.begin(), order.end());
    for (int m = 0; m < params_.n_neighbors; m++) {
        if (m < static_cast<int>(order.size())) {
            const auto& t = traffic_[order[static_cast<size_t>(m)].second];
            Vec2 dp = (t.vehicle.pos() - ego_.pos()).rotated(-ego_.heading);
            Vec2 dv = (t.vehicle.velocity() - vel).rotated(-ego_.heading);
            obs.v.push_back(dp.x / params_.neighbor_range);
            obs.v.push_back(dp.y / params_.neighbor_range);
            obs.v.push_back(dv.x / params_.v_max);
            obs.v.push_back(dv.y / params_.v_max);
        } else {
            obs.v.insert(obs.v.end(), {0.0, 0.0, 0.0, 0.0});
        }
    }
    check_all_finite(obs.v, "make_observation");
    return obs;
}

}  // namespace dmgpt::sim
