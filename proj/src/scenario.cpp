#include "dmgpt/scenario.hpp"

#include <cmath>

namespace dmgpt::sim {

void ScenarioSpec::validate(const SimParams& p) const {
    if (centerline.size() < 2) throw ConfigError("scenario " + id + ": centerline needs >= 2 points");
    for (size_t i = 1; i < centerline.size(); i++)
        if ((centerline[i] - centerline[i - 1]).norm() < 1e-9)
            throw ConfigError("scenario " + id + ": duplicate consecutive centerline points");
    if (road_half_width <= p.veh_wid / 2)
        throw ConfigError("scenario " + id + ": road_half_width must exceed vehicle half-width");
    if (checkpoint_interval <= 0) throw ConfigError("scenario " + id + ": checkpoint_interval <= 0");
    if (max_steps < 1) throw ConfigError("scenario " + id + ": max_steps < 1");
    for (const auto& t : traffic)
        if (t.path.size() < 2) throw ConfigError("scenario " + id + ": traffic path needs >= 2 points");
}

namespace {

void append(std::vector<Vec2>& dst, const std::vector<Vec2>& src, bool skip_first) {
    for (size_t i = skip_first ? 1 : 0; i < src.size(); i++) dst.push_back(src[i]);
}

std::vector<Vec2> straight(Vec2 a, Vec2 b, double step = 5.0) {
    double len = (b - a).norm();
    int n = std::max(2, static_cast<int>(std::ceil(len / step)) + 1);
    std::vector<Vec2> pts;
    pts.reserve(static_cast<size_t>(n));
    for (int i = 0; i < n; i++) pts.push_back(a + (b - a) * (double(i) / (n - 1)));
    return pts;
}

// Opens the boundary walls on both sides around the projection of `where`
// onto the centerline (junction mouth).
void add_crossing_gap(ScenarioSpec& spec, Vec2 where, double half_extent) {
    Polyline c(spec.centerline);
    auto proj = c.project(where);
    spec.gaps.push_back({+1, proj.s - half_extent, proj.s + half_extent});
    spec.gaps.push_back({-1, proj.s - half_extent, proj.s + half_extent});
}

// S1: 100 m straight, 90-degree left arc of radius 30, short exit leg.
// Two same-direction vehicles lead the ego along the route and drive past
// its destination so they never block it.
ScenarioSpec make_s1() {
    ScenarioSpec s;
    s.id = "S1";
    std::vector<Vec2> line = straight({0, 0}, {100, 0});
    append(line, arc_points({100, 30}, 30.0, -kPi / 2, 0.0), true);
    append(line, straight({130, 30}, {130, 50}), true);
    s.centerline = line;

    std::vector<Vec2> lead_path = line;
    append(lead_path, straight({130, 50}, {130, 90}), true);
    s.traffic.push_back({lead_path, 4.5, 30.0, 2.0});
    s.traffic.push_back({lead_path, 5.5, 65.0, 2.0});
    return s;
}

// S2: straight through a cross intersection, then a left turn at a
// T-junction whose top bar carries crossing traffic.
ScenarioSpec make_s2() {
    ScenarioSpec s;
    s.id = "S2";
    std::vector<Vec2> line = straight({0, 0}, {70, 0});
    append(line, arc_points({70, 12}, 12.0, -kPi / 2, 0.0), true);
    append(line, straight({82, 12}, {82, 45}), true);
    s.centerline = line;

    // cross intersection at x = 30
    s.traffic.push_back({straight({30, -40}, {30, 40}), 5.0, 8.0, 4.0});
    s.traffic.push_back({straight({30, 45}, {30, -35}), 5.5, 6.0, 4.0});
    // T-junction top bar crossing the exit leg
    s.traffic.push_back({straight({50, 25}, {115, 25}), 5.0, 4.0, 4.0});
    s.traffic.push_back({straight({115, 30}, {45, 30}), 4.5, 6.0, 4.0});
    add_crossing_gap(s, {30, 0}, 5.0);
    add_crossing_gap(s, {82, 25}, 5.0);
    add_crossing_gap(s, {82, 30}, 5.0);
    // junction furniture near the corners
    s.obstacles.push_back({24.0, 3.4, 0.0, 0.5, 0.4});
    s.obstacles.push_back({37.0, -3.4, 0.0, 0.5, 0.4});
    return s;
}

// S3: approach, half roundabout (radius 15), northeast exit onto an east
// road with a merge lane, then a T-intersection near the destination.
ScenarioSpec make_s3() {
    ScenarioSpec s;
    s.id = "S3";
    std::vector<Vec2> line = straight({0, 0}, {40, 0});
    append(line, arc_points({55, 0}, 15.0, kPi, 1.75 * kPi, 1.5), true);
    append(line, straight(line.back(), {80, -2}), true);
    append(line, straight({80, -2}, {120, -2}), true);
    s.centerline = line;

    // two circulating vehicles owning the roundabout
    auto ring = arc_points({55, 0}, 15.0, 0.0, 2.0 * 2 * kPi, 1.5);
    s.traffic.push_back({ring, 4.5, 20.0, 6.0});
    auto ring2 = arc_points({55, 0}, 15.0, kPi / 2, kPi / 2 + 2.0 * 2 * kPi, 1.5);
    s.traffic.push_back({ring2, 5.0, 35.0, 6.0});
    // a lead vehicle on the ego route
    std::vector<Vec2> lead = line;
    append(lead, straight({120, -2}, {150, -2}), true);
    s.traffic.push_back({lead, 4.0, 25.0, 3.0});
    // merge lane joining the east road from the southwest
    std::vector<Vec2> merge = straight({60, -25}, {85, -4});
    append(merge, straight({85, -4}, {125, -2}), true);
    s.traffic.push_back({merge, 5.0, 5.0, 3.0});
    // T-intersection crossing near the destination
    s.traffic.push_back({straight({105, -30}, {105, 25}), 5.0, 5.0, 4.0});
    s.traffic.push_back({straight({105, 28}, {105, -28}), 4.5, 8.0, 4.0});
    add_crossing_gap(s, {85, -3}, 6.0);
    add_crossing_gap(s, {105, -2}, 5.0);
    s.obstacles.push_back({38.0, -3.3, 0.0, 0.5, 0.4});
    s.obstacles.push_back({98.0, 1.3, 0.0, 0.5, 0.4});
    return s;
}

}  // namespace

ScenarioSpec builtin_scenario(const std::string& id) {
    if (id == "S1") return make_s1();
    if (id == "S2") return make_s2();
    if (id == "S3") return make_s3();
    throw ConfigError("unknown scenario '" + id + "'; valid ids: S1 S2 S3");
}

std::vector<std::string> builtin_scenario_ids() { return {"S1", "S2", "S3"}; }

}  // namespace dmgpt::sim
