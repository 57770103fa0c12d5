#pragma once

// Scenario and simulator parameter definitions, plus the three built-in
// desk-scale scenarios (S1 straight+curve, S2 two intersections, S3
// roundabout + merge + T).

#include <string>
#include <vector>

#include "dmgpt/geometry.hpp"

namespace dmgpt::sim {

// Vehicle and sensing constants; SI units throughout (meters, seconds,
// radians, newtons, kilograms).
struct SimParams {
    double dt = 0.1;            // integration step [s]
    double wheelbase = 2.5;     // [m]
    double mass = 1000.0;       // [kg]
    double drag = 0.05;         // linear drag coefficient [1/s]
    double v_max = 20.0;        // speed cap [m/s]
    double steer_max = kPi / 6; // S_max [rad]
    double force_max = 4000.0;  // F_max [N]
    double brake_max = 6000.0;  // B_max [N]
    double veh_len = 4.0;       // vehicle footprint [m]
    double veh_wid = 1.8;
    int n_beams = 24;           // lidar beams over 360 degrees
    double lidar_range = 50.0;  // max detection radius [m]
    int n_neighbors = 4;        // nearest vehicles reported in the observation
    double neighbor_range = 50.0;
    double checkpoint_radius = 2.0;
    double nav_dist_norm = 50.0;
    double pos_norm = 100.0;    // ego position normalization scale

    int observation_width() const { return 6 + 2 + n_beams + 4 * n_neighbors; }
};

struct TrafficSpec {
    std::vector<Vec2> path;     // followed start to end, then the car parks
    double target_speed = 5.0;  // [m/s]
    double spawn_s = 0.0;       // initial arc length along the path
    double spawn_jitter = 2.0;  // uniform +- jitter on spawn_s, seeded
};

struct ObstacleSpec {
    double x = 0, y = 0, heading = 0, half_len = 1, half_wid = 1;
};

// Arc-length window on one road side where the boundary wall is open
// (junction mouths).
struct BoundaryGap {
    int side = 1;  // +1 left, -1 right
    double s0 = 0, s1 = 0;
};

struct ScenarioSpec {
    std::string id;
    std::vector<Vec2> centerline;  // ego route waypoints, >= 2 distinct points
    double road_half_width = 4.0;
    std::vector<TrafficSpec> traffic;
    std::vector<ObstacleSpec> obstacles;
    std::vector<BoundaryGap> gaps;
    double checkpoint_interval = 10.0;
    int max_steps = 1000;

    void validate(const SimParams& p) const;
};

// Built-in desk-scale scenarios S1, S2, S3.
ScenarioSpec builtin_scenario(const std::string& id);
std::vector<std::string> builtin_scenario_ids();

}  // namespace dmgpt::sim
