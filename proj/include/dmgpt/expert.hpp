#pragma once

// Scripted demonstration driver: pure-pursuit steering toward a lookahead
// point on the route centerline plus a proportional speed controller with
// headway-proportional braking. Data collection adds clipped Gaussian noise
// on top of the returned command.

#include <utility>

#include "dmgpt/sim.hpp"

namespace dmgpt::data {

struct ExpertParams {
    double target_speed = 8.0;    // cruise set point [m/s]
    double lookahead_min = 5.0;   // [m]
    double lookahead_gain = 0.6;  // lookahead grows with speed
    double lookahead_max = 14.0;
    double speed_kp = 0.5;        // throttle per m/s of speed error
    double brake_dist = 12.0;     // start braking below this headway [m]
    double stop_dist = 2.5;       // full brake at this headway [m]
    double noise_sigma = 0.05;    // action-space noise used during collection
};

// Pre-noise command in [-1, 1]^2 computed from simulator ground truth.
std::pair<double, double> expert_action(const sim::World& world, const ExpertParams& p);

// Distance to the nearest vehicle or obstacle inside the forward corridor,
// +inf when the corridor is clear. Exposed for tests.
double forward_headway(const sim::World& world, double max_dist);

}  // namespace dmgpt::data
