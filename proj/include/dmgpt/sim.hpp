#pragma once

// Deterministic 2-D kinematic driving environment. Normalized two-component
// actions map onto steering/engine/brake commands, the ego advances under a
// kinematic bicycle model, scripted traffic follows fixed paths with
// car-following speed control, and each step emits the observation vector,
// a progress/speed/terminal reward and a per-event safety cost.

#include <optional>
#include <string>
#include <vector>

#include "dmgpt/geometry.hpp"
#include "dmgpt/scenario.hpp"

namespace dmgpt::sim {

struct VehicleState {
    double x = 0, y = 0;
    double heading = 0;  // wrapped to (-pi, pi]
    double speed = 0;    // >= 0
    double length = 4.0, width = 1.8;

    Vec2 pos() const { return {x, y}; }
    Vec2 velocity() const { return Vec2{speed, 0}.rotated(heading); }
    Obb footprint() const { return {{x, y}, heading, length / 2, width / 2}; }
};

struct ActionCommand {
    double steer = 0;         // u_s [rad], |u_s| <= S_max
    double engine_force = 0;  // u_a [N], in [0, F_max]
    double brake_force = 0;   // u_b [N], in [0, B_max]; u_a * u_b == 0
};

// a1 controls steering, a2 > 0 throttles and a2 < 0 brakes; inputs are
// clamped to [-1, 1], NaN is rejected.
ActionCommand map_action(double a1, double a2, const SimParams& p);

double compute_reward(double progress, double speed, bool reached_destination,
                      const SimParams& p);
double compute_cost(bool out_of_road, bool crash_vehicle, bool crash_object);

enum class Termination { none, destination, crash_vehicle, crash_object, out_of_road, timeout };
const char* termination_name(Termination t);
std::optional<Termination> termination_from_name(const std::string& s);

struct Observation {
    std::vector<double> v;
    int width() const { return static_cast<int>(v.size()); }
};

struct StepOutcome {
    Observation observation;
    double reward = 0;
    double cost = 0;
    bool terminated = false;
    Termination reason = Termination::none;
    // per-step event flags and progress, exposed for logging and tests
    bool out_of_road = false, crash_vehicle = false, crash_object = false;
    double progress = 0;
};

class World {
  public:
    World(ScenarioSpec spec, SimParams params, uint64_t seed);

    // Re-seeds traffic and puts the ego back at the route start.
    Observation reset();
    Observation reset(uint64_t seed);

    // Advances one dt; throws UsageError once terminated.
    StepOutcome step(double a1, double a2);

    bool terminated() const { return terminated_; }
    Termination termination() const { return reason_; }
    int step_count() const { return step_count_; }
    int observation_width() const { return params_.observation_width(); }

    const VehicleState& ego() const { return ego_; }
    const Polyline& centerline() const { return center_; }
    const ScenarioSpec& scenario() const { return spec_; }
    const SimParams& params() const { return params_; }

    struct TrafficState {
        Polyline path;
        double s = 0;
        double speed = 0;
        double target_speed = 0;
        VehicleState vehicle;
    };
    const std::vector<TrafficState>& traffic() const { return traffic_; }
    const std::vector<Obb>& obstacles() const { return obstacles_; }
    std::vector<double> traffic_spawn_s() const;

    // Route features for the scripted expert.
    double route_progress_s() const { return route_s_; }
    double lateral_offset() const { return lateral_; }

    // Beam k points at `heading + 2 pi k / n_beams`; returns hit distance
    // normalized by max_range, 1.0 when nothing is hit.
    std::vector<double> lidar_scan(Vec2 origin, double heading, int n_beams,
                                   double max_range) const;

    std::pair<double, double> nav_features() const;  // normalized (dist, heading err)

    Observation make_observation() const;

  private:
    void rebuild_static_geometry();
    void spawn_traffic();
    void update_traffic();
    double checkpoint_s(size_t i) const { return checkpoints_[i]; }

    ScenarioSpec spec_;
    SimParams params_;
    uint64_t seed_ = 0;
    Rng rng_;

    Polyline center_;
    std::vector<Segment> boundary_;  // wall segments for lidar, gaps removed
    std::vector<Obb> obstacles_;
    std::vector<double> checkpoints_;  // arc lengths, last one is the destination

    VehicleState ego_;
    std::vector<TrafficState> traffic_;

    size_t next_checkpoint_ = 0;
    double route_s_ = 0;
    double lateral_ = 0;
    int step_count_ = 0;
    bool terminated_ = false;
    Termination reason_ = Termination::none;
};

}  // namespace dmgpt::sim
