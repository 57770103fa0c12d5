#pragma once

// Offline data pipeline: episode collection with the scripted expert,
// return-to-go / cost-to-go suffix sums, context-window batching with
// left padding, dataset statistics, and the line-oriented dataset file
// format (schema v1).

#include <cstdint>
#include <string>
#include <vector>

#include "dmgpt/expert.hpp"
#include "dmgpt/sim.hpp"

namespace dmgpt::data {

struct Trajectory {
    int T = 0;
    int obs_width = 0;
    std::vector<double> states;   // T x obs_width
    std::vector<double> actions;  // T x 2, executed (post-noise) actions
    std::vector<double> rewards;  // T
    std::vector<double> costs;    // T
    std::string scenario_id;
    uint64_t seed = 0;
    std::string terminal_reason;

    double total_reward() const;
    double total_cost() const;
    void validate() const;
};

struct AugmentedTrajectory {
    Trajectory traj;
    std::vector<double> rtg;  // g_t, exact reverse cumulative reward
    std::vector<double> ctg;  // c'_t, exact reverse cumulative cost
};

// Exact reverse cumulative sum: out[t] = x[t] + out[t+1].
std::vector<double> suffix_sums(const std::vector<double>& x);

AugmentedTrajectory augment(Trajectory t);

struct DatasetStats {
    int obs_width = 0;
    std::vector<double> mean;  // per state dimension
    std::vector<double> stdev; // floored at 1e-6
    double return_scale = 0.01;
    double cost_scale = 0.01;
    double max_return = 0;     // max R(tau) over the dataset
    double cost_p10 = 0;       // 10th percentile of C(tau)
};

struct Dataset {
    std::vector<AugmentedTrajectory> trajectories;
    DatasetStats stats;

    size_t size() const { return trajectories.size(); }
    bool empty() const { return trajectories.empty(); }
    int64_t total_steps() const;
};

DatasetStats compute_stats(const std::vector<AugmentedTrajectory>& trajs,
                           double return_scale = 0.01, double cost_scale = 0.01);

Dataset make_dataset(std::vector<Trajectory> trajs);

// Model-facing context windows of length K; left padding only, states
// normalized by DatasetStats, rtg/ctg pre-scaled.
struct TokenBatch {
    int B = 0, K = 0, obs_width = 0, action_dim = 2;
    std::vector<double> states;        // B x K x obs_width
    std::vector<double> actions;       // B x K x 2
    std::vector<double> rtg;           // B x K
    std::vector<double> ctg;           // B x K
    std::vector<int> timesteps;        // B x K absolute indices (0 on padding)
    std::vector<uint8_t> padding_mask; // B x K, 1 = real token

    int real_token_count() const;
};

// Uniform over (trajectory, end index) pairs weighted by trajectory length,
// i.e. uniform over all timesteps in the dataset. Windows never cross
// episode boundaries.
TokenBatch sample_batch(const Dataset& ds, int K, int batch_size, Rng& rng);

// Episode collection. Per-episode env seeds are derived from `seed` by
// counter, so collection is reproducible and parallelizable.
struct CollectResult {
    std::vector<Trajectory> trajectories;
    double success_rate = 0;  // fraction reaching the destination
};
CollectResult collect_episodes(const sim::ScenarioSpec& spec, const sim::SimParams& params,
                               const ExpertParams& expert, int n_episodes, uint64_t seed);

// Dataset file schema v1: one trajectory per line,
//   1 <scenario_id> <seed> <T> <obs_width> <terminal_reason> <states...>
//   <actions...> <rewards...> <costs...>
// with full-precision base-10 reals. Read validates counts and finiteness
// and reports offending line numbers.
void write_dataset(const std::string& path, const std::vector<Trajectory>& trajs);
std::vector<Trajectory> read_dataset(const std::string& path);

void write_stats_json(const std::string& path, const DatasetStats& stats, int n_traj,
                      double success_rate);

}  // namespace dmgpt::data
