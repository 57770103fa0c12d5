#include "dmgpt/trajectory.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

namespace dmgpt::data {

double Trajectory::total_reward() const {
    double acc = 0;
    for (double r : rewards) acc += r;
    return acc;
}

double Trajectory::total_cost() const {
    double acc = 0;
    for (double c : costs) acc += c;
    return acc;
}

void Trajectory::validate() const {
    if (T < 1) throw FormatError("trajectory length must be >= 1");
    if (obs_width < 1) throw FormatError("trajectory obs_width must be >= 1");
    auto expect = [&](const std::vector<double>& v, size_t n, const char* what) {
        if (v.size() != n)
            throw FormatError(std::string("trajectory ") + what + " array length mismatch");
        check_all_finite(v, what);
    };
    expect(states, static_cast<size_t>(T) * obs_width, "states");
    expect(actions, static_cast<size_t>(T) * 2, "actions");
    expect(rewards, static_cast<size_t>(T), "rewards");
    expect(costs, static_cast<size_t>(T), "costs");
    for (double c : costs)
        if (c < 0) throw FormatError("trajectory has negative cost");
    for (double a : actions)
        if (a < -1.0 || a > 1.0) throw FormatError("trajectory action outside [-1, 1]");
}

std::vector<double> suffix_sums(const std::vector<double>& x) {
    if (x.empty()) throw UsageError("suffix_sums on empty array");
    std::vector<double> out(x.size());
    out.back() = x.back();
    for (size_t i = x.size() - 1; i-- > 0;) out[i] = x[i] + out[i + 1];
    return out;
}

AugmentedTrajectory augment(Trajectory t) {
    AugmentedTrajectory a;
    a.rtg = suffix_sums(t.rewards);
    a.ctg = suffix_sums(t.costs);
    a.traj = std::move(t);
    return a;
}

DatasetStats compute_stats(const std::vector<AugmentedTrajectory>& trajs, double return_scale,
                           double cost_scale) {
    DatasetStats st;
    st.return_scale = return_scale;
    st.cost_scale = cost_scale;
    if (trajs.empty()) return st;
    const int w = trajs.front().traj.obs_width;
    st.obs_width = w;
    st.mean.assign(static_cast<size_t>(w), 0.0);
    st.stdev.assign(static_cast<size_t>(w), 0.0);
    int64_t n = 0;
    for (const auto& a : trajs) {
        const auto& t = a.traj;
        if (t.obs_width != w) throw FormatError("dataset mixes observation widths");
        for (int i = 0; i < t.T; i++)
            for (int j = 0; j < w; j++) st.mean[static_cast<size_t>(j)] += t.states[i * w + j];
        n += t.T;
    }
    for (auto& m : st.mean) m /= static_cast<double>(n);
    for (const auto& a : trajs) {
        const auto& t = a.traj;
        for (int i = 0; i < t.T; i++)
            for (int j = 0; j < w; j++) {
                double d = t.states[i * w + j] - st.mean[static_cast<size_t>(j)];
                st.stdev[static_cast<size_t>(j)] += d * d;
            }
    }
    for (auto& s : st.stdev) s = std::max(std::sqrt(s / static_cast<double>(n)), 1e-6);

    std::vector<double> total_costs;
    st.max_return = -std::numeric_limits<double>::infinity();
    for (const auto& a : trajs) {
        st.max_return = std::max(st.max_return, a.rtg.front());
        total_costs.push_back(a.ctg.front());
    }
    std::sort(total_costs.begin(), total_costs.end());
    size_t idx = static_cast<size_t>(0.10 * (total_costs.size() - 1));
    st.cost_p10 = total_costs[idx];
    return st;
}

Dataset make_dataset(std::vector<Trajectory> trajs) {
    Dataset ds;
    ds.trajectories.reserve(trajs.size());
    for (auto& t : trajs) {
        t.validate();
        ds.trajectories.push_back(augment(std::move(t)));
    }
    ds.stats = compute_stats(ds.trajectories);
    return ds;
}

int64_t Dataset::total_steps() const {
    int64_t n = 0;
    for (const auto& t : trajectories) n += t.traj.T;
    return n;
}

int TokenBatch::real_token_count() const {
    int n = 0;
    for (uint8_t m : padding_mask) n += m;
    return n;
}

TokenBatch sample_batch(const Dataset& ds, int K, int batch_size, Rng& rng) {
    if (K < 1 || batch_size < 1) throw ConfigError("sample_batch: K and batch_size must be >= 1");
    if (ds.empty()) throw ConfigError("sample_batch: empty dataset");
    const int w = ds.stats.obs_width;
    const int64_t total = ds.total_steps();

    TokenBatch b;
    b.B = batch_size;
    b.K = K;
    b.obs_width = w;
    b.states.assign(static_cast<size_t>(batch_size) * K * w, 0.0);
    b.actions.assign(static_cast<size_t>(batch_size) * K * 2, 0.0);
    b.rtg.assign(static_cast<size_t>(batch_size) * K, 0.0);
    b.ctg.assign(static_cast<size_t>(batch_size) * K, 0.0);
    b.timesteps.assign(static_cast<size_t>(batch_size) * K, 0);
    b.padding_mask.assign(static_cast<size_t>(batch_size) * K, 0);

    for (int s = 0; s < batch_size; s++) {
        int64_t pick = rng.uniform_int(total);
        size_t ti = 0;
        while (pick >= ds.trajectories[ti].traj.T) {
            pick -= ds.trajectories[ti].traj.T;
            ti++;
        }
        const auto& at = ds.trajectories[ti];
        const auto& t = at.traj;
        const int end = static_cast<int>(pick);           // window ends here, inclusive
        const int start = std::max(0, end - K + 1);
        const int len = end - start + 1;
        const int pad = K - len;                          // left padding
        for (int k = 0; k < len; k++) {
            const int src = start + k;
            const int dst = pad + k;
            for (int j = 0; j < w; j++)
                b.states[(static_cast<size_t>(s) * K + dst) * w + j] =
                    (t.states[src * w + j] - ds.stats.mean[static_cast<size_t>(j)]) /
                    ds.stats.stdev[static_cast<size_t>(j)];
            b.actions[(static_cast<size_t>(s) * K + dst) * 2 + 0] = t.actions[src * 2 + 0];
            b.actions[(static_cast<size_t>(s) * K + dst) * 2 + 1] = t.actions[src * 2 + 1];
            b.rtg[static_cast<size_t>(s) * K + dst] = at.rtg[static_cast<size_t>(src)] *
                                                      ds.stats.return_scale;
            b.ctg[static_cast<size_t>(s) * K + dst] = at.ctg[static_cast<size_t>(src)] *
                                                      ds.stats.cost_scale;
            b.timesteps[static_cast<size_t>(s) * K + dst] = src;
            b.padding_mask[static_cast<size_t>(s) * K + dst] = 1;
        }
    }
    return b;
}

CollectResult collect_episodes(const sim::ScenarioSpec& spec, const sim::SimParams& params,
                               const ExpertParams& expert, int n_episodes, uint64_t seed) {
    if (n_episodes < 0) throw ConfigError("collect_episodes: n_episodes must be >= 0");
    CollectResult res;
    if (n_episodes == 0) return res;
    int successes = 0;
    Rng master(seed);
    for (int e = 0; e < n_episodes; e++) {
        uint64_t env_seed = master.fork(static_cast<uint64_t>(e)).next_u64();
        Rng noise = master.fork(static_cast<uint64_t>(e) ^ 0x5eedull);
        sim::World world(spec, params, env_seed);
        Trajectory t;
        t.obs_width = world.observation_width();
        t.scenario_id = spec.id;
        t.seed = env_seed;
        sim::Observation obs = world.reset(env_seed);
        while (!world.terminated()) {
            auto [a1, a2] = expert_action(world, expert);
            a1 = std::clamp(a1 + expert.noise_sigma * noise.normal(), -1.0, 1.0);
            a2 = std::clamp(a2 + expert.noise_sigma * noise.normal(), -1.0, 1.0);
            auto out = world.step(a1, a2);
            t.states.insert(t.states.end(), obs.v.begin(), obs.v.end());
            t.actions.push_back(a1);
            t.actions.push_back(a2);
            t.rewards.push_back(out.reward);
            t.costs.push_back(out.cost);
            t.T += 1;
            obs = out.observation;
        }
        t.terminal_reason = sim::termination_name(world.termination());
        if (world.termination() == sim::Termination::destination) successes++;
        res.trajectories.push_back(std::move(t));
    }
    res.success_rate = static_cast<double>(successes) / n_episodes;
    return res;
}

namespace {

void put_reals(std::string& line, const std::vector<double>& v) {
    for (double x : v) {
        line += ' ';
        line += fmt_real(x);
    }
}

[[noreturn]] void line_error(size_t line_no, const std::string& what) {
    throw FormatError("dataset line " + std::to_string(line_no) + ": " + what);
}

}  // namespace

void write_dataset(const std::string& path, const std::vector<Trajectory>& trajs) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open '" + path + "' for writing");
    std::string line;
    for (const auto& t : trajs) {
        t.validate();
        line.clear();
        line += "1 ";
        line += t.scenario_id;
        line += ' ';
        line += std::to_string(t.seed);
        line += ' ';
        line += std::to_string(t.T);
        line += ' ';
        line += std::to_string(t.obs_width);
        line += ' ';
        line += t.terminal_reason;
        put_reals(line, t.states);
        put_reals(line, t.actions);
        put_reals(line, t.rewards);
        put_reals(line, t.costs);
        line += '\n';
        f << line;
    }
    if (!f) throw FormatError("write failed for '" + path + "'");
}

std::vector<Trajectory> read_dataset(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open '" + path + "' for reading");
    std::vector<Trajectory> out;
    std::string line;
    size_t line_no = 0;
    while (std::getline(f, line)) {
        line_no++;
        if (line.empty()) continue;
        std::istringstream ss(line);
        std::string version, scenario, reason;
        int64_t seed = 0, T = 0, w = 0;
        std::string tok;
        auto next = [&](const char* what) -> std::string {
            if (!(ss >> tok)) line_error(line_no, std::string("truncated before ") + what);
            return tok;
        };
        version = next("schema version");
        if (version != "1") line_error(line_no, "unsupported schema version '" + version + "'");
        scenario = next("scenario id");
        if (!parse_int(next("seed"), seed) || seed < 0) line_error(line_no, "bad seed");
        if (!parse_int(next("T"), T) || T < 1) line_error(line_no, "bad trajectory length");
        if (!parse_int(next("obs_width"), w) || w < 1) line_error(line_no, "bad obs_width");
        reason = next("terminal reason");
        if (!sim::termination_from_name(reason))
            line_error(line_no, "unknown terminal reason '" + reason + "'");

        Trajectory t;
        t.T = static_cast<int>(T);
        t.obs_width = static_cast<int>(w);
        t.scenario_id = scenario;
        t.seed = static_cast<uint64_t>(seed);
        t.terminal_reason = reason;
        auto read_block = [&](std::vector<double>& dst, size_t n, const char* what) {
            dst.reserve(n);
            for (size_t i = 0; i < n; i++) {
                double x;
                if (!(ss >> tok) || !parse_real(tok, x))
                    line_error(line_no, std::string("truncated or malformed ") + what + " array");
                dst.push_back(x);
            }
        };
        read_block(t.states, static_cast<size_t>(T) * w, "states");
        read_block(t.actions, static_cast<size_t>(T) * 2, "actions");
        read_block(t.rewards, static_cast<size_t>(T), "rewards");
        read_block(t.costs, static_cast<size_t>(T), "costs");
        if (ss >> tok) line_error(line_no, "trailing data after cost array");
        try {
            t.validate();
        } catch (const FormatError& e) {
            line_error(line_no, e.what());
        }
        out.push_back(std::move(t));
    }
    return out;
}

void write_stats_json(const std::string& path, const DatasetStats& stats, int n_traj,
                      double success_rate) {
    nlohmann::json j;
    j["schema_version"] = 1;
    j["obs_width"] = stats.obs_width;
    j["mean"] = stats.mean;
    j["stdev"] = stats.stdev;
    j["return_scale"] = stats.return_scale;
    j["cost_scale"] = stats.cost_scale;
    j["max_return"] = stats.max_return;
    j["cost_p10"] = stats.cost_p10;
    j["n_trajectories"] = n_traj;
    j["expert_success_rate"] = success_rate;
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("cannot open '" + path + "' for writing");
    f << j.dump(2) << "\n";
}

}  // namespace dmgpt::data
