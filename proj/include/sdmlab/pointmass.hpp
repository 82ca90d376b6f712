#pragma once

#include <cmath>
#include <functional>

#include "sdmlab/data.hpp"
#include "sdmlab/nn.hpp"

namespace sdmlab {

/// 2-d point mass on [-1,1]^2: s' = clip(s + 0.1 a + noise), reward is the
/// negative distance to the goal, episodes end inside the goal radius or at
/// the step cap.
struct PointMassEnv {
    int state_dim = 2;
    int action_dim = 2;
    Vector goal = (Vector(2) << 0.5, 0.5).finished();
    double step_gain = 0.1;
    double noise_std = 0.01;
    double goal_radius = 0.05;
    int max_steps = 200;
    double reward_scale = 1.0;

    Vector reset(RngStream& rng) const {
        Vector s(2);
        do {
            s(0) = rng.uniform(-1.0, 1.0);
            s(1) = rng.uniform(-1.0, 1.0);
        } while ((s - goal).norm() < 2.0 * goal_radius);
        return s;
    }

    struct StepResult {
        Vector s_next;
        double r = 0.0;
        bool done = false;
    };

    StepResult step(const Vector& s, const Vector& a, RngStream& rng) const {
        StepResult out;
        out.r = -reward_scale * (s - goal).norm();
        out.s_next = s + step_gain * a.cwiseMax(-1.0).cwiseMin(1.0);
        for (int i = 0; i < 2; ++i)
            out.s_next(i) = std::clamp(out.s_next(i) + rng.normal(0.0, noise_std), -1.0, 1.0);
        out.done = (out.s_next - goal).norm() < goal_radius;
        return out;
    }

    /// proportional controller toward the goal with exploration noise
    Vector behavior_action(const Vector& s, RngStream& rng, double gain = 1.0,
                           double noise = 0.3) const {
        Vector a = gain * (goal - s);
        for (int i = 0; i < 2; ++i) a(i) = std::clamp(a(i) + rng.normal(0.0, noise), -1.0, 1.0);
        return a;
    }
};

/// Episodic rollout of the noisy proportional controller; resets after
/// termination or the step cap.
inline Dataset generate_pointmass_dataset(const PointMassEnv& env, std::size_t n_transitions,
                                          std::uint64_t seed) {
    if (n_transitions == 0) throw Error("generate_pointmass_dataset: n_transitions must be >= 1");
    RngStream rng(seed, "pointmass-rollout");
    Dataset ds;
    ds.meta = DatasetMeta{DatasetKind::continuous, env.state_dim, env.action_dim, seed,
                          "proportional controller, N(0,0.3^2) action noise"};
    ds.transitions.reserve(n_transitions);
    Vector s = env.reset(rng);
    int t_in_episode = 0;
    while (ds.transitions.size() < n_transitions) {
        const Vector a = env.behavior_action(s, rng);
        auto res = env.step(s, a, rng);
        ++t_in_episode;
        const bool timeout = t_in_episode >= env.max_steps;
        ds.transitions.push_back(
            Transition{{s(0), s(1)}, {a(0), a(1)}, res.r,
                       {res.s_next(0), res.s_next(1)}, res.done});
        if (res.done || timeout) {
            s = env.reset(rng);
            t_in_episode = 0;
        } else {
            s = res.s_next;
        }
    }
    return ds;
}

using PolicyFn = std::function<Vector(const Vector& s, RngStream& rng)>;

struct ReturnStats {
    double mean = 0.0;
    double stddev = 0.0;
    std::vector<double> returns;
};

/// Undiscounted episode returns over seeded episodes; per-episode RNG streams
/// keep the statistics independent of evaluation order.
inline ReturnStats evaluate_policy(const PointMassEnv& env, const PolicyFn& policy,
                                   int episodes, std::uint64_t seed) {
    if (episodes <= 0) throw Error("evaluate_policy: episodes must be >= 1");
    ReturnStats stats;
    for (int ep = 0; ep < episodes; ++ep) {
        RngStream rng(seed, "eval-episode-" + std::to_string(ep));
        Vector s = env.reset(rng);
        double ret = 0.0;
        for (int t = 0; t < env.max_steps; ++t) {
            const Vector a = policy(s, rng);
            auto res = env.step(s, a, rng);
            ret += res.r;
            if (res.done) break;
            s = res.s_next;
        }
        stats.returns.push_back(ret);
    }
    for (double r : stats.returns) stats.mean += r;
    stats.mean /= episodes;
    for (double r : stats.returns) stats.stddev += (r - stats.mean) * (r - stats.mean);
    stats.stddev = std::sqrt(stats.stddev / episodes);
    return stats;
}

} // namespace sdmlab
