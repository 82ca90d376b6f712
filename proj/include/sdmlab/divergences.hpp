#pragma once

#include <cmath>
#include <cstddef>
#include <utility>
#include <vector>

#include "sdmlab/errors.hpp"
#include "sdmlab/mdp.hpp"
#include "sdmlab/rng.hpp"

namespace sdmlab {

enum class DivergenceKind { TV, KL, JSD };

namespace detail {

inline void check_same_shape(const StateActionDist& p, const StateActionDist& q) {
    if (p.n_states != q.n_states || p.n_actions != q.n_actions)
        throw DimensionMismatch("divergence: distribution shapes differ");
}

// KL with the 0*ln 0 := 0 convention; loud error on support violation.
inline double kl(const std::vector<double>& p, const std::vector<double>& q) {
    double acc = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        if (p[i] <= 0.0) continue;
        if (q[i] <= 0.0) throw SupportViolation("KL: p > 0 where q = 0");
        acc += p[i] * std::log(p[i] / q[i]);
    }
    return acc;
}

} // namespace detail

inline double divergence(const StateActionDist& p, const StateActionDist& q, DivergenceKind kind) {
    detail::check_same_shape(p, q);
    switch (kind) {
        case DivergenceKind::TV: {
            double acc = 0.0;
            for (std::size_t i = 0; i < p.probs.size(); ++i)
                acc += std::abs(p.probs[i] - q.probs[i]);
            return 0.5 * acc;
        }
        case DivergenceKind::KL:
            return detail::kl(p.probs, q.probs);
        case DivergenceKind::JSD: {
            std::vector<double> m(p.probs.size());
            for (std::size_t i = 0; i < m.size(); ++i) m[i] = 0.5 * (p.probs[i] + q.probs[i]);
            return 0.5 * detail::kl(p.probs, m) + 0.5 * detail::kl(q.probs, m);
        }
    }
    throw Error("divergence: unknown kind");
}

/// Finite surrogate for the bounded test-function class: a list of tables with
/// a declared sup-norm envelope g_max.
struct FunctionDictionary {
    int n_states = 0;
    int n_actions = 0;
    double g_max = 1.0;
    std::vector<std::vector<double>> members;  // each [s * A + a]
};

/// Default dictionary: `n_random` seeded uniform[-g_max, g_max] tables plus the
/// 2*|SxA| scaled coordinate indicators. The sup over the ball is available in
/// closed form via ipm_supnorm; the dictionary approximates it from below.
inline FunctionDictionary default_dictionary(int n_states, int n_actions, double g_max,
                                             RngStream& rng, int n_random = 64) {
    FunctionDictionary dict;
    dict.n_states = n_states;
    dict.n_actions = n_actions;
    dict.g_max = g_max;
    const std::size_t n = static_cast<std::size_t>(n_states) * n_actions;
    for (int k = 0; k < n_random; ++k) {
        std::vector<double> g(n);
        for (auto& v : g) v = rng.uniform(-g_max, g_max);
        dict.members.push_back(std::move(g));
    }
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> g(n, 0.0);
        g[i] = g_max;
        dict.members.push_back(g);
        g[i] = -g_max;
        dict.members.push_back(std::move(g));
    }
    return dict;
}

/// All sign patterns at +-g_max; exact envelope on small spaces (test oracle).
inline FunctionDictionary sign_pattern_dictionary(int n_states, int n_actions, double g_max) {
    FunctionDictionary dict;
    dict.n_states = n_states;
    dict.n_actions = n_actions;
    dict.g_max = g_max;
    const std::size_t n = static_cast<std::size_t>(n_states) * n_actions;
    for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
        std::vector<double> g(n);
        for (std::size_t i = 0; i < n; ++i) g[i] = (mask >> i & 1) ? g_max : -g_max;
        dict.members.push_back(std::move(g));
    }
    return dict;
}

inline double expectation(const StateActionDist& p, const std::vector<double>& g) {
    double acc = 0.0;
    for (std::size_t i = 0; i < g.size(); ++i) acc += p.probs[i] * g[i];
    return acc;
}

/// max over dictionary members of |E_p[g] - E_q[g]|, lowest-index tie-break.
inline std::pair<double, std::size_t> ipm_dictionary(const StateActionDist& p,
                                                     const StateActionDist& q,
                                                     const FunctionDictionary& dict) {
    detail::check_same_shape(p, q);
    if (dict.members.empty()) throw EmptyDictionary("ipm_dictionary: no members");
    double best = -1.0;
    std::size_t best_idx = 0;
    for (std::size_t k = 0; k < dict.members.size(); ++k) {
        const double v = std::abs(expectation(p, dict.members[k]) - expectation(q, dict.members[k]));
        if (v > best) {
            best = v;
            best_idx = k;
        }
    }
    return {best, best_idx};
}

/// Exact IPM over the sup-norm ball: g_max * ||p - q||_1.
inline double ipm_supnorm(const StateActionDist& p, const StateActionDist& q, double g_max) {
    detail::check_same_shape(p, q);
    if (g_max < 0.0) throw NegativeBound("ipm_supnorm: g_max < 0");
    double l1 = 0.0;
    for (std::size_t i = 0; i < p.probs.size(); ++i) l1 += std::abs(p.probs[i] - q.probs[i]);
    return g_max * l1;
}

} // namespace sdmlab
