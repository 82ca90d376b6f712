#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <numeric>
#include <vector>

#include "sdmlab/errors.hpp"
#include "sdmlab/rng.hpp"

namespace sdmlab {

inline constexpr double kRowSumTol = 1e-9;       // build-time validation
inline constexpr double kStationaryTol = 1e-10;  // balance-equation residual

/// Finite MDP with dense transition tensor P[s][a][s'], reward table r[s][a]
/// and initial distribution mu0[s]. Rows are renormalized on construction so
/// downstream solvers see exactly stochastic rows.
struct TabularMdp {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> transition;  // [s * A * S + a * S + s']
    std::vector<double> reward;      // [s * A + a]
    std::vector<double> initial_dist;
    double discount = 1.0;  // neural tier only
    double r_max = 0.0;

    double p(int s, int a, int s2) const {
        return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
    }
    double r(int s, int a) const { return reward[static_cast<std::size_t>(s) * n_actions + a]; }
};

struct TabularPolicy {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> probs;  // [s * A + a]

    double pi(int a, int s) const { return probs[static_cast<std::size_t>(s) * n_actions + a]; }
};

/// Probability table over S x A.
struct StateActionDist {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> probs;  // [s * A + a]

    double d(int s, int a) const { return probs[static_cast<std::size_t>(s) * n_actions + a]; }

    std::vector<double> state_marginal() const {
        std::vector<double> m(n_states, 0.0);
        for (int s = 0; s < n_states; ++s)
            for (int a = 0; a < n_actions; ++a) m[s] += d(s, a);
        return m;
    }
};

namespace detail {

inline void validate_and_normalize_row(double* row, int n, const std::string& what) {
    double sum = 0.0;
    for (int i = 0; i < n; ++i) {
        if (row[i] < 0.0)
            throw NegativeProbability(what + ": negative entry " + std::to_string(row[i]));
        sum += row[i];
    }
    if (std::abs(sum - 1.0) > kRowSumTol)
        throw NonStochasticRow(what + ": row sums to " + std::to_string(sum));
    for (int i = 0; i < n; ++i) row[i] /= sum;
}

} // namespace detail

inline TabularMdp build_mdp(int n_states, int n_actions,
                            std::vector<double> transition,
                            std::vector<double> reward,
                            std::vector<double> initial_dist,
                            double discount = 0.99) {
    const auto S = static_cast<std::size_t>(n_states);
    const auto A = static_cast<std::size_t>(n_actions);
    if (n_states <= 0 || n_actions <= 0) throw DimensionMismatch("build_mdp: empty spaces");
    if (transition.size() != S * A * S)
        throw DimensionMismatch("build_mdp: transition tensor size mismatch");
    if (reward.size() != S * A) throw DimensionMismatch("build_mdp: reward table size mismatch");
    if (initial_dist.size() != S) throw DimensionMismatch("build_mdp: initial_dist size mismatch");

    TabularMdp m;
    m.n_states = n_states;
    m.n_actions = n_actions;
    m.transition = std::move(transition);
    m.reward = std::move(reward);
    m.initial_dist = std::move(initial_dist);
    m.discount = discount;
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a)
            detail::validate_and_normalize_row(
                m.transition.data() + (s * A + a) * S, n_states,
                "P[" + std::to_string(s) + "][" + std::to_string(a) + "]");
    detail::validate_and_normalize_row(m.initial_dist.data(), n_states, "mu0");
    m.r_max = 0.0;
    for (double v : m.reward) m.r_max = std::max(m.r_max, std::abs(v));
    return m;
}

inline TabularPolicy build_policy(int n_states, int n_actions, std::vector<double> probs) {
    if (probs.size() != static_cast<std::size_t>(n_states) * n_actions)
        throw DimensionMismatch("build_policy: table size mismatch");
    TabularPolicy p{n_states, n_actions, std::move(probs)};
    for (int s = 0; s < n_states; ++s)
        detail::validate_and_normalize_row(p.probs.data() + static_cast<std::size_t>(s) * n_actions,
                                           n_actions, "pi[" + std::to_string(s) + "]");
    return p;
}

inline TabularPolicy uniform_policy(int n_states, int n_actions) {
    return TabularPolicy{n_states, n_actions,
                         std::vector<double>(static_cast<std::size_t>(n_states) * n_actions,
                                             1.0 / n_actions)};
}

/// State-action chain M[(s,a) -> (s',a')] = P(s'|s,a) * pi(a'|s'), row-stochastic.
/// Overload on a raw transition tensor so model dynamics reuse the same path.
inline Eigen::MatrixXd chain_matrix(const std::vector<double>& transition,
                                    int n_states, int n_actions,
                                    const TabularPolicy& policy) {
    if (policy.n_states != n_states || policy.n_actions != n_actions)
        throw DimensionMismatch("chain_matrix: policy/mdp shape mismatch");
    const int n = n_states * n_actions;
    Eigen::MatrixXd M(n, n);
    for (int s = 0; s < n_states; ++s)
        for (int a = 0; a < n_actions; ++a) {
            const int row = s * n_actions + a;
            for (int s2 = 0; s2 < n_states; ++s2) {
                const double p = transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
                for (int a2 = 0; a2 < n_actions; ++a2)
                    M(row, s2 * n_actions + a2) = p * policy.pi(a2, s2);
            }
        }
    return M;
}

inline Eigen::MatrixXd chain_matrix(const TabularMdp& mdp, const TabularPolicy& policy) {
    return chain_matrix(mdp.transition, mdp.n_states, mdp.n_actions, policy);
}

namespace detail {

// Tarjan SCC count on the positive-entry graph of M.
inline int count_sccs(const Eigen::MatrixXd& M) {
    const int n = static_cast<int>(M.rows());
    std::vector<int> idx(n, -1), low(n, 0), stack;
    std::vector<bool> on_stack(n, false);
    int counter = 0, sccs = 0;

    // iterative Tarjan to avoid deep recursion
    struct Frame { int v; int next; };
    for (int root = 0; root < n; ++root) {
        if (idx[root] != -1) continue;
        std::vector<Frame> call{{root, 0}};
        idx[root] = low[root] = counter++;
        stack.push_back(root);
        on_stack[root] = true;
        while (!call.empty()) {
            Frame& f = call.back();
            bool descended = false;
            for (int w = f.next; w < n; ++w) {
                if (M(f.v, w) <= 0.0) continue;
                f.next = w + 1;
                if (idx[w] == -1) {
                    idx[w] = low[w] = counter++;
                    stack.push_back(w);
                    on_stack[w] = true;
                    call.push_back(Frame{w, 0});
                    descended = true;
                    break;
                }
                if (on_stack[w]) low[f.v] = std::min(low[f.v], idx[w]);
            }
            if (descended) continue;
            f.next = n;  // scan exhausted
            {
                if (low[f.v] == idx[f.v]) {
                    ++sccs;
                    while (true) {
                        int w = stack.back();
                        stack.pop_back();
                        on_stack[w] = false;
                        if (w == f.v) break;
                    }
                }
                int v = f.v;
                call.pop_back();
                if (!call.empty()) low[call.back().v] = std::min(low[call.back().v], low[v]);
            }
        }
    }
    return sccs;
}

// Period of a strongly connected chain: gcd over edges of level[u] + 1 - level[v]
// along a BFS tree.
inline int chain_period(const Eigen::MatrixXd& M) {
    const int n = static_cast<int>(M.rows());
    std::vector<int> level(n, -1);
    std::vector<int> queue{0};
    level[0] = 0;
    for (std::size_t qi = 0; qi < queue.size(); ++qi) {
        const int u = queue[qi];
        for (int v = 0; v < n; ++v) {
            if (M(u, v) <= 0.0) continue;
            if (level[v] == -1) {
                level[v] = level[u] + 1;
                queue.push_back(v);
            }
        }
    }
    int g = 0;
    for (int u = 0; u < n; ++u)
        for (int v = 0; v < n; ++v)
            if (M(u, v) > 0.0) g = std::gcd(g, std::abs(level[u] + 1 - level[v]));
    return g == 0 ? 1 : g;
}

} // namespace detail

inline void check_ergodic(const Eigen::MatrixXd& M) {
    if (detail::count_sccs(M) != 1)
        throw NotIrreducible("induced state-action chain has more than one communicating class");
    if (detail::chain_period(M) > 1)
        throw Periodic("induced state-action chain is periodic (period " +
                       std::to_string(detail::chain_period(M)) + ")");
}

/// Exact stationary distribution of the policy-induced state-action chain:
/// direct linear solve of d^T M = d^T with the normalization sum(d) = 1
/// replacing one equation. Ergodicity is checked up front.
inline StateActionDist stationary_distribution(const std::vector<double>& transition,
                                               int n_states, int n_actions,
                                               const TabularPolicy& policy) {
    const Eigen::MatrixXd M = chain_matrix(transition, n_states, n_actions, policy);
    check_ergodic(M);
    const int n = n_states * n_actions;
    Eigen::MatrixXd A = M.transpose() - Eigen::MatrixXd::Identity(n, n);
    Eigen::VectorXd rhs = Eigen::VectorXd::Zero(n);
    A.row(n - 1).setOnes();
    rhs(n - 1) = 1.0;
    Eigen::VectorXd d = A.partialPivLu().solve(rhs);

    // round-off can leave tiny negatives; clip then renormalize
    for (int i = 0; i < n; ++i) d(i) = std::max(d(i), 0.0);
    d /= d.sum();

    const double residual = (d.transpose() * M - d.transpose()).cwiseAbs().maxCoeff();
    if (residual >= kStationaryTol)
        throw Error("stationary_distribution: residual " + std::to_string(residual));

    StateActionDist out{n_states, n_actions, std::vector<double>(d.data(), d.data() + n)};
    return out;
}

inline StateActionDist stationary_distribution(const TabularMdp& mdp, const TabularPolicy& policy) {
    return stationary_distribution(mdp.transition, mdp.n_states, mdp.n_actions, policy);
}

/// Seeded random ergodic MDP: Dirichlet-like rows with a small uniform floor.
inline TabularMdp random_mdp(int n_states, int n_actions, RngStream& rng,
                             double reward_scale = 1.0, double floor = 0.02) {
    const auto S = static_cast<std::size_t>(n_states);
    const auto A = static_cast<std::size_t>(n_actions);
    std::vector<double> P(S * A * S), r(S * A), mu0(S);
    for (std::size_t row = 0; row < S * A; ++row) {
        double sum = 0.0;
        for (std::size_t j = 0; j < S; ++j) {
            double e = -std::log(rng.uniform(1e-12, 1.0));
            P[row * S + j] = e;
            sum += e;
        }
        for (std::size_t j = 0; j < S; ++j)
            P[row * S + j] = (1.0 - floor) * P[row * S + j] / sum + floor / n_states;
    }
    for (auto& v : r) v = rng.uniform(-reward_scale, reward_scale);
    double msum = 0.0;
    for (auto& v : mu0) { v = rng.uniform(1e-3, 1.0); msum += v; }
    for (auto& v : mu0) v /= msum;
    return build_mdp(n_states, n_actions, std::move(P), std::move(r), std::move(mu0));
}

inline TabularPolicy random_policy(int n_states, int n_actions, RngStream& rng,
                                   double floor = 0.02) {
    std::vector<double> probs(static_cast<std::size_t>(n_states) * n_actions);
    for (int s = 0; s < n_states; ++s) {
        double sum = 0.0;
        for (int a = 0; a < n_actions; ++a) {
            double e = -std::log(rng.uniform(1e-12, 1.0));
            probs[static_cast<std::size_t>(s) * n_actions + a] = e;
            sum += e;
        }
        for (int a = 0; a < n_actions; ++a) {
            auto& v = probs[static_cast<std::size_t>(s) * n_actions + a];
            v = (1.0 - floor) * v / sum + floor / n_actions;
        }
    }
    return build_policy(n_states, n_actions, std::move(probs));
}

} // namespace sdmlab
