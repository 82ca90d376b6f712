#pragma once

#include <Eigen/Dense>
#include <string>
#include <vector>

#include "sdmlab/mdp.hpp"

namespace sdmlab {

inline constexpr double kBellmanTol = 1e-10;

/// Average reward eta and differential value Q for a bounded reward table g,
/// pinned so that the d_pi-weighted mean of Q is zero (the normalization the
/// series definition implies).
struct DifferentialValue {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> q;  // [s * A + a]
    double eta = 0.0;
    std::string pin = "E_{d_pi}[Q] = 0";

    double value(int s, int a) const { return q[static_cast<std::size_t>(s) * n_actions + a]; }

    double sup_norm() const {
        double m = 0.0;
        for (double v : q) m = std::max(m, std::abs(v));
        return m;
    }
};

/// Solves the average-reward Bellman system for reward g under (dynamics, policy):
///   Q = g - eta + M Q,  pinned by sum d_pi Q = 0,
/// via least squares on the stacked system [(I - M); d^T].
inline DifferentialValue average_reward_and_bias(const std::vector<double>& transition,
                                                int n_states, int n_actions,
                                                const TabularPolicy& policy,
                                                const std::vector<double>& g) {
    const int n = n_states * n_actions;
    if (g.size() != static_cast<std::size_t>(n))
        throw DimensionMismatch("average_reward_and_bias: reward table size mismatch");
    const StateActionDist d = stationary_distribution(transition, n_states, n_actions, policy);
    const Eigen::MatrixXd M = chain_matrix(transition, n_states, n_actions, policy);

    double eta = 0.0;
    for (int i = 0; i < n; ++i) eta += d.probs[i] * g[i];

    Eigen::MatrixXd A(n + 1, n);
    A.topRows(n) = Eigen::MatrixXd::Identity(n, n) - M;
    for (int i = 0; i < n; ++i) A(n, i) = d.probs[i];
    Eigen::VectorXd rhs(n + 1);
    for (int i = 0; i < n; ++i) rhs(i) = g[i] - eta;
    rhs(n) = 0.0;
    Eigen::VectorXd q = A.colPivHouseholderQr().solve(rhs);

    DifferentialValue dv;
    dv.n_states = n_states;
    dv.n_actions = n_actions;
    dv.eta = eta;
    dv.q.assign(q.data(), q.data() + n);

    const double res = (A * q - rhs).cwiseAbs().maxCoeff();
    if (res >= kBellmanTol)
        throw Error("average_reward_and_bias: Bellman residual " + std::to_string(res));
    return dv;
}

inline DifferentialValue average_reward_and_bias(const TabularMdp& mdp,
                                                const TabularPolicy& policy,
                                                const std::vector<double>& g) {
    return average_reward_and_bias(mdp.transition, mdp.n_states, mdp.n_actions, policy, g);
}

/// Max-abs residual of the average-reward Bellman identity for a candidate dv.
inline double bellman_residual(const std::vector<double>& transition,
                               int n_states, int n_actions,
                               const TabularPolicy& policy,
                               const DifferentialValue& dv,
                               const std::vector<double>& g) {
    const int n = n_states * n_actions;
    if (dv.q.size() != static_cast<std::size_t>(n) || g.size() != static_cast<std::size_t>(n))
        throw DimensionMismatch("bellman_residual: table size mismatch");
    const Eigen::MatrixXd M = chain_matrix(transition, n_states, n_actions, policy);
    const Eigen::Map<const Eigen::VectorXd> q(dv.q.data(), n);
    const Eigen::Map<const Eigen::VectorXd> gv(g.data(), n);
    const Eigen::VectorXd res = q - gv - M * q + Eigen::VectorXd::Constant(n, dv.eta);
    return res.cwiseAbs().maxCoeff();
}

inline double bellman_residual(const TabularMdp& mdp, const TabularPolicy& policy,
                               const DifferentialValue& dv, const std::vector<double>& g) {
    return bellman_residual(mdp.transition, mdp.n_states, mdp.n_actions, policy, dv, g);
}

} // namespace sdmlab
