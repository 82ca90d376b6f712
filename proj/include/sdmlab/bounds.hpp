#pragma once

#include <Eigen/Dense>
#include <algorithm>
#include <cmath>
#include <vector>

#include <json.hpp>

#include "sdmlab/avg_mdp.hpp"
#include "sdmlab/data.hpp"
#include "sdmlab/divergences.hpp"
#include "sdmlab/mdp.hpp"

namespace sdmlab {

inline constexpr double kIdentityTol = 1e-8;   // per-g identity gap
inline constexpr double kChainSlack = -1e-9;   // inequality slack for round-off

/// Estimated transition tensor plus the visit counts that produced it.
struct TabularModel {
    int n_states = 0;
    int n_actions = 0;
    std::vector<double> transition;  // row-stochastic, [s * A * S + a * S + s']
    std::vector<double> counts;      // [s * A]

    double p(int s, int a, int s2) const {
        return transition[(static_cast<std::size_t>(s) * n_actions + a) * n_states + s2];
    }
};

/// Smoothed MLE fit: P(s'|s,a) = (count(s,a,s') + eps) / (count(s,a) + eps * S).
/// Unvisited rows fall back to uniform.
inline TabularModel mle_tabular_model(const Dataset& dataset, int n_states, int n_actions,
                                      double eps) {
    if (dataset.transitions.empty()) throw EmptyDataset("mle_tabular_model: empty dataset");
    if (dataset.meta.kind != DatasetKind::tabular)
        throw KindMismatch("mle_tabular_model: dataset is not tabular");
    if (eps <= 0.0) throw Error("mle_tabular_model: eps must be > 0");
    const auto S = static_cast<std::size_t>(n_states);
    const auto A = static_cast<std::size_t>(n_actions);
    std::vector<double> triple(S * A * S, 0.0), pair(S * A, 0.0);
    for (const auto& t : dataset.transitions) {
        triple[(t.s_idx() * A + t.a_idx()) * S + t.s_next_idx()] += 1.0;
        pair[t.s_idx() * A + t.a_idx()] += 1.0;
    }
    TabularModel m;
    m.n_states = n_states;
    m.n_actions = n_actions;
    m.counts = pair;
    m.transition.resize(S * A * S);
    for (std::size_t row = 0; row < S * A; ++row) {
        const double denom = pair[row] + eps * n_states;
        for (std::size_t j = 0; j < S; ++j)
            m.transition[row * S + j] = (triple[row * S + j] + eps) / denom;
    }
    return m;
}

/// Differential value of reward g under (dynamics, policy); the change-of-
/// variable image of a dictionary member.
inline DifferentialValue construct_F_member(const std::vector<double>& transition,
                                            int n_states, int n_actions,
                                            const TabularPolicy& policy,
                                            const std::vector<double>& g) {
    return average_reward_and_bias(transition, n_states, n_actions, policy, g);
}

/// All sides of the three inequality chains for one (MDP, model, pi_b, pi, dict)
/// instance.
struct BoundReport {
    // identity between the definitional and change-of-variable forms
    double identity_lhs_def = 0.0;
    double identity_lhs_cov = 0.0;
    double per_g_gap = 0.0;

    // model-error chain
    double chain_lhs = 0.0;
    double circ1 = 0.0;
    double term_circ1_tv = 0.0;
    double term_circ1_kl = 0.0;
    double r_psi = 0.0;
    double f_max = 0.0;   // the constant C: max over g of span of v_g
    double psi_max = 0.0; // reported, never used to cap
    double chain_rhs = 0.0;

    // combined bound
    double combined_lhs = 0.0;
    double r_f = 0.0;
    double kl_model_term = 0.0;  // E_{d_b}[sqrt(KL(P*||P_hat)/2)]
    double combined_rhs = 0.0;

    bool holds_identity = false;
    bool holds_sum = false;      // chain_lhs <= circ1 + r_psi
    bool holds_tv = false;       // circ1 <= f_max * E[TV]
    bool holds_pinsker = false;  // f_max * E[TV] <= f_max * E[sqrt(KL/2)]
    bool holds_combined = false;

    bool all_hold() const {
        return holds_identity && holds_sum && holds_tv && holds_pinsker && holds_combined;
    }
};

inline void to_json(nlohmann::json& j, const BoundReport& r) {
    j = nlohmann::json{
        {"identity_lhs_def", r.identity_lhs_def}, {"identity_lhs_cov", r.identity_lhs_cov},
        {"per_g_gap", r.per_g_gap},         {"chain_lhs", r.chain_lhs},
        {"circ1", r.circ1},                 {"term_circ1_tv", r.term_circ1_tv},
        {"term_circ1_kl", r.term_circ1_kl}, {"r_psi", r.r_psi},
        {"f_max", r.f_max},                 {"psi_max", r.psi_max},
        {"chain_rhs", r.chain_rhs},         {"combined_lhs", r.combined_lhs},
        {"r_f", r.r_f},                     {"kl_model_term", r.kl_model_term},
        {"combined_rhs", r.combined_rhs},
        {"holds",
         {{"identity", r.holds_identity},
          {"sum", r.holds_sum},
          {"tv", r.holds_tv},
          {"pinsker", r.holds_pinsker},
          {"combined", r.holds_combined}}}};
}

inline std::string bound_report_csv_header() {
    return "identity_lhs_def,identity_lhs_cov,per_g_gap,chain_lhs,circ1,term_circ1_tv,"
           "term_circ1_kl,r_psi,f_max,psi_max,chain_rhs,combined_lhs,r_f,kl_model_term,"
           "combined_rhs,all_hold";
}

inline std::string bound_report_csv_row(const BoundReport& r) {
    auto f = [](double v) { return std::to_string(v); };
    return f(r.identity_lhs_def) + "," + f(r.identity_lhs_cov) + "," + f(r.per_g_gap) + "," +
           f(r.chain_lhs) + "," + f(r.circ1) + "," + f(r.term_circ1_tv) + "," +
           f(r.term_circ1_kl) + "," + f(r.r_psi) + "," + f(r.f_max) + "," + f(r.psi_max) + "," +
           f(r.chain_rhs) + "," + f(r.combined_lhs) + "," + f(r.r_f) + "," + f(r.kl_model_term) +
           "," + f(r.combined_rhs) + "," + (r.all_hold() ? "1" : "0");
}

namespace detail {

// E_{(s,a) ~ w}[g(s', a')] with s' ~ dynamics, a' ~ policy.
inline double one_step_expectation(const StateActionDist& w,
                                   const std::vector<double>& transition,
                                   const TabularPolicy& policy,
                                   const std::vector<double>& g) {
    const int S = w.n_states, A = w.n_actions;
    double acc = 0.0;
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            const double wsa = w.d(s, a);
            if (wsa == 0.0) continue;
            double inner = 0.0;
            for (int s2 = 0; s2 < S; ++s2) {
                const double p = transition[(static_cast<std::size_t>(s) * A + a) * S + s2];
                if (p == 0.0) continue;
                double ea = 0.0;
                for (int a2 = 0; a2 < A; ++a2)
                    ea += policy.pi(a2, s2) * g[static_cast<std::size_t>(s2) * A + a2];
                inner += p * ea;
            }
            acc += wsa * inner;
        }
    return acc;
}

// E_{s ~ w(s), a ~ policy}[g(s,a)] from the state marginal of w.
inline double marginal_policy_expectation(const StateActionDist& w, const TabularPolicy& policy,
                                          const std::vector<double>& g) {
    const auto sm = w.state_marginal();
    double acc = 0.0;
    for (int s = 0; s < w.n_states; ++s)
        for (int a = 0; a < w.n_actions; ++a)
            acc += sm[s] * policy.pi(a, s) * g[static_cast<std::size_t>(s) * w.n_actions + a];
    return acc;
}

// E_{d_b}[TV(P*(.|s,a), P_hat(.|s,a))] and E_{d_b}[sqrt(KL(P*||P_hat)/2)].
inline std::pair<double, double> model_divergence_terms(const TabularMdp& mdp,
                                                        const TabularModel& model,
                                                        const StateActionDist& d_b) {
    double tv_term = 0.0, kl_term = 0.0;
    for (int s = 0; s < mdp.n_states; ++s)
        for (int a = 0; a < mdp.n_actions; ++a) {
            const double w = d_b.d(s, a);
            if (w == 0.0) continue;
            double l1 = 0.0, kl = 0.0;
            for (int s2 = 0; s2 < mdp.n_states; ++s2) {
                const double pt = mdp.p(s, a, s2), pm = model.p(s, a, s2);
                l1 += std::abs(pt - pm);
                if (pt > 0.0) {
                    if (pm <= 0.0) throw SupportViolation("model row loses true support");
                    kl += pt * std::log(pt / pm);
                }
            }
            tv_term += w * 0.5 * l1;
            kl_term += w * std::sqrt(std::max(kl, 0.0) / 2.0);
        }
    return {tv_term, kl_term};
}

} // namespace detail

/// Per dictionary member, checks the exact identity between
/// |E_{d_b}[g] - eta_hat| and the one-step change-of-variable form, and
/// records the two sup values.
inline BoundReport verify_identity(const TabularMdp& mdp, const TabularModel& model,
                                    const TabularPolicy& pi_b, const TabularPolicy& pi,
                                    const FunctionDictionary& dict) {
    if (dict.members.empty()) throw EmptyDictionary("verify_identity: empty dictionary");
    const int S = mdp.n_states, A = mdp.n_actions;
    const auto d_b = stationary_distribution(mdp, pi_b);
    const auto d_model = stationary_distribution(model.transition, S, A, pi);

    BoundReport rep;
    for (const auto& g : dict.members) {
        const double eta_hat = expectation(d_model, g);
        const double lhs = std::abs(expectation(d_b, g) - eta_hat);
        const auto f = construct_F_member(model.transition, S, A, pi, g);
        const double cov = std::abs(expectation(d_b, f.q) -
                                    detail::one_step_expectation(d_b, model.transition, pi, f.q));
        rep.identity_lhs_def = std::max(rep.identity_lhs_def, lhs);
        rep.identity_lhs_cov = std::max(rep.identity_lhs_cov, cov);
        rep.per_g_gap = std::max(rep.per_g_gap, std::abs(lhs - cov));
    }
    rep.r_f = rep.identity_lhs_cov;
    rep.holds_identity = rep.per_g_gap < kIdentityTol;
    return rep;
}

/// Full model-error chain. For each g: f is the differential value under
/// (pi, P_hat), v its policy-averaged state value, E_g(s,a) the one-step
/// value gap between the two dynamics, and psi_g the differential value of
/// E_g under (pi, P*). Every step of the chain is checked separately.
inline BoundReport verify_model_error_chain(const TabularMdp& mdp, const TabularModel& model,
                                    const TabularPolicy& pi_b, const TabularPolicy& pi,
                                    const FunctionDictionary& dict) {
    if (dict.members.empty()) throw EmptyDictionary("verify_model_error_chain: empty dictionary");
    const int S = mdp.n_states, A = mdp.n_actions;
    const auto d_b = stationary_distribution(mdp, pi_b);
    const auto d_star = stationary_distribution(mdp, pi);
    const auto d_model = stationary_distribution(model.transition, S, A, pi);

    BoundReport rep;
    for (const auto& g : dict.members) {
        rep.chain_lhs = std::max(
            rep.chain_lhs, std::abs(expectation(d_model, g) - expectation(d_star, g)));

        const auto f = construct_F_member(model.transition, S, A, pi, g);

        // v(s) = E_{a ~ pi}[f(s,a)]; E_g(s,a) = E_{P*}[v(s')] - E_{P_hat}[v(s')]
        std::vector<double> v(S, 0.0);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a)
                v[s] += pi.pi(a, s) * f.value(s, a);
        // The constant that turns a TV distance into a bound on a difference
        // of expectations of v is the span of v: |E_p[v] - E_q[v]| equals
        // |sum (p-q)(v - mid)| <= ||p-q||_1 * span(v)/2 = TV * span(v).
        const auto [vmin, vmax] = std::minmax_element(v.begin(), v.end());
        rep.f_max = std::max(rep.f_max, *vmax - *vmin);
        std::vector<double> eg(static_cast<std::size_t>(S) * A, 0.0);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) {
                double acc = 0.0;
                for (int s2 = 0; s2 < S; ++s2)
                    acc += (mdp.p(s, a, s2) - model.p(s, a, s2)) * v[s2];
                eg[static_cast<std::size_t>(s) * A + a] = acc;
            }

        rep.circ1 = std::max(rep.circ1, std::abs(expectation(d_b, eg)));

        const auto psi = average_reward_and_bias(mdp, pi, eg);
        rep.psi_max = std::max(rep.psi_max, psi.sup_norm());
        rep.r_psi = std::max(rep.r_psi,
                             std::abs(expectation(d_b, psi.q) -
                                      detail::marginal_policy_expectation(d_b, pi, psi.q)));
    }

    const auto [tv_term, kl_term] = detail::model_divergence_terms(mdp, model, d_b);
    rep.kl_model_term = kl_term;
    rep.term_circ1_tv = rep.f_max * tv_term;
    rep.term_circ1_kl = rep.f_max * kl_term;
    rep.chain_rhs = rep.term_circ1_kl + rep.r_psi;

    rep.holds_sum = rep.chain_lhs - (rep.circ1 + rep.r_psi) <= -kChainSlack;
    rep.holds_tv = rep.circ1 - rep.term_circ1_tv <= -kChainSlack;
    rep.holds_pinsker = rep.term_circ1_tv - rep.term_circ1_kl <= -kChainSlack;
    return rep;
}

/// Combined bound: D_G(d_b, d_pi^{P*}) <= R_F + R_Psi + C * E[sqrt(KL/2)],
/// with the model-error term kept explicit.
inline BoundReport verify_combined_bound(const TabularMdp& mdp, const TabularModel& model,
                                    const TabularPolicy& pi_b, const TabularPolicy& pi,
                                    const FunctionDictionary& dict) {
    BoundReport rep = verify_model_error_chain(mdp, model, pi_b, pi, dict);
    const BoundReport rid = verify_identity(mdp, model, pi_b, pi, dict);
    rep.identity_lhs_def = rid.identity_lhs_def;
    rep.identity_lhs_cov = rid.identity_lhs_cov;
    rep.per_g_gap = rid.per_g_gap;
    rep.r_f = rid.r_f;
    rep.holds_identity = rid.holds_identity;

    const auto d_b = stationary_distribution(mdp, pi_b);
    const auto d_star = stationary_distribution(mdp, pi);
    for (const auto& g : dict.members)
        rep.combined_lhs = std::max(rep.combined_lhs,
                                 std::abs(expectation(d_b, g) - expectation(d_star, g)));
    rep.combined_rhs = rep.r_f + rep.r_psi + rep.f_max * rep.kl_model_term;
    rep.holds_combined = rep.combined_lhs - rep.combined_rhs <= -kChainSlack;
    return rep;
}

// ---------------------------------------------------------------------------
// Tabular regularized policy improvement: softmax policy ascending
//   alpha * eta_hat(pi; P_hat, r)  -  D_supnorm(d_data, d_pi^{P_hat})
// by central finite differences on the logits.
// ---------------------------------------------------------------------------

struct ImprovementOptions {
    double smoothing_eps = 0.01;
    bool use_exact_model = false;
    double learning_rate = 2.0;
    double fd_step = 1e-5;
    double ipm_g_max = 1.0;
    // keeps every action at positive probability so the induced chain stays
    // irreducible as the softmax sharpens
    double policy_floor = 1e-3;
};

struct ImprovementStep {
    double objective = 0.0;
    double exact_avg_reward = 0.0;     // E_{d_pi^{P*}}[r]
    double tv_to_behavior = 0.0;       // TV(d_pi^{P*}, d_{pi_b}^{P*})
};

struct ImprovementResult {
    std::vector<TabularPolicy> policy_trajectory;  // per recorded step
    std::vector<ImprovementStep> diagnostics;
    TabularPolicy final_policy;
    TabularModel model;
};

inline TabularPolicy softmax_policy(const std::vector<double>& logits, int S, int A,
                                    double floor = 0.0) {
    std::vector<double> probs(static_cast<std::size_t>(S) * A);
    for (int s = 0; s < S; ++s) {
        double mx = -1e300;
        for (int a = 0; a < A; ++a) mx = std::max(mx, logits[static_cast<std::size_t>(s) * A + a]);
        double sum = 0.0;
        for (int a = 0; a < A; ++a) {
            const double e = std::exp(logits[static_cast<std::size_t>(s) * A + a] - mx);
            probs[static_cast<std::size_t>(s) * A + a] = e;
            sum += e;
        }
        for (int a = 0; a < A; ++a) {
            auto& p = probs[static_cast<std::size_t>(s) * A + a];
            p = (1.0 - floor) * p / sum + floor / A;
        }
    }
    return TabularPolicy{S, A, std::move(probs)};
}

inline ImprovementResult tabular_regularized_improvement(const TabularMdp& mdp,
                                                         const Dataset& dataset,
                                                         const StateActionDist& d_behavior,
                                                         double alpha, int steps,
                                                         const ImprovementOptions& opts = {}) {
    if (alpha < 0.0) throw Error("tabular_regularized_improvement: alpha must be >= 0");
    const int S = mdp.n_states, A = mdp.n_actions;
    std::vector<bool> seen(S, false);
    for (const auto& t : dataset.transitions) seen[t.s_idx()] = true;
    for (int s = 0; s < S; ++s)
        if (!seen[s]) throw CoverageError("state " + std::to_string(s) + " never visited");

    ImprovementResult res;
    if (opts.use_exact_model) {
        res.model = TabularModel{S, A, mdp.transition,
                                 std::vector<double>(static_cast<std::size_t>(S) * A, 0.0)};
    } else {
        res.model = mle_tabular_model(dataset, S, A, opts.smoothing_eps);
    }
    const StateActionDist d_data = empirical_distribution(dataset, S, A);

    auto objective = [&](const std::vector<double>& logits) {
        const TabularPolicy pi = softmax_policy(logits, S, A, opts.policy_floor);
        const auto d_hat = stationary_distribution(res.model.transition, S, A, pi);
        double eta = 0.0;
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) eta += d_hat.d(s, a) * mdp.r(s, a);
        return alpha * eta - ipm_supnorm(d_data, d_hat, opts.ipm_g_max);
    };

    auto record = [&](const std::vector<double>& logits) {
        const TabularPolicy pi = softmax_policy(logits, S, A, opts.policy_floor);
        const auto d_star = stationary_distribution(mdp, pi);
        ImprovementStep step;
        step.objective = objective(logits);
        for (int s = 0; s < S; ++s)
            for (int a = 0; a < A; ++a) step.exact_avg_reward += d_star.d(s, a) * mdp.r(s, a);
        step.tv_to_behavior = divergence(d_star, d_behavior, DivergenceKind::TV);
        res.policy_trajectory.push_back(pi);
        res.diagnostics.push_back(step);
    };

    std::vector<double> logits(static_cast<std::size_t>(S) * A, 0.0);
    record(logits);
    for (int it = 0; it < steps; ++it) {
        std::vector<double> grad(logits.size());
        for (std::size_t i = 0; i < logits.size(); ++i) {
            const double save = logits[i];
            logits[i] = save + opts.fd_step;
            const double up = objective(logits);
            logits[i] = save - opts.fd_step;
            const double dn = objective(logits);
            logits[i] = save;
            grad[i] = (up - dn) / (2.0 * opts.fd_step);
        }
        for (std::size_t i = 0; i < logits.size(); ++i)
            logits[i] += opts.learning_rate * grad[i];
        record(logits);
    }
    res.final_policy = softmax_policy(logits, S, A, opts.policy_floor);
    return res;
}

} // namespace sdmlab
