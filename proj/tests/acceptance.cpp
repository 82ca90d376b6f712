// Acceptance harness: one line per criterion, pinned tolerances, exit 0 only
// if every criterion passes. Budgets are wall-clock and enforced.

#include <chrono>
#include <cmath>
#include <cstdio>
#include <string>
#include <vector>

#include <Eigen/Dense>

#include "sdmlab/avg_mdp.hpp"
#include "sdmlab/bounds.hpp"
#include "sdmlab/circle_gan.hpp"
#include "sdmlab/trainer.hpp"

using namespace sdmlab;
using clk = std::chrono::steady_clock;

namespace {

double elapsed(clk::time_point start) {
    return std::chrono::duration<double>(clk::now() - start).count();
}

struct Criterion {
    bool ok = true;
    std::string detail;

    void require(bool cond, const std::string& why) {
        if (!cond && ok) {
            ok = false;
            detail = why;
        }
    }

    // summary text for the passing case; never masks a failure message
    void summarize(const std::string& s) {
        if (ok) detail = s;
    }
};

struct Instance {
    TabularMdp mdp;
    TabularPolicy pi_b, pi;
    FunctionDictionary dict;
    TabularModel model;
};

Instance make_instance(std::uint64_t seed, int i, std::size_t n_data) {
    RngStream rng(seed, "acceptance-instance-" + std::to_string(i));
    Instance inst;
    const int S = 2 + static_cast<int>(rng.index(7));  // 2..8 states
    const int A = 1 + static_cast<int>(rng.index(3));  // 1..3 actions
    inst.mdp = random_mdp(S, A, rng);
    inst.pi_b = random_policy(S, A, rng);
    inst.pi = random_policy(S, A, rng);
    auto dict_rng = rng.fork("dict");
    inst.dict = default_dictionary(S, A, 1.0, dict_rng, 64);
    auto ds = generate_dataset(inst.mdp, inst.pi_b, n_data, rng.engine()());
    inst.model = mle_tabular_model(ds, S, A, 0.01);
    return inst;
}

// shared sweep reused by the first three criteria
std::vector<BoundReport> sweep_reports;
std::vector<Instance> sweep_instances;

void run_sweep() {
    for (int i = 0; i < 100; ++i) {
        sweep_instances.push_back(make_instance(7, i, 2000));
        const auto& inst = sweep_instances.back();
        sweep_reports.push_back(
            verify_combined_bound(inst.mdp, inst.model, inst.pi_b, inst.pi, inst.dict));
    }
}

// ---------------------------------------------------------------------------

Criterion criterion1_identity() {
    Criterion c;
    auto t0 = clk::now();
    run_sweep();
    const double secs = elapsed(t0);
    double worst = 0.0;
    for (const auto& r : sweep_reports) worst = std::max(worst, r.per_g_gap);
    c.require(worst < 1e-8, "per-member gap " + std::to_string(worst) + " >= 1e-8");
    c.require(secs < 60.0, "sweep took " + std::to_string(secs) + "s >= 60s");
    c.summarize("max gap " + std::to_string(worst) + " over 100 instances in " +
               std::to_string(secs) + "s");
    return c;
}

Criterion criterion2_chain_and_pinsker() {
    Criterion c;
    double worst_slack = 1e300;
    for (const auto& r : sweep_reports) {
        worst_slack = std::min(worst_slack, (r.circ1 + r.r_psi) - r.chain_lhs);
        worst_slack = std::min(worst_slack, r.term_circ1_tv - r.circ1);
        worst_slack = std::min(worst_slack, r.term_circ1_kl - r.term_circ1_tv);
    }
    c.require(worst_slack >= -1e-9,
              "chain slack " + std::to_string(worst_slack) + " < -1e-9");

    RngStream rng(11, "pinsker-pairs");
    double worst_pinsker = 1e300;
    for (int k = 0; k < 1000; ++k) {
        const int n = 2 + static_cast<int>(rng.index(15));
        StateActionDist p{n, 1, std::vector<double>(n)};
        StateActionDist q{n, 1, std::vector<double>(n)};
        double sp = 0.0, sq = 0.0;
        for (int i = 0; i < n; ++i) {
            p.probs[i] = -std::log(rng.uniform(1e-12, 1.0));
            q.probs[i] = -std::log(rng.uniform(1e-12, 1.0)) + 1e-4;
            sp += p.probs[i];
            sq += q.probs[i];
        }
        for (int i = 0; i < n; ++i) {
            p.probs[i] /= sp;
            q.probs[i] /= sq;
        }
        const double tv = divergence(p, q, DivergenceKind::TV);
        const double kl = divergence(p, q, DivergenceKind::KL);
        worst_pinsker = std::min(worst_pinsker, std::sqrt(kl / 2.0) - tv);
    }
    c.require(worst_pinsker >= -1e-12,
              "sqrt(KL/2) - TV slack " + std::to_string(worst_pinsker) + " < 0");
    c.summarize("min chain slack " + std::to_string(worst_slack) +
               ", min sqrt(KL/2)-TV slack over 1000 pairs " + std::to_string(worst_pinsker));
    return c;
}

Criterion criterion3_combined_and_mle() {
    Criterion c;
    for (std::size_t i = 0; i < sweep_reports.size(); ++i) {
        const auto& r = sweep_reports[i];
        c.require(r.all_hold(), "instance " + std::to_string(i) + " violates the chain");
        c.require(r.combined_lhs <= r.combined_rhs + 1e-9,
                  "combined bound violated on instance " + std::to_string(i));
    }

    // with the policy fixed, the model-error term shrinks as data grows
    double prev = 1e300;
    std::vector<double> means;
    for (std::size_t n_data : {100ul, 1000ul, 10000ul}) {
        double mean = 0.0;
        for (std::uint64_t seed = 0; seed < 20; ++seed) {
            RngStream rng(900 + seed, "mle-consistency");
            auto mdp = random_mdp(4, 2, rng);
            auto pi_b = random_policy(4, 2, rng);
            auto ds = generate_dataset(mdp, pi_b, n_data, 900 + seed);
            auto model = mle_tabular_model(ds, 4, 2, 0.01);
            auto d_b = stationary_distribution(mdp, pi_b);
            auto [tv, kl] = detail::model_divergence_terms(mdp, model, d_b);
            (void)tv;
            mean += kl / 20.0;
        }
        means.push_back(mean);
        c.require(mean <= prev + 1e-12, "model-error term grew with more data");
        prev = mean;
    }
    c.summarize("all bounds hold; mean model-error term " + std::to_string(means[0]) + " -> " +
               std::to_string(means[1]) + " -> " + std::to_string(means[2]));
    return c;
}

Criterion criterion4_solver_oracles() {
    Criterion c;
    double worst_tv = 0.0, worst_series = 0.0, worst_bellman = 0.0;
    for (int i = 0; i < 20; ++i) {
        RngStream rng(70 + i, "solver-oracle");
        const int S = 2 + static_cast<int>(rng.index(5));
        const int A = 1 + static_cast<int>(rng.index(3));
        auto mdp = random_mdp(S, A, rng);
        auto pi = random_policy(S, A, rng);
        const int n = S * A;

        auto d = stationary_distribution(mdp, pi);
        Eigen::MatrixXd M = chain_matrix(mdp, pi);

        // power-iteration oracle
        Eigen::VectorXd v = Eigen::VectorXd::Constant(n, 1.0 / n);
        for (int t = 0; t < 10000; ++t) v = M.transpose() * v;
        double tv = 0.0;
        for (int k = 0; k < n; ++k) tv += std::abs(v(k) - d.probs[k]);
        worst_tv = std::max(worst_tv, 0.5 * tv);

        // truncated-series oracle for the differential value
        auto dv = average_reward_and_bias(mdp, pi, mdp.reward);
        Eigen::VectorXd g(n), dvec(n);
        for (int k = 0; k < n; ++k) {
            g(k) = mdp.reward[k];
            dvec(k) = d.probs[k];
        }
        Eigen::VectorXd term = g - Eigen::VectorXd::Constant(n, dv.eta);
        Eigen::VectorXd acc = Eigen::VectorXd::Zero(n);
        for (int t = 0; t < 10000; ++t) {
            acc += term;
            term = M * term;
        }
        acc -= Eigen::VectorXd::Constant(n, dvec.dot(acc));  // apply the same pin
        for (int k = 0; k < n; ++k)
            worst_series = std::max(worst_series, std::abs(acc(k) - dv.q[k]));

        worst_bellman = std::max(worst_bellman, bellman_residual(mdp, pi, dv, mdp.reward));
    }
    c.require(worst_tv < 1e-8, "stationary TV " + std::to_string(worst_tv));
    c.require(worst_series < 1e-6, "series gap " + std::to_string(worst_series));
    c.require(worst_bellman < 1e-10, "residual " + std::to_string(worst_bellman));
    c.summarize("TV " + std::to_string(worst_tv) + ", series gap " +
               std::to_string(worst_series) + ", residual " + std::to_string(worst_bellman));
    return c;
}

// central finite differences over every parameter of `net` against the
// analytic gradient left by `pass` (which must forward + backward + return
// the loss)
template <class Pass>
double worst_param_grad_error(Mlp& net, Pass pass) {
    net.zero_grad();
    pass();
    std::vector<std::vector<double>> analytic;
    {
        auto grads = net.gradient_blocks();
        auto sizes = net.block_sizes();
        for (std::size_t b = 0; b < grads.size(); ++b)
            analytic.emplace_back(grads[b], grads[b] + sizes[b]);
    }
    const double h = 1e-6;
    double worst = 0.0;
    auto params = net.parameter_blocks();
    auto sizes = net.block_sizes();
    for (std::size_t b = 0; b < params.size(); ++b)
        for (std::size_t k = 0; k < sizes[b]; ++k) {
            const double save = params[b][k];
            params[b][k] = save + h;
            net.zero_grad();
            const double up = pass();
            params[b][k] = save - h;
            net.zero_grad();
            const double dn = pass();
            params[b][k] = save;
            const double fd = (up - dn) / (2.0 * h);
            const double an = analytic[b][k];
            worst = std::max(worst, std::abs(an - fd) / std::max({std::abs(an), std::abs(fd), 1.0}));
        }
    return worst;
}

Criterion criterion5_gradient_checks() {
    Criterion c;
    RngStream rng(5, "grad-checks");
    const int B = 6;
    Matrix x(B, 3);
    for (int i = 0; i < B; ++i)
        for (int j = 0; j < 3; ++j) x(i, j) = rng.normal();
    double worst_all = 0.0;
    auto check = [&](const std::string& name, double err) {
        worst_all = std::max(worst_all, err);
        c.require(err < 1e-4, name + " gradient error " + std::to_string(err));
    };

    {  // Gaussian likelihood through a two-headed net
        auto r = rng.fork("nll");
        Mlp net({3, 8, 2}, r);
        Matrix target(B, 1);
        for (int i = 0; i < B; ++i) target(i, 0) = r.normal();
        check("gaussian_nll", worst_param_grad_error(net, [&]() {
            Matrix out = net.forward(x);
            Matrix dm, dls;
            const double loss =
                gaussian_nll(out.col(0), out.col(1), target, dm, dls);
            Matrix d(B, 2);
            d.col(0) = dm;
            d.col(1) = dls;
            net.backward(d);
            return loss;
        }));
    }
    {  // weighted BCE
        auto r = rng.fork("bce");
        Mlp net({3, 8, 1}, r);
        Matrix targets(B, 1), weights(B, 1);
        for (int i = 0; i < B; ++i) {
            targets(i, 0) = r.uniform() < 0.5 ? 0.0 : 0.9;
            weights(i, 0) = r.uniform(0.5, 2.0);
        }
        check("weighted_bce", worst_param_grad_error(net, [&]() {
            Matrix logits = net.forward(x);
            Matrix d;
            const double loss = weighted_bce(logits, targets, weights, d);
            net.backward(d);
            return loss;
        }));
    }
    {  // Huber regression
        auto r = rng.fork("huber");
        Mlp net({3, 8, 1}, r);
        Matrix target(B, 1);
        for (int i = 0; i < B; ++i) target(i, 0) = r.normal(0.0, 2.0);
        check("huber", worst_param_grad_error(net, [&]() {
            Matrix pred = net.forward(x);
            Matrix d;
            const double loss = huber(pred, target, 1.0, d);
            net.backward(d);
            return loss;
        }));
    }
    {  // discriminator on real + fake batches
        auto r = rng.fork("disc");
        Mlp net({3, 8, 1}, r);
        Matrix xf(B, 3), labels(B, 1);
        for (int i = 0; i < B; ++i) {
            labels(i, 0) = r.uniform(0.8, 1.0);
            for (int j = 0; j < 3; ++j) xf(i, j) = r.normal();
        }
        check("discriminator_bce", worst_param_grad_error(net, [&]() {
            Matrix rl = net.forward(x);
            Matrix d_real, d_fake;
            Matrix fl_dummy = Matrix::Zero(B, 1);
            // evaluate both halves against the same network
            const Matrix rl_copy = rl;
            Matrix fl = net.forward(xf);
            const double loss = discriminator_bce(rl_copy, labels, fl, d_real, d_fake);
            net.backward(d_fake);       // cache currently holds the fake pass
            net.forward(x);             // restore the real-pass cache
            net.backward(d_real);
            return loss;
        }));
    }
    {  // generator objectives through a frozen discriminator
        auto r = rng.fork("gen");
        Mlp gen({3, 8, 3}, r);
        auto r2 = rng.fork("gen-disc");
        Mlp disc({3, 8, 1}, r2);
        for (bool saturating : {false, true}) {
            check(saturating ? "generator_saturating" : "generator_nonsaturating",
                  worst_param_grad_error(gen, [&]() {
                      Matrix fake = gen.forward(x);
                      Matrix logits = disc.forward(fake);
                      Matrix d_logits;
                      const double loss = saturating
                                              ? generator_saturating(logits, d_logits)
                                              : generator_nonsaturating(logits, d_logits);
                      disc.zero_grad();
                      Matrix d_in = disc.backward(d_logits);
                      gen.backward(d_in);
                      return loss;
                  }));
        }
    }
    {  // policy objective: scaled pessimistic value through two frozen critics
        auto r = rng.fork("actor");
        Mlp actor({3, 8, 2}, r, 0.01, OutputActivation::tanh_squash);
        auto rc1 = rng.fork("actor-c1");
        auto rc2 = rng.fork("actor-c2");
        Mlp critic1({5, 8, 1}, rc1), critic2({5, 8, 1}, rc2);
        const double lambda = 3.7;
        check("actor_objective", worst_param_grad_error(actor, [&]() {
            Matrix a = actor.forward(x);
            Matrix qin(B, 5);
            qin.leftCols(3) = x;
            qin.rightCols(2) = a;
            Matrix q1 = critic1.forward(qin);
            Matrix q2 = critic2.forward(qin);
            Matrix d1 = Matrix::Zero(B, 1), d2 = Matrix::Zero(B, 1);
            double loss = 0.0;
            for (int i = 0; i < B; ++i) {
                const bool first = q1(i, 0) <= q2(i, 0);
                loss += -lambda * (first ? q1(i, 0) : q2(i, 0)) / B;
                (first ? d1 : d2)(i, 0) = -lambda / B;
            }
            critic1.zero_grad();
            critic2.zero_grad();
            Matrix g1 = critic1.backward(d1);
            Matrix g2 = critic2.backward(d2);
            actor.backward(g1.rightCols(2) + g2.rightCols(2));
            return loss;
        }));
    }
    c.summarize("worst relative gradient error " + std::to_string(worst_all));
    return c;
}

Criterion criterion6_circle() {
    Criterion c;
    auto t0 = clk::now();
    auto circle = make_circle_dataset(100000, 4.0, 0.05, 5000, 20260824);
    CircleCloneConfig cfg;  // frozen profile after the pilot runs
    auto implicit = behavior_clone_toy(circle, GeneratorKind::implicit, cfg, 1);
    auto determin = behavior_clone_toy(circle, GeneratorKind::deterministic, cfg, 1);
    const double secs = elapsed(t0);
    c.require(implicit.coverage >= 0.8,
              "implicit coverage " + std::to_string(implicit.coverage) + " < 0.8");
    c.require(determin.coverage <= 0.2,
              "deterministic coverage " + std::to_string(determin.coverage) + " > 0.2");
    c.require(secs < 900.0, "took " + std::to_string(secs) + "s >= 15 min");
    c.summarize("implicit " + std::to_string(implicit.coverage) + ", deterministic " +
               std::to_string(determin.coverage) + " in " + std::to_string(secs) + "s");
    return c;
}

Criterion criterion7_end_to_end() {
    Criterion c;
    auto t0 = clk::now();
    PointMassEnv env;
    auto data = generate_pointmass_dataset(env, 20000, 101);
    EnsembleConfig ec;
    ec.n_members = 5;
    ec.n_elites = 3;
    ec.hidden = {64, 64};
    ec.epochs = 20;
    TrainerConfig tc;  // desk-scale profile
    tc.actor_hidden = tc.critic_hidden = tc.disc_hidden = {64, 64};
    tc.batch = 256;
    tc.n_smooth = 10;
    tc.horizon = 3;
    tc.warm_epochs = 5;
    tc.epochs = 15;

    auto run = [&]() {
        auto ens = train_dynamics_ensemble(data, ec, 202);
        return train_sdm_gan(data, env, ens, tc, 1);
    };
    auto r1 = run();
    auto r2 = run();

    // bitwise-identical reruns
    bool identical = r1.metrics.size() == r2.metrics.size() &&
                     r1.lambda_qavg_products == r2.lambda_qavg_products;
    for (std::size_t i = 0; identical && i < r1.metrics.size(); ++i) {
        const auto &a = r1.metrics[i], &b = r2.metrics[i];
        identical = a.mean_return == b.mean_return && a.std_return == b.std_return &&
                    a.critic_loss == b.critic_loss && a.disc_loss == b.disc_loss &&
                    a.gen_loss == b.gen_loss && a.lambda == b.lambda && a.q_avg == b.q_avg;
    }
    c.require(identical, "rerun metrics differ");

    // adaptive weight invariant at every policy step
    double worst_dev = 0.0;
    for (double p : r1.lambda_qavg_products)
        worst_dev = std::max(worst_dev, std::abs(p - tc.alpha));
    c.require(worst_dev <= 1e-9, "weight product deviates by " + std::to_string(worst_dev));

    // normalized final return vs the behavior controller and a random policy
    PolicyFn behavior = [&env](const Vector& s, RngStream& rng) {
        return env.behavior_action(s, rng);
    };
    PolicyFn randpol = [](const Vector&, RngStream& rng) {
        Vector a(2);
        a << rng.uniform(-1, 1), rng.uniform(-1, 1);
        return a;
    };
    TrainerState& st = r1.state;
    PolicyFn learned = [&st](const Vector& s, RngStream& rng) {
        return st.act(st.actor, s, rng);
    };
    auto sb = evaluate_policy(env, behavior, 10, 777);
    auto sr = evaluate_policy(env, randpol, 10, 777);
    auto sl = evaluate_policy(env, learned, 10, 777);
    const double normalized = (sl.mean - sr.mean) / (sb.mean - sr.mean);
    c.require(normalized >= 0.95,
              "normalized return " + std::to_string(normalized) + " < 0.95");

    const double secs = elapsed(t0);
    c.require(secs < 1200.0, "took " + std::to_string(secs) + "s >= 20 min");
    c.summarize("normalized return " + std::to_string(normalized) + ", max weight deviation " +
               std::to_string(worst_dev) + ", rerun identical, " + std::to_string(secs) + "s");
    return c;
}

Criterion criterion8_tabular_improvement() {
    Criterion c;
    RngStream rng(61, "improvement");
    auto mdp = random_mdp(4, 2, rng);
    auto pi_b = random_policy(4, 2, rng);
    auto ds = generate_dataset(mdp, pi_b, 20000, 61);
    auto d_b = stationary_distribution(mdp, pi_b);
    double eta_b = 0.0;
    for (std::size_t i = 0; i < d_b.probs.size(); ++i) eta_b += d_b.probs[i] * mdp.reward[i];

    ImprovementOptions opts;
    opts.use_exact_model = true;
    opts.learning_rate = 0.02;
    auto big = tabular_regularized_improvement(mdp, ds, d_b, 1000.0, 200, opts);
    c.require(big.diagnostics.back().exact_avg_reward >= eta_b,
              "reward-dominant run ends below the behavior policy");

    auto pure = tabular_regularized_improvement(mdp, ds, d_b, 0.0, 500);
    auto d_final =
        stationary_distribution(pure.model.transition, 4, 2, pure.final_policy);
    auto d_data = empirical_distribution(ds, 4, 2);
    const double tv = divergence(d_final, d_data, DivergenceKind::TV);
    c.require(tv < 0.05, "pure-regularization TV " + std::to_string(tv) + " >= 0.05");
    c.summarize("final avg reward " + std::to_string(big.diagnostics.back().exact_avg_reward) +
               " vs behavior " + std::to_string(eta_b) + "; TV to data " + std::to_string(tv));
    return c;
}

} // namespace

int main() {
    struct Entry {
        const char* name;
        Criterion (*fn)();
    };
    const Entry entries[] = {
        {"1 occupancy identity sweep", criterion1_identity},
        {"2 model-error chain + Pinsker", criterion2_chain_and_pinsker},
        {"3 combined bound + model consistency", criterion3_combined_and_mle},
        {"4 exact-solver oracles", criterion4_solver_oracles},
        {"5 loss gradient checks", criterion5_gradient_checks},
        {"6 circle mode coverage", criterion6_circle},
        {"7 end-to-end offline training", criterion7_end_to_end},
        {"8 tabular improvement endpoints", criterion8_tabular_improvement},
    };
    bool all_ok = true;
    for (const auto& e : entries) {
        auto t0 = clk::now();
        Criterion c = e.fn();
        all_ok = all_ok && c.ok;
        std::printf("[%s] criterion %s: %s (%.1fs)\n", c.ok ? "PASS" : "FAIL", e.name,
                    c.detail.c_str(), elapsed(t0));
        std::fflush(stdout);
    }
    std::printf("%s\n", all_ok ? "ALL CRITERIA PASSED" : "SOME CRITERIA FAILED");
    return all_ok ? 0 : 1;
}
