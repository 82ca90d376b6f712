#pragma once

#include <algorithm>
#include <cmath>
#include <deque>
#include <string>
#include <vector>

#include "sdmlab/ensemble.hpp"
#include "sdmlab/nn.hpp"
#include "sdmlab/pointmass.hpp"

namespace sdmlab {

struct TrainerConfig {
    double alpha = 10.0;
    double f_real = 0.5;
    int horizon = 1;             // model rollout length, one of {1, 3, 5}
    double gamma = 0.99;
    double beta = 0.005;         // soft-update rate
    double c_min_weight = 0.75;  // clipped double-Q mixing
    int policy_freq = 2;
    int n_smooth = 50;           // smoothed next states per target (N_B)
    double sigma_smooth = 3e-4;  // target-smoothing noise (sigma_B)
    double sigma_fake = 3e-4;    // fake-batch state noise (sigma_J)
    int n_actions = 1;           // actions per smoothed state (N_a)
    int batch = 512;
    double lr_critic = 3e-4;
    double lr_actor_disc = 2e-4;
    double adam_beta1_actor_disc = 0.4;
    int warm_epochs = 40;
    int epochs = 50;
    int iterations_per_epoch = 250;
    double label_smooth_lo = 0.8;
    double label_smooth_hi = 1.0;
    bool label_smooth = true;
    int rollout_freq = 250;
    int rollout_batch = 128;
    int rollout_retain_epochs = 5;
    double q_cutoff = 2000.0;
    double huber_threshold = 500.0;
    double reward_clamp_k = 3.0;
    std::vector<int> actor_hidden = {400, 300};
    std::vector<int> critic_hidden = {400, 300};
    std::vector<int> disc_hidden = {400, 300};
    bool generator_saturating = false;
    int eval_episodes = 10;
    double leaky_slope = 0.01;

    int noise_dim(int state_dim) const { return std::clamp(state_dim / 2, 1, 10); }

    void validate() const {
        if (f_real < 0.0 || f_real > 1.0) throw ConfigError("f_real must be in [0,1]");
        if (horizon != 1 && horizon != 3 && horizon != 5)
            throw ConfigError("horizon must be one of {1,3,5}");
        if (gamma <= 0.0 || gamma >= 1.0) throw ConfigError("gamma must be in (0,1)");
        if (beta <= 0.0 || beta > 1.0) throw ConfigError("beta must be in (0,1]");
        if (c_min_weight < 0.0 || c_min_weight > 1.0) throw ConfigError("c_min_weight in [0,1]");
        if (policy_freq < 1 || batch < 1 || n_smooth < 1 || n_actions < 1)
            throw ConfigError("counts must be positive");
        if (label_smooth_lo > label_smooth_hi || label_smooth_lo < 0.0 || label_smooth_hi > 1.0)
            throw ConfigError("label smoothing range invalid");
        if (alpha < 0.0) throw ConfigError("alpha must be >= 0");
        if (epochs < warm_epochs) throw ConfigError("epochs must cover the warm start");
    }
};

struct ModelTransition {
    Vector s, a, s_next;
    double r = 0.0;
    bool done = false;
    int epoch_added = 0;
};

struct TrainerState {
    Mlp actor, critic1, critic2, target_actor, target_critic1, target_critic2, disc;
    Adam opt_actor, opt_critic1, opt_critic2, opt_disc;
    std::deque<ModelTransition> model_buffer;
    double q_avg = 1.0;
    double critic_skip_threshold = std::numeric_limits<double>::infinity();
    long iteration = 0;
    int epoch = 0;
    long skip_count = 0;
    int state_dim = 0, action_dim = 0, noise_dim = 0;
    double r_clamp_lo = 0.0, r_clamp_hi = 0.0;

    TrainerState() = default;

    TrainerState(int sd, int ad, const TrainerConfig& cfg, RngStream& rng)
        : state_dim(sd), action_dim(ad), noise_dim(cfg.noise_dim(sd)) {
        auto arch = [&](int in, const std::vector<int>& hidden, int out) {
            std::vector<int> sizes{in};
            for (int h : hidden) sizes.push_back(h);
            sizes.push_back(out);
            return sizes;
        };
        auto arng = rng.fork("actor-init");
        actor = Mlp(arch(sd + noise_dim, cfg.actor_hidden, ad), arng, cfg.leaky_slope,
                    OutputActivation::tanh_squash);
        auto c1rng = rng.fork("critic1-init");
        critic1 = Mlp(arch(sd + ad, cfg.critic_hidden, 1), c1rng, cfg.leaky_slope);
        auto c2rng = rng.fork("critic2-init");
        critic2 = Mlp(arch(sd + ad, cfg.critic_hidden, 1), c2rng, cfg.leaky_slope);
        auto drng = rng.fork("disc-init");
        disc = Mlp(arch(sd + ad, cfg.disc_hidden, 1), drng, cfg.leaky_slope);
        target_actor = actor;
        target_critic1 = critic1;
        target_critic2 = critic2;
        opt_actor = Adam(actor, AdamConfig{cfg.lr_actor_disc, cfg.adam_beta1_actor_disc,
                                           0.999, 1e-8});
        opt_critic1 = Adam(critic1, AdamConfig{cfg.lr_critic, 0.9, 0.999, 1e-8});
        opt_critic2 = Adam(critic2, AdamConfig{cfg.lr_critic, 0.9, 0.999, 1e-8});
        opt_disc = Adam(disc, AdamConfig{cfg.lr_actor_disc, cfg.adam_beta1_actor_disc,
                                         0.999, 1e-8});
    }

    /// One action draw through the implicit policy.
    Vector act(Mlp& net, const Vector& s, RngStream& rng) {
        Matrix in(1, state_dim + noise_dim);
        in.leftCols(state_dim) = s.transpose();
        for (int j = 0; j < noise_dim; ++j) in(0, state_dim + j) = rng.normal();
        return net.forward(in).row(0).transpose();
    }
};

// ---------------------------------------------------------------------------

namespace detail {

struct MixedBatch {
    Matrix s, a, s_next;
    Vector r;
    std::vector<bool> done;
    long n_env = 0;  // how many rows came from the offline dataset
};

inline MixedBatch sample_mixed_batch(const TrainerState& state, const Dataset& env_data,
                                     const TrainerConfig& cfg, RngStream& rng,
                                     bool env_only) {
    MixedBatch b;
    const int B = cfg.batch;
    b.s.resize(B, state.state_dim);
    b.a.resize(B, state.action_dim);
    b.s_next.resize(B, state.state_dim);
    b.r.resize(B);
    b.done.resize(B);
    for (int i = 0; i < B; ++i) {
        const bool from_env = env_only || state.model_buffer.empty() ||
                              rng.uniform() < cfg.f_real;
        if (from_env) {
            const auto& t = env_data.transitions[rng.index(env_data.transitions.size())];
            for (int j = 0; j < state.state_dim; ++j) {
                b.s(i, j) = t.s[j];
                b.s_next(i, j) = t.s_next[j];
            }
            for (int j = 0; j < state.action_dim; ++j) b.a(i, j) = t.a[j];
            b.r(i) = t.r;
            b.done[i] = t.done;
            ++b.n_env;
        } else {
            const auto& t = state.model_buffer[rng.index(state.model_buffer.size())];
            b.s.row(i) = t.s.transpose();
            b.a.row(i) = t.a.transpose();
            b.s_next.row(i) = t.s_next.transpose();
            b.r(i) = t.r;
            b.done[i] = t.done;
        }
    }
    return b;
}

} // namespace detail

/// Short policy rollouts on the learned model, branching from dataset states.
inline void branch_rollouts(TrainerState& state, const DynamicsEnsemble& ensemble,
                            const Dataset& env_data, const TrainerConfig& cfg,
                            RngStream& rng) {
    if (!ensemble.trained) throw UntrainedEnsemble("branch_rollouts: untrained ensemble");
    for (int b = 0; b < cfg.rollout_batch; ++b) {
        const auto& start = env_data.transitions[rng.index(env_data.transitions.size())];
        Vector s(state.state_dim);
        for (int j = 0; j < state.state_dim; ++j) s(j) = start.s[j];
        for (int h = 0; h < cfg.horizon; ++h) {
            const Vector a = state.act(state.actor, s, rng);
            auto smp = ensemble.sample(s, a, rng);
            state.model_buffer.push_back(
                ModelTransition{s, a, smp.s_next, smp.r, smp.done, state.epoch});
            if (smp.done) break;
            s = smp.s_next;
        }
    }
}

inline void evict_stale_rollouts(TrainerState& state, const TrainerConfig& cfg) {
    while (!state.model_buffer.empty() &&
           state.model_buffer.front().epoch_added <= state.epoch - cfg.rollout_retain_epochs)
        state.model_buffer.pop_front();
}

/// Clipped double-Q targets with reward clamping, state smoothing and the
/// Q-magnitude cutoff mask. Terminal transitions bootstrap nothing.
inline Vector critic_target(TrainerState& state, const detail::MixedBatch& batch,
                            const TrainerConfig& cfg, RngStream& rng) {
    const int B = static_cast<int>(batch.s.rows());
    const int reps = cfg.n_smooth * cfg.n_actions;

    // expanded next-state set: first smoothing copy keeps the original state
    Matrix sn(B * reps, state.state_dim);
    for (int i = 0; i < B; ++i)
        for (int k = 0; k < cfg.n_smooth; ++k)
            for (int a = 0; a < cfg.n_actions; ++a) {
                const int row = (i * cfg.n_smooth + k) * cfg.n_actions + a;
                sn.row(row) = batch.s_next.row(i);
                if (k > 0)
                    for (int j = 0; j < state.state_dim; ++j)
                        sn(row, j) += rng.normal(0.0, cfg.sigma_smooth);
            }

    Matrix actor_in(B * reps, state.state_dim + state.noise_dim);
    actor_in.leftCols(state.state_dim) = sn;
    for (Eigen::Index i = 0; i < actor_in.rows(); ++i)
        for (int j = 0; j < state.noise_dim; ++j)
            actor_in(i, state.state_dim + j) = rng.normal();
    Matrix an = state.target_actor.forward(actor_in);

    Matrix qin(B * reps, state.state_dim + state.action_dim);
    qin.leftCols(state.state_dim) = sn;
    qin.rightCols(state.action_dim) = an;
    Matrix q1 = state.target_critic1.forward(qin);
    Matrix q2 = state.target_critic2.forward(qin);

    Vector y(B);
    for (int i = 0; i < B; ++i) {
        const double r = std::clamp(batch.r(i), state.r_clamp_lo, state.r_clamp_hi);
        if (batch.done[i]) {
            y(i) = r;
            continue;
        }
        double acc = 0.0;
        int used = 0;
        for (int k = 0; k < reps; ++k) {
            const int row = i * reps + k;
            const double qa = q1(row, 0), qb = q2(row, 0);
            const double qt = cfg.c_min_weight * std::min(qa, qb) +
                              (1.0 - cfg.c_min_weight) * std::max(qa, qb);
            if (std::abs(qt) < cfg.q_cutoff) {
                acc += qt;
                ++used;
            }
        }
        y(i) = r + cfg.gamma * (used > 0 ? acc / used : 0.0);
    }
    return y;
}

struct CriticUpdateResult {
    double loss = 0.0;
    bool skipped = false;
};

/// Huber regression of both critics onto the shared target; the whole update
/// is skipped when the batch loss exceeds the soft-updated threshold.
inline CriticUpdateResult critic_update(TrainerState& state, const detail::MixedBatch& batch,
                                        const TrainerConfig& cfg, RngStream& rng) {
    const Vector y = critic_target(state, batch, cfg, rng);
    const int B = static_cast<int>(batch.s.rows());
    Matrix qin(B, state.state_dim + state.action_dim);
    qin.leftCols(state.state_dim) = batch.s;
    qin.rightCols(state.action_dim) = batch.a;
    const Matrix target = y;

    Matrix p1 = state.critic1.forward(qin);
    Matrix p2 = state.critic2.forward(qin);
    Matrix d1, d2;
    const double loss = huber(p1, target, cfg.huber_threshold, d1) +
                        huber(p2, target, cfg.huber_threshold, d2);
    if (!std::isfinite(loss)) throw NonFiniteLoss("critic_update: non-finite loss");

    CriticUpdateResult res;
    res.loss = loss;
    if (loss > state.critic_skip_threshold) {
        res.skipped = true;
        ++state.skip_count;
        return res;
    }
    state.critic1.zero_grad();
    state.critic1.backward(d1);
    state.opt_critic1.step(state.critic1);
    state.critic2.zero_grad();
    // p2's cache is stale after critic1's pass only if nets shared state; they
    // do not, so the cached activations are still valid
    state.critic2.backward(d2);
    state.opt_critic2.step(state.critic2);
    return res;
}

struct FakeBatch {
    Matrix sa;         // stacked [(s,a); (s',a')]
    Matrix actor_in1;  // inputs that produced the first-row actions
    Matrix actor_in2;  // inputs that produced the second-row actions
    int n1 = 0, n2 = 0;
};

/// Fake sample construction: dataset states (terminals dropped, then smoothed),
/// actions from the current policy, model next states (terminals dropped) with
/// their own policy actions, stacked into one state-action set.
inline FakeBatch build_fake_batch(TrainerState& state, const detail::MixedBatch& batch,
                                  const DynamicsEnsemble& ensemble, const TrainerConfig& cfg,
                                  RngStream& rng) {
    const int B = static_cast<int>(batch.s.rows());
    std::vector<Vector> ss;
    for (int i = 0; i < B; ++i)
        if (!batch.done[i]) {
            Vector s = batch.s.row(i).transpose();
            for (int j = 0; j < state.state_dim; ++j) s(j) += rng.normal(0.0, cfg.sigma_fake);
            ss.push_back(s);
        }
    if (ss.empty()) throw EmptyAfterTerminalFilter("build_fake_batch: no non-terminal states");

    FakeBatch fb;
    fb.n1 = static_cast<int>(ss.size());
    fb.actor_in1.resize(fb.n1, state.state_dim + state.noise_dim);
    for (int i = 0; i < fb.n1; ++i) {
        fb.actor_in1.row(i).head(state.state_dim) = ss[i].transpose();
        for (int j = 0; j < state.noise_dim; ++j)
            fb.actor_in1(i, state.state_dim + j) = rng.normal();
    }
    Matrix a1 = state.actor.forward(fb.actor_in1);

    std::vector<Vector> s2s;
    for (int i = 0; i < fb.n1; ++i) {
        auto smp = ensemble.sample(ss[i], a1.row(i).transpose(), rng);
        if (!smp.done) s2s.push_back(smp.s_next);
    }
    fb.n2 = static_cast<int>(s2s.size());
    Matrix a2;
    if (fb.n2 > 0) {
        fb.actor_in2.resize(fb.n2, state.state_dim + state.noise_dim);
        for (int i = 0; i < fb.n2; ++i) {
            fb.actor_in2.row(i).head(state.state_dim) = s2s[i].transpose();
            for (int j = 0; j < state.noise_dim; ++j)
                fb.actor_in2(i, state.state_dim + j) = rng.normal();
        }
        a2 = state.actor.forward(fb.actor_in2);
    }

    fb.sa.resize(fb.n1 + fb.n2, state.state_dim + state.action_dim);
    for (int i = 0; i < fb.n1; ++i) {
        fb.sa.row(i).head(state.state_dim) = ss[i].transpose();
        fb.sa.row(i).tail(state.action_dim) = a1.row(i);
    }
    for (int i = 0; i < fb.n2; ++i) {
        fb.sa.row(fb.n1 + i).head(state.state_dim) = s2s[i].transpose();
        fb.sa.row(fb.n1 + i).tail(state.action_dim) = a2.row(i);
    }
    return fb;
}

/// One discriminator step: smoothed positive labels on dataset pairs, zeros on
/// the fake stack.
inline double discriminator_update(TrainerState& state, const Matrix& true_sa,
                                   const Matrix& fake_sa, const TrainerConfig& cfg,
                                   RngStream& rng) {
    if (true_sa.rows() == 0 || fake_sa.rows() == 0)
        throw EmptyBatch("discriminator_update: empty batch");
    Matrix labels(true_sa.rows(), 1);
    for (Eigen::Index i = 0; i < labels.rows(); ++i)
        labels(i, 0) = cfg.label_smooth ? rng.uniform(cfg.label_smooth_lo, cfg.label_smooth_hi)
                                        : 1.0;
    Matrix real_logits = state.disc.forward(true_sa);
    Matrix d_real, d_fake_dummy;
    Matrix ones = Matrix::Ones(real_logits.rows(), 1);
    const double loss_real = weighted_bce(real_logits, labels, ones, d_real);
    state.disc.zero_grad();
    state.disc.backward(d_real);

    Matrix fake_logits = state.disc.forward(fake_sa);
    Matrix zeros = Matrix::Zero(fake_logits.rows(), 1);
    Matrix ones_f = Matrix::Ones(fake_logits.rows(), 1);
    Matrix d_fake;
    const double loss_fake = weighted_bce(fake_logits, zeros, ones_f, d_fake);
    state.disc.backward(d_fake);
    state.opt_disc.step(state.disc);
    return loss_real + loss_fake;
}

struct ActorUpdateResult {
    double gen_loss = 0.0;
    double q_term = 0.0;
    double lambda = 0.0;
    double q_avg_used = 0.0;
};

/// Policy step: minimize -lambda * mean(min_j Q_j(s, pi(s))) + generator loss,
/// lambda = alpha / Q_avg. During warm start call with critic_term = false.
inline ActorUpdateResult actor_update(TrainerState& state, const detail::MixedBatch& batch,
                                      const FakeBatch& fake, const TrainerConfig& cfg,
                                      RngStream& rng, bool critic_term) {
    ActorUpdateResult res;
    res.q_avg_used = state.q_avg;
    res.lambda = critic_term ? cfg.alpha / std::max(state.q_avg, 1e-6) : 0.0;
    state.actor.zero_grad();

    if (critic_term) {
        const int B = static_cast<int>(batch.s.rows());
        Matrix actor_in(B, state.state_dim + state.noise_dim);
        actor_in.leftCols(state.state_dim) = batch.s;
        for (int i = 0; i < B; ++i)
            for (int j = 0; j < state.noise_dim; ++j)
                actor_in(i, state.state_dim + j) = rng.normal();
        Matrix a = state.actor.forward(actor_in);
        Matrix qin(B, state.state_dim + state.action_dim);
        qin.leftCols(state.state_dim) = batch.s;
        qin.rightCols(state.action_dim) = a;
        Matrix q1 = state.critic1.forward(qin);
        Matrix q2 = state.critic2.forward(qin);
        Matrix d1 = Matrix::Zero(B, 1), d2 = Matrix::Zero(B, 1);
        double qsum = 0.0;
        for (int i = 0; i < B; ++i) {
            const bool first = q1(i, 0) <= q2(i, 0);
            qsum += first ? q1(i, 0) : q2(i, 0);
            (first ? d1 : d2)(i, 0) = -res.lambda / B;
        }
        res.q_term = qsum / B;
        // critic parameter grads from these passes are discarded at the next
        // critic update's zero_grad; only the input gradient matters here
        Matrix g1 = state.critic1.backward(d1);
        Matrix g2 = state.critic2.backward(d2);
        Matrix da = g1.rightCols(state.action_dim) + g2.rightCols(state.action_dim);
        state.actor.backward(da);  // cache still holds the actor_in pass
        if (!std::isfinite(res.q_term)) throw NonFiniteLoss("actor_update: non-finite Q term");
    }

    // generator loss through the discriminator, both halves of the fake stack
    Matrix fake_logits = state.disc.forward(fake.sa);
    Matrix d_logits;
    res.gen_loss = cfg.generator_saturating
                       ? generator_saturating(fake_logits, d_logits)
                       : generator_nonsaturating(fake_logits, d_logits);
    Matrix d_in = state.disc.backward(d_logits);
    state.actor.forward(fake.actor_in1);
    state.actor.backward(d_in.topRows(fake.n1).rightCols(state.action_dim));
    if (fake.n2 > 0) {
        state.actor.forward(fake.actor_in2);
        state.actor.backward(d_in.bottomRows(fake.n2).rightCols(state.action_dim));
    }
    state.opt_actor.step(state.actor);
    return res;
}

// ---------------------------------------------------------------------------

struct EpochMetrics {
    int epoch = 0;
    double mean_return = 0.0;
    double std_return = 0.0;
    double critic_loss = 0.0;
    double disc_loss = 0.0;
    double gen_loss = 0.0;
    double lambda = 0.0;
    double q_avg = 0.0;
    long skip_count = 0;
};

inline std::string metrics_csv_header() {
    return "epoch,mean_return,std_return,critic_loss,disc_loss,gen_loss,lambda,q_avg,skip_count";
}

inline std::string metrics_csv_row(const EpochMetrics& m) {
    char buf[256];
    std::snprintf(buf, sizeof(buf), "%d,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%.17g,%ld",
                  m.epoch, m.mean_return, m.std_return, m.critic_loss, m.disc_loss,
                  m.gen_loss, m.lambda, m.q_avg, m.skip_count);
    return buf;
}

struct TrainResult {
    TrainerState state;
    std::vector<EpochMetrics> metrics;
    std::vector<double> lambda_qavg_products;  // one entry per RL-phase actor step
    double env_batch_fraction = 0.0;           // mixing diagnostic, RL phase
};

/// Full training loop: warm start on dataset batches with the generator loss
/// only, then the model-rollout + critic + GAN loop with soft updates.
inline TrainResult train_sdm_gan(const Dataset& dataset, const PointMassEnv& env,
                                 const DynamicsEnsemble& ensemble, const TrainerConfig& cfg,
                                 std::uint64_t seed) {
    cfg.validate();
    if (dataset.transitions.empty()) throw EmptyDataset("train_sdm_gan: empty dataset");
    if (dataset.meta.kind != DatasetKind::continuous)
        throw KindMismatch("train_sdm_gan: continuous dataset required");
    if (!ensemble.trained) throw UntrainedEnsemble("train_sdm_gan: untrained ensemble");

    RngStream root(seed, "trainer");
    auto init_rng = root.fork("init");
    TrainResult out;
    out.state = TrainerState(dataset.meta.state_dim, dataset.meta.action_dim, cfg, init_rng);
    TrainerState& st = out.state;

    // reward clamp statistics frozen from the offline dataset
    double r_min = std::numeric_limits<double>::infinity(), r_max = -r_min;
    double r_mean = 0.0;
    for (const auto& t : dataset.transitions) {
        r_min = std::min(r_min, t.r);
        r_max = std::max(r_max, t.r);
        r_mean += t.r;
    }
    r_mean /= dataset.transitions.size();
    double r_var = 0.0;
    for (const auto& t : dataset.transitions) r_var += (t.r - r_mean) * (t.r - r_mean);
    const double r_std = std::sqrt(r_var / dataset.transitions.size());
    st.r_clamp_lo = r_min - cfg.reward_clamp_k * r_std;
    st.r_clamp_hi = r_max + cfg.reward_clamp_k * r_std;

    auto batch_rng = root.fork("batch");
    auto target_rng = root.fork("target-smooth");
    auto fake_rng = root.fork("fake");
    auto disc_rng = root.fork("disc-labels");
    auto actor_rng = root.fork("actor-noise");
    auto rollout_rng = root.fork("rollout");
    auto qavg_rng = root.fork("qavg-noise");
    RngStream eval_seed_rng(seed, "eval-seeds");
    std::vector<std::uint64_t> eval_seeds;
    for (int e = 0; e < cfg.epochs; ++e) eval_seeds.push_back(eval_seed_rng.engine()());

    long env_rows = 0, total_rows = 0;

    for (st.epoch = 0; st.epoch < cfg.epochs; ++st.epoch) {
        const bool warm = st.epoch < cfg.warm_epochs;
        double sum_critic = 0.0, sum_disc = 0.0, sum_gen = 0.0;
        long n_critic = 0, n_disc = 0, n_gen = 0;
        double last_lambda = 0.0;
        std::vector<double> epoch_critic_losses;
        const long skip_before = st.skip_count;

        if (!warm) evict_stale_rollouts(st, cfg);

        for (int it = 0; it < cfg.iterations_per_epoch; ++it, ++st.iteration) {
            if (!warm && st.iteration % cfg.rollout_freq == 0)
                branch_rollouts(st, ensemble, dataset, cfg, rollout_rng);

            auto batch = detail::sample_mixed_batch(st, dataset, cfg, batch_rng, warm);
            if (!warm) {
                env_rows += batch.n_env;
                total_rows += cfg.batch;
            }

            if (!warm) {
                auto cres = critic_update(st, batch, cfg, target_rng);
                sum_critic += cres.loss;
                ++n_critic;
                epoch_critic_losses.push_back(cres.loss);
            }

            // discriminator sees dataset pairs as "true" regardless of phase
            auto fake = build_fake_batch(st, batch, ensemble, cfg, fake_rng);
            Matrix true_sa(fake.sa.rows(), st.state_dim + st.action_dim);
            for (Eigen::Index i = 0; i < true_sa.rows(); ++i) {
                const auto& t = dataset.transitions[batch_rng.index(dataset.transitions.size())];
                for (int j = 0; j < st.state_dim; ++j) true_sa(i, j) = t.s[j];
                for (int j = 0; j < st.action_dim; ++j) true_sa(i, st.state_dim + j) = t.a[j];
            }
            sum_disc += discriminator_update(st, true_sa, fake.sa, cfg, disc_rng);
            ++n_disc;

            if (st.iteration % cfg.policy_freq == 0) {
                auto fake2 = build_fake_batch(st, batch, ensemble, cfg, fake_rng);
                auto ares = actor_update(st, batch, fake2, cfg, actor_rng, !warm);
                sum_gen += ares.gen_loss;
                ++n_gen;
                if (!warm) {
                    last_lambda = ares.lambda;
                    out.lambda_qavg_products.push_back(ares.lambda * ares.q_avg_used);
                }
            }

            if (!warm) {
                // soft updates: targets and the running |Q| scale
                soft_update(st.target_actor, st.actor, cfg.beta);
                soft_update(st.target_critic1, st.critic1, cfg.beta);
                soft_update(st.target_critic2, st.critic2, cfg.beta);
                Matrix qin(cfg.batch, st.state_dim + st.action_dim);
                qin.leftCols(st.state_dim) = batch.s;
                qin.rightCols(st.action_dim) = batch.a;
                Matrix q1 = st.critic1.forward(qin);
                Matrix q2 = st.critic2.forward(qin);
                double mean_abs_q = 0.0;
                for (int i = 0; i < cfg.batch; ++i)
                    mean_abs_q += std::abs(std::min(q1(i, 0), q2(i, 0)));
                mean_abs_q /= cfg.batch;
                st.q_avg = cfg.beta * mean_abs_q + (1.0 - cfg.beta) * st.q_avg;
            }
        }

        // per-epoch skip-threshold update from this epoch's critic losses
        if (!epoch_critic_losses.empty()) {
            double mu = 0.0;
            for (double v : epoch_critic_losses) mu += v;
            mu /= epoch_critic_losses.size();
            double var = 0.0;
            for (double v : epoch_critic_losses) var += (v - mu) * (v - mu);
            const double sd = std::sqrt(var / epoch_critic_losses.size());
            const double fresh = mu + 3.0 * sd;
            st.critic_skip_threshold = std::isfinite(st.critic_skip_threshold)
                                           ? 0.05 * fresh + 0.95 * st.critic_skip_threshold
                                           : fresh;
        }

        PolicyFn pol = [&st](const Vector& s, RngStream& rng) {
            return st.act(st.actor, s, rng);
        };
        auto stats = evaluate_policy(env, pol, cfg.eval_episodes, eval_seeds[st.epoch]);

        EpochMetrics m;
        m.epoch = st.epoch;
        m.mean_return = stats.mean;
        m.std_return = stats.stddev;
        m.critic_loss = n_critic ? sum_critic / n_critic : 0.0;
        m.disc_loss = n_disc ? sum_disc / n_disc : 0.0;
        m.gen_loss = n_gen ? sum_gen / n_gen : 0.0;
        m.lambda = last_lambda;
        m.q_avg = st.q_avg;
        m.skip_count = st.skip_count - skip_before;
        out.metrics.push_back(m);
    }

    out.env_batch_fraction = total_rows ? static_cast<double>(env_rows) / total_rows : 1.0;
    return out;
}

} // namespace sdmlab
