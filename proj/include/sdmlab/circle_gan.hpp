#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "sdmlab/data.hpp"
#include "sdmlab/nn.hpp"

namespace sdmlab {

enum class GeneratorKind { implicit, gaussian, deterministic };

inline GeneratorKind generator_kind_from_string(const std::string& s) {
    if (s == "implicit") return GeneratorKind::implicit;
    if (s == "gaussian") return GeneratorKind::gaussian;
    if (s == "deterministic") return GeneratorKind::deterministic;
    throw ConfigError("unknown generator kind: " + s);
}

struct CircleCloneConfig {
    int dim = 128;            // hidden width
    int noise_dim = 2;
    int batch = 256;
    int critic_iters = 1;     // discriminator steps per generator step
    double label_smooth = 0.9;
    long iterations = 3000;   // generator steps
    double lr = 2e-4;
    double adam_beta1 = 0.5;
    double log_std_clamp = 5.0;
    int coverage_samples = 256;
    double coverage_x_limit = 3.5;
    int coverage_sigma_mult = 3;
};

/// Conditional one-dimensional action model y | x in three flavors: an
/// implicit noise-fed sampler, a reparameterized Gaussian head, and a plain
/// deterministic map.
struct CircleClonePolicy {
    GeneratorKind kind = GeneratorKind::implicit;
    Mlp net;
    int noise_dim = 0;
    double log_std_clamp = 5.0;

    double sample(double x, RngStream& rng) {
        switch (kind) {
            case GeneratorKind::implicit: {
                Matrix in(1, 1 + noise_dim);
                in(0, 0) = x;
                for (int j = 0; j < noise_dim; ++j) in(0, 1 + j) = rng.normal();
                return net.forward(in)(0, 0);
            }
            case GeneratorKind::gaussian: {
                Matrix in(1, 1);
                in(0, 0) = x;
                Matrix out = net.forward(in);
                const double ls = std::clamp(out(0, 1), -log_std_clamp, log_std_clamp);
                return out(0, 0) + std::exp(ls) * rng.normal();
            }
            case GeneratorKind::deterministic: {
                Matrix in(1, 1);
                in(0, 0) = x;
                return net.forward(in)(0, 0);
            }
        }
        throw Error("unreachable");
    }

    /// Batched sampling; one row per requested draw.
    Vector sample_batch(const Vector& xs, RngStream& rng) {
        const int n = static_cast<int>(xs.size());
        Matrix out;
        switch (kind) {
            case GeneratorKind::implicit: {
                Matrix in(n, 1 + noise_dim);
                for (int i = 0; i < n; ++i) {
                    in(i, 0) = xs(i);
                    for (int j = 0; j < noise_dim; ++j) in(i, 1 + j) = rng.normal();
                }
                out = net.forward(in);
                return out.col(0);
            }
            case GeneratorKind::gaussian: {
                Matrix in(n, 1);
                in.col(0) = xs;
                out = net.forward(in);
                Vector y(n);
                for (int i = 0; i < n; ++i) {
                    const double ls = std::clamp(out(i, 1), -log_std_clamp, log_std_clamp);
                    y(i) = out(i, 0) + std::exp(ls) * rng.normal();
                }
                return y;
            }
            case GeneratorKind::deterministic: {
                Matrix in(n, 1);
                in.col(0) = xs;
                out = net.forward(in);
                return out.col(0);
            }
        }
        throw Error("unreachable");
    }
};

/// Mode coverage on the held-out set: a test x (inside the x window) counts as
/// covered when the sampler puts at least one of its draws within k*sigma of
/// each of the two circle branches. Sampler needs sample_batch(xs, rng).
template <class Sampler>
double circle_coverage(Sampler& policy, const CircleDataset& circle,
                       const CircleCloneConfig& cfg, RngStream& rng) {
    const double tol = cfg.coverage_sigma_mult * circle.sigma;
    long eligible = 0, covered = 0;
    std::vector<double> xs;
    for (auto [x, y] : circle.test) {
        (void)y;
        if (std::abs(x) < cfg.coverage_x_limit) xs.push_back(x);
    }
    for (double x : xs) {
        ++eligible;
        const double mode = std::sqrt(std::max(circle.radius * circle.radius - x * x, 0.0));
        Vector rep = Vector::Constant(cfg.coverage_samples, x);
        Vector ys = policy.sample_batch(rep, rng);
        bool hit_pos = false, hit_neg = false;
        for (int i = 0; i < ys.size(); ++i) {
            if (std::abs(ys(i) - mode) < tol) hit_pos = true;
            if (std::abs(ys(i) + mode) < tol) hit_neg = true;
            if (hit_pos && hit_neg) break;
        }
        if (hit_pos && hit_neg) ++covered;
    }
    return eligible ? static_cast<double>(covered) / eligible : 0.0;
}

struct CircleCloneResult {
    CircleClonePolicy policy;
    Mlp discriminator;
    double coverage = 0.0;
    double final_disc_loss = 0.0;
    double final_gen_loss = 0.0;
};

/// Conditional GAN behavior cloning of the circle data. ReLU nets throughout
/// (slope 0), logits-based discriminator with one-sided label smoothing,
/// non-saturating generator objective.
inline CircleCloneResult behavior_clone_toy(const CircleDataset& circle, GeneratorKind kind,
                                            const CircleCloneConfig& cfg, std::uint64_t seed) {
    if (circle.train.empty() || circle.test.empty())
        throw EmptyDataset("behavior_clone_toy: empty circle dataset");
    RngStream root(seed, "circle-clone");
    auto grng = root.fork("gen-init");
    auto drng = root.fork("disc-init");
    auto brng = root.fork("batches");
    auto nrng = root.fork("noise");

    CircleCloneResult res;
    res.policy.kind = kind;
    res.policy.noise_dim = cfg.noise_dim;
    res.policy.log_std_clamp = cfg.log_std_clamp;
    const int gin = kind == GeneratorKind::implicit ? 1 + cfg.noise_dim : 1;
    const int gout = kind == GeneratorKind::gaussian ? 2 : 1;
    res.policy.net = Mlp({gin, cfg.dim, cfg.dim, cfg.dim, gout}, grng, 0.0);
    res.discriminator = Mlp({2, cfg.dim, cfg.dim, cfg.dim, 1}, drng, 0.0);

    Adam opt_g(res.policy.net, AdamConfig{cfg.lr, cfg.adam_beta1, 0.999, 1e-8});
    Adam opt_d(res.discriminator, AdamConfig{cfg.lr, cfg.adam_beta1, 0.999, 1e-8});

    const int B = cfg.batch;

    // forward through the generator with everything needed for backprop kept
    struct GenPass {
        Matrix gen_in;    // generator input batch
        Matrix gen_out;   // raw generator output
        Matrix xy;        // discriminator input (x, y)
        Matrix eps;       // gaussian reparameterization noise
        Matrix ls;        // clamped log-std
        std::vector<bool> clamped;
    };
    auto gen_forward = [&](const Matrix& xs) {
        GenPass p;
        const int n = static_cast<int>(xs.rows());
        if (kind == GeneratorKind::implicit) {
            p.gen_in.resize(n, 1 + cfg.noise_dim);
            p.gen_in.col(0) = xs.col(0);
            for (int i = 0; i < n; ++i)
                for (int j = 0; j < cfg.noise_dim; ++j) p.gen_in(i, 1 + j) = nrng.normal();
        } else {
            p.gen_in = xs;
        }
        p.gen_out = res.policy.net.forward(p.gen_in);
        p.xy.resize(n, 2);
        p.xy.col(0) = xs.col(0);
        if (kind == GeneratorKind::gaussian) {
            p.eps.resize(n, 1);
            p.ls.resize(n, 1);
            p.clamped.resize(n);
            for (int i = 0; i < n; ++i) {
                const double raw = p.gen_out(i, 1);
                p.clamped[i] = std::abs(raw) > cfg.log_std_clamp;
                p.ls(i, 0) = std::clamp(raw, -cfg.log_std_clamp, cfg.log_std_clamp);
                p.eps(i, 0) = nrng.normal();
                p.xy(i, 1) = p.gen_out(i, 0) + std::exp(p.ls(i, 0)) * p.eps(i, 0);
            }
        } else {
            p.xy.col(1) = p.gen_out.col(0);
        }
        return p;
    };
    // gradient at the sampled y mapped back onto the generator outputs
    auto gen_backward = [&](const GenPass& p, const Matrix& dy) {
        if (kind == GeneratorKind::gaussian) {
            Matrix dOut(dy.rows(), 2);
            for (Eigen::Index i = 0; i < dy.rows(); ++i) {
                dOut(i, 0) = dy(i, 0);
                dOut(i, 1) = p.clamped[i]
                                 ? 0.0
                                 : dy(i, 0) * std::exp(p.ls(i, 0)) * p.eps(i, 0);
            }
            res.policy.net.backward(dOut);
        } else {
            res.policy.net.backward(dy);
        }
    };

    auto real_batch = [&]() {
        Matrix xy(B, 2);
        for (int i = 0; i < B; ++i) {
            const auto& pt = circle.train[brng.index(circle.train.size())];
            xy(i, 0) = pt.first;
            xy(i, 1) = pt.second;
        }
        return xy;
    };

    for (long it = 0; it < cfg.iterations; ++it) {
        for (int ci = 0; ci < cfg.critic_iters; ++ci) {
            Matrix real = real_batch();
            Matrix fake_x = real_batch().col(0);  // fresh x draw for the fakes
            auto pass = gen_forward(fake_x);

            // one-sided label smoothing: real targets sit at label_smooth
            Matrix labels = Matrix::Constant(B, 1, cfg.label_smooth);
            Matrix rl = res.discriminator.forward(real);
            Matrix d_real;
            Matrix ones = Matrix::Ones(B, 1);
            const double lr_ = weighted_bce(rl, labels, ones, d_real);
            res.discriminator.zero_grad();
            res.discriminator.backward(d_real);
            Matrix fl = res.discriminator.forward(pass.xy);
            Matrix zeros = Matrix::Zero(B, 1), d_fake;
            const double lf = weighted_bce(fl, zeros, ones, d_fake);
            res.discriminator.backward(d_fake);
            opt_d.step(res.discriminator);
            res.final_disc_loss = lr_ + lf;
        }

        Matrix fake_x = real_batch().col(0);
        auto pass = gen_forward(fake_x);
        Matrix fl = res.discriminator.forward(pass.xy);
        Matrix d_logits;
        res.final_gen_loss = generator_nonsaturating(fl, d_logits);
        Matrix d_in = res.discriminator.backward(d_logits);
        res.policy.net.zero_grad();
        gen_backward(pass, d_in.col(1));
        opt_g.step(res.policy.net);
    }

    auto crng = root.fork("coverage");
    res.coverage = circle_coverage(res.policy, circle, cfg, crng);
    return res;
}

} // namespace sdmlab
