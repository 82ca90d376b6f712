#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <vector>

#include "sdmlab/data.hpp"
#include "sdmlab/nn.hpp"

namespace sdmlab {

struct EnsembleConfig {
    int n_members = 7;
    int n_elites = 5;
    std::vector<int> hidden = {200, 200};
    double lr = 1e-3;
    int batch = 256;
    int epochs = 50;
    double validation_fraction = 0.1;
    double log_std_lo = -5.0;
    double log_std_hi = 2.0;
    double leaky_slope = 0.01;
};

/// Per-column mean/std pair with a floor on std so constant columns stay
/// invertible.
struct NormStats {
    Vector mean;
    Vector std;

    static NormStats fit(const Matrix& x) {
        NormStats n;
        n.mean = x.colwise().mean();
        Matrix centered = x.rowwise() - n.mean.transpose();
        n.std = (centered.array().square().colwise().mean()).sqrt().matrix();
        for (int i = 0; i < n.std.size(); ++i) n.std(i) = std::max(n.std(i), 1e-8);
        return n;
    }
    Matrix normalize(const Matrix& x) const {
        return ((x.rowwise() - mean.transpose()).array().rowwise() /
                std.transpose().array()).matrix();
    }
    Matrix denormalize(const Matrix& z) const {
        return ((z.array().rowwise() * std.transpose().array()).matrix().rowwise() +
                mean.transpose());
    }
};

/// Probabilistic dynamics model: bootstrap-trained Gaussian members over the
/// normalized target (r, s' - s) with a termination logit head; the best
/// members on a shared validation split form the elite set used for sampling.
class DynamicsEnsemble {
public:
    EnsembleConfig config;
    std::vector<Mlp> members;
    std::vector<int> elites;
    std::vector<double> validation_losses;
    NormStats in_stats, out_stats;
    int state_dim = 0, action_dim = 0;
    bool trained = false;

    struct Sample {
        double r = 0.0;
        Vector s_next;
        bool done = false;
    };

    Sample sample(const Vector& s, const Vector& a, RngStream& rng) const {
        if (!trained) throw UntrainedEnsemble("DynamicsEnsemble::sample before training");
        const int member = elites[rng.index(elites.size())];
        Matrix x(1, state_dim + action_dim);
        x.leftCols(state_dim) = s.transpose();
        x.rightCols(action_dim) = a.transpose();
        // members cache activations during forward; keep const interface
        Matrix out = const_cast<Mlp&>(members[member]).forward(in_stats.normalize(x));
        const int od = 1 + state_dim;
        Matrix mean_n = out.leftCols(od);
        Matrix noise(1, od);
        for (int j = 0; j < od; ++j) {
            const double ls = clamp_log_std(out(0, od + j));
            noise(0, j) = std::exp(ls) * rng.normal();
        }
        Matrix y = out_stats.denormalize(mean_n + noise);
        Sample smp;
        smp.r = y(0, 0);
        smp.s_next = s + y.row(0).tail(state_dim).transpose();
        smp.done = detail::sigmoid(out(0, 2 * od)) >= 0.5;
        return smp;
    }

    /// Deterministic mean prediction of one member (diagnostics, tests).
    Sample mean_prediction(int member, const Vector& s, const Vector& a) const {
        if (!trained) throw UntrainedEnsemble("DynamicsEnsemble::mean_prediction before training");
        Matrix x(1, state_dim + action_dim);
        x.leftCols(state_dim) = s.transpose();
        x.rightCols(action_dim) = a.transpose();
        Matrix out = const_cast<Mlp&>(members[member]).forward(in_stats.normalize(x));
        const int od = 1 + state_dim;
        Matrix y = out_stats.denormalize(out.leftCols(od));
        Sample smp;
        smp.r = y(0, 0);
        smp.s_next = s + y.row(0).tail(state_dim).transpose();
        smp.done = detail::sigmoid(out(0, 2 * od)) >= 0.5;
        return smp;
    }

    double clamp_log_std(double raw) const {
        // two-sided softplus clamp, differentiable everywhere
        double v = config.log_std_hi - detail::softplus(config.log_std_hi - raw);
        return config.log_std_lo + detail::softplus(v - config.log_std_lo);
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["state_dim"] = state_dim;
        j["action_dim"] = action_dim;
        j["elites"] = elites;
        j["validation_losses"] = validation_losses;
        j["in_mean"] = std::vector<double>(in_stats.mean.data(), in_stats.mean.data() + in_stats.mean.size());
        j["in_std"] = std::vector<double>(in_stats.std.data(), in_stats.std.data() + in_stats.std.size());
        j["out_mean"] = std::vector<double>(out_stats.mean.data(), out_stats.mean.data() + out_stats.mean.size());
        j["out_std"] = std::vector<double>(out_stats.std.data(), out_stats.std.data() + out_stats.std.size());
        j["config"] = {{"n_members", config.n_members}, {"n_elites", config.n_elites},
                       {"hidden", config.hidden}, {"lr", config.lr}, {"batch", config.batch},
                       {"epochs", config.epochs},
                       {"validation_fraction", config.validation_fraction},
                       {"log_std_lo", config.log_std_lo}, {"log_std_hi", config.log_std_hi},
                       {"leaky_slope", config.leaky_slope}};
        for (const auto& m : members) j["members"].push_back(m.to_json());
        return j;
    }

    static DynamicsEnsemble from_json(const nlohmann::json& j) {
        DynamicsEnsemble e;
        e.state_dim = j.at("state_dim");
        e.action_dim = j.at("action_dim");
        e.elites = j.at("elites").get<std::vector<int>>();
        e.validation_losses = j.at("validation_losses").get<std::vector<double>>();
        auto vec = [](const nlohmann::json& a) {
            auto v = a.get<std::vector<double>>();
            return Eigen::Map<const Vector>(v.data(), v.size()).eval();
        };
        e.in_stats = NormStats{vec(j.at("in_mean")), vec(j.at("in_std"))};
        e.out_stats = NormStats{vec(j.at("out_mean")), vec(j.at("out_std"))};
        const auto& c = j.at("config");
        e.config = EnsembleConfig{c.at("n_members"), c.at("n_elites"),
                                  c.at("hidden").get<std::vector<int>>(), c.at("lr"),
                                  c.at("batch"), c.at("epochs"), c.at("validation_fraction"),
                                  c.at("log_std_lo"), c.at("log_std_hi"), c.at("leaky_slope")};
        for (const auto& mj : j.at("members")) e.members.push_back(Mlp::from_json(mj));
        e.trained = true;
        return e;
    }
};

namespace detail {

struct EnsembleBatches {
    Matrix x;      // normalized (s, a)
    Matrix y;      // normalized (r, ds)
    Matrix done;   // column of 0/1
};

} // namespace detail

inline DynamicsEnsemble train_dynamics_ensemble(const Dataset& dataset,
                                                const EnsembleConfig& config,
                                                std::uint64_t seed) {
    if (dataset.meta.kind != DatasetKind::continuous)
        throw KindMismatch("train_dynamics_ensemble: continuous dataset required");
    const std::size_t N = dataset.transitions.size();
    if (N < 20) throw TooFewSamples("train_dynamics_ensemble: need at least 20 transitions");
    if (config.n_elites > config.n_members || config.n_elites <= 0)
        throw ConfigError("train_dynamics_ensemble: elite count out of range");

    DynamicsEnsemble ens;
    ens.config = config;
    ens.state_dim = dataset.meta.state_dim;
    ens.action_dim = dataset.meta.action_dim;
    const int sd = ens.state_dim, ad = ens.action_dim, od = 1 + sd;

    Matrix X(N, sd + ad), Y(N, od), D(N, 1);
    for (std::size_t i = 0; i < N; ++i) {
        const auto& t = dataset.transitions[i];
        for (int j = 0; j < sd; ++j) X(i, j) = t.s[j];
        for (int j = 0; j < ad; ++j) X(i, sd + j) = t.a[j];
        Y(i, 0) = t.r;
        for (int j = 0; j < sd; ++j) Y(i, 1 + j) = t.s_next[j] - t.s[j];
        D(i, 0) = t.done ? 1.0 : 0.0;
    }

    RngStream rng(seed, "ensemble");
    std::vector<std::size_t> order(N);
    std::iota(order.begin(), order.end(), 0);
    std::shuffle(order.begin(), order.end(), rng.fork("val-split").engine());
    const std::size_t n_val = std::max<std::size_t>(1, static_cast<std::size_t>(
                                                           N * config.validation_fraction));
    if (n_val >= N) throw TooFewSamples("train_dynamics_ensemble: validation split swallows data");
    std::vector<std::size_t> val_idx(order.begin(), order.begin() + n_val);
    std::vector<std::size_t> train_idx(order.begin() + n_val, order.end());

    auto take = [&](const Matrix& src, const std::vector<std::size_t>& idx) {
        Matrix out(idx.size(), src.cols());
        for (std::size_t i = 0; i < idx.size(); ++i) out.row(i) = src.row(idx[i]);
        return out;
    };
    const Matrix Xtr_raw = take(X, train_idx);
    ens.in_stats = NormStats::fit(Xtr_raw);
    ens.out_stats = NormStats::fit(take(Y, train_idx));

    // termination class weight, inverse-proportional; weight 1 if no positives
    const double n_pos = D.sum(), n_neg = static_cast<double>(N) - D.sum();
    const double pos_weight = n_pos > 0.0 ? n_neg / n_pos : 1.0;

    const Matrix Xva = ens.in_stats.normalize(take(X, val_idx));
    const Matrix Yva = ens.out_stats.normalize(take(Y, val_idx));
    const Matrix Dva = take(D, val_idx);

    auto member_loss = [&](Mlp& net, const Matrix& x, const Matrix& y, const Matrix& done,
                           Matrix* dOut) -> double {
        Matrix out = net.forward(x);
        const Eigen::Index B = x.rows();
        Matrix mean = out.leftCols(od), raw_ls = out.middleCols(od, od),
               term = out.rightCols(1);
        Matrix ls(B, od), dls_draw(B, od);
        for (Eigen::Index i = 0; i < B; ++i)
            for (int j = 0; j < od; ++j) {
                const double raw = raw_ls(i, j);
                const double v = config.log_std_hi - detail::softplus(config.log_std_hi - raw);
                ls(i, j) = config.log_std_lo + detail::softplus(v - config.log_std_lo);
                dls_draw(i, j) = detail::sigmoid(config.log_std_hi - raw) *
                                 detail::sigmoid(v - config.log_std_lo);
            }
        Matrix d_mean, d_ls, d_term;
        const double nll = gaussian_nll(mean, ls, y, d_mean, d_ls);
        Matrix w = done.unaryExpr([pos_weight](double v) { return v > 0.5 ? pos_weight : 1.0; });
        const double bce = weighted_bce(term, done, w, d_term);
        if (dOut) {
            dOut->resize(B, 2 * od + 1);
            dOut->leftCols(od) = d_mean;
            dOut->middleCols(od, od) = d_ls.cwiseProduct(dls_draw);
            dOut->rightCols(1) = d_term;
        }
        return nll + bce;
    };

    for (int m = 0; m < config.n_members; ++m) {
        auto mrng = rng.fork("member-" + std::to_string(m));
        std::vector<int> sizes;
        sizes.push_back(sd + ad);
        for (int h : config.hidden) sizes.push_back(h);
        sizes.push_back(2 * od + 1);
        Mlp net(sizes, mrng, config.leaky_slope);
        Adam opt(net, AdamConfig{config.lr, 0.9, 0.999, 1e-8});

        // bootstrap resample of the training pool
        std::vector<std::size_t> boot(train_idx.size());
        for (auto& v : boot) v = train_idx[mrng.index(train_idx.size())];
        const Matrix Xb = ens.in_stats.normalize(take(X, boot));
        const Matrix Yb = ens.out_stats.normalize(take(Y, boot));
        const Matrix Db = take(D, boot);

        const std::size_t nb = boot.size();
        std::vector<std::size_t> perm(nb);
        std::iota(perm.begin(), perm.end(), 0);
        for (int epoch = 0; epoch < config.epochs; ++epoch) {
            std::shuffle(perm.begin(), perm.end(), mrng.engine());
            for (std::size_t start = 0; start + 1 < nb; start += config.batch) {
                const std::size_t stop = std::min(nb, start + config.batch);
                Matrix xb(stop - start, sd + ad), yb(stop - start, od), db(stop - start, 1);
                for (std::size_t i = start; i < stop; ++i) {
                    xb.row(i - start) = Xb.row(perm[i]);
                    yb.row(i - start) = Yb.row(perm[i]);
                    db.row(i - start) = Db.row(perm[i]);
                }
                Matrix dOut;
                net.zero_grad();
                member_loss(net, xb, yb, db, &dOut);
                net.backward(dOut);
                opt.step(net);
            }
        }
        ens.validation_losses.push_back(member_loss(net, Xva, Yva, Dva, nullptr));
        ens.members.push_back(std::move(net));
    }

    // elite selection: stable sort on validation loss keeps lowest index on ties
    std::vector<int> idx(config.n_members);
    std::iota(idx.begin(), idx.end(), 0);
    std::stable_sort(idx.begin(), idx.end(), [&](int a, int b) {
        return ens.validation_losses[a] < ens.validation_losses[b];
    });
    ens.elites.assign(idx.begin(), idx.begin() + config.n_elites);
    ens.trained = true;
    return ens;
}

} // namespace sdmlab
