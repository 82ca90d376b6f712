#include <catch2/catch_amalgamated.hpp>

#include <cmath>

#include "sdmlab/nn.hpp"

using namespace sdmlab;

namespace {

constexpr double kGradTol = 1e-4;

Matrix random_matrix(int r, int c, RngStream& rng, double scale = 1.0) {
    Matrix m(r, c);
    for (int i = 0; i < r; ++i)
        for (int j = 0; j < c; ++j) m(i, j) = rng.uniform(-scale, scale);
    return m;
}

// scalar objective used for network gradient checks: sum of outputs weighted
// by a fixed random matrix so every output entry matters
double net_objective(Mlp& net, const Matrix& x, const Matrix& w) {
    return net.forward(x).cwiseProduct(w).sum();
}

} // namespace

TEST_CASE("mlp backward matches finite differences on parameters and input") {
    RngStream rng(1, "nn-grad");
    Mlp net({3, 8, 5, 2}, rng, 0.01, OutputActivation::linear);
    Matrix x = random_matrix(4, 3, rng);
    Matrix w = random_matrix(4, 2, rng);

    net.zero_grad();
    net.forward(x);
    Matrix dx = net.backward(w);

    const double h = 1e-6;
    // input gradient
    for (int i = 0; i < x.rows(); ++i)
        for (int j = 0; j < x.cols(); ++j) {
            Matrix xp = x, xm = x;
            xp(i, j) += h;
            xm(i, j) -= h;
            const double fd = (net_objective(net, xp, w) - net_objective(net, xm, w)) / (2 * h);
            REQUIRE_THAT(dx(i, j), Catch::Matchers::WithinAbs(fd, kGradTol));
        }
    // parameter gradients
    for (std::size_t l = 0; l < net.n_layers(); ++l) {
        Matrix& W = net.weight(l);
        for (int i = 0; i < W.rows(); ++i)
            for (int j = 0; j < W.cols(); ++j) {
                const double save = W(i, j);
                W(i, j) = save + h;
                const double up = net_objective(net, x, w);
                W(i, j) = save - h;
                const double dn = net_objective(net, x, w);
                W(i, j) = save;
                REQUIRE_THAT(net.weight_grad(l)(i, j),
                             Catch::Matchers::WithinAbs((up - dn) / (2 * h), kGradTol));
            }
        Vector& b = net.bias(l);
        for (int j = 0; j < b.size(); ++j) {
            const double save = b(j);
            b(j) = save + h;
            const double up = net_objective(net, x, w);
            b(j) = save - h;
            const double dn = net_objective(net, x, w);
            b(j) = save;
            REQUIRE_THAT(net.bias_grad(l)(j),
                         Catch::Matchers::WithinAbs((up - dn) / (2 * h), kGradTol));
        }
    }
}

TEST_CASE("tanh output head backpropagates correctly") {
    RngStream rng(2, "nn-tanh");
    Mlp net({2, 6, 3}, rng, 0.01, OutputActivation::tanh_squash);
    Matrix x = random_matrix(5, 2, rng);
    Matrix w = random_matrix(5, 3, rng);
    net.zero_grad();
    Matrix y = net.forward(x);
    REQUIRE((y.array().abs() <= 1.0).all());
    Matrix dx = net.backward(w);
    const double h = 1e-6;
    for (int i = 0; i < 2; ++i) {
        Matrix xp = x, xm = x;
        xp(0, i) += h;
        xm(0, i) -= h;
        const double fd = (net_objective(net, xp, w) - net_objective(net, xm, w)) / (2 * h);
        REQUIRE_THAT(dx(0, i), Catch::Matchers::WithinAbs(fd, kGradTol));
    }
}

TEST_CASE("forward validates input width") {
    RngStream rng(3, "nn-shape");
    Mlp net({3, 4, 2}, rng);
    REQUIRE_THROWS_AS(net.forward(Matrix::Zero(2, 4)), ShapeMismatch);
    net.forward(Matrix::Zero(2, 3));
    REQUIRE_THROWS_AS(net.backward(Matrix::Zero(2, 3)), ShapeMismatch);
}

TEST_CASE("adam matches a hand-stepped scalar reference") {
    RngStream rng(4, "nn-adam");
    // net computing y = w*x with a single 1x1 layer; loss 0.5*(w*x)^2, x = 1
    Mlp net({1, 1}, rng);
    net.bias(0)(0) = 0.0;
    const double w0 = net.weight(0)(0, 0);
    AdamConfig cfg{0.1, 0.4, 0.999, 1e-8};
    Adam opt(net, cfg);

    double w_ref = w0, m_w = 0.0, v_w = 0.0;
    double m_b = 0.0, v_b = 0.0, b_ref = 0.0;
    for (int t = 1; t <= 5; ++t) {
        net.zero_grad();
        Matrix x = Matrix::Ones(1, 1);
        Matrix y = net.forward(x);
        net.backward(y);  // d(0.5 y^2)/dy = y
        opt.step(net);

        const double gy = w_ref * 1.0 + b_ref;
        auto upd = [&](double& p, double& m, double& v, double g) {
            m = cfg.beta1 * m + (1 - cfg.beta1) * g;
            v = cfg.beta2 * v + (1 - cfg.beta2) * g * g;
            const double mhat = m / (1 - std::pow(cfg.beta1, t));
            const double vhat = v / (1 - std::pow(cfg.beta2, t));
            p -= cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
        };
        upd(w_ref, m_w, v_w, gy * 1.0);
        upd(b_ref, m_b, v_b, gy);
        REQUIRE_THAT(net.weight(0)(0, 0), Catch::Matchers::WithinAbs(w_ref, 1e-12));
        REQUIRE_THAT(net.bias(0)(0), Catch::Matchers::WithinAbs(b_ref, 1e-12));
    }
}

TEST_CASE("adam rejects non-finite gradients") {
    RngStream rng(5, "nn-adam-nan");
    Mlp net({1, 1}, rng);
    Adam opt(net, AdamConfig{});
    net.zero_grad();
    Matrix x(1, 1);
    x << 1e308;
    net.forward(x);
    Matrix d(1, 1);
    d << 1e308;
    net.backward(d);
    REQUIRE_THROWS_AS(opt.step(net), NonFiniteLoss);
}

TEST_CASE("soft update interpolates parameters") {
    RngStream rng(6, "nn-soft");
    Mlp a({2, 3, 1}, rng), b({2, 3, 1}, rng);
    const double before = a.weight(0)(0, 0);
    const double src = b.weight(0)(0, 0);
    soft_update(a, b, 0.25);
    REQUIRE_THAT(a.weight(0)(0, 0), Catch::Matchers::WithinAbs(0.75 * before + 0.25 * src, 1e-15));
    Mlp c({2, 4, 1}, rng);
    REQUIRE_THROWS_AS(soft_update(a, c, 0.1), ShapeMismatch);
}

TEST_CASE("serialization round trip preserves behavior") {
    RngStream rng(7, "nn-ser");
    Mlp net({3, 5, 2}, rng, 0.01, OutputActivation::tanh_squash);
    Matrix x = random_matrix(4, 3, rng);
    Matrix y = net.forward(x);
    Mlp copy = Mlp::from_json(net.to_json());
    Matrix y2 = copy.forward(x);
    REQUIRE((y - y2).cwiseAbs().maxCoeff() == 0.0);
}

TEST_CASE("gaussian nll value and gradients") {
    RngStream rng(8, "nn-nll");
    Matrix mean = random_matrix(3, 2, rng), log_std = random_matrix(3, 2, rng, 0.5),
           target = random_matrix(3, 2, rng);
    Matrix dm, dls;
    const double loss = gaussian_nll(mean, log_std, target, dm, dls);
    // hand value at one entry
    double ref = 0.0;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) {
            const double diff = mean(i, j) - target(i, j);
            ref += log_std(i, j) + 0.5 * diff * diff * std::exp(-2 * log_std(i, j));
        }
    REQUIRE_THAT(loss, Catch::Matchers::WithinAbs(ref / 6.0, 1e-12));

    const double h = 1e-6;
    for (int i = 0; i < 3; ++i)
        for (int j = 0; j < 2; ++j) {
            Matrix mp = mean, dm2, dls2;
            mp(i, j) += h;
            const double up = gaussian_nll(mp, log_std, target, dm2, dls2);
            mp(i, j) -= 2 * h;
            const double dn = gaussian_nll(mp, log_std, target, dm2, dls2);
            REQUIRE_THAT(dm(i, j), Catch::Matchers::WithinAbs((up - dn) / (2 * h), kGradTol));
            Matrix lp = log_std;
            lp(i, j) += h;
            const double up2 = gaussian_nll(mean, lp, target, dm2, dls2);
            lp(i, j) -= 2 * h;
            const double dn2 = gaussian_nll(mean, lp, target, dm2, dls2);
            REQUIRE_THAT(dls(i, j), Catch::Matchers::WithinAbs((up2 - dn2) / (2 * h), kGradTol));
        }
}

TEST_CASE("weighted bce gradient and shape checks") {
    RngStream rng(9, "nn-bce");
    Matrix z = random_matrix(4, 1, rng, 3.0);
    Matrix y(4, 1);
    y << 1, 0, 1, 0;
    Matrix w(4, 1);
    w << 1.0, 2.0, 0.5, 1.5;
    Matrix dz;
    const double loss = weighted_bce(z, y, w, dz);
    REQUIRE(loss > 0.0);
    const double h = 1e-6;
    for (int i = 0; i < 4; ++i) {
        Matrix zp = z, d2;
        zp(i, 0) += h;
        const double up = weighted_bce(zp, y, w, d2);
        zp(i, 0) -= 2 * h;
        const double dn = weighted_bce(zp, y, w, d2);
        REQUIRE_THAT(dz(i, 0), Catch::Matchers::WithinAbs((up - dn) / (2 * h), kGradTol));
    }
    Matrix bad = Matrix::Zero(3, 1);
    REQUIRE_THROWS_AS(weighted_bce(z, bad, w, dz), ShapeMismatch);
}

TEST_CASE("huber value and gradient on both branches") {
    Matrix p(1, 2), t(1, 2), dp;
    p << 0.3, 5.0;
    t << 0.0, 0.0;
    const double delta = 1.0;
    const double loss = huber(p, t, delta, dp);
    REQUIRE_THAT(loss, Catch::Matchers::WithinAbs((0.5 * 0.09 + (5.0 - 0.5)) / 2.0, 1e-12));
    REQUIRE_THAT(dp(0, 0), Catch::Matchers::WithinAbs(0.3 / 2.0, 1e-12));
    REQUIRE_THAT(dp(0, 1), Catch::Matchers::WithinAbs(0.5, 1e-12));
    REQUIRE_THROWS_AS(huber(p, t, 0.0, dp), Error);
}

TEST_CASE("gan losses line up with their definitions") {
    RngStream rng(10, "nn-gan");
    Matrix real = random_matrix(5, 1, rng, 2.0);
    Matrix fake = random_matrix(5, 1, rng, 2.0);
    Matrix labels = Matrix::Constant(5, 1, 0.9);
    Matrix dr, df;
    const double dloss = discriminator_bce(real, labels, fake, dr, df);
    REQUIRE(dloss > 0.0);

    Matrix dg;
    const double gns = generator_nonsaturating(fake, dg);
    const double h = 1e-6;
    for (int i = 0; i < 5; ++i) {
        Matrix fp = fake, d2;
        fp(i, 0) += h;
        const double up = generator_nonsaturating(fp, d2);
        fp(i, 0) -= 2 * h;
        const double dn = generator_nonsaturating(fp, d2);
        REQUIRE_THAT(dg(i, 0), Catch::Matchers::WithinAbs((up - dn) / (2 * h), kGradTol));
    }
    (void)gns;

    Matrix ds;
    const double gs = generator_saturating(fake, ds);
    for (int i = 0; i < 5; ++i) {
        Matrix fp = fake, d2;
        fp(i, 0) += h;
        const double up = generator_saturating(fp, d2);
        fp(i, 0) -= 2 * h;
        const double dn = generator_saturating(fp, d2);
        REQUIRE_THAT(ds(i, 0), Catch::Matchers::WithinAbs((up - dn) / (2 * h), kGradTol));
    }
    // saturating and non-saturating agree on value direction: pushing the
    // logit up lowers both losses
    REQUIRE(dg(0, 0) < 0.0);
    REQUIRE(ds(0, 0) < 0.0);
    (void)gs;
}
