#pragma once

#include <Eigen/Dense>
#include <cmath>
#include <string>
#include <vector>

#include <json.hpp>

#include "sdmlab/errors.hpp"
#include "sdmlab/rng.hpp"

namespace sdmlab {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

// ---------------------------------------------------------------------------
// Dense MLP with LeakyReLU hidden activations. Batch-major: one row per
// sample. forward caches activations; backward consumes the output gradient,
// accumulates parameter gradients and returns the input gradient.
// ---------------------------------------------------------------------------

enum class OutputActivation { linear, tanh_squash };

class Mlp {
public:
    Mlp() = default;

    Mlp(std::vector<int> sizes, RngStream& rng, double leaky_slope = 0.01,
        OutputActivation out_act = OutputActivation::linear)
        : sizes_(std::move(sizes)), slope_(leaky_slope), out_act_(out_act) {
        if (sizes_.size() < 2) throw ShapeMismatch("Mlp: need at least input and output sizes");
        const std::size_t L = sizes_.size() - 1;
        W_.resize(L); b_.resize(L); gW_.resize(L); gb_.resize(L);
        for (std::size_t l = 0; l < L; ++l) {
            const int fan_in = sizes_[l], fan_out = sizes_[l + 1];
            const double bound = std::sqrt(6.0 / (fan_in + fan_out));
            W_[l].resize(fan_in, fan_out);
            for (int i = 0; i < fan_in; ++i)
                for (int j = 0; j < fan_out; ++j) W_[l](i, j) = rng.uniform(-bound, bound);
            b_[l] = Vector::Zero(fan_out);
            gW_[l] = Matrix::Zero(fan_in, fan_out);
            gb_[l] = Vector::Zero(fan_out);
        }
    }

    int input_dim() const { return sizes_.front(); }
    int output_dim() const { return sizes_.back(); }
    const std::vector<int>& sizes() const { return sizes_; }

    Matrix forward(const Matrix& x) {
        if (x.cols() != sizes_.front())
            throw ShapeMismatch("Mlp::forward: input has " + std::to_string(x.cols()) +
                                " columns, expected " + std::to_string(sizes_.front()));
        const std::size_t L = W_.size();
        acts_.assign(1, x);
        pre_.clear();
        Matrix h = x;
        for (std::size_t l = 0; l < L; ++l) {
            Matrix z = (h * W_[l]).rowwise() + b_[l].transpose();
            pre_.push_back(z);
            if (l + 1 < L) {
                h = z.unaryExpr([s = slope_](double v) { return v > 0.0 ? v : s * v; });
            } else if (out_act_ == OutputActivation::tanh_squash) {
                h = z.array().tanh().matrix();
            } else {
                h = z;
            }
            acts_.push_back(h);
        }
        return h;
    }

    /// dOut is the gradient at the network output; returns the gradient at the
    /// input. Parameter gradients accumulate until zero_grad.
    Matrix backward(const Matrix& dOut) {
        if (acts_.empty()) throw Error("Mlp::backward before forward");
        if (dOut.rows() != acts_.back().rows() || dOut.cols() != sizes_.back())
            throw ShapeMismatch("Mlp::backward: gradient shape mismatch");
        const std::size_t L = W_.size();
        Matrix d = dOut;
        for (std::size_t li = L; li-- > 0;) {
            if (li + 1 < L) {
                d = d.cwiseProduct(pre_[li].unaryExpr(
                    [s = slope_](double v) { return v > 0.0 ? 1.0 : s; }));
            } else if (out_act_ == OutputActivation::tanh_squash) {
                d = d.cwiseProduct(
                    (1.0 - acts_[li + 1].array().square()).matrix());
            }
            gW_[li] += acts_[li].transpose() * d;
            gb_[li] += d.colwise().sum().transpose();
            d = d * W_[li].transpose();
        }
        return d;
    }

    void zero_grad() {
        for (auto& g : gW_) g.setZero();
        for (auto& g : gb_) g.setZero();
    }

    std::size_t n_layers() const { return W_.size(); }
    Matrix& weight(std::size_t l) { return W_[l]; }
    Vector& bias(std::size_t l) { return b_[l]; }
    const Matrix& weight(std::size_t l) const { return W_[l]; }
    const Vector& bias(std::size_t l) const { return b_[l]; }
    const Matrix& weight_grad(std::size_t l) const { return gW_[l]; }
    const Vector& bias_grad(std::size_t l) const { return gb_[l]; }

    // flat views for the optimizer
    std::vector<double*> parameter_blocks() {
        std::vector<double*> out;
        for (std::size_t l = 0; l < W_.size(); ++l) {
            out.push_back(W_[l].data());
            out.push_back(b_[l].data());
        }
        return out;
    }
    std::vector<const double*> gradient_blocks() const {
        std::vector<const double*> out;
        for (std::size_t l = 0; l < W_.size(); ++l) {
            out.push_back(gW_[l].data());
            out.push_back(gb_[l].data());
        }
        return out;
    }
    std::vector<std::size_t> block_sizes() const {
        std::vector<std::size_t> out;
        for (std::size_t l = 0; l < W_.size(); ++l) {
            out.push_back(static_cast<std::size_t>(W_[l].size()));
            out.push_back(static_cast<std::size_t>(b_[l].size()));
        }
        return out;
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["sizes"] = sizes_;
        j["leaky_slope"] = slope_;
        j["output"] = out_act_ == OutputActivation::tanh_squash ? "tanh" : "linear";
        for (std::size_t l = 0; l < W_.size(); ++l) {
            j["weights"].push_back(std::vector<double>(W_[l].data(), W_[l].data() + W_[l].size()));
            j["biases"].push_back(std::vector<double>(b_[l].data(), b_[l].data() + b_[l].size()));
        }
        return j;
    }

    static Mlp from_json(const nlohmann::json& j) {
        Mlp m;
        m.sizes_ = j.at("sizes").get<std::vector<int>>();
        m.slope_ = j.at("leaky_slope").get<double>();
        m.out_act_ = j.at("output") == "tanh" ? OutputActivation::tanh_squash
                                              : OutputActivation::linear;
        const std::size_t L = m.sizes_.size() - 1;
        m.W_.resize(L); m.b_.resize(L); m.gW_.resize(L); m.gb_.resize(L);
        for (std::size_t l = 0; l < L; ++l) {
            auto w = j.at("weights").at(l).get<std::vector<double>>();
            auto b = j.at("biases").at(l).get<std::vector<double>>();
            const int fi = m.sizes_[l], fo = m.sizes_[l + 1];
            if (w.size() != static_cast<std::size_t>(fi) * fo ||
                b.size() != static_cast<std::size_t>(fo))
                throw ShapeMismatch("Mlp::from_json: layer size mismatch");
            m.W_[l] = Eigen::Map<const Matrix>(w.data(), fi, fo);
            m.b_[l] = Eigen::Map<const Vector>(b.data(), fo);
            m.gW_[l] = Matrix::Zero(fi, fo);
            m.gb_[l] = Vector::Zero(fo);
        }
        return m;
    }

private:
    std::vector<int> sizes_;
    double slope_ = 0.01;
    OutputActivation out_act_ = OutputActivation::linear;
    std::vector<Matrix> W_, gW_;
    std::vector<Vector> b_, gb_;
    std::vector<Matrix> acts_;  // acts_[0] = input, acts_[l+1] = layer l output
    std::vector<Matrix> pre_;   // pre-activations
};

/// Polyak averaging: target <- (1 - beta) * target + beta * source.
inline void soft_update(Mlp& target, const Mlp& source, double beta) {
    if (target.sizes() != source.sizes())
        throw ShapeMismatch("soft_update: architecture mismatch");
    for (std::size_t l = 0; l < target.n_layers(); ++l) {
        target.weight(l) = (1.0 - beta) * target.weight(l) + beta * source.weight(l);
        target.bias(l) = (1.0 - beta) * target.bias(l) + beta * source.bias(l);
    }
}

// ---------------------------------------------------------------------------
// Adam over the parameter blocks of one network.
// ---------------------------------------------------------------------------

struct AdamConfig {
    double lr = 1e-3;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
};

class Adam {
public:
    Adam() = default;
    Adam(Mlp& net, AdamConfig cfg) : cfg_(cfg) {
        const auto sizes = net.block_sizes();
        for (auto s : sizes) {
            m_.emplace_back(s, 0.0);
            v_.emplace_back(s, 0.0);
        }
    }

    void step(Mlp& net) {
        auto params = net.parameter_blocks();
        auto grads = net.gradient_blocks();
        auto sizes = net.block_sizes();
        if (params.size() != m_.size()) throw ShapeMismatch("Adam::step: wrong network");
        ++t_;
        const double bc1 = 1.0 - std::pow(cfg_.beta1, t_);
        const double bc2 = 1.0 - std::pow(cfg_.beta2, t_);
        for (std::size_t k = 0; k < params.size(); ++k) {
            double* p = params[k];
            const double* g = grads[k];
            for (std::size_t i = 0; i < sizes[k]; ++i) {
                if (!std::isfinite(g[i])) throw NonFiniteLoss("Adam::step: non-finite gradient");
                m_[k][i] = cfg_.beta1 * m_[k][i] + (1.0 - cfg_.beta1) * g[i];
                v_[k][i] = cfg_.beta2 * v_[k][i] + (1.0 - cfg_.beta2) * g[i] * g[i];
                p[i] -= cfg_.lr * (m_[k][i] / bc1) / (std::sqrt(v_[k][i] / bc2) + cfg_.eps);
            }
        }
    }

    long t() const { return t_; }

private:
    AdamConfig cfg_;
    long t_ = 0;
    std::vector<std::vector<double>> m_, v_;
};

// ---------------------------------------------------------------------------
// Losses. Each returns the mean loss and writes the gradient of that mean
// with respect to its inputs. Gradients match the value analytically; the
// test suite holds them against finite differences.
// ---------------------------------------------------------------------------

namespace detail {

inline void require_same_shape(const Matrix& a, const Matrix& b, const std::string& who) {
    if (a.rows() != b.rows() || a.cols() != b.cols())
        throw ShapeMismatch(who + ": shape mismatch");
}

inline void require_finite(double v, const std::string& who) {
    if (!std::isfinite(v)) throw NonFiniteLoss(who + ": non-finite loss");
}

inline double sigmoid(double z) {
    return z >= 0.0 ? 1.0 / (1.0 + std::exp(-z)) : std::exp(z) / (1.0 + std::exp(z));
}

// log(1 + e^z), overflow safe
inline double softplus(double z) { return z > 0.0 ? z + std::log1p(std::exp(-z)) : std::log1p(std::exp(z)); }

} // namespace detail

/// Diagonal Gaussian negative log-likelihood (constant term dropped), mean
/// over batch and dimensions.
inline double gaussian_nll(const Matrix& mean, const Matrix& log_std, const Matrix& target,
                           Matrix& d_mean, Matrix& d_log_std) {
    detail::require_same_shape(mean, target, "gaussian_nll");
    detail::require_same_shape(mean, log_std, "gaussian_nll");
    const double n = static_cast<double>(mean.size());
    double loss = 0.0;
    d_mean.resizeLike(mean);
    d_log_std.resizeLike(mean);
    for (Eigen::Index i = 0; i < mean.rows(); ++i)
        for (Eigen::Index j = 0; j < mean.cols(); ++j) {
            const double ls = log_std(i, j);
            const double inv_var = std::exp(-2.0 * ls);
            const double diff = mean(i, j) - target(i, j);
            loss += ls + 0.5 * diff * diff * inv_var;
            d_mean(i, j) = diff * inv_var / n;
            d_log_std(i, j) = (1.0 - diff * diff * inv_var) / n;
        }
    loss /= n;
    detail::require_finite(loss, "gaussian_nll");
    return loss;
}

/// Binary cross-entropy on logits with per-sample weights, mean over batch.
inline double weighted_bce(const Matrix& logits, const Matrix& targets, const Matrix& weights,
                           Matrix& d_logits) {
    detail::require_same_shape(logits, targets, "weighted_bce");
    detail::require_same_shape(logits, weights, "weighted_bce");
    const double n = static_cast<double>(logits.size());
    double loss = 0.0;
    d_logits.resizeLike(logits);
    for (Eigen::Index i = 0; i < logits.rows(); ++i)
        for (Eigen::Index j = 0; j < logits.cols(); ++j) {
            const double z = logits(i, j), y = targets(i, j), w = weights(i, j);
            // w * (softplus(z) - y*z) = w * BCE(sigmoid(z), y)
            loss += w * (detail::softplus(z) - y * z);
            d_logits(i, j) = w * (detail::sigmoid(z) - y) / n;
        }
    loss /= n;
    detail::require_finite(loss, "weighted_bce");
    return loss;
}

/// Huber loss, mean over entries.
inline double huber(const Matrix& pred, const Matrix& target, double delta, Matrix& d_pred) {
    detail::require_same_shape(pred, target, "huber");
    if (delta <= 0.0) throw Error("huber: delta must be > 0");
    const double n = static_cast<double>(pred.size());
    double loss = 0.0;
    d_pred.resizeLike(pred);
    for (Eigen::Index i = 0; i < pred.rows(); ++i)
        for (Eigen::Index j = 0; j < pred.cols(); ++j) {
            const double diff = pred(i, j) - target(i, j);
            if (std::abs(diff) <= delta) {
                loss += 0.5 * diff * diff;
                d_pred(i, j) = diff / n;
            } else {
                loss += delta * (std::abs(diff) - 0.5 * delta);
                d_pred(i, j) = delta * (diff > 0.0 ? 1.0 : -1.0) / n;
            }
        }
    loss /= n;
    detail::require_finite(loss, "huber");
    return loss;
}

/// Discriminator loss: BCE of real logits against smoothed positive labels
/// plus BCE of fake logits against zero.
inline double discriminator_bce(const Matrix& real_logits, const Matrix& real_labels,
                                const Matrix& fake_logits, Matrix& d_real, Matrix& d_fake) {
    detail::require_same_shape(real_logits, real_labels, "discriminator_bce");
    const Matrix ones = Matrix::Ones(real_logits.rows(), real_logits.cols());
    const Matrix ones_f = Matrix::Ones(fake_logits.rows(), fake_logits.cols());
    const Matrix zeros = Matrix::Zero(fake_logits.rows(), fake_logits.cols());
    const double lr = weighted_bce(real_logits, real_labels, ones, d_real);
    const double lf = weighted_bce(fake_logits, zeros, ones_f, d_fake);
    return lr + lf;
}

/// Non-saturating generator objective: minimize -log D(fake).
inline double generator_nonsaturating(const Matrix& fake_logits, Matrix& d_logits) {
    const Matrix ones = Matrix::Ones(fake_logits.rows(), fake_logits.cols());
    return weighted_bce(fake_logits, ones, ones, d_logits);
}

/// Saturating variant: minimize log(1 - D(fake)); kept for comparison runs.
inline double generator_saturating(const Matrix& fake_logits, Matrix& d_logits) {
    const double n = static_cast<double>(fake_logits.size());
    double loss = 0.0;
    d_logits.resizeLike(fake_logits);
    for (Eigen::Index i = 0; i < fake_logits.rows(); ++i)
        for (Eigen::Index j = 0; j < fake_logits.cols(); ++j) {
            const double z = fake_logits(i, j);
            // log(1 - sigmoid(z)) = -softplus(z)
            loss += -detail::softplus(z);
            d_logits(i, j) = -detail::sigmoid(z) / n;
        }
    loss /= n;
    detail::require_finite(loss, "generator_saturating");
    return loss;
}

} // namespace sdmlab
