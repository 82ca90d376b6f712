#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <fstream>
#include <numeric>
#include <string>
#include <vector>

#include <zlib.h>
#include <json.hpp>

#include "sdmlab/errors.hpp"
#include "sdmlab/mdp.hpp"
#include "sdmlab/rng.hpp"

namespace sdmlab {

enum class DatasetKind { tabular, continuous };

/// One (s, a, r, s', done) tuple. Tabular data stores the integer indices in
/// size-1 vectors so both tiers share one container.
struct Transition {
    std::vector<double> s;
    std::vector<double> a;
    double r = 0.0;
    std::vector<double> s_next;
    bool done = false;

    int s_idx() const { return static_cast<int>(s[0]); }
    int a_idx() const { return static_cast<int>(a[0]); }
    int s_next_idx() const { return static_cast<int>(s_next[0]); }

    bool operator==(const Transition&) const = default;
};

struct DatasetMeta {
    DatasetKind kind = DatasetKind::tabular;
    int state_dim = 1;
    int action_dim = 1;
    std::uint64_t seed = 0;
    std::string behavior;

    bool operator==(const DatasetMeta&) const = default;
};

struct Dataset {
    DatasetMeta meta;
    std::vector<Transition> transitions;

    bool operator==(const Dataset&) const = default;
};

/// Single continuous rollout of `policy` on `mdp` from mu0; deterministic in seed.
inline Dataset generate_dataset(const TabularMdp& mdp, const TabularPolicy& policy,
                                std::size_t n_steps, std::uint64_t seed) {
    if (n_steps == 0) throw Error("generate_dataset: n_steps must be >= 1");
    check_ergodic(chain_matrix(mdp, policy));
    RngStream rng(seed, "tabular-rollout");

    auto draw = [&](const double* probs, int n) {
        double u = rng.uniform();
        double acc = 0.0;
        for (int i = 0; i < n; ++i) {
            acc += probs[i];
            if (u <= acc) return i;
        }
        return n - 1;
    };

    Dataset ds;
    ds.meta.kind = DatasetKind::tabular;
    ds.meta.seed = seed;
    ds.meta.behavior = "single rollout from mu0";
    ds.transitions.reserve(n_steps);

    int s = draw(mdp.initial_dist.data(), mdp.n_states);
    for (std::size_t t = 0; t < n_steps; ++t) {
        const int a = draw(policy.probs.data() + static_cast<std::size_t>(s) * mdp.n_actions,
                           mdp.n_actions);
        const int s2 = draw(mdp.transition.data() +
                                (static_cast<std::size_t>(s) * mdp.n_actions + a) * mdp.n_states,
                            mdp.n_states);
        ds.transitions.push_back(Transition{{double(s)}, {double(a)}, mdp.r(s, a), {double(s2)}, false});
        s = s2;
    }
    return ds;
}

/// Normalized visit frequencies of a tabular dataset.
inline StateActionDist empirical_distribution(const Dataset& ds, int n_states, int n_actions) {
    if (ds.meta.kind != DatasetKind::tabular)
        throw KindMismatch("empirical_distribution: dataset is not tabular");
    StateActionDist d{n_states, n_actions,
                      std::vector<double>(static_cast<std::size_t>(n_states) * n_actions, 0.0)};
    for (const auto& t : ds.transitions)
        d.probs[static_cast<std::size_t>(t.s_idx()) * n_actions + t.a_idx()] += 1.0;
    const double total = static_cast<double>(ds.transitions.size());
    for (auto& v : d.probs) v /= total;
    return d;
}

// ---------------------------------------------------------------------------
// JSONL persistence: one header line {"meta": ...}, then one transition per
// line {"s":..., "a":..., "r":..., "s2":..., "d":0|1}. ".gz" suffix switches
// to gzip streams. Reading is line-by-line, memory bounded.
// ---------------------------------------------------------------------------

namespace detail {

class LineSink {
public:
    explicit LineSink(const std::string& path) : gz_(path.size() > 3 && path.ends_with(".gz")) {
        if (gz_) {
            gzf_ = gzopen(path.c_str(), "wb");
            if (!gzf_) throw IoError("cannot open " + path);
        } else {
            out_.open(path);
            if (!out_) throw IoError("cannot open " + path);
        }
    }
    ~LineSink() { close(); }
    void write(const std::string& line) {
        if (gz_) {
            if (gzwrite(gzf_, line.data(), static_cast<unsigned>(line.size())) <= 0 ||
                gzwrite(gzf_, "\n", 1) <= 0)
                throw IoError("gzip write failed");
        } else {
            out_ << line << '\n';
        }
    }
    void close() {
        if (gz_ && gzf_) {
            gzclose(gzf_);
            gzf_ = nullptr;
        } else if (out_.is_open()) {
            out_.close();
        }
    }

private:
    bool gz_;
    gzFile gzf_ = nullptr;
    std::ofstream out_;
};

class LineSource {
public:
    explicit LineSource(const std::string& path) : gz_(path.size() > 3 && path.ends_with(".gz")) {
        if (gz_) {
            gzf_ = gzopen(path.c_str(), "rb");
            if (!gzf_) throw IoError("cannot open " + path);
        } else {
            in_.open(path);
            if (!in_) throw IoError("cannot open " + path);
        }
    }
    ~LineSource() {
        if (gz_ && gzf_) gzclose(gzf_);
    }
    bool next(std::string& line) {
        if (!gz_) return static_cast<bool>(std::getline(in_, line));
        line.clear();
        char buf[4096];
        while (true) {
            if (!gzgets(gzf_, buf, sizeof(buf))) return !line.empty();
            line += buf;
            if (!line.empty() && line.back() == '\n') {
                line.pop_back();
                return true;
            }
        }
    }

private:
    bool gz_;
    gzFile gzf_ = nullptr;
    std::ifstream in_;
};

inline nlohmann::json vec_to_json(const std::vector<double>& v, DatasetKind kind) {
    if (kind == DatasetKind::tabular) return static_cast<int>(v[0]);
    return nlohmann::json(v);
}

inline std::vector<double> vec_from_json(const nlohmann::json& j, DatasetKind kind,
                                         std::size_t line_no) {
    std::vector<double> out;
    if (kind == DatasetKind::tabular) {
        if (!j.is_number_integer())
            throw ParseError("line " + std::to_string(line_no) + ": expected integer index");
        out.push_back(j.get<double>());
    } else {
        if (!j.is_array()) throw ParseError("line " + std::to_string(line_no) + ": expected array");
        for (const auto& e : j) out.push_back(e.get<double>());
    }
    for (double v : out)
        if (!std::isfinite(v))
            throw ParseError("line " + std::to_string(line_no) + ": non-finite value");
    return out;
}

} // namespace detail

inline void write_dataset(const Dataset& ds, const std::string& path) {
    detail::LineSink sink(path);
    nlohmann::json meta{
        {"kind", ds.meta.kind == DatasetKind::tabular ? "tabular" : "continuous"},
        {"state_dim", ds.meta.state_dim},
        {"action_dim", ds.meta.action_dim},
        {"seed", ds.meta.seed},
        {"behavior", ds.meta.behavior}};
    sink.write(nlohmann::json{{"meta", meta}}.dump());
    for (const auto& t : ds.transitions) {
        nlohmann::json j{{"s", detail::vec_to_json(t.s, ds.meta.kind)},
                         {"a", detail::vec_to_json(t.a, ds.meta.kind)},
                         {"r", t.r},
                         {"s2", detail::vec_to_json(t.s_next, ds.meta.kind)},
                         {"d", t.done ? 1 : 0}};
        sink.write(j.dump());
    }
    sink.close();
}

inline Dataset read_dataset(const std::string& path) {
    detail::LineSource src(path);
    std::string line;
    if (!src.next(line)) throw ParseError("line 1: missing meta header");
    Dataset ds;
    try {
        const auto header = nlohmann::json::parse(line);
        const auto& meta = header.at("meta");
        ds.meta.kind = meta.at("kind") == "tabular" ? DatasetKind::tabular : DatasetKind::continuous;
        ds.meta.state_dim = meta.at("state_dim");
        ds.meta.action_dim = meta.at("action_dim");
        ds.meta.seed = meta.at("seed");
        ds.meta.behavior = meta.at("behavior");
    } catch (const nlohmann::json::exception& e) {
        throw ParseError(std::string("line 1: ") + e.what());
    }
    std::size_t line_no = 1;
    while (src.next(line)) {
        ++line_no;
        if (line.empty()) continue;
        try {
            const auto j = nlohmann::json::parse(line);
            Transition t;
            t.s = detail::vec_from_json(j.at("s"), ds.meta.kind, line_no);
            t.a = detail::vec_from_json(j.at("a"), ds.meta.kind, line_no);
            t.r = j.at("r").get<double>();
            t.s_next = detail::vec_from_json(j.at("s2"), ds.meta.kind, line_no);
            t.done = j.at("d").get<int>() != 0;
            if (!std::isfinite(t.r))
                throw ParseError("line " + std::to_string(line_no) + ": non-finite reward");
            ds.transitions.push_back(std::move(t));
        } catch (const nlohmann::json::exception& e) {
            throw ParseError("line " + std::to_string(line_no) + ": " + e.what());
        }
    }
    return ds;
}

// ---------------------------------------------------------------------------
// Circle toy dataset: theta ~ Unif(0, 2pi), rho = radius + N(0, sigma^2),
// (x, y) = (rho cos theta, rho sin theta); x is the state, y the action.
// ---------------------------------------------------------------------------

struct CircleDataset {
    std::vector<std::pair<double, double>> train;
    std::vector<std::pair<double, double>> test;
    double radius = 4.0;
    double sigma = 0.05;
};

///// Seeded shuffle of the full draw, then prefix-take: first `split` points are
/// the train set, the next `split` the test set.
inline CircleDataset make_circle_dataset(std::size_t n_total, double radius, double sigma,
                                         std::size_t split, std::uint64_t seed) {
    if (n_total < 2 * split) throw InvalidSplit("make_circle_dataset: n_total < 2 * split");
    RngStream rng(seed, "circle");
    std::vector<std::pair<double, double>> pts;
    pts.reserve(n_total);
    constexpr double two_pi = 6.283185307179586476925286766559;
    for (std::size_t i = 0; i < n_total; ++i) {
        const double theta = rng.uniform(0.0, two_pi);
        const double rho = radius + rng.normal(0.0, sigma);
        pts.emplace_back(rho * std::cos(theta), rho * std::sin(theta));
    }
    std::shuffle(pts.begin(), pts.end(), rng.fork("split").engine());
    CircleDataset out;
    out.radius = radius;
    out.sigma = sigma;
    out.train.assign(pts.begin(), pts.begin() + split);
    out.test.assign(pts.begin() + split, pts.begin() + 2 * split);
    return out;
}

} // namespace sdmlab
