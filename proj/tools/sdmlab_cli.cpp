// sdmlab command-line driver: dataset generation, tabular solving and bound
// sweeps, model fitting, adversarial offline training, toy cloning, policy
// evaluation. Every run writes manifest.json, results.csv and reports.jsonl
// into --out so it can be reconstructed from the manifest alone.
//
// Exit codes: 0 success, 1 invocation/validation error, 2 numerical check
// failure (a bound or invariant violated at runtime).

#include <atomic>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <mutex>
#include <string>
#include <thread>
#include <vector>

#include <CLI11.hpp>

#include "sdmlab/avg_mdp.hpp"
#include "sdmlab/bounds.hpp"
#include "sdmlab/circle_gan.hpp"
#include "sdmlab/trainer.hpp"
#include "sdmlab/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace sdmlab;

namespace {

// thrown when a run completes but a checked numerical property fails; mapped
// to exit code 2 so CI can tell it apart from bad invocations
struct NumericalCheckFailure : std::runtime_error {
    using std::runtime_error::runtime_error;
};

std::uint64_t fnv1a64(const std::string& s) {
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : s) {
        h ^= c;
        h *= 1099511628211ull;
    }
    return h;
}

// ---------------------------------------------------------------------------
// config plumbing: defaults < file < --set overrides, unknown keys rejected
// ---------------------------------------------------------------------------

void check_known_keys(const json& defaults, const json& given, const std::string& path) {
    for (auto it = given.begin(); it != given.end(); ++it) {
        const std::string key_path = path.empty() ? it.key() : path + "." + it.key();
        if (!defaults.contains(it.key()))
            throw ConfigError("unknown config key: " + key_path);
        if (defaults.at(it.key()).is_object() && it.value().is_object())
            check_known_keys(defaults.at(it.key()), it.value(), key_path);
        else if (defaults.at(it.key()).is_object() != it.value().is_object())
            throw ConfigError("config key has wrong structure: " + key_path);
    }
}

void merge_into(json& base, const json& layer) {
    for (auto it = layer.begin(); it != layer.end(); ++it) {
        if (it.value().is_object() && base.contains(it.key()) && base.at(it.key()).is_object())
            merge_into(base.at(it.key()), it.value());
        else
            base[it.key()] = it.value();
    }
}

json parse_override_value(const std::string& raw) {
    try {
        return json::parse(raw);
    } catch (const json::exception&) {
        return json(raw);  // bare strings need no quoting on the command line
    }
}

struct RunContext {
    std::string command;
    json config;          // fully resolved
    std::uint64_t seed = 0;
    fs::path out_dir;
    std::string config_file;
    std::vector<std::string> overrides;
};

RunContext resolve_config(const std::string& command, const json& defaults,
                          const std::string& config_file, std::uint64_t seed,
                          const std::string& out_dir,
                          const std::vector<std::string>& overrides) {
    RunContext ctx;
    ctx.command = command;
    ctx.config = defaults;
    ctx.seed = seed;
    ctx.out_dir = out_dir;
    ctx.config_file = config_file;
    ctx.overrides = overrides;

    if (!config_file.empty()) {
        std::ifstream in(config_file);
        if (!in) throw ConfigError("cannot open config file: " + config_file);
        json file_cfg;
        try {
            in >> file_cfg;
        } catch (const json::exception& e) {
            throw ConfigError(std::string("config file is not valid JSON: ") + e.what());
        }
        check_known_keys(defaults, file_cfg, "");
        merge_into(ctx.config, file_cfg);
    }

    for (const auto& ov : overrides) {
        const auto eq = ov.find('=');
        if (eq == std::string::npos) throw ConfigError("--set expects key=value, got: " + ov);
        const std::string key = ov.substr(0, eq);
        const json value = parse_override_value(ov.substr(eq + 1));
        // walk the dotted path against the defaults schema
        json* def_node = &ctx.config;
        const json* schema = &defaults;
        std::size_t pos = 0;
        std::string part;
        std::string walked;
        while (pos != std::string::npos) {
            const auto dot = key.find('.', pos);
            part = dot == std::string::npos ? key.substr(pos) : key.substr(pos, dot - pos);
            walked = walked.empty() ? part : walked + "." + part;
            if (!schema->contains(part)) throw ConfigError("unknown config key: " + walked);
            if (dot == std::string::npos) {
                if (schema->at(part).is_object())
                    throw ConfigError("config key is a section, not a value: " + walked);
                (*def_node)[part] = value;
                break;
            }
            schema = &schema->at(part);
            def_node = &(*def_node)[part];
            pos = dot + 1;
        }
    }
    return ctx;
}

// ---------------------------------------------------------------------------
// artifact writers
// ---------------------------------------------------------------------------

struct Artifacts {
    fs::path dir;
    std::ofstream results;  // results.csv
    std::ofstream reports;  // reports.jsonl

    explicit Artifacts(const RunContext& ctx) : dir(ctx.out_dir) {
        fs::create_directories(dir);
        json manifest;
        manifest["command"] = ctx.command;
        manifest["seed"] = ctx.seed;
        manifest["config"] = ctx.config;
        manifest["config_hash"] =
            std::to_string(fnv1a64(ctx.command + "\n" + ctx.config.dump() + "\n" +
                                   std::to_string(ctx.seed)));
        manifest["inputs"] = {{"config_file", ctx.config_file}, {"overrides", ctx.overrides}};
        manifest["versions"] = {{"sdmlab", kVersion},
                                {"compiler", __VERSION__},
                                {"eigen", std::to_string(EIGEN_WORLD_VERSION) + "." +
                                              std::to_string(EIGEN_MAJOR_VERSION) + "." +
                                              std::to_string(EIGEN_MINOR_VERSION)}};
        std::ofstream m(dir / "manifest.json");
        m << manifest.dump(2) << "\n";
        results.open(dir / "results.csv");
        reports.open(dir / "reports.jsonl");
    }

    void report(const json& j) { reports << j.dump() << "\n"; }
};

PointMassEnv env_from_config(const json& c) {
    PointMassEnv env;
    env.goal(0) = c.at("goal")[0].get<double>();
    env.goal(1) = c.at("goal")[1].get<double>();
    env.step_gain = c.at("step_gain");
    env.noise_std = c.at("noise_std");
    env.goal_radius = c.at("goal_radius");
    env.max_steps = c.at("max_steps");
    env.reward_scale = c.at("reward_scale");
    return env;
}

json default_env_config() {
    return json{{"goal", {0.5, 0.5}}, {"step_gain", 0.1},   {"noise_std", 0.01},
                {"goal_radius", 0.05}, {"max_steps", 200},  {"reward_scale", 1.0}};
}

EnsembleConfig ensemble_from_config(const json& c) {
    EnsembleConfig ec;
    ec.n_members = c.at("n_members");
    ec.n_elites = c.at("n_elites");
    ec.hidden = c.at("hidden").get<std::vector<int>>();
    ec.lr = c.at("lr");
    ec.batch = c.at("batch");
    ec.epochs = c.at("epochs");
    ec.validation_fraction = c.at("validation_fraction");
    return ec;
}

json default_ensemble_config() {
    return json{{"n_members", 5}, {"n_elites", 3},  {"hidden", {64, 64}},
                {"lr", 1e-3},     {"batch", 256},   {"epochs", 20},
                {"validation_fraction", 0.1}};
}

TrainerConfig trainer_from_config(const json& c) {
    TrainerConfig tc;
    tc.alpha = c.at("alpha");
    tc.f_real = c.at("f_real");
    tc.horizon = c.at("horizon");
    tc.gamma = c.at("gamma");
    tc.beta = c.at("beta");
    tc.c_min_weight = c.at("c_min_weight");
    tc.policy_freq = c.at("policy_freq");
    tc.n_smooth = c.at("n_smooth");
    tc.sigma_smooth = c.at("sigma_smooth");
    tc.sigma_fake = c.at("sigma_fake");
    tc.n_actions = c.at("n_actions");
    tc.batch = c.at("batch");
    tc.lr_critic = c.at("lr_critic");
    tc.lr_actor_disc = c.at("lr_actor_disc");
    tc.adam_beta1_actor_disc = c.at("adam_beta1_actor_disc");
    tc.warm_epochs = c.at("warm_epochs");
    tc.epochs = c.at("epochs");
    tc.iterations_per_epoch = c.at("iterations_per_epoch");
    tc.rollout_freq = c.at("rollout_freq");
    tc.rollout_batch = c.at("rollout_batch");
    tc.rollout_retain_epochs = c.at("rollout_retain_epochs");
    tc.q_cutoff = c.at("q_cutoff");
    tc.huber_threshold = c.at("huber_threshold");
    tc.reward_clamp_k = c.at("reward_clamp_k");
    tc.actor_hidden = c.at("actor_hidden").get<std::vector<int>>();
    tc.critic_hidden = c.at("critic_hidden").get<std::vector<int>>();
    tc.disc_hidden = c.at("disc_hidden").get<std::vector<int>>();
    tc.eval_episodes = c.at("eval_episodes");
    return tc;
}

json default_trainer_config() {
    TrainerConfig d;  // struct defaults are the full-scale profile
    return json{{"alpha", d.alpha},
                {"f_real", d.f_real},
                {"horizon", d.horizon},
                {"gamma", d.gamma},
                {"beta", d.beta},
                {"c_min_weight", d.c_min_weight},
                {"policy_freq", d.policy_freq},
                {"n_smooth", d.n_smooth},
                {"sigma_smooth", d.sigma_smooth},
                {"sigma_fake", d.sigma_fake},
                {"n_actions", d.n_actions},
                {"batch", d.batch},
                {"lr_critic", d.lr_critic},
                {"lr_actor_disc", d.lr_actor_disc},
                {"adam_beta1_actor_disc", d.adam_beta1_actor_disc},
                {"warm_epochs", d.warm_epochs},
                {"epochs", d.epochs},
                {"iterations_per_epoch", d.iterations_per_epoch},
                {"rollout_freq", d.rollout_freq},
                {"rollout_batch", d.rollout_batch},
                {"rollout_retain_epochs", d.rollout_retain_epochs},
                {"q_cutoff", d.q_cutoff},
                {"huber_threshold", d.huber_threshold},
                {"reward_clamp_k", d.reward_clamp_k},
                {"actor_hidden", d.actor_hidden},
                {"critic_hidden", d.critic_hidden},
                {"disc_hidden", d.disc_hidden},
                {"eval_episodes", d.eval_episodes}};
}

// ---------------------------------------------------------------------------
// subcommands
// ---------------------------------------------------------------------------

int cmd_gen_data(const RunContext& ctx) {
    Artifacts art(ctx);
    const json& c = ctx.config;
    Dataset ds;
    if (c.at("kind") == "pointmass") {
        ds = generate_pointmass_dataset(env_from_config(c.at("env")),
                                        c.at("n_transitions").get<std::size_t>(), ctx.seed);
    } else if (c.at("kind") == "tabular") {
        const json& t = c.at("tabular");
        RngStream rng(ctx.seed, "gen-data-mdp");
        auto mdp = random_mdp(t.at("n_states"), t.at("n_actions"), rng);
        auto pi_b = random_policy(t.at("n_states"), t.at("n_actions"), rng);
        ds = generate_dataset(mdp, pi_b, c.at("n_transitions").get<std::size_t>(), ctx.seed);
    } else {
        throw ConfigError("gen-data: kind must be pointmass or tabular");
    }
    const fs::path path = art.dir / c.at("path").get<std::string>();
    write_dataset(ds, path.string());

    art.results << "n_transitions,state_dim,action_dim,n_done,mean_reward\n";
    long dones = 0;
    double r_mean = 0.0;
    for (const auto& t : ds.transitions) {
        dones += t.done ? 1 : 0;
        r_mean += t.r;
    }
    r_mean /= ds.transitions.size();
    art.results << ds.transitions.size() << "," << ds.meta.state_dim << ","
                << ds.meta.action_dim << "," << dones << "," << r_mean << "\n";
    art.report({{"event", "dataset-written"},
                {"path", path.string()},
                {"n", ds.transitions.size()},
                {"mean_reward", r_mean}});
    std::cout << "wrote " << ds.transitions.size() << " transitions to " << path << "\n";
    return 0;
}

int cmd_gen_circle(const RunContext& ctx) {
    Artifacts art(ctx);
    const json& c = ctx.config;
    auto circle = make_circle_dataset(c.at("n_total").get<std::size_t>(), c.at("radius"),
                                      c.at("sigma"), c.at("split").get<std::size_t>(), ctx.seed);
    const fs::path path = art.dir / c.at("path").get<std::string>();
    std::ofstream out(path);
    out << "split,x,y\n";
    out.precision(17);
    for (auto [x, y] : circle.train) out << "train," << x << "," << y << "\n";
    for (auto [x, y] : circle.test) out << "test," << x << "," << y << "\n";

    art.results << "n_train,n_test,radius,sigma\n"
                << circle.train.size() << "," << circle.test.size() << "," << circle.radius
                << "," << circle.sigma << "\n";
    art.report({{"event", "circle-written"}, {"path", path.string()}});
    std::cout << "wrote circle data (" << circle.train.size() << " train / "
              << circle.test.size() << " test) to " << path << "\n";
    return 0;
}

int cmd_solve(const RunContext& ctx) {
    Artifacts art(ctx);
    const json& c = ctx.config;
    const json& m = c.at("mdp");
    const int S = m.at("n_states"), A = m.at("n_actions");
    std::vector<double> mu0 = m.contains("initial_dist") && !m.at("initial_dist").empty()
                                  ? m.at("initial_dist").get<std::vector<double>>()
                                  : std::vector<double>(S, 1.0 / S);
    auto mdp = build_mdp(S, A, m.at("transition").get<std::vector<double>>(),
                         m.at("reward").get<std::vector<double>>(), mu0);
    TabularPolicy pi = c.at("policy").is_string()
                           ? uniform_policy(S, A)
                           : build_policy(S, A, c.at("policy").get<std::vector<double>>());
    if (c.at("policy").is_string() && c.at("policy") != "uniform")
        throw ConfigError("solve: policy must be \"uniform\" or a probability table");

    auto d = stationary_distribution(mdp, pi);
    auto dv = average_reward_and_bias(mdp, pi, mdp.reward);
    const auto sm = d.state_marginal();

    std::cout << "state marginal:";
    for (double v : sm) std::cout << " " << v;
    std::cout << "\naverage reward: " << dv.eta << "\n";

    art.results << "quantity,state,action,value\n";
    art.results.precision(17);
    for (int s = 0; s < S; ++s) art.results << "state_marginal," << s << ",," << sm[s] << "\n";
    for (int s = 0; s < S; ++s)
        for (int a = 0; a < A; ++a) {
            art.results << "stationary," << s << "," << a << "," << d.d(s, a) << "\n";
            art.results << "diff_value," << s << "," << a << ","
                        << dv.q[static_cast<std::size_t>(s) * A + a] << "\n";
        }
    art.results << "avg_reward,,," << dv.eta << "\n";
    art.report(json{{"event", "solved"},
                    {"state_marginal", sm},
                    {"eta", dv.eta},
                    {"pin", dv.pin}});
    return 0;
}

int cmd_verify(const RunContext& ctx, int workers) {
    Artifacts art(ctx);
    const json& c = ctx.config;
    const int n_instances = c.at("instances");
    const int s_max = c.at("n_states_max"), a_max = c.at("n_actions_max");
    const int dict_random = c.at("dict_random_members");
    const std::size_t n_data = c.at("n_data").get<std::size_t>();
    if (n_instances < 1) throw ConfigError("verify: instances must be >= 1");
    if (workers < 1) workers = 1;

    std::vector<BoundReport> reports(n_instances);
    std::atomic<int> next{0};
    auto worker = [&]() {
        for (int i = next.fetch_add(1); i < n_instances; i = next.fetch_add(1)) {
            RngStream rng(ctx.seed, "verify-instance-" + std::to_string(i));
            const int S = 2 + static_cast<int>(rng.index(static_cast<std::size_t>(s_max - 1)));
            const int A = 1 + static_cast<int>(rng.index(static_cast<std::size_t>(a_max)));
            auto mdp = random_mdp(S, A, rng);
            auto pi_b = random_policy(S, A, rng);
            auto pi = random_policy(S, A, rng);
            auto dict_rng = rng.fork("dict");
            auto dict = default_dictionary(S, A, 1.0, dict_rng, dict_random);
            auto ds = generate_dataset(mdp, pi_b, n_data, rng.engine()());
            auto model = mle_tabular_model(ds, S, A, 0.01);
            reports[i] = verify_combined_bound(mdp, model, pi_b, pi, dict);
        }
    };
    std::vector<std::thread> pool;
    for (int w = 1; w < workers; ++w) pool.emplace_back(worker);
    worker();
    for (auto& t : pool) t.join();

    art.results << "instance," << bound_report_csv_header() << "\n";
    bool all_ok = true;
    for (int i = 0; i < n_instances; ++i) {
        art.results << i << "," << bound_report_csv_row(reports[i]) << "\n";
        json j = reports[i];
        j["instance"] = i;
        art.report(j);
        all_ok = all_ok && reports[i].all_hold();
    }
    std::cout << (all_ok ? "all " : "FAILED: not all ") << n_instances
              << " instances satisfy the bound chain\n";
    if (!all_ok) throw NumericalCheckFailure("verify: a bound chain was violated");
    return 0;
}

int cmd_fit_model(const RunContext& ctx) {
    Artifacts art(ctx);
    const json& c = ctx.config;
    const fs::path ds_path = c.at("dataset").get<std::string>();
    auto ds = read_dataset(ds_path.string());
    const fs::path out_path = art.dir / c.at("model_out").get<std::string>();

    if (c.at("kind") == "tabular") {
        const json& t = c.at("tabular");
        auto model = mle_tabular_model(ds, t.at("n_states"), t.at("n_actions"),
                                       t.at("smoothing_eps"));
        json mj{{"kind", "tabular"},
                {"n_states", model.n_states},
                {"n_actions", model.n_actions},
                {"transition", model.transition},
                {"counts", model.counts}};
        std::ofstream out(out_path);
        out << mj.dump(2) << "\n";
        art.results << "row,count\n";
        for (std::size_t i = 0; i < model.counts.size(); ++i)
            art.results << i << "," << model.counts[i] << "\n";
        art.report({{"event", "model-written"}, {"path", out_path.string()}});
    } else if (c.at("kind") == "ensemble") {
        auto ens = train_dynamics_ensemble(ds, ensemble_from_config(c.at("ensemble")), ctx.seed);
        json mj = ens.to_json();
        mj["kind"] = "ensemble";
        std::ofstream out(out_path);
        out << mj.dump() << "\n";
        art.results << "member,validation_loss,elite\n";
        for (std::size_t m = 0; m < ens.validation_losses.size(); ++m) {
            const bool elite = std::find(ens.elites.begin(), ens.elites.end(),
                                         static_cast<int>(m)) != ens.elites.end();
            art.results << m << "," << ens.validation_losses[m] << "," << (elite ? 1 : 0)
                        << "\n";
        }
        art.report({{"event", "model-written"},
                    {"path", out_path.string()},
                    {"validation_losses", ens.validation_losses}});
    } else {
        throw ConfigError("fit-model: kind must be tabular or ensemble");
    }
    std::cout << "wrote model to " << out_path << "\n";
    return 0;
}

int cmd_train(const RunContext& ctx) {
    Artifacts art(ctx);
    const json& c = ctx.config;
    auto env = env_from_config(c.at("env"));
    Dataset ds;
    if (c.at("dataset").get<std::string>().empty())
        ds = generate_pointmass_dataset(env, c.at("n_transitions").get<std::size_t>(),
                                        c.at("data_seed").get<std::uint64_t>());
    else
        ds = read_dataset(c.at("dataset").get<std::string>());

    auto ens = train_dynamics_ensemble(ds, ensemble_from_config(c.at("ensemble")),
                                       c.at("ensemble_seed").get<std::uint64_t>());
    auto tc = trainer_from_config(c.at("trainer"));
    auto res = train_sdm_gan(ds, env, ens, tc, ctx.seed);

    art.results << metrics_csv_header() << "\n";
    for (const auto& m : res.metrics) {
        art.results << metrics_csv_row(m) << "\n";
        art.report({{"epoch", m.epoch},
                    {"mean_return", m.mean_return},
                    {"std_return", m.std_return},
                    {"critic_loss", m.critic_loss},
                    {"disc_loss", m.disc_loss},
                    {"gen_loss", m.gen_loss},
                    {"lambda", m.lambda},
                    {"q_avg", m.q_avg},
                    {"skip_count", m.skip_count}});
    }

    const fs::path pol_path = art.dir / c.at("policy_out").get<std::string>();
    json pj{{"actor", res.state.actor.to_json()},
            {"state_dim", res.state.state_dim},
            {"action_dim", res.state.action_dim},
            {"noise_dim", res.state.noise_dim}};
    std::ofstream pout(pol_path);
    pout << pj.dump() << "\n";

    const auto& last = res.metrics.back();
    std::cout << "final mean return " << last.mean_return << " +- " << last.std_return
              << " over " << tc.eval_episodes << " episodes; policy written to " << pol_path
              << "\n";
    art.report({{"event", "policy-written"}, {"path", pol_path.string()}});

    // runtime invariant: the adaptive weight keeps lambda * Q_avg pinned
    for (double p : res.lambda_qavg_products)
        if (std::abs(p - tc.alpha) > 1e-9)
            throw NumericalCheckFailure("train: lambda * Q_avg deviated from alpha");
    return 0;
}

int cmd_clone_circle(const RunContext& ctx) {
    Artifacts art(ctx);
    const json& c = ctx.config;
    const json& cc = c.at("circle");
    auto circle = make_circle_dataset(cc.at("n_total").get<std::size_t>(), cc.at("radius"),
                                      cc.at("sigma"), cc.at("split").get<std::size_t>(),
                                      cc.at("data_seed").get<std::uint64_t>());
    CircleCloneConfig gcfg;
    const json& g = c.at("gan");
    gcfg.dim = g.at("dim");
    gcfg.noise_dim = g.at("noise_dim");
    gcfg.batch = g.at("batch");
    gcfg.critic_iters = g.at("critic_iters");
    gcfg.label_smooth = g.at("label_smooth");
    gcfg.iterations = g.at("iterations");
    gcfg.lr = g.at("lr");
    gcfg.coverage_samples = g.at("coverage_samples");

    const auto kind = generator_kind_from_string(c.at("kind"));
    auto res = behavior_clone_toy(circle, kind, gcfg, ctx.seed);

    const fs::path gen_path = art.dir / c.at("generator_out").get<std::string>();
    std::ofstream gout(gen_path);
    gout << res.policy.net.to_json().dump() << "\n";

    art.results << "kind,coverage,final_disc_loss,final_gen_loss\n"
                << c.at("kind").get<std::string>() << "," << res.coverage << ","
                << res.final_disc_loss << "," << res.final_gen_loss << "\n";
    art.report({{"event", "clone-finished"},
                {"kind", c.at("kind")},
                {"coverage", res.coverage},
                {"generator", gen_path.string()}});
    std::cout << "kind " << c.at("kind").get<std::string>() << " coverage " << res.coverage
              << "\n";
    return 0;
}

int cmd_eval(const RunContext& ctx) {
    Artifacts art(ctx);
    const json& c = ctx.config;
    auto env = env_from_config(c.at("env"));

    std::ifstream in(c.at("policy").get<std::string>());
    if (!in) throw ConfigError("eval: cannot open policy file: " +
                               c.at("policy").get<std::string>());
    json pj;
    in >> pj;
    Mlp actor = Mlp::from_json(pj.at("actor"));
    const int sd = pj.at("state_dim"), nd = pj.at("noise_dim");

    PolicyFn pol = [&actor, sd, nd](const Vector& s, RngStream& rng) {
        Matrix in_row(1, sd + nd);
        in_row.leftCols(sd) = s.transpose();
        for (int j = 0; j < nd; ++j) in_row(0, sd + j) = rng.normal();
        return actor.forward(in_row).row(0).transpose().eval();
    };
    auto stats = evaluate_policy(env, pol, c.at("episodes"), ctx.seed);

    art.results << "episode,return\n";
    art.results.precision(17);
    for (std::size_t i = 0; i < stats.returns.size(); ++i)
        art.results << i << "," << stats.returns[i] << "\n";
    art.report({{"event", "evaluated"},
                {"mean_return", stats.mean},
                {"std_return", stats.stddev},
                {"episodes", stats.returns.size()}});
    std::cout << "mean return " << stats.mean << " +- " << stats.stddev << " over "
              << stats.returns.size() << " episodes\n";
    return 0;
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"sdmlab: tabular occupancy-bound verification and adversarial "
                 "offline policy training"};
    app.require_subcommand(1);

    struct Common {
        std::string config_file;
        std::uint64_t seed = 0;
        std::string out_dir = "out";
        std::vector<std::string> overrides;
    };
    auto add_common = [](CLI::App* sub, Common& c) {
        sub->add_option("--config", c.config_file, "JSON config file");
        sub->add_option("--seed", c.seed, "run seed");
        sub->add_option("--out", c.out_dir, "output directory");
        sub->add_option("--set", c.overrides, "dotted-key override, key=value (repeatable)");
    };

    Common c_gen, c_circle, c_solve, c_verify, c_fit, c_train, c_clone, c_eval;
    int workers = static_cast<int>(std::thread::hardware_concurrency());
    int instances_flag = -1;

    auto* gen = app.add_subcommand("gen-data", "generate an offline dataset");
    add_common(gen, c_gen);
    auto* circ = app.add_subcommand("gen-circle", "generate the circle toy dataset");
    add_common(circ, c_circle);
    auto* solve = app.add_subcommand("solve", "stationary distribution and differential value");
    add_common(solve, c_solve);
    auto* verify = app.add_subcommand("verify", "occupancy-bound sweep over random instances");
    add_common(verify, c_verify);
    verify->add_option("--workers", workers, "worker threads");
    verify->add_option("--instances", instances_flag, "number of random instances");
    auto* fit = app.add_subcommand("fit-model", "fit a tabular or ensemble dynamics model");
    add_common(fit, c_fit);
    auto* train = app.add_subcommand("train", "adversarial offline training end to end");
    add_common(train, c_train);
    auto* clone = app.add_subcommand("clone-circle", "GAN behavior cloning on the circle toy");
    add_common(clone, c_clone);
    auto* eval = app.add_subcommand("eval", "evaluate a saved policy in the environment");
    add_common(eval, c_eval);

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }

    try {
        if (*gen) {
            json defaults{{"kind", "pointmass"},
                          {"n_transitions", 20000},
                          {"path", "dataset.jsonl.gz"},
                          {"env", default_env_config()},
                          {"tabular", {{"n_states", 4}, {"n_actions", 2}}}};
            return cmd_gen_data(resolve_config("gen-data", defaults, c_gen.config_file,
                                               c_gen.seed, c_gen.out_dir, c_gen.overrides));
        }
        if (*circ) {
            json defaults{{"n_total", 100000}, {"radius", 4.0},  {"sigma", 0.05},
                          {"split", 5000},     {"path", "circle.csv"}};
            return cmd_gen_circle(resolve_config("gen-circle", defaults, c_circle.config_file,
                                                 c_circle.seed, c_circle.out_dir,
                                                 c_circle.overrides));
        }
        if (*solve) {
            json defaults{{"mdp",
                           {{"n_states", 2},
                            {"n_actions", 1},
                            {"transition", {0.9, 0.1, 0.5, 0.5}},
                            {"reward", {0.0, 0.0}},
                            {"initial_dist", json::array()}}},
                          {"policy", "uniform"}};
            return cmd_solve(resolve_config("solve", defaults, c_solve.config_file,
                                            c_solve.seed, c_solve.out_dir, c_solve.overrides));
        }
        if (*verify) {
            json defaults{{"instances", 100},        {"n_states_max", 8},
                          {"n_actions_max", 3},      {"dict_random_members", 64},
                          {"n_data", 2000}};
            auto ctx = resolve_config("verify", defaults, c_verify.config_file, c_verify.seed,
                                      c_verify.out_dir, c_verify.overrides);
            if (instances_flag > 0) ctx.config["instances"] = instances_flag;
            return cmd_verify(ctx, workers);
        }
        if (*fit) {
            json defaults{{"kind", "tabular"},
                          {"dataset", "out/dataset.jsonl.gz"},
                          {"model_out", "model.json"},
                          {"tabular",
                           {{"n_states", 4}, {"n_actions", 2}, {"smoothing_eps", 0.01}}},
                          {"ensemble", default_ensemble_config()}};
            return cmd_fit_model(resolve_config("fit-model", defaults, c_fit.config_file,
                                                c_fit.seed, c_fit.out_dir, c_fit.overrides));
        }
        if (*train) {
            json defaults{{"dataset", ""},
                          {"n_transitions", 20000},
                          {"data_seed", 101},
                          {"ensemble_seed", 202},
                          {"policy_out", "policy.json"},
                          {"env", default_env_config()},
                          {"ensemble", default_ensemble_config()},
                          {"trainer", default_trainer_config()}};
            return cmd_train(resolve_config("train", defaults, c_train.config_file,
                                            c_train.seed, c_train.out_dir, c_train.overrides));
        }
        if (*clone) {
            json defaults{{"kind", "implicit"},
                          {"generator_out", "generator.json"},
                          {"circle",
                           {{"n_total", 100000},
                            {"radius", 4.0},
                            {"sigma", 0.05},
                            {"split", 5000},
                            {"data_seed", 20260824}}},
                          {"gan",
                           {{"dim", 128},
                            {"noise_dim", 2},
                            {"batch", 256},
                            {"critic_iters", 1},
                            {"label_smooth", 0.9},
                            {"iterations", 3000},
                            {"lr", 2e-4},
                            {"coverage_samples", 256}}}};
            return cmd_clone_circle(resolve_config("clone-circle", defaults,
                                                   c_clone.config_file, c_clone.seed,
                                                   c_clone.out_dir, c_clone.overrides));
        }
        if (*eval) {
            json defaults{{"policy", "out/policy.json"},
                          {"episodes", 10},
                          {"env", default_env_config()}};
            return cmd_eval(resolve_config("eval", defaults, c_eval.config_file, c_eval.seed,
                                           c_eval.out_dir, c_eval.overrides));
        }
    } catch (const NumericalCheckFailure& e) {
        std::cerr << "numerical check failed: " << e.what() << "\n";
        return 2;
    } catch (const json::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}
