// Command-line front end: validate, plan, certify, export, run, sweep, verify, pac.

#include <chrono>
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>

#include <CLI11.hpp>

#include "freqstate/freqstate.hpp"

namespace fs = std::filesystem;
using namespace freqstate;

namespace {

void emit(const Json& j, const std::string& out) {
    if (out.empty())
        std::cout << j.dump(2) << "\n";
    else
        write_json(out, j);
}

TabularMdp load_mdp(const std::string& path) { return mdp_from_json(read_json(path)); }

struct ResolvedEnv {
    std::string id;
    TabularMdp mdp;
    AgentConfig agent;
};

/// A preset name, a preset file, or a bare MDP document. Bare MDPs get
/// (H, p) from the oracle certificate of state 0.
ResolvedEnv resolve_env(const std::string& source) {
    if (fs::exists(source)) {
        const Json j = read_json(source);
        if (!j.contains("env")) {
            ResolvedEnv r{fs::path(source).stem().string(), mdp_from_json(j), {}};
            const auto cert = certify_assumptions(r.mdp, 0);
            if (!cert.prob_horizon) throw NoFrequentState("no probabilistic certificate for state 0");
            r.agent.H = *cert.prob_horizon;
            r.agent.p = *cert.prob_lower;
            return r;
        }
        Preset p = preset_from_json(j);
        return {p.name, std::move(p.mdp), p.agent};
    }
    Preset p = load_preset(source);
    return {p.name, std::move(p.mdp), p.agent};
}

int cmd_validate(const std::string& path) {
    const Json j = read_json(path);
    try {
        (void)mdp_from_json(j);
    } catch (const InvalidMdp& e) {
        std::cout << e.what();
        return 1;
    }
    std::cout << "ok\n";
    return 0;
}

int cmd_run(const std::string& env_source, std::uint64_t T, std::uint64_t seed,
            std::optional<double> bonus_scale, bool literal_vbar, bool pre_update,
            std::optional<std::size_t> H, std::optional<double> p, bool optimism,
            bool bernoulli, const std::string& out) {
    ResolvedEnv env = resolve_env(env_source);
    AgentConfig cfg = env.agent;
    cfg.T = T;
    if (bonus_scale) cfg.bonus_scale = *bonus_scale;
    if (literal_vbar) cfg.literal_vbar_update = true;
    if (pre_update) cfg.vbar_timing = VbarSampleTiming::PreUpdate;
    if (H) cfg.H = *H;
    if (p) cfg.p = *p;
    cfg.check();

    RunOptions ro;
    ro.env_id = env.id;
    ro.monitor_optimism = optimism;
    ro.reward_mode = bernoulli ? RewardMode::Bernoulli : RewardMode::Mean;
    ro.record_steps = !out.empty();
    const auto start = std::chrono::steady_clock::now();
    const RegretRecord rec = run_experiment(env.mdp, cfg, seed, ro);
    const double seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();

    const Json summary = summary_to_json(rec);
    if (!out.empty()) {
        const fs::path dir = out;
        fs::create_directories(dir);
        write_text(dir / "record.csv", record_csv(rec));
        write_json(dir / "summary.json", summary);
        write_json(dir / "mdp.json", mdp_to_json(env.mdp));
        write_json(dir / "snapshots.json", snapshots_to_json(rec));
        write_json(dir / "timing.json", Json{{"wall_seconds", seconds}});
    }
    std::cout << summary.dump(2) << "\n";
    return 0;
}

int cmd_sweep(const std::string& config_path, const std::string& out) {
    const Json cfg = read_json(config_path);
    std::vector<SweepEnv> envs;
    for (const auto& e : cfg.at("envs")) {
        ResolvedEnv r = resolve_env(e.at("preset").get<std::string>());
        AgentConfig agent = r.agent;
        if (e.contains("agent")) agent = agent_config_from_json(e["agent"], agent);
        envs.push_back({e.value("id", r.id), std::move(r.mdp), agent});
    }
    const auto T_grid = cfg.at("T").get<std::vector<std::uint64_t>>();
    const auto seeds = cfg.at("seeds").get<std::vector<std::uint64_t>>();
    SweepOptions so;
    so.master_seed = cfg.value("master_seed", std::uint64_t{0});
    so.monitor_optimism = cfg.value("monitor_optimism", false);
    const SweepResult res = sweep(envs, T_grid, seeds, so);

    bool within_cap = true;
    for (const auto& r : res.rows) within_cap = within_cap && r.epochs <= r.epoch_cap;
    const Json manifest{{"config", cfg},
                        {"cells", res.rows.size()},
                        {"epochs_within_cap", within_cap},
                        {"fits", sweep_fits_to_json(res)}};
    if (!out.empty()) {
        write_text(fs::path(out) / "results.csv", sweep_csv(res));
        write_json(fs::path(out) / "manifest.json", manifest);
    }
    std::cout << manifest.dump(2) << "\n";
    return 0;
}

int cmd_verify(const std::string& suite, std::size_t instances, std::size_t vectors,
               std::uint64_t seed, const std::string& out) {
    VerifyOptions opt;
    opt.suite = suite == "operators"     ? VerifySuite::Operators
                : suite == "assumptions" ? VerifySuite::Assumptions
                : suite == "optimism"    ? VerifySuite::Optimism
                                         : VerifySuite::All;
    opt.instances = instances;
    opt.vectors = vectors;
    opt.seed = seed;
    const VerifyReport rep = run_verification(opt);
    Json checks = Json::array();
    for (const auto& c : rep.checks) {
        checks.push_back({{"name", c.name},
                          {"suite", c.suite},
                          {"passed", c.passed},
                          {"skipped", c.skipped},
                          {"reason", c.reason},
                          {"trials", c.trials},
                          {"violations", c.violations},
                          {"worst_margin", c.trials ? Json(c.worst_margin) : Json(nullptr)}});
        std::printf("%-4s %-40s trials=%llu violations=%llu%s%s\n",
                    c.skipped ? "SKIP" : (c.passed ? "PASS" : "FAIL"), c.name.c_str(),
                    static_cast<unsigned long long>(c.trials),
                    static_cast<unsigned long long>(c.violations), c.reason.empty() ? "" : "  ",
                    c.reason.c_str());
    }
    const Json j{{"suite", suite}, {"seed", seed}, {"passed", rep.passed()}, {"checks", checks}};
    if (!out.empty()) write_json(out, j);
    return rep.passed() ? 0 : 1;
}

int cmd_pac(const std::string& record_dir, double eps, double delta, std::uint64_t seed,
            std::optional<double> H, std::optional<std::uint64_t> rollout, const std::string& out) {
    const fs::path dir = record_dir;
    const TabularMdp mdp = load_mdp((dir / "mdp.json").string());
    const RegretRecord rec = record_from_snapshots(read_json(dir / "snapshots.json"));
    PacOptions po;
    if (H) {
        po.H = *H;
    } else {
        const Json summary = read_json(dir / "summary.json");
        po.H = summary.at("config").at("H").get<double>();
    }
    po.rollout_length = rollout;
    Rng rng = derive_rng(seed, 7);
    const PacResult res = pac_extract(rec, mdp, eps, delta, rng, po);
    Json cands = Json::array();
    for (const auto& c : res.candidates)
        cands.push_back({{"step", c.step},
                         {"epoch", c.epoch},
                         {"estimated_gain", c.estimated_gain},
                         {"exact_gain", c.exact_gain}});
    emit(Json{{"policy", policy_to_json(res.policy)},
              {"estimated_gain", res.estimated_gain},
              {"exact_gain", res.exact_gain},
              {"gap", res.gap},
              {"epsilon", eps},
              {"delta", delta},
              {"repetitions", res.repetitions},
              {"rollout_length", res.rollout_length},
              {"candidates", cands}},
         out);
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"Optimistic Q-learning for average-reward MDPs with a frequent state"};
    app.require_subcommand(1);

    std::string path, out;

    auto* validate = app.add_subcommand("validate", "Check an MDP document");
    validate->add_option("mdp", path, "MDP JSON file")->required();

    auto* plan = app.add_subcommand("plan", "Solve for the optimal gain, bias and policy");
    plan->add_option("mdp", path, "MDP JSON file")->required();
    plan->add_option("--out", out, "Write the solution here instead of stdout");

    std::optional<std::size_t> s0;
    auto* certify = app.add_subcommand("certify", "Certify a frequent state");
    certify->add_option("mdp", path, "MDP JSON file")->required();
    certify->add_option("--s0", s0, "Candidate frequent state");
    certify->add_option("--out", out, "Write the certificate here instead of stdout");

    std::string env;
    auto* exp = app.add_subcommand("export", "Write a preset's MDP as a JSON document");
    exp->add_option("--env", env, "Preset name or file")->required();
    exp->add_option("--out", out, "Output file (stdout when omitted)");

    std::uint64_t T = 10000, seed = 0;
    std::optional<double> bonus_scale, p;
    std::optional<std::size_t> H;
    bool literal_vbar = false, pre_update = false, optimism = false, bernoulli = false;
    auto* run = app.add_subcommand("run", "Run the agent and log regret");
    run->add_option("--env", env, "Preset name, preset file or MDP file")->required();
    run->add_option("--T", T, "Number of steps")->check(CLI::PositiveNumber);
    run->add_option("--seed", seed, "Seed");
    run->add_option("--bonus-scale", bonus_scale, "Bonus scale c_b");
    run->add_option("--H", H, "Override H");
    run->add_option("--p", p, "Override p");
    run->add_flag("--literal-vbar", literal_vbar, "Use the printed V-bar recurrence");
    run->add_flag("--pre-update-vbar", pre_update, "Sample V-bar targets before the Q update");
    run->add_flag("--optimism", optimism, "Track optimism violations against the exact operators");
    run->add_flag("--bernoulli-rewards", bernoulli, "Feed Bernoulli reward samples to the agent");
    run->add_option("--out", out, "Output directory for record.csv, summary.json and friends");

    auto* sw = app.add_subcommand("sweep", "Grid sweep over presets, horizons and seeds");
    sw->add_option("--config", path, "Sweep JSON")->required();
    sw->add_option("--out", out, "Output directory for results.csv and manifest.json");

    std::string suite = "all";
    std::size_t instances = 100, vectors = 100;
    auto* verify = app.add_subcommand("verify", "Run the numerical verification suite");
    verify->add_option("--suite", suite, "all|operators|assumptions|optimism")
        ->check(CLI::IsMember({"all", "operators", "assumptions", "optimism"}));
    verify->add_option("--instances", instances, "Random MDPs per check");
    verify->add_option("--vectors", vectors, "Random vectors per MDP");
    verify->add_option("--seed", seed, "Seed");
    verify->add_option("--out", out, "verify.json path");

    double eps = 0.05, delta = 0.05;
    std::optional<std::uint64_t> rollout;
    auto* pac = app.add_subcommand("pac", "Extract a PAC policy from a run directory");
    pac->add_option("--record", path, "Directory written by run --out")->required();
    pac->add_option("--eps", eps, "Target gap");
    pac->add_option("--delta", delta, "Failure probability");
    pac->add_option("--seed", seed, "Seed");
    pac->add_option("--H", H, "Override H in the rollout length");
    pac->add_option("--rollout-length", rollout, "Override the rollout length");
    pac->add_option("--out", out, "Write the result here instead of stdout");

    CLI11_PARSE(app, argc, argv);

    try {
        if (*validate) return cmd_validate(path);
        if (*plan) {
            emit(plan_to_json(solve_average_reward(load_mdp(path))), out);
            return 0;
        }
        if (*certify) {
            emit(certificate_to_json(certify_assumptions(load_mdp(path), s0)), out);
            return 0;
        }
        if (*exp) {
            emit(mdp_to_json(resolve_env(env).mdp), out);
            return 0;
        }
        if (*run) return cmd_run(env, T, seed, bonus_scale, literal_vbar, pre_update, H, p, optimism,
                                 bernoulli, out);
        if (*sw) return cmd_sweep(path, out);
        if (*verify) return cmd_verify(suite, instances, vectors, seed, out);
        if (*pac)
            return cmd_pac(path, eps, delta, seed, H ? std::optional<double>(static_cast<double>(*H)) : std::nullopt,
                           rollout, out);
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    }
    return 0;
}
