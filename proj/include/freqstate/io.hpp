#pragma once

// JSON and CSV serialization, environment presets and agent checkpoints.

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

#include <json.hpp>

#include "agent.hpp"
#include "envs.hpp"
#include "harness.hpp"
#include "oracle.hpp"

namespace freqstate {

using Json = nlohmann::ordered_json;

class FormatError : public Error {
public:
    using Error::Error;
};

/// 17 significant digits, enough to read every double back exactly.
inline std::string format_double(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

inline std::string read_text(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw FormatError("cannot open " + path.string());
    std::ostringstream os;
    os << in.rdbuf();
    return os.str();
}

inline void write_text(const std::filesystem::path& path, const std::string& text) {
    if (path.has_parent_path()) std::filesystem::create_directories(path.parent_path());
    std::ofstream out(path, std::ios::binary);
    if (!out) throw FormatError("cannot write " + path.string());
    out << text;
}

inline Json read_json(const std::filesystem::path& path) {
    try {
        return Json::parse(read_text(path));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(path.string() + ": " + e.what());
    }
}

inline void write_json(const std::filesystem::path& path, const Json& j) {
    write_text(path, j.dump(2) + "\n");
}

// ---------------------------------------------------------------------------
// MDP documents: {"version": 1, "S", "A", "P": [s][a][s'], "R": [s][a]}

inline constexpr int kMdpFormatVersion = 1;

inline Json mdp_to_json(const TabularMdp& mdp) {
    const std::size_t S = mdp.num_states(), A = mdp.num_actions();
    Json P = Json::array(), R = Json::array();
    for (std::size_t s = 0; s < S; ++s) {
        Json ps = Json::array(), rs = Json::array();
        for (std::size_t a = 0; a < A; ++a) {
            const auto row = mdp.row(s, a);
            ps.push_back(Json(std::vector<double>(row.begin(), row.end())));
            rs.push_back(mdp.reward(s, a));
        }
        P.push_back(std::move(ps));
        R.push_back(std::move(rs));
    }
    return Json{{"version", kMdpFormatVersion}, {"S", S}, {"A", A}, {"P", P}, {"R", R}};
}

/// Parses and validates; rejects documents that fail validation.
inline TabularMdp mdp_from_json(const Json& j) {
    try {
        if (j.contains("version") && j.at("version").get<int>() != kMdpFormatVersion)
            throw FormatError("unsupported MDP document version");
        const auto S = j.at("S").get<std::size_t>();
        const auto A = j.at("A").get<std::size_t>();
        const Json& P = j.at("P");
        const Json& R = j.at("R");
        if (P.size() != S || R.size() != S) throw FormatError("P and R must have S rows");
        MdpTables t(S, A);
        for (std::size_t s = 0; s < S; ++s) {
            if (P[s].size() != A || R[s].size() != A)
                throw FormatError("P[s] and R[s] must have A entries");
            for (std::size_t a = 0; a < A; ++a) {
                if (P[s][a].size() != S) throw FormatError("P[s][a] must have S entries");
                for (std::size_t n = 0; n < S; ++n) t.p(s, a, n) = P[s][a][n].get<double>();
                t.r(s, a) = R[s][a].get<double>();
            }
        }
        TabularMdp mdp = std::move(t).build();
        require_valid(mdp);
        return mdp;
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("malformed MDP document: ") + e.what());
    }
}

inline Json plan_to_json(const PlanSolution& sol) {
    return Json{{"gain", sol.gain},
                {"bias", sol.bias},
                {"policy", sol.policy.action_of},
                {"residual", sol.residual},
                {"iterations", sol.iterations}};
}

inline Json certificate_to_json(const AssumptionCertificate& c) {
    Json j{{"frequent_state", c.frequent_state}, {"method", to_string(c.method)}};
    j["expected_bound"] = c.expected_bound ? Json(*c.expected_bound) : Json(nullptr);
    j["prob_horizon"] = c.prob_horizon ? Json(*c.prob_horizon) : Json(nullptr);
    j["prob_lower"] = c.prob_lower ? Json(*c.prob_lower) : Json(nullptr);
    return j;
}

inline AssumptionCertificate certificate_from_json(const Json& j) {
    AssumptionCertificate c;
    c.frequent_state = j.at("frequent_state").get<std::size_t>();
    if (j.contains("expected_bound") && !j["expected_bound"].is_null())
        c.expected_bound = j["expected_bound"].get<double>();
    if (j.contains("prob_horizon") && !j["prob_horizon"].is_null())
        c.prob_horizon = j["prob_horizon"].get<std::size_t>();
    if (j.contains("prob_lower") && !j["prob_lower"].is_null())
        c.prob_lower = j["prob_lower"].get<double>();
    const std::string m = j.value("method", "both");
    c.method = m == "expected" ? CertificateMethod::Expected
               : m == "probabilistic" ? CertificateMethod::Probabilistic
                                      : CertificateMethod::Both;
    return c;
}

inline Json policy_to_json(const RandomizedPolicy& p) {
    Json rows = Json::array();
    for (std::size_t s = 0; s < p.num_states(); ++s) {
        const auto d = p.dist(s);
        rows.push_back(std::vector<double>(d.begin(), d.end()));
    }
    return rows;
}

inline RandomizedPolicy policy_from_json(const Json& rows) {
    const std::size_t S = rows.size();
    if (S == 0) throw FormatError("empty policy");
    const std::size_t A = rows[0].size();
    std::vector<double> probs;
    for (const auto& r : rows) {
        if (r.size() != A) throw FormatError("ragged policy table");
        for (const auto& x : r) probs.push_back(x.get<double>());
    }
    return RandomizedPolicy(S, A, std::move(probs));
}

// ---------------------------------------------------------------------------
// Agent configuration and checkpoints

inline Json agent_config_to_json(const AgentConfig& c) {
    Json j{{"H", c.H},
           {"p", c.p},
           {"H_star", c.span_bound()},
           {"delta", c.delta},
           {"T", c.T},
           {"bonus_scale", c.bonus_scale},
           {"literal_vbar_update", c.literal_vbar_update},
           {"vbar_sample_timing",
            c.vbar_timing == VbarSampleTiming::PostUpdate ? "post_update" : "pre_update"}};
    j["K"] = c.K();
    j["C"] = c.C();
    return j;
}

/// Reads the fields present in `j` on top of `base`.
inline AgentConfig agent_config_from_json(const Json& j, AgentConfig base = {}) {
    if (j.contains("H")) base.H = j["H"].get<std::size_t>();
    if (j.contains("p")) base.p = j["p"].get<double>();
    if (j.contains("H_star") && !j["H_star"].is_null()) base.H_star = j["H_star"].get<double>();
    if (j.contains("delta")) base.delta = j["delta"].get<double>();
    if (j.contains("T")) base.T = j["T"].get<std::uint64_t>();
    if (j.contains("bonus_scale")) base.bonus_scale = j["bonus_scale"].get<double>();
    if (j.contains("literal_vbar_update"))
        base.literal_vbar_update = j["literal_vbar_update"].get<bool>();
    if (j.contains("vbar_sample_timing"))
        base.vbar_timing = j["vbar_sample_timing"].get<std::string>() == "pre_update"
                               ? VbarSampleTiming::PreUpdate
                               : VbarSampleTiming::PostUpdate;
    base.check();
    return base;
}

inline Json checkpoint_to_json(const OptimisticQAgent& agent) {
    const auto& c = agent.counters();
    return Json{{"config", agent_config_to_json(agent.config())},
                {"S", agent.num_states()},
                {"A", agent.num_actions()},
                {"epoch", agent.epoch()},
                {"t", agent.t()},
                {"reset_pending", agent.reset_pending()},
                {"vbar", agent.vbar()},
                {"vbar_sum", agent.vbar_sum()},
                {"v", agent.v_data()},
                {"q", agent.q_data()},
                {"counters",
                 {{"n_sa", c.n_sa},
                  {"n_s", c.n_s},
                  {"n_prev_s", c.n_prev_s},
                  {"tau", c.tau},
                  {"tau_prev", c.tau_prev}}}};
}

inline OptimisticQAgent agent_from_checkpoint(const Json& j) {
    OptimisticQAgent agent(agent_config_from_json(j.at("config")), j.at("S").get<std::size_t>(),
                           j.at("A").get<std::size_t>());
    OptimisticQAgent::Snapshot snap;
    snap.epoch = j.at("epoch").get<std::uint64_t>();
    snap.t = j.at("t").get<std::uint64_t>();
    snap.reset_pending = j.at("reset_pending").get<bool>();
    snap.vbar = j.at("vbar").get<std::vector<double>>();
    snap.vbar_sum = j.at("vbar_sum").get<std::vector<double>>();
    snap.v = j.at("v").get<std::vector<double>>();
    snap.q = j.at("q").get<std::vector<double>>();
    const Json& c = j.at("counters");
    snap.counters.n_sa = c.at("n_sa").get<std::vector<std::uint64_t>>();
    snap.counters.n_s = c.at("n_s").get<std::vector<std::uint64_t>>();
    snap.counters.n_prev_s = c.at("n_prev_s").get<std::vector<std::uint64_t>>();
    snap.counters.tau = c.at("tau").get<std::uint64_t>();
    snap.counters.tau_prev = c.at("tau_prev").get<std::uint64_t>();
    agent.restore(snap);
    return agent;
}

// ---------------------------------------------------------------------------
// Presets

struct Preset {
    std::string name;
    std::string env;
    TabularMdp mdp;
    RewardScaling scaling;
    Json params;
    std::optional<AssumptionCertificate> certificate;
    AgentConfig agent;
};

inline std::vector<double> json_doubles(const Json& j) { return j.get<std::vector<double>>(); }

/// Builds the MDP described by an environment document {"env": kind, "params": {...}}.
inline EnvInstance build_env(const std::string& kind, const Json& params) {
    try {
        if (kind == "queueing") {
            QueueParams q;
            q.capacity = params.value("capacity", q.capacity);
            if (params.contains("arrival_probs")) q.arrival_probs = json_doubles(params["arrival_probs"]);
            q.service_prob = params.value("service_prob", q.service_prob);
            if (params.contains("admit_limits"))
                q.admit_limits = params["admit_limits"].get<std::vector<std::size_t>>();
            q.reward_per_service = params.value("reward_per_service", q.reward_per_service);
            q.holding_cost_scale = params.value("holding_cost_scale", q.holding_cost_scale);
            return make_queueing_admission(q);
        }
        if (kind == "inventory") {
            InventoryParams p;
            p.capacity = params.value("capacity", p.capacity);
            if (params.contains("demand_probs")) p.demand_probs = json_doubles(params["demand_probs"]);
            if (params.contains("order_actions"))
                p.order_actions = params["order_actions"].get<std::vector<std::size_t>>();
            p.margin = params.value("margin", p.margin);
            p.holding_cost = params.value("holding_cost", p.holding_cost);
            p.order_cost = params.value("order_cost", p.order_cost);
            return make_inventory_base_stock(p);
        }
        if (kind == "three_state") return {make_three_state_example(), {}};
        if (kind == "trap") {
            TrapParams t;
            t.safe_reward = params.value("safe_reward", t.safe_reward);
            t.entry_prob = params.value("entry_prob", t.entry_prob);
            t.exit_prob = params.value("exit_prob", t.exit_prob);
            return {make_trap_instance(t), {}};
        }
        if (kind == "random_frequent")
            return {make_random_frequent(params.at("S").get<std::size_t>(),
                                         params.at("A").get<std::size_t>(),
                                         params.at("p0").get<double>(),
                                         params.at("seed").get<std::uint64_t>()),
                    {}};
        if (kind == "episodic") {
            const EpisodicMdp ep = make_random_episodic(
                params.at("S").get<std::size_t>(), params.at("A").get<std::size_t>(),
                params.at("H").get<std::size_t>(), params.at("seed").get<std::uint64_t>());
            return {episodic_to_average(ep).mdp, {}};
        }
    } catch (const nlohmann::json::exception& e) {
        throw FormatError("bad parameters for env '" + kind + "': " + e.what());
    }
    throw FormatError("unknown env kind '" + kind + "'");
}

inline Preset preset_from_json(const Json& j) {
    Preset p;
    p.name = j.value("name", std::string("unnamed"));
    p.env = j.at("env").get<std::string>();
    p.params = j.value("params", Json::object());
    EnvInstance inst = build_env(p.env, p.params);
    p.mdp = std::move(inst.mdp);
    p.scaling = inst.scaling;
    if (j.contains("certificate")) p.certificate = certificate_from_json(j["certificate"]);
    if (j.contains("agent")) p.agent = agent_config_from_json(j["agent"]);
    return p;
}

#ifndef FREQSTATE_PRESET_DIR
#define FREQSTATE_PRESET_DIR "presets"
#endif

inline std::filesystem::path preset_dir() {
    if (const char* env = std::getenv("FREQSTATE_PRESET_DIR")) return env;
    return FREQSTATE_PRESET_DIR;
}

/// Resolves a preset name (looked up in the preset directory) or a path to a
/// preset file.
inline Preset load_preset(const std::string& name_or_path) {
    std::filesystem::path path = name_or_path;
    if (!std::filesystem::exists(path)) path = preset_dir() / (name_or_path + ".json");
    if (!std::filesystem::exists(path)) throw FormatError("no preset named '" + name_or_path + "'");
    return preset_from_json(read_json(path));
}

// ---------------------------------------------------------------------------
// Run outputs

inline std::string record_csv(const RegretRecord& rec) {
    std::string out = "t,s,a,h,reward,cum_regret,epoch\n";
    out.reserve(rec.steps.size() * 48);
    for (const auto& st : rec.steps) {
        out += std::to_string(st.t);
        out += ',';
        out += std::to_string(st.s);
        out += ',';
        out += std::to_string(st.a);
        out += ',';
        out += std::to_string(st.h);
        out += ',';
        out += format_double(st.reward);
        out += ',';
        out += format_double(st.cum_regret);
        out += ',';
        out += std::to_string(st.epoch);
        out += '\n';
    }
    return out;
}

inline Json summary_to_json(const RegretRecord& rec) {
    Json j{{"env_id", rec.env_id},
           {"seed", rec.seed},
           {"config_digest", rec.config_digest},
           {"config", agent_config_to_json(rec.config)},
           {"T", rec.T},
           {"gain_star", rec.gain_star},
           {"final_regret", rec.final_regret},
           {"average_regret", rec.average_regret()},
           {"burn_in_regret", rec.burn_in_regret},
           {"post_burn_in_regret", post_burn_in_regret(rec)},
           {"realized_regret", rec.realized_regret},
           {"epochs", rec.epochs},
           {"epoch_cap", rec.epoch_cap},
           {"projections", rec.projections},
           {"record_digest", hex64(record_digest(rec))}};
    if (rec.optimism) {
        const auto& o = *rec.optimism;
        j["optimism"] = {{"checks", o.checks},
                         {"violations", o.violations},
                         {"epoch_checks", o.epoch_checks},
                         {"epoch_violations", o.epoch_violations},
                         {"violation_fraction", o.violation_fraction()},
                         {"worst_margin", o.worst_margin}};
    }
    return j;
}

inline Json snapshots_to_json(const RegretRecord& rec) {
    Json snaps = Json::array();
    for (const auto& p : rec.snapshots) snaps.push_back(policy_to_json(p));
    return Json{{"T", rec.T}, {"gain_star", rec.gain_star}, {"epoch_starts", rec.epoch_starts},
                {"snapshots", snaps}};
}

/// Rebuilds the parts of a record that PAC extraction needs.
inline RegretRecord record_from_snapshots(const Json& j) {
    RegretRecord rec;
    rec.T = j.at("T").get<std::uint64_t>();
    rec.gain_star = j.at("gain_star").get<double>();
    rec.epoch_starts = j.at("epoch_starts").get<std::vector<std::uint64_t>>();
    for (const auto& p : j.at("snapshots")) rec.snapshots.push_back(policy_from_json(p));
    return rec;
}

inline std::string sweep_csv(const SweepResult& res) {
    std::string out =
        "env,T,seed,cell_seed,gain_star,final_regret,average_regret,post_burn_in_regret,epochs,"
        "epoch_cap,optimism_checks,optimism_violations\n";
    for (const auto& r : res.rows) {
        out += r.env_id + "," + std::to_string(r.T) + "," + std::to_string(r.seed_label) + "," +
               std::to_string(r.cell_seed) + "," + format_double(r.gain_star) + "," +
               format_double(r.final_regret) + "," + format_double(r.average_regret) + "," +
               format_double(r.post_burn_in_regret) + "," + std::to_string(r.epochs) + "," +
               std::to_string(r.epoch_cap) + "," + std::to_string(r.optimism_checks) + "," +
               std::to_string(r.optimism_violations) + "\n";
    }
    return out;
}

inline Json sweep_fits_to_json(const SweepResult& res) {
    Json fits = Json::array();
    for (const auto& f : res.fits)
        fits.push_back({{"env", f.env_id},
                        {"a", f.fit.a},
                        {"b", f.fit.b},
                        {"points", f.fit.points},
                        {"T", f.T},
                        {"mean_post_burn_in_regret", f.mean_regret}});
    return fits;
}

}  // namespace freqstate
