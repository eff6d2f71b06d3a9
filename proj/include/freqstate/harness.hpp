#pragma once

// Experiment orchestration: regret runs against the oracle gain, PAC policy
// extraction, grid sweeps and power-law fits.

#include <algorithm>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <cstdlib>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <vector>

#include "agent.hpp"
#include "mdp.hpp"
#include "optimism.hpp"
#include "oracle.hpp"

namespace freqstate {

class OracleFailed : public Error {
public:
    using Error::Error;
};

class NoSnapshots : public Error {
public:
    using Error::Error;
};

inline std::uint64_t splitmix64(std::uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}

/// Independent generator for stream `stream` of a run seeded with `seed`.
inline Rng derive_rng(std::uint64_t seed, std::uint64_t stream) {
    return Rng(splitmix64(splitmix64(seed) ^ splitmix64(stream + 0x5851f42d4c957f2dULL)));
}

/// 64-bit FNV-1a.
class Fnv1a {
public:
    void update(const void* data, std::size_t n) {
        const auto* p = static_cast<const unsigned char*>(data);
        for (std::size_t i = 0; i < n; ++i) {
            h_ ^= p[i];
            h_ *= 0x100000001b3ULL;
        }
    }
    template <class T>
    void add(const T& x) {
        update(&x, sizeof(T));
    }
    std::uint64_t value() const { return h_; }

private:
    std::uint64_t h_ = 0xcbf29ce484222325ULL;
};

inline std::string hex64(std::uint64_t x) {
    static const char* digits = "0123456789abcdef";
    std::string out(16, '0');
    for (int i = 15; i >= 0; --i, x >>= 4) out[static_cast<std::size_t>(i)] = digits[x & 0xf];
    return out;
}

inline std::uint64_t config_digest(const AgentConfig& c, std::size_t S, std::size_t A) {
    Fnv1a f;
    f.add(c.H);
    f.add(c.p);
    f.add(c.span_bound());
    f.add(c.delta);
    f.add(c.T);
    f.add(c.bonus_scale);
    f.add(c.literal_vbar_update);
    f.add(c.vbar_timing);
    f.add(S);
    f.add(A);
    return f.value();
}

// ---------------------------------------------------------------------------
// Regret runs

struct StepLog {
    std::uint64_t t;
    std::uint32_t s;
    std::uint32_t a;
    std::uint32_t h;
    double reward;           // mean reward R(s_t, a_t)
    double realized_reward;  // sample actually fed to the agent
    double cum_regret;
    std::uint64_t epoch;
};

struct RegretRecord {
    std::string env_id;
    std::uint64_t seed = 0;
    std::string config_digest;
    AgentConfig config;
    double gain_star = 0.0;
    std::uint64_t T = 0;
    std::vector<StepLog> steps;
    /// Step index (1-based) at which each epoch started.
    std::vector<std::uint64_t> epoch_starts;
    /// Policy snapshot taken when each epoch ended (or at T for the last one).
    std::vector<RandomizedPolicy> snapshots;
    /// Reg(T); kept even when the per-step log is not.
    double final_regret = 0.0;
    double burn_in_regret = 0.0;  // Reg(ceil(T/10))
    double realized_regret = 0.0;
    std::uint64_t epochs = 0;
    std::uint64_t epoch_cap = 0;
    std::uint64_t projections = 0;
    std::optional<OptimismReport> optimism;

    double average_regret() const { return T == 0 ? 0.0 : final_regret / static_cast<double>(T); }

    /// Epoch (1-based) in which step t (1-based) was played.
    std::uint64_t epoch_of_step(std::uint64_t t) const {
        const auto it = std::upper_bound(epoch_starts.begin(), epoch_starts.end(), t);
        return static_cast<std::uint64_t>(it - epoch_starts.begin());
    }
};

struct RunOptions {
    std::string env_id = "custom";
    RewardMode reward_mode = RewardMode::Mean;
    std::size_t initial_state = 0;
    bool record_steps = true;
    bool keep_snapshots = true;
    bool monitor_optimism = false;
    std::uint64_t optimism_stride = 1;
    SolverOptions solver{};
    /// Skip the oracle solve when the optimal gain is already known.
    std::optional<double> gain_star;
};

inline double solve_gain(const TabularMdp& mdp, const SolverOptions& opt) {
    try {
        return solve_average_reward(mdp, opt).gain;
    } catch (const NoConvergence& e) {
        throw OracleFailed(std::string("oracle could not solve the MDP: ") + e.what());
    }
}

/// Runs T steps of the agent on `mdp`. Fully determined by the arguments.
inline RegretRecord run_experiment(const TabularMdp& mdp, AgentConfig config, std::uint64_t seed,
                                   const RunOptions& opt = {}) {
    require_valid(mdp);
    const std::uint64_t T = config.T;
    RegretRecord rec;
    rec.env_id = opt.env_id;
    rec.seed = seed;
    rec.config = config;
    rec.T = T;
    rec.gain_star = opt.gain_star ? *opt.gain_star : solve_gain(mdp, opt.solver);
    rec.config_digest = hex64(config_digest(config, mdp.num_states(), mdp.num_actions()));

    OptimisticQAgent agent(config, mdp.num_states(), mdp.num_actions());
    rec.epoch_cap = config.epoch_cap(mdp.num_states());
    std::optional<OptimismMonitor> monitor;
    if (opt.monitor_optimism) monitor.emplace(mdp, agent, 1e-9, opt.optimism_stride);

    Rng env_rng = derive_rng(seed, 0);
    Rng agent_rng = derive_rng(seed, 1);
    if (opt.record_steps) rec.steps.reserve(T);
    const std::uint64_t burn_in = (T + 9) / 10;

    std::size_t s = opt.initial_state;
    mdp.check_indices(s, 0);
    double cum = 0.0, realized = 0.0;
    for (std::uint64_t t = 1; t <= T; ++t) {
        const std::uint64_t epoch_before = agent.epoch();
        const auto sel = agent.select_action(s, agent_rng);
        if (agent.epoch() != epoch_before) rec.epoch_starts.push_back(t);
        if (monitor) monitor->before_observe();

        const auto tr = step(mdp, s, sel.action, env_rng, opt.reward_mode);
        const double mean_r = mdp.reward(s, sel.action);
        cum += rec.gain_star - mean_r;
        realized += rec.gain_star - tr.reward;
        const auto ev = agent.observe(s, sel.action, tr.reward, tr.next_state);
        if (ev.projected) ++rec.projections;
        if (opt.record_steps)
            rec.steps.push_back({t, static_cast<std::uint32_t>(s),
                                 static_cast<std::uint32_t>(sel.action),
                                 static_cast<std::uint32_t>(sel.h), mean_r, tr.reward, cum,
                                 agent.epoch()});
        if (t == burn_in) rec.burn_in_regret = cum;
        if (opt.keep_snapshots && (ev.epoch_ended || t == T))
            rec.snapshots.push_back(agent.snapshot_policy());
        s = tr.next_state;
    }
    rec.final_regret = cum;
    rec.realized_regret = realized;
    rec.epochs = agent.epoch();
    if (monitor) rec.optimism = monitor->report();
    return rec;
}

/// Digest of the per-step log, epoch list and snapshots.
inline std::uint64_t record_digest(const RegretRecord& rec) {
    Fnv1a f;
    for (const auto& st : rec.steps) {
        f.add(st.t);
        f.add(st.s);
        f.add(st.a);
        f.add(st.h);
        f.add(st.reward);
        f.add(st.realized_reward);
        f.add(st.cum_regret);
        f.add(st.epoch);
    }
    for (auto e : rec.epoch_starts) f.add(e);
    for (const auto& p : rec.snapshots)
        for (double x : p.data()) f.add(x);
    f.add(rec.final_regret);
    return f.value();
}

// ---------------------------------------------------------------------------
// PAC extraction

struct PacOptions {
    /// Hitting-time parameter entering the default rollout length.
    double H = 1.0;
    /// Overrides ceil(64 H^2 ln(2/delta) / eps^2) when set.
    std::optional<std::uint64_t> rollout_length;
    std::size_t rollout_start = 0;
    SolverOptions solver{};
};

struct PacCandidate {
    std::uint64_t step;
    std::uint64_t epoch;
    double estimated_gain;
    double exact_gain;
};

struct PacResult {
    RandomizedPolicy policy;
    double estimated_gain = 0.0;
    double exact_gain = 0.0;
    double gap = 0.0;
    std::uint64_t repetitions = 0;
    std::uint64_t rollout_length = 0;
    std::vector<PacCandidate> candidates;
};

inline std::uint64_t pac_repetitions(double delta) {
    if (!(delta > 0.0 && delta < 1.0)) throw std::invalid_argument("pac: delta must lie in (0, 1)");
    return std::max<std::uint64_t>(1, static_cast<std::uint64_t>(std::ceil(3.0 * std::log(1.0 / delta))));
}

inline std::uint64_t pac_rollout_length(double H, double epsilon, double delta) {
    if (!(epsilon > 0.0)) throw std::invalid_argument("pac: epsilon must be positive");
    return std::max<std::uint64_t>(
        1, static_cast<std::uint64_t>(std::ceil(64.0 * H * H * std::log(2.0 / delta) / (epsilon * epsilon))));
}

/// Average mean reward of `policy` over a rollout of `length` steps.
inline double rollout_gain(const TabularMdp& mdp, const RandomizedPolicy& policy, std::size_t start,
                           std::uint64_t length, Rng& rng) {
    std::size_t s = start;
    double total = 0.0;
    for (std::uint64_t i = 0; i < length; ++i) {
        const std::size_t a = policy.sample(s, rng);
        total += mdp.reward(s, a);
        s = sample_row(mdp.row(s, a), uniform01(rng));
    }
    return total / static_cast<double>(length);
}

inline PacResult pac_extract(const RegretRecord& rec, const TabularMdp& mdp, double epsilon,
                             double delta, Rng& rng, const PacOptions& opt = {}) {
    if (rec.snapshots.empty() || rec.T == 0) throw NoSnapshots("record holds no policy snapshots");
    PacResult res;
    res.repetitions = pac_repetitions(delta);
    res.rollout_length = opt.rollout_length ? *opt.rollout_length
                                            : pac_rollout_length(opt.H, epsilon, delta);
    std::optional<std::size_t> best;
    for (std::uint64_t r = 0; r < res.repetitions; ++r) {
        const std::uint64_t t = 1 + uniform_index(rng, rec.T);
        const std::uint64_t e = std::min<std::uint64_t>(
            std::max<std::uint64_t>(rec.epoch_of_step(t), 1), rec.snapshots.size());
        const RandomizedPolicy& pi = rec.snapshots[e - 1];
        const double est = rollout_gain(mdp, pi, opt.rollout_start, res.rollout_length, rng);
        double exact;
        try {
            exact = policy_gain_bias(mdp, pi, opt.solver).gain;
        } catch (const NoConvergence& err) {
            throw OracleFailed(std::string("policy evaluation failed: ") + err.what());
        }
        res.candidates.push_back({t, e, est, exact});
        if (!best || est > res.candidates[*best].estimated_gain) best = res.candidates.size() - 1;
    }
    const auto& c = res.candidates[*best];
    res.policy = rec.snapshots[c.epoch - 1];
    res.estimated_gain = c.estimated_gain;
    res.exact_gain = c.exact_gain;
    res.gap = rec.gain_star - c.exact_gain;
    return res;
}

// ---------------------------------------------------------------------------
// Power-law fit

struct PowerLawFit {
    double a = 0.0;
    double b = 0.0;
    std::size_t points = 0;
};

/// Least squares of log y = log a + b log x over points with x, y > 0.
inline PowerLawFit fit_power_law(std::span<const double> x, std::span<const double> y) {
    if (x.size() != y.size()) throw std::invalid_argument("fit_power_law: size mismatch");
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    std::size_t n = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        if (!(x[i] > 0.0 && y[i] > 0.0)) continue;
        const double lx = std::log(x[i]), ly = std::log(y[i]);
        sx += lx;
        sy += ly;
        sxx += lx * lx;
        sxy += lx * ly;
        ++n;
    }
    if (n < 2) throw std::invalid_argument("fit_power_law: need at least two positive points");
    const double dn = static_cast<double>(n);
    const double denom = dn * sxx - sx * sx;
    if (denom == 0.0) throw std::invalid_argument("fit_power_law: x values are all equal");
    PowerLawFit fit;
    fit.b = (dn * sxy - sx * sy) / denom;
    fit.a = std::exp((sy - fit.b * sx) / dn);
    fit.points = n;
    return fit;
}

/// Regret after the burn-in prefix: Reg(T) - Reg(ceil(T/10)).
inline double post_burn_in_regret(const RegretRecord& rec) {
    return rec.final_regret - rec.burn_in_regret;
}

// ---------------------------------------------------------------------------
// Sweeps

/// Worker count: FREQSTATE_THREADS when set, otherwise the hardware count.
inline std::size_t worker_count(std::size_t cells) {
    std::size_t n = std::max(1u, std::thread::hardware_concurrency());
    if (const char* env = std::getenv("FREQSTATE_THREADS")) {
        const long v = std::strtol(env, nullptr, 10);
        if (v >= 1) n = static_cast<std::size_t>(v);
    }
    return std::max<std::size_t>(1, std::min(n, cells));
}

/// Runs `body(i)` for i in [0, n) on up to worker_count(n) threads. The first
/// exception thrown by any cell is rethrown after all workers stop.
inline void parallel_for(std::size_t n, const std::function<void(std::size_t)>& body) {
    const std::size_t workers = worker_count(n);
    std::atomic<std::size_t> next{0};
    std::exception_ptr failure;
    std::mutex failure_mutex;
    auto work = [&] {
        for (std::size_t i = next++; i < n; i = next++) {
            try {
                body(i);
            } catch (...) {
                std::lock_guard lock(failure_mutex);
                if (!failure) failure = std::current_exception();
                next = n;
            }
        }
    };
    if (workers == 1) {
        work();
    } else {
        std::vector<std::thread> pool;
        for (std::size_t w = 0; w < workers; ++w) pool.emplace_back(work);
        for (auto& th : pool) th.join();
    }
    if (failure) std::rethrow_exception(failure);
}

struct SweepEnv {
    std::string id;
    TabularMdp mdp;
    AgentConfig base;  // T is overwritten per cell
};

struct SweepRow {
    std::string env_id;
    std::uint64_t T = 0;
    std::uint64_t seed_label = 0;
    std::uint64_t cell_seed = 0;
    double gain_star = 0.0;
    double final_regret = 0.0;
    double average_regret = 0.0;
    double post_burn_in_regret = 0.0;
    std::uint64_t epochs = 0;
    std::uint64_t epoch_cap = 0;
    std::uint64_t optimism_checks = 0;
    std::uint64_t optimism_violations = 0;
};

struct SweepEnvFit {
    std::string env_id;
    PowerLawFit fit;
    std::vector<double> T;
    std::vector<double> mean_regret;  // mean post-burn-in regret per T
};

struct SweepResult {
    std::vector<SweepRow> rows;
    std::vector<SweepEnvFit> fits;
};

struct SweepOptions {
    std::uint64_t master_seed = 0;
    bool monitor_optimism = false;
};

/// Cross product envs x T grid x seeds. Each cell's generator is derived from
/// (master seed, cell index), so the thread count never changes the result.
inline SweepResult sweep(const std::vector<SweepEnv>& envs, const std::vector<std::uint64_t>& T_grid,
                         const std::vector<std::uint64_t>& seeds, const SweepOptions& opt = {}) {
    struct Cell {
        std::size_t env;
        std::uint64_t T;
        std::uint64_t seed;
    };
    std::vector<Cell> cells;
    for (std::size_t e = 0; e < envs.size(); ++e)
        for (auto T : T_grid)
            for (auto sd : seeds) cells.push_back({e, T, sd});

    std::vector<double> gains(envs.size());
    parallel_for(envs.size(), [&](std::size_t e) { gains[e] = solve_gain(envs[e].mdp, {}); });

    SweepResult out;
    out.rows.resize(cells.size());
    parallel_for(cells.size(), [&](std::size_t i) {
        const Cell& c = cells[i];
        const SweepEnv& env = envs[c.env];
        AgentConfig cfg = env.base;
        cfg.T = c.T;
        RunOptions ro;
        ro.env_id = env.id;
        ro.record_steps = false;
        ro.keep_snapshots = false;
        ro.monitor_optimism = opt.monitor_optimism;
        ro.gain_star = gains[c.env];
        const std::uint64_t cell_seed = splitmix64(opt.master_seed ^ splitmix64(i));
        const RegretRecord rec = run_experiment(env.mdp, cfg, cell_seed, ro);
        SweepRow& row = out.rows[i];
        row.env_id = env.id;
        row.T = c.T;
        row.seed_label = c.seed;
        row.cell_seed = cell_seed;
        row.gain_star = rec.gain_star;
        row.final_regret = rec.final_regret;
        row.average_regret = rec.average_regret();
        row.post_burn_in_regret = post_burn_in_regret(rec);
        row.epochs = rec.epochs;
        row.epoch_cap = rec.epoch_cap;
        if (rec.optimism) {
            row.optimism_checks = rec.optimism->checks + rec.optimism->epoch_checks;
            row.optimism_violations = rec.optimism->violations + rec.optimism->epoch_violations;
        }
    });

    for (const auto& env : envs) {
        SweepEnvFit f;
        f.env_id = env.id;
        for (auto T : T_grid) {
            double sum = 0.0;
            std::size_t n = 0;
            for (const auto& r : out.rows)
                if (r.env_id == env.id && r.T == T) {
                    sum += r.post_burn_in_regret;
                    ++n;
                }
            f.T.push_back(static_cast<double>(T));
            f.mean_regret.push_back(n ? sum / static_cast<double>(n) : 0.0);
        }
        try {
            f.fit = fit_power_law(f.T, f.mean_regret);
        } catch (const std::invalid_argument&) {
            // fewer than two usable grid points: leave the fit empty
        }
        out.fits.push_back(std::move(f));
    }
    return out;
}

}  // namespace freqstate
