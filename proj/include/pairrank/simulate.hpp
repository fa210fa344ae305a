#pragma once

#include <array>
#include <atomic>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <thread>
#include <vector>

#include "pairrank/core.hpp"
#include "pairrank/diagnostics.hpp"
#include "pairrank/io.hpp"
#include "pairrank/judge.hpp"
#include "pairrank/metrics.hpp"
#include "pairrank/rng.hpp"
#include "pairrank/solvers.hpp"

namespace pairrank {

enum class Distribution { Uniform, Normal, LogNormal };

inline const char* to_string(Distribution d) {
    switch (d) {
        case Distribution::Uniform: return "uniform";
        case Distribution::Normal: return "normal";
        case Distribution::LogNormal: return "lognormal";
    }
    return "normal";
}

inline Distribution distribution_from_string(const std::string& s) {
    if (s == "uniform") return Distribution::Uniform;
    if (s == "normal") return Distribution::Normal;
    if (s == "lognormal") return Distribution::LogNormal;
    throw Error("unknown distribution '" + s + "' (expected uniform, normal, or lognormal)");
}

// Latent per-item wealth scores; everything downstream observes these only
// through noise.
struct World {
    int n = 0;
    std::vector<double> latent;
    std::uint64_t seed = 0;
};

inline World gen_world(int n, Distribution dist, std::uint64_t seed) {
    if (n < 2) throw Error("world needs at least 2 items");
    World w;
    w.n = n;
    w.seed = seed;
    w.latent.resize(n);
    Rng rng(mix64(seed, 0x776f726c64ULL));
    for (int i = 0; i < n; ++i) {
        switch (dist) {
            case Distribution::Uniform: w.latent[i] = rng.next_double(); break;
            case Distribution::Normal: w.latent[i] = rng.next_normal(); break;
            case Distribution::LogNormal: w.latent[i] = std::exp(rng.next_normal()); break;
        }
    }
    return w;
}

struct NoiseSpec {
    double gt_sigma = 0.0;  // additive Gaussian noise on the observed ground truth
    double jitter = 0.0;    // independent noise on the second observer
    // 0 is the deterministic limit: the higher latent score always wins.
    double judge_temperature = 1.0;
    double ambiguity_eps = 0.0;

    void validate() const {
        if (gt_sigma < 0.0) throw Error("gt_sigma must be >= 0");
        if (jitter < 0.0) throw Error("jitter must be >= 0");
        if (judge_temperature < 0.0) throw Error("judge_temperature must be >= 0");
        if (ambiguity_eps < 0.0 || ambiguity_eps >= 1.0)
            throw Error("ambiguity_eps must be in [0, 1)");
    }
};

struct ObservedTruth {
    GroundTruth primary;    // the index used for evaluation
    GroundTruth secondary;  // an independent second measurement of the same world
};

// Two noisy views of the latent scores. Their mutual correlation bounds
// what any ranking method can achieve against either one.
inline ObservedTruth observe_ground_truth(const World& world, const NoiseSpec& noise,
                                          std::uint64_t seed) {
    noise.validate();
    std::vector<double> primary(world.n), secondary(world.n);
    Rng rng_p(mix64(seed, 0x6774ULL, 1));
    Rng rng_s(mix64(seed, 0x6774ULL, 2));
    for (int i = 0; i < world.n; ++i)
        primary[i] = world.latent[i] + noise.gt_sigma * rng_p.next_normal();
    for (int i = 0; i < world.n; ++i)
        secondary[i] = world.latent[i] + noise.jitter * rng_s.next_normal();
    return {GroundTruth::from_scores(std::move(primary)),
            GroundTruth::from_scores(std::move(secondary))};
}

struct SolverRow {
    Algorithm algorithm = Algorithm::ILSR;
    double spearman_rho = 0.0;
    double quintile_mcc = 0.0;
    std::array<double, 4> dichotomy_mcc{};  // splits 1..4
    std::int64_t conflicts = 0;
    std::int64_t ranking_conflicts = 0;
    int iterations = 0;
    bool converged = true;
    std::vector<int> order;  // wealthiest first
};

struct ExperimentReport {
    int n = 0;
    std::int64_t pairs_total = 0;
    std::int64_t ties = 0;
    std::int64_t valid = 0;
    std::int64_t three_cycles = 0;
    std::int64_t clique_equiv_n = 0;
    std::int64_t max_three_cycles = 0;
    double gt_self_spearman = 0.0;  // primary vs secondary observer
    GroundTruth primary;
    std::vector<SolverRow> solvers;  // ilsr, lsr, rc
};

// Full pipeline on one synthetic world: schedule all pairs, judge them
// with a BTL judge built from the latent scores, fit all three solvers and
// evaluate each against the noisy primary ground truth.
inline ExperimentReport recovery_experiment(const World& world, const NoiseSpec& noise,
                                            const SolverConfig& cfg, std::uint64_t seed,
                                            int jobs = 1) {
    noise.validate();
    cfg.validate();
    if (world.n < 5) throw Error("recovery experiment needs at least 5 items for quintiles");

    const auto pairs = schedule_pairs(world.n, mix64(seed, 0x5c3edULL));
    SyntheticJudge judge(world.latent, {noise.judge_temperature, noise.ambiguity_eps,
                                        mix64(seed, 0x1d6eULL)});
    RunOptions opts;
    opts.prompt = default_prompt();
    opts.concurrency = jobs;
    opts.now = [] { return std::int64_t{0}; };
    auto run = run_all(judge, image_refs_for(Items::numbered(world.n)), pairs, opts);

    const auto obs = observe_ground_truth(world, noise, mix64(seed, 0x0b5eULL));

    ExperimentReport rep;
    rep.n = world.n;
    rep.pairs_total = static_cast<std::int64_t>(run.records.size());
    rep.ties = run.stats.ties;
    rep.primary = obs.primary;

    const auto w = build_win_matrix(run.records, world.n);
    rep.valid = w.total();
    const auto graph = TournamentGraph::from_records(world.n, run.records);
    rep.three_cycles = graph.count_three_cycles();
    rep.clique_equiv_n = clique_equivalent_size(graph.num_edges());
    rep.max_three_cycles = rep.clique_equiv_n >= 3 ? max_three_cycles(rep.clique_equiv_n) : 0;
    rep.gt_self_spearman = spearman(obs.primary.score, obs.secondary.score);

    const auto& true_q = obs.primary.quintiles();
    for (Algorithm algo : {Algorithm::ILSR, Algorithm::LSR, Algorithm::RC}) {
        const auto fit = solve_ranking(w, algo, cfg);
        SolverRow row;
        row.algorithm = algo;
        row.spearman_rho = spearman(obs.primary.score, fit.scores);
        const auto pred_q = assign_quintiles(fit.scores);
        row.quintile_mcc = multiclass_mcc(ConfusionMatrix::from_labels(true_q, pred_q, 5));
        for (int split = 1; split <= 4; ++split)
            row.dichotomy_mcc[split - 1] = dichotomy_mcc(true_q, pred_q, split);
        row.conflicts = conflicts(fit.order, run.records);
        row.ranking_conflicts = ranking_conflicts(fit.order, run.records);
        row.iterations = fit.iterations;
        row.converged = fit.converged;
        row.order = fit.order;
        rep.solvers.push_back(std::move(row));
    }
    return rep;
}

// ---- experiment grids ------------------------------------------------------

struct ExperimentSpec {
    int n = 100;
    Distribution distribution = Distribution::Normal;
    std::uint64_t world_seed = 1;
    std::vector<double> gt_sigma = {0.0};
    std::vector<double> jitter = {0.0};
    std::vector<double> temperature = {1.0};
    std::vector<double> eps = {0.0};
    std::vector<std::uint64_t> seeds = {1};
    SolverConfig solver;

    static ExperimentSpec from_kv(const std::map<std::string, std::string>& kv);
};

namespace detail {

inline std::vector<std::string> split_list(const std::string& s) {
    std::vector<std::string> parts;
    std::size_t start = 0;
    while (start <= s.size()) {
        std::size_t end = s.find(',', start);
        if (end == std::string::npos) end = s.size();
        std::string part = s.substr(start, end - start);
        const auto a = part.find_first_not_of(" \t");
        if (a == std::string::npos) {
            part.clear();
        } else {
            const auto b = part.find_last_not_of(" \t");
            part = part.substr(a, b - a + 1);
        }
        if (!part.empty()) parts.push_back(part);
        start = end + 1;
    }
    return parts;
}

inline std::vector<double> parse_double_list(const std::string& s, const std::string& what) {
    std::vector<double> out;
    for (const auto& part : split_list(s)) out.push_back(parse_double(part, what));
    if (out.empty()) throw Error("empty list for " + what);
    return out;
}

}  // namespace detail

inline ExperimentSpec ExperimentSpec::from_kv(const std::map<std::string, std::string>& kv) {
    ExperimentSpec spec;
    const std::vector<std::string> known = {"n",           "distribution", "world_seed",
                                            "gt_sigma",    "jitter",       "temperature",
                                            "eps",         "seeds",        "seed_count",
                                            "alpha",       "tol",          "max_iter"};
    for (const auto& [key, value] : kv) {
        bool ok = false;
        for (const auto& k : known) ok = ok || k == key;
        if (!ok) throw Error("unknown experiment key '" + key + "'");
        (void)value;
    }
    auto get = [&](const char* key) -> const std::string* {
        const auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (const auto* v = get("n")) spec.n = detail::parse_int(*v, "n");
    if (spec.n < 5) throw Error("experiment n must be >= 5");
    if (const auto* v = get("distribution")) spec.distribution = distribution_from_string(*v);
    if (const auto* v = get("world_seed"))
        spec.world_seed = static_cast<std::uint64_t>(detail::parse_double(*v, "world_seed"));
    if (const auto* v = get("gt_sigma")) spec.gt_sigma = detail::parse_double_list(*v, "gt_sigma");
    if (const auto* v = get("jitter")) spec.jitter = detail::parse_double_list(*v, "jitter");
    if (const auto* v = get("temperature"))
        spec.temperature = detail::parse_double_list(*v, "temperature");
    if (const auto* v = get("eps")) spec.eps = detail::parse_double_list(*v, "eps");
    if (get("seeds") && get("seed_count"))
        throw Error("give either seeds or seed_count, not both");
    if (const auto* v = get("seeds")) {
        spec.seeds.clear();
        for (const auto& part : detail::split_list(*v))
            spec.seeds.push_back(static_cast<std::uint64_t>(detail::parse_int(part, "seed")));
        if (spec.seeds.empty()) throw Error("empty seeds list");
    } else if (const auto* v2 = get("seed_count")) {
        const int count = detail::parse_int(*v2, "seed_count");
        if (count < 1) throw Error("seed_count must be >= 1");
        spec.seeds.clear();
        for (int s = 1; s <= count; ++s) spec.seeds.push_back(static_cast<std::uint64_t>(s));
    }
    if (const auto* v = get("alpha")) spec.solver.alpha = detail::parse_double(*v, "alpha");
    if (const auto* v = get("tol")) spec.solver.tol = detail::parse_double(*v, "tol");
    if (const auto* v = get("max_iter")) spec.solver.max_iter = detail::parse_int(*v, "max_iter");
    spec.solver.validate();
    return spec;
}

// One row per (grid point, seed, solver).
struct ReportRow {
    int n = 0;
    Distribution distribution = Distribution::Normal;
    double gt_sigma = 0.0;
    double jitter = 0.0;
    double temperature = 0.0;
    double eps = 0.0;
    std::uint64_t seed = 0;
    Algorithm algorithm = Algorithm::ILSR;
    double spearman_rho = 0.0;
    double quintile_mcc = 0.0;
    std::array<double, 4> dichotomy_mcc{};
    std::int64_t conflicts = 0;
    std::int64_t ranking_conflicts = 0;
    std::int64_t ties = 0;
    std::int64_t valid = 0;
    std::int64_t three_cycles = 0;
    double gt_self_spearman = 0.0;
    int iterations = 0;
    bool converged = true;
};

// Runs the full cartesian grid. Experiments are independent, so they fan
// out across jobs; rows come back in grid order regardless.
inline std::vector<ReportRow> run_grid(const ExperimentSpec& spec, int jobs = 1) {
    if (jobs < 1) throw Error("jobs must be >= 1");
    const World world = gen_world(spec.n, spec.distribution, spec.world_seed);

    struct Task {
        NoiseSpec noise;
        std::uint64_t seed;
    };
    std::vector<Task> tasks;
    for (double sigma : spec.gt_sigma)
        for (double jit : spec.jitter)
            for (double temp : spec.temperature)
                for (double e : spec.eps)
                    for (std::uint64_t seed : spec.seeds)
                        tasks.push_back({NoiseSpec{sigma, jit, temp, e}, seed});
    for (const auto& t : tasks) t.noise.validate();

    std::vector<ExperimentReport> reports(tasks.size());
    std::atomic<std::size_t> next{0};
    std::mutex fatal_mu;
    std::exception_ptr fatal;
    auto worker = [&]() {
        for (;;) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= tasks.size()) return;
            try {
                reports[idx] =
                    recovery_experiment(world, tasks[idx].noise, spec.solver, tasks[idx].seed);
            } catch (...) {
                std::lock_guard<std::mutex> lock(fatal_mu);
                if (!fatal) fatal = std::current_exception();
                return;
            }
        }
    };
    const int threads_wanted =
        static_cast<int>(std::min<std::size_t>(static_cast<std::size_t>(jobs), tasks.size()));
    if (threads_wanted <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(threads_wanted);
        for (int t = 0; t < threads_wanted; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (fatal) std::rethrow_exception(fatal);

    std::vector<ReportRow> rows;
    rows.reserve(tasks.size() * 3);
    for (std::size_t i = 0; i < tasks.size(); ++i) {
        for (const auto& sr : reports[i].solvers) {
            ReportRow row;
            row.n = spec.n;
            row.distribution = spec.distribution;
            row.gt_sigma = tasks[i].noise.gt_sigma;
            row.jitter = tasks[i].noise.jitter;
            row.temperature = tasks[i].noise.judge_temperature;
            row.eps = tasks[i].noise.ambiguity_eps;
            row.seed = tasks[i].seed;
            row.algorithm = sr.algorithm;
            row.spearman_rho = sr.spearman_rho;
            row.quintile_mcc = sr.quintile_mcc;
            row.dichotomy_mcc = sr.dichotomy_mcc;
            row.conflicts = sr.conflicts;
            row.ranking_conflicts = sr.ranking_conflicts;
            row.ties = reports[i].ties;
            row.valid = reports[i].valid;
            row.three_cycles = reports[i].three_cycles;
            row.gt_self_spearman = reports[i].gt_self_spearman;
            row.iterations = sr.iterations;
            row.converged = sr.converged;
            rows.push_back(std::move(row));
        }
    }
    return rows;
}

inline void write_report_csv(const std::string& path, const std::vector<ReportRow>& rows) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out.precision(17);
    out << "n,distribution,gt_sigma,jitter,temperature,eps,seed,algorithm,spearman,"
           "quintile_mcc,dich_1,dich_2,dich_3,dich_4,conflicts,ranking_conflicts,ties,valid,"
           "three_cycles,gt_self_spearman,iterations,converged\n";
    for (const auto& r : rows) {
        out << r.n << ',' << to_string(r.distribution) << ',' << r.gt_sigma << ',' << r.jitter
            << ',' << r.temperature << ',' << r.eps << ',' << r.seed << ','
            << to_string(r.algorithm) << ',' << r.spearman_rho << ',' << r.quintile_mcc;
        for (double d : r.dichotomy_mcc) out << ',' << d;
        out << ',' << r.conflicts << ',' << r.ranking_conflicts << ',' << r.ties << ','
            << r.valid << ',' << r.three_cycles << ',' << r.gt_self_spearman << ','
            << r.iterations << ',' << (r.converged ? 1 : 0) << '\n';
    }
    if (!out) throw Error("write to '" + path + "' failed");
}

// Fig-3 style scatter: each item's rank under the ground truth against its
// rank under the fitted ordering.
inline void write_scatter_csv(const std::string& path, const GroundTruth& gt,
                              const std::vector<int>& fitted_order) {
    const auto gt_rank = inverse_permutation(ranking_from_scores(gt.score));
    const auto pred_rank = inverse_permutation(fitted_order);
    if (gt_rank.size() != pred_rank.size()) throw Error("ranking sizes disagree");
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << "item_id,true_rank,predicted_rank\n";
    for (std::size_t i = 0; i < gt_rank.size(); ++i)
        out << i << ',' << gt_rank[i] << ',' << pred_rank[i] << '\n';
    if (!out) throw Error("write to '" + path + "' failed");
}

}  // namespace pairrank
