#include "cli.hpp"

#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <iostream>
#include <memory>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "pairrank/core.hpp"
#include "pairrank/diagnostics.hpp"
#include "pairrank/io.hpp"
#include "pairrank/judge.hpp"
#include "pairrank/llm_judge.hpp"
#include "pairrank/metrics.hpp"
#include "pairrank/rng.hpp"
#include "pairrank/simulate.hpp"
#include "pairrank/solvers.hpp"
#include "pairrank/version.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace pairrank::cli {
namespace {

std::string format_count(std::int64_t v) {
    std::string s = std::to_string(v);
    const int start = (!s.empty() && s[0] == '-') ? 1 : 0;
    int pos = static_cast<int>(s.size()) - 3;
    while (pos > start) {
        s.insert(static_cast<std::size_t>(pos), ",");
        pos -= 3;
    }
    return s;
}

// Every output location gets a manifest describing the run that made it.
void write_manifest(const std::string& path, const std::string& command,
                    const std::vector<std::string>& args,
                    const std::vector<std::string>& inputs,
                    const std::vector<std::string>& outputs, std::int64_t started_at,
                    const json& extra = json::object()) {
    json m{{"tool", "pairrank"},
           {"version", kVersion},
           {"command", command},
           {"arguments", args},
           {"inputs", inputs},
           {"outputs", outputs},
           {"started_at", iso8601_format(started_at)},
           {"finished_at", iso8601_format(static_cast<std::int64_t>(std::time(nullptr)))}};
    for (const auto& [k, v] : extra.items()) m[k] = v;
    write_text_file(path, m.dump(2) + "\n");
}

json estimate_json(const MetricEstimate& e) {
    return json{{"value", e.value}, {"std", e.std}, {"replicates", e.replicates}};
}

json histogram_json(const Histogram& h) {
    json bins = json::array();
    for (const auto& [lower, count] : h.bins) bins.push_back({{"lower", lower}, {"count", count}});
    return json{{"bin_width", h.bin_width},
                {"bins", bins},
                {"total_count", h.total_count},
                {"weighted_total", h.weighted_total}};
}

json diagnostics_json(const DiagnosticsReport& rep, int n, std::int64_t records,
                      std::int64_t ties, const std::string& against) {
    return json{{"n", n},
                {"records", records},
                {"ties", ties},
                {"valid", records - ties},
                {"against", against},
                {"three_cycles", rep.three_cycles},
                {"clique_equiv_n", rep.clique_equiv_n},
                {"max_three_cycles", rep.max_three_cycles},
                {"conflicts", rep.conflicts},
                {"ranking_conflicts", rep.ranking_conflicts},
                {"histogram", histogram_json(rep.disagreement_histogram)}};
}

std::int64_t count_ties(const std::vector<ComparisonRecord>& records) {
    std::int64_t ties = 0;
    for (const auto& r : records)
        if (r.outcome == Outcome::Tie) ++ties;
    return ties;
}

// ---- compare ---------------------------------------------------------------

struct CompareSetup {
    std::string judge_kind = "llm";
    LlmJudgeConfig llm;
    std::string api_key_env = "PAIRRANK_API_KEY";
    int concurrency = 1;
    std::int64_t budget = -1;
    std::string prompt_path;
    std::string cache_dir;
    std::string log_path;
    int max_attempts = 2;
    // synthetic judge
    std::string scores_path;
    double temperature = 1.0;
    double eps = 0.0;
    bool judge_seed_set = false;
    std::uint64_t judge_seed = 0;
};

CompareSetup parse_compare_config(const std::string& path) {
    const auto kv = read_kv_config(path);
    static const std::vector<std::string> known = {
        "judge",        "endpoint",          "model_name",      "api_key_env",
        "rate_limit_per_min", "concurrency_limit", "budget_max_calls", "prompt_path",
        "cache_dir",    "log_path",          "max_attempts",    "timeout_seconds",
        "scores_path",  "temperature",       "eps",             "judge_seed"};
    for (const auto& [key, value] : kv) {
        bool ok = false;
        for (const auto& k : known) ok = ok || k == key;
        if (!ok) throw Error("unknown config key '" + key + "' in " + path);
        (void)value;
    }
    CompareSetup s;
    auto get = [&](const char* key) -> const std::string* {
        const auto it = kv.find(key);
        return it == kv.end() ? nullptr : &it->second;
    };
    if (const auto* v = get("judge")) s.judge_kind = *v;
    if (s.judge_kind != "llm" && s.judge_kind != "synthetic")
        throw Error("judge must be llm or synthetic, got '" + s.judge_kind + "'");
    if (const auto* v = get("endpoint")) s.llm.endpoint = *v;
    if (const auto* v = get("model_name")) s.llm.model_name = *v;
    if (const auto* v = get("api_key_env")) s.api_key_env = *v;
    if (const auto* v = get("rate_limit_per_min"))
        s.llm.rate_limit_per_min = detail::parse_int(*v, "rate_limit_per_min");
    if (const auto* v = get("timeout_seconds"))
        s.llm.timeout_seconds = detail::parse_int(*v, "timeout_seconds");
    if (const auto* v = get("concurrency_limit"))
        s.concurrency = detail::parse_int(*v, "concurrency_limit");
    if (const auto* v = get("budget_max_calls"))
        s.budget = detail::parse_int(*v, "budget_max_calls");
    if (const auto* v = get("prompt_path")) s.prompt_path = *v;
    if (const auto* v = get("cache_dir")) s.cache_dir = *v;
    if (const auto* v = get("log_path")) s.log_path = *v;
    if (const auto* v = get("max_attempts")) s.max_attempts = detail::parse_int(*v, "max_attempts");
    if (const auto* v = get("scores_path")) s.scores_path = *v;
    if (const auto* v = get("temperature")) s.temperature = detail::parse_double(*v, "temperature");
    if (const auto* v = get("eps")) s.eps = detail::parse_double(*v, "eps");
    if (const auto* v = get("judge_seed")) {
        s.judge_seed = static_cast<std::uint64_t>(detail::parse_int(*v, "judge_seed"));
        s.judge_seed_set = true;
    }
    if (s.judge_kind == "llm") {
        if (s.llm.endpoint.empty()) throw Error("config needs endpoint for the llm judge");
        if (s.llm.model_name.empty()) throw Error("config needs model_name for the llm judge");
    } else if (s.scores_path.empty()) {
        throw Error("config needs scores_path for the synthetic judge");
    }
    return s;
}

struct CompareArgs {
    std::string images;
    std::string config;
    std::string out;
    std::uint64_t seed = 1;
    int jobs = 0;  // 0 = take concurrency_limit from the config
};

int cmd_compare(const CompareArgs& a, const std::vector<std::string>& argv) {
    const auto started = static_cast<std::int64_t>(std::time(nullptr));
    const auto manifest = read_image_manifest(a.images);
    const int n = manifest.items.size();
    auto setup = parse_compare_config(a.config);
    const std::string log_path = !a.out.empty() ? a.out : setup.log_path;
    if (log_path.empty())
        throw Error("no output log: pass --out or set log_path in the config");

    const std::string prompt =
        setup.prompt_path.empty() ? default_prompt() : read_text_file(setup.prompt_path);

    std::unique_ptr<Judge> judge;
    if (setup.judge_kind == "llm") {
        if (const char* key = std::getenv(setup.api_key_env.c_str())) setup.llm.api_key = key;
        judge = std::make_unique<LlmJudge>(setup.llm);
    } else {
        const auto gt = read_ground_truth_csv(setup.scores_path);
        if (gt.items.labels != manifest.items.labels)
            throw Error("scores_path items do not match the image manifest");
        SyntheticJudge::Config jc;
        jc.temperature = setup.temperature;
        jc.ambiguity_eps = setup.eps;
        jc.seed = setup.judge_seed_set ? setup.judge_seed : mix64(a.seed, 0x73796eULL);
        judge = std::make_unique<SyntheticJudge>(gt.scores, jc);
    }

    const auto pairs = schedule_pairs(n, a.seed);
    ComparisonCache cache;
    const bool use_cache = !setup.cache_dir.empty();
    if (use_cache) {
        fs::create_directories(setup.cache_dir);
        cache.attach(setup.cache_dir + "/cache.jsonl");
    }

    RunOptions opts;
    opts.prompt = prompt;
    opts.concurrency = a.jobs > 0 ? a.jobs : setup.concurrency;
    opts.budget_max_calls = setup.budget;
    opts.log_path = log_path;
    opts.cache = use_cache ? &cache : nullptr;
    opts.max_attempts = setup.max_attempts;
    const auto res = run_all(*judge, image_refs_for(manifest), pairs, opts);

    const auto& st = res.stats;
    std::cout << "n: " << n << "\n";
    std::cout << "pairs: " << format_count(st.pairs_done + st.pairs_resumed) << "/"
              << format_count(st.pairs_total) << " settled (" << format_count(st.pairs_resumed)
              << " resumed, " << format_count(st.pairs_failed) << " failed, "
              << format_count(st.pairs_over_budget) << " over budget)\n";
    std::cout << "ties: " << format_count(st.ties) << "\n";
    std::cout << st.judge_calls << " new calls, " << st.cache_hits << " cache hits\n";

    std::vector<std::string> outputs = {log_path};
    std::string remaining_path;
    if (!res.remaining.empty()) {
        remaining_path = log_path + ".remaining.csv";
        write_remaining_csv(remaining_path, res.remaining);
        outputs.push_back(remaining_path);
        std::cout << "remaining pairs written to " << remaining_path << "\n";
    }
    write_manifest(log_path + ".manifest.json", "compare", argv, {a.images, a.config}, outputs,
                   started,
                   json{{"seed", a.seed}, {"judge_id", judge->id()}, {"n", n}});
    return res.remaining.empty() ? 0 : 2;
}

// ---- rank ------------------------------------------------------------------

struct RankArgs {
    std::string log;
    std::string images;
    std::string algo = "ilsr";
    double alpha = 1e-9;
    double tol = 1e-9;
    int max_iter = 100;
    std::string out;
};

int cmd_rank(const RankArgs& a, const std::vector<std::string>& argv) {
    const auto started = static_cast<std::int64_t>(std::time(nullptr));
    if (a.alpha <= 0.0)
        throw Error("alpha must be > 0: zero regularization leaves the comparison graph "
                    "disconnected and the solve fails");
    const auto records = read_log(a.log);
    if (records.empty()) throw Error("log '" + a.log + "' has no records");

    Items items;
    if (!a.images.empty()) {
        items = read_image_manifest(a.images).items;
    } else {
        int n = 0;
        for (const auto& r : records) n = std::max({n, r.first + 1, r.second + 1});
        items = Items::numbered(n);
    }
    const int n = items.size();

    const auto w = build_win_matrix(records, n);
    const std::int64_t ties = static_cast<std::int64_t>(records.size()) - w.total();
    SolverConfig cfg;
    cfg.alpha = a.alpha;
    cfg.tol = a.tol;
    cfg.max_iter = a.max_iter;
    cfg.validate();
    const auto fit = solve_ranking(w, algorithm_from_string(a.algo), cfg);
    write_scores_csv(a.out, items, fit);

    std::cout << "n: " << n << "\n";
    std::cout << format_count(w.total()) << " valid comparisons ("
              << format_count(static_cast<std::int64_t>(records.size())) << " records, "
              << format_count(ties) << " ties)\n";
    std::cout << "algorithm " << to_string(fit.algorithm) << ": " << fit.iterations
              << (fit.iterations == 1 ? " iteration, " : " iterations, ")
              << (fit.converged ? "converged" : "not converged") << "\n";

    write_manifest(a.out + ".manifest.json", "rank", argv,
                   a.images.empty() ? std::vector<std::string>{a.log}
                                    : std::vector<std::string>{a.log, a.images},
                   {a.out}, started,
                   json{{"algorithm", a.algo}, {"alpha", a.alpha}, {"n", n}});
    return 0;
}

// ---- diagnose ---------------------------------------------------------------

struct DiagnoseArgs {
    std::string log;
    std::vector<std::string> rankings;
    std::string ground_truth;
    std::string out_dir;
    int bin_width = 1;
};

int cmd_diagnose(const DiagnoseArgs& a, const std::vector<std::string>& argv) {
    const auto started = static_cast<std::int64_t>(std::time(nullptr));
    if (a.rankings.empty() && a.ground_truth.empty())
        throw Error("nothing to diagnose against: pass --ranking and/or --ground-truth");
    const auto records = read_log(a.log);
    const std::int64_t ties = count_ties(records);

    int n = -1;
    auto check_n = [&](int m, const std::string& what) {
        if (n == -1) n = m;
        if (n != m)
            throw Error(what + " has " + std::to_string(m) + " items but the run has " +
                        std::to_string(n));
    };

    std::vector<ScoresTable> tables;
    for (const auto& path : a.rankings) {
        tables.push_back(read_scores_csv(path));
        check_n(tables.back().items.size(), path);
    }
    GroundTruthTable gt;
    if (!a.ground_truth.empty()) {
        gt = read_ground_truth_csv(a.ground_truth);
        check_n(static_cast<int>(gt.scores.size()), a.ground_truth);
    }
    const auto graph = TournamentGraph::from_records(n, records);

    fs::create_directories(a.out_dir);
    std::vector<std::string> outputs;
    auto emit = [&](const std::string& tag, const std::vector<int>& order) {
        const auto rep = make_diagnostics_report(graph, order, records, a.bin_width);
        const std::string report_path = a.out_dir + "/report_" + tag + ".json";
        const std::string hist_path = a.out_dir + "/hist_" + tag + ".csv";
        write_text_file(report_path,
                        diagnostics_json(rep, n, static_cast<std::int64_t>(records.size()), ties,
                                         tag)
                                .dump(2) +
                            "\n");
        write_histogram_csv(hist_path, rep.disagreement_histogram);
        outputs.push_back(report_path);
        outputs.push_back(hist_path);
        std::cout << tag << ": conflicts " << format_count(rep.conflicts)
                  << ", ranking conflicts " << format_count(rep.ranking_conflicts)
                  << ", 3-cycles " << format_count(rep.three_cycles) << "\n";
    };
    for (const auto& t : tables) emit(to_string(t.result.algorithm), t.result.order);
    if (!a.ground_truth.empty()) emit("ground_truth", ranking_from_scores(gt.scores));

    std::vector<std::string> inputs = {a.log};
    inputs.insert(inputs.end(), a.rankings.begin(), a.rankings.end());
    if (!a.ground_truth.empty()) inputs.push_back(a.ground_truth);
    write_manifest(a.out_dir + "/run_manifest.json", "diagnose", argv, inputs, outputs, started,
                   json{{"bin_width", a.bin_width}, {"n", n}});
    return 0;
}

// ---- evaluate ----------------------------------------------------------------

struct EvaluateArgs {
    std::string ranking;
    std::string ground_truth;
    std::string compare_with;
    int replicates = 1000;
    std::uint64_t seed = 1;
    double level = 0.05;
    std::string out;
};

int cmd_evaluate(const EvaluateArgs& a, const std::vector<std::string>& argv) {
    const auto started = static_cast<std::int64_t>(std::time(nullptr));
    const auto rt = read_scores_csv(a.ranking);
    const auto gt = read_ground_truth_csv(a.ground_truth);
    if (rt.items.labels != gt.items.labels)
        throw Error("ranking and ground truth item sets do not match");
    const int n = static_cast<int>(gt.scores.size());
    if (n < 5) throw Error("evaluation needs at least 5 items for quintile metrics");

    const auto& x = gt.scores;
    const auto& y = rt.result.scores;

    const PairedMetric sp = [](const std::vector<double>& u, const std::vector<double>& v) {
        return spearman(u, v);
    };
    const PairedMetric pe = [](const std::vector<double>& u, const std::vector<double>& v) {
        return pearson(u, v);
    };
    const PairedMetric qmcc = [](const std::vector<double>& u, const std::vector<double>& v) {
        return multiclass_mcc(
            ConfusionMatrix::from_labels(assign_quintiles(u), assign_quintiles(v), 5));
    };

    json out;
    out["n"] = n;
    out["algorithm"] = to_string(rt.result.algorithm);
    out["bootstrap_replicates"] = a.replicates;
    out["seed"] = a.seed;
    const auto est_sp = bootstrap(sp, x, y, a.replicates, mix64(a.seed, 1));
    out["spearman"] = estimate_json(est_sp);
    const auto est_pe = bootstrap(pe, x, y, a.replicates, mix64(a.seed, 2));
    out["pearson"] = estimate_json(est_pe);
    out["r2"] = est_pe.value * est_pe.value;
    out["quintile_mcc"] = estimate_json(bootstrap(qmcc, x, y, a.replicates, mix64(a.seed, 3)));
    static const char* kDichNames[4] = {"1_vs_2345", "12_vs_345", "123_vs_45", "1234_vs_5"};
    for (int split = 1; split <= 4; ++split) {
        const PairedMetric dm = [split](const std::vector<double>& u,
                                        const std::vector<double>& v) {
            return dichotomy_mcc(assign_quintiles(u), assign_quintiles(v), split);
        };
        out["dichotomies"][kDichNames[split - 1]] =
            estimate_json(bootstrap(dm, x, y, a.replicates, mix64(a.seed, 10 + split)));
    }

    if (!a.compare_with.empty()) {
        const auto other = read_scores_csv(a.compare_with);
        if (other.items.labels != gt.items.labels)
            throw Error("comparison ranking items do not match the ground truth");
        const auto sig = significance_diff(sp, x, y, other.result.scores, a.replicates,
                                           mix64(a.seed, 4), a.level);
        out["significance"] = json{{"versus", a.compare_with},
                                   {"versus_algorithm", to_string(other.result.algorithm)},
                                   {"metric", "spearman"},
                                   {"level", a.level},
                                   {"diff", sig.diff},
                                   {"ci_low", sig.ci_low},
                                   {"ci_high", sig.ci_high},
                                   {"p_like", sig.p_like},
                                   {"significant", sig.significant}};
    }

    write_text_file(a.out, out.dump(2) + "\n");
    std::cout << "spearman: " << est_sp.value << " (std " << est_sp.std << ")\n";
    std::cout << "quintile mcc: " << out["quintile_mcc"]["value"].get<double>() << " (std "
              << out["quintile_mcc"]["std"].get<double>() << ")\n";
    if (out.contains("significance"))
        std::cout << "significance vs " << a.compare_with << ": "
                  << (out["significance"]["significant"].get<bool>() ? "significant"
                                                                     : "not significant")
                  << " (p_like " << out["significance"]["p_like"].get<double>() << ")\n";

    std::vector<std::string> inputs = {a.ranking, a.ground_truth};
    if (!a.compare_with.empty()) inputs.push_back(a.compare_with);
    write_manifest(a.out + ".manifest.json", "evaluate", argv, inputs, {a.out}, started,
                   json{{"seed", a.seed}, {"bootstrap_replicates", a.replicates}});
    return 0;
}

// ---- simulate ----------------------------------------------------------------

struct SimulateArgs {
    std::string spec;
    std::string out_dir;
    int jobs = 1;
};

int cmd_simulate(const SimulateArgs& a, const std::vector<std::string>& argv) {
    const auto started = static_cast<std::int64_t>(std::time(nullptr));
    const auto spec = ExperimentSpec::from_kv(read_kv_config(a.spec));
    const auto rows = run_grid(spec, a.jobs);

    fs::create_directories(a.out_dir);
    const std::string report_path = a.out_dir + "/report.csv";
    write_report_csv(report_path, rows);
    std::vector<std::string> outputs = {report_path};

    // Scatter panels from the first grid point's first seed.
    const World world = gen_world(spec.n, spec.distribution, spec.world_seed);
    NoiseSpec first;
    first.gt_sigma = spec.gt_sigma[0];
    first.jitter = spec.jitter[0];
    first.judge_temperature = spec.temperature[0];
    first.ambiguity_eps = spec.eps[0];
    const auto rep = recovery_experiment(world, first, spec.solver, spec.seeds[0], a.jobs);
    for (const auto& row : rep.solvers) {
        const std::string path =
            a.out_dir + "/scatter_" + std::string(to_string(row.algorithm)) + ".csv";
        write_scatter_csv(path, rep.primary, row.order);
        outputs.push_back(path);
    }

    std::cout << "experiments: " << rows.size() / 3 << ", report rows: " << rows.size() << "\n";
    std::cout << "report: " << report_path << "\n";
    write_manifest(a.out_dir + "/run_manifest.json", "simulate", argv, {a.spec}, outputs, started,
                   json{{"n", spec.n}, {"world_seed", spec.world_seed}});
    return 0;
}

}  // namespace

int run(const std::vector<std::string>& args) {
    CLI::App app{"pairwise comparison ranking toolkit"};
    app.require_subcommand(1);

    CompareArgs ca;
    auto* compare = app.add_subcommand(
        "compare", "judge every pair of images and append the outcomes to a log");
    compare->add_option("--images", ca.images, "image manifest CSV (item_id,label,uri)")
        ->required();
    compare->add_option("--config", ca.config, "judge config file (key = value)")->required();
    compare->add_option("--out", ca.out, "output comparison log (JSON Lines)");
    compare->add_option("--seed", ca.seed, "seed for pair scheduling");
    compare->add_option("--jobs", ca.jobs, "parallel judge calls (overrides config)");

    RankArgs ra;
    auto* rank = app.add_subcommand("rank", "fit a global ranking from a comparison log");
    rank->add_option("--log", ra.log, "comparison log (JSON Lines)")->required();
    rank->add_option("--images", ra.images, "image manifest CSV for labels");
    rank->add_option("--algo", ra.algo, "ilsr, lsr, or rc")->default_val("ilsr");
    rank->add_option("--alpha", ra.alpha, "regularization pseudo-count, must be > 0");
    rank->add_option("--tol", ra.tol, "convergence tolerance");
    rank->add_option("--max-iter", ra.max_iter, "iteration cap");
    rank->add_option("--out", ra.out, "output scores CSV")->required();

    DiagnoseArgs da;
    auto* diagnose =
        app.add_subcommand("diagnose", "consistency analysis of a log against rankings");
    diagnose->add_option("--log", da.log, "comparison log (JSON Lines)")->required();
    diagnose->add_option("--ranking", da.rankings, "scores CSV (repeatable)");
    diagnose->add_option("--ground-truth", da.ground_truth, "ground truth CSV");
    diagnose->add_option("--out", da.out_dir, "output directory")->required();
    diagnose->add_option("--bin-width", da.bin_width, "histogram bin width");

    EvaluateArgs ea;
    auto* evaluate = app.add_subcommand("evaluate", "score a ranking against ground truth");
    evaluate->add_option("--ranking", ea.ranking, "scores CSV")->required();
    evaluate->add_option("--ground-truth", ea.ground_truth, "ground truth CSV")->required();
    evaluate->add_option("--compare-with", ea.compare_with,
                         "second scores CSV for a significance test");
    evaluate->add_option("--bootstrap", ea.replicates, "bootstrap replicates");
    evaluate->add_option("--seed", ea.seed, "bootstrap seed");
    evaluate->add_option("--level", ea.level, "significance level");
    evaluate->add_option("--out", ea.out, "output report JSON")->required();

    SimulateArgs sa;
    auto* simulate = app.add_subcommand("simulate", "run a synthetic experiment grid");
    simulate->add_option("--spec", sa.spec, "experiment spec file (key = value)")->required();
    simulate->add_option("--out", sa.out_dir, "output directory")->required();
    simulate->add_option("--jobs", sa.jobs, "parallel experiments");

    std::vector<const char*> argv;
    argv.reserve(args.size() + 1);
    argv.push_back("pairrank");
    for (const auto& s : args) argv.push_back(s.c_str());

    try {
        app.parse(static_cast<int>(argv.size()), argv.data());
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : 1;
    }

    try {
        if (compare->parsed()) return cmd_compare(ca, args);
        if (rank->parsed()) return cmd_rank(ra, args);
        if (diagnose->parsed()) return cmd_diagnose(da, args);
        if (evaluate->parsed()) return cmd_evaluate(ea, args);
        if (simulate->parsed()) return cmd_simulate(sa, args);
    } catch (const Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    }
    return 1;
}

}  // namespace pairrank::cli
