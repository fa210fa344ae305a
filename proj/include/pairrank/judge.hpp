#pragma once

#include <atomic>
#include <cctype>
#include <cmath>
#include <cstdint>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <functional>
#include <mutex>
#include <optional>
#include <string>
#include <thread>
#include <unordered_map>
#include <unordered_set>
#include <vector>

#include <json.hpp>

#include "pairrank/core.hpp"
#include "pairrank/io.hpp"
#include "pairrank/rng.hpp"

namespace pairrank {

// Transient transport problem (network, HTTP 5xx). The pair can be retried
// in a later run.
class TransportError : public Error {
    using Error::Error;
};

// Misconfiguration (bad endpoint, HTTP 4xx, bad credentials). Fatal for the
// whole run.
class ConfigError : public Error {
    using Error::Error;
};

struct ImageRef {
    int id = -1;
    std::string label;
    std::string uri;
    std::optional<std::int64_t> expires;  // epoch seconds, for pre-signed URLs
};

// A judge takes two presented images and returns the raw response text.
// Implementations throw TransportError for retryable failures and
// ConfigError for fatal ones.
class Judge {
public:
    virtual ~Judge() = default;
    virtual std::string judge(const ImageRef& first, const ImageRef& second,
                              const std::string& prompt, int attempt) = 0;
    virtual std::string id() const = 0;
};

inline const std::string& default_prompt() {
    static const std::string prompt =
        "Compare the following two images based on specific indicators of wealth such as: "
        "1) Quality of infrastructure (e.g., building materials, visible road conditions), "
        "2) Number of floors in the buildings, "
        "3) Amount of visible greenery or well-maintained areas, "
        "4) Presence of visible amenities (e.g., paved roads, power lines). "
        "Please respond with either 'Image 1 is wealthier' or 'Image 2 is wealthier'.";
    return prompt;
}

// ---- response parsing ------------------------------------------------------

enum class Decision { First, Second, Ambiguous };

// Lowercases, maps punctuation to spaces, splits letter/digit boundaries
// ("Image1" becomes "image 1") and collapses runs of spaces.
inline std::string normalize_response(const std::string& text) {
    std::string out;
    out.reserve(text.size() + 8);
    auto push_space = [&] {
        if (!out.empty() && out.back() != ' ') out += ' ';
    };
    char prev = ' ';
    for (unsigned char uc : text) {
        const char c = static_cast<char>(std::tolower(uc));
        const bool alpha = c >= 'a' && c <= 'z';
        const bool digit = c >= '0' && c <= '9';
        if (!alpha && !digit) {
            push_space();
            prev = ' ';
            continue;
        }
        const bool prev_alpha = prev >= 'a' && prev <= 'z';
        const bool prev_digit = prev >= '0' && prev <= '9';
        if ((alpha && prev_digit) || (digit && prev_alpha)) push_space();
        out += c;
        prev = c;
    }
    while (!out.empty() && out.back() == ' ') out.pop_back();
    return out;
}

// Two stages. First look for explicit claims: "image 1" or "image 2"
// followed within a few tokens by a word starting with "wealth"; a single
// claimed winner decides. Otherwise fall back to bare mentions: exactly one
// of the two images mentioned decides. Anything else is Ambiguous.
inline Decision parse_response(const std::string& text) {
    const std::string norm = normalize_response(text);
    std::vector<std::string> tok;
    {
        std::size_t start = 0;
        while (start < norm.size()) {
            std::size_t end = norm.find(' ', start);
            if (end == std::string::npos) end = norm.size();
            tok.push_back(norm.substr(start, end - start));
            start = end + 1;
        }
    }
    const int n = static_cast<int>(tok.size());
    constexpr int kClaimWindow = 6;

    bool claim1 = false, claim2 = false;
    for (int i = 0; i + 1 < n; ++i) {
        if (tok[i] != "image") continue;
        const bool is1 = tok[i + 1] == "1";
        const bool is2 = tok[i + 1] == "2";
        if (!is1 && !is2) continue;
        for (int j = i + 2; j < n && j <= i + 1 + kClaimWindow; ++j) {
            if (tok[j].rfind("wealth", 0) == 0) {
                (is1 ? claim1 : claim2) = true;
                break;
            }
        }
    }
    if (claim1 != claim2) return claim1 ? Decision::First : Decision::Second;

    bool mention1 = false, mention2 = false;
    for (int i = 0; i + 1 < n; ++i) {
        if (tok[i] != "image") continue;
        if (tok[i + 1] == "1") mention1 = true;
        if (tok[i + 1] == "2") mention2 = true;
    }
    if (mention1 != mention2) return mention1 ? Decision::First : Decision::Second;
    return Decision::Ambiguous;
}

struct JudgeDecision {
    Decision verdict = Decision::Ambiguous;
    std::string raw_text;
};

inline JudgeDecision judge_decision(const std::string& text) {
    return {parse_response(text), text};
}

// ---- pair scheduling -------------------------------------------------------

// Canonical pair (lo < hi); swapped means hi is presented first.
struct ScheduledPair {
    int lo = 0;
    int hi = 0;
    bool swapped = false;
};

// All n-choose-2 pairs in canonical order. The presentation side of each
// pair comes from a per-pair hash bit, so it is stable under rescheduling
// with the same seed.
inline std::vector<ScheduledPair> schedule_pairs(int n, std::uint64_t seed) {
    if (n < 2) throw Error("need at least 2 items to schedule pairs");
    std::vector<ScheduledPair> pairs;
    pairs.reserve(static_cast<std::size_t>(n) * (n - 1) / 2);
    for (int i = 0; i < n; ++i) {
        for (int j = i + 1; j < n; ++j) {
            const bool swapped =
                (mix64(seed, static_cast<std::uint64_t>(i), static_cast<std::uint64_t>(j)) &
                 1ULL) != 0;
            pairs.push_back({i, j, swapped});
        }
    }
    return pairs;
}

inline void write_remaining_csv(const std::string& path,
                                const std::vector<ScheduledPair>& pairs) {
    std::ofstream out(path);
    if (!out) throw Error("cannot open '" + path + "' for writing");
    out << "lo,hi,swapped\n";
    for (const auto& p : pairs) out << p.lo << ',' << p.hi << ',' << (p.swapped ? 1 : 0) << '\n';
    if (!out) throw Error("write to '" + path + "' failed");
}

inline std::vector<ScheduledPair> read_remaining_csv(const std::string& path) {
    const auto rows = detail::read_csv(path, "lo,hi,swapped");
    std::vector<ScheduledPair> pairs;
    pairs.reserve(rows.size());
    for (const auto& row : rows) {
        ScheduledPair p;
        p.lo = detail::parse_int(row[0], "lo");
        p.hi = detail::parse_int(row[1], "hi");
        const int s = detail::parse_int(row[2], "swapped");
        if (s != 0 && s != 1) throw Error("swapped must be 0 or 1");
        p.swapped = s == 1;
        if (p.lo < 0 || p.hi <= p.lo) throw Error("bad pair " + std::to_string(p.lo) + "," +
                                                  std::to_string(p.hi));
        pairs.push_back(p);
    }
    return pairs;
}

// ---- pair resolution -------------------------------------------------------

struct PairResolution {
    Outcome outcome = Outcome::Tie;  // in presented orientation
    int attempts = 1;
    std::string raw;  // all raw responses, newline-joined when retried
};

// One decisive response settles the pair. An ambiguous response earns one
// retry per remaining attempt; all attempts ambiguous means a tie.
inline PairResolution resolve_pair(Judge& judge, const ImageRef& first, const ImageRef& second,
                                   const std::string& prompt, int max_attempts = 2) {
    if (max_attempts < 1) throw Error("max_attempts must be >= 1");
    PairResolution res;
    for (int attempt = 1; attempt <= max_attempts; ++attempt) {
        const std::string raw = judge.judge(first, second, prompt, attempt);
        res.raw = attempt == 1 ? raw : res.raw + "\n" + raw;
        res.attempts = attempt;
        const Decision d = parse_response(raw);
        if (d == Decision::First) {
            res.outcome = Outcome::FirstWins;
            return res;
        }
        if (d == Decision::Second) {
            res.outcome = Outcome::SecondWins;
            return res;
        }
    }
    res.outcome = Outcome::Tie;
    return res;
}

// ---- cache -----------------------------------------------------------------

// Maps a (pair, judge, prompt, presentation) key to its resolution so a
// rerun never repays for a completed call. Optionally persisted as JSON
// Lines.
class ComparisonCache {
public:
    ComparisonCache() = default;
    ComparisonCache(const ComparisonCache&) = delete;
    ComparisonCache& operator=(const ComparisonCache&) = delete;

    static std::string key(int lo, int hi, const std::string& judge_id,
                           std::uint64_t prompt_hash, bool swapped) {
        char hash[24];
        std::snprintf(hash, sizeof(hash), "%016llx",
                      static_cast<unsigned long long>(prompt_hash));
        return std::to_string(lo) + "|" + std::to_string(hi) + "|" + judge_id + "|" + hash +
               "|" + (swapped ? "1" : "0");
    }

    // Loads any existing entries from path and appends new ones to it.
    void attach(const std::string& path) {
        std::lock_guard<std::mutex> lock(mu_);
        path_ = path;
        std::ifstream in(path);
        if (!in) return;  // fresh cache file
        std::string line;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            if (line.empty()) continue;
            try {
                const auto j = nlohmann::json::parse(line);
                PairResolution res;
                res.outcome = outcome_from_string(j.at("outcome").get<std::string>());
                res.attempts = j.value("attempts", 1);
                res.raw = j.value("raw_response", std::string{});
                entries_[j.at("key").get<std::string>()] = res;
            } catch (const nlohmann::json::exception& e) {
                throw Error(path + ":" + std::to_string(lineno) + ": " + e.what());
            }
        }
    }

    std::optional<PairResolution> lookup(const std::string& k) const {
        std::lock_guard<std::mutex> lock(mu_);
        const auto it = entries_.find(k);
        if (it == entries_.end()) return std::nullopt;
        return it->second;
    }

    void store(const std::string& k, const PairResolution& res) {
        std::lock_guard<std::mutex> lock(mu_);
        if (!entries_.emplace(k, res).second) return;  // already present
        if (path_.empty()) return;
        std::ofstream out(path_, std::ios::app);
        if (!out) throw Error("cannot append to cache '" + path_ + "'");
        nlohmann::json j{{"key", k},
                         {"outcome", to_string(res.outcome)},
                         {"attempts", res.attempts},
                         {"raw_response", res.raw}};
        out << j.dump() << '\n';
    }

    std::size_t size() const {
        std::lock_guard<std::mutex> lock(mu_);
        return entries_.size();
    }

private:
    mutable std::mutex mu_;
    std::unordered_map<std::string, PairResolution> entries_;
    std::string path_;
};

// ---- full run --------------------------------------------------------------

struct RunOptions {
    std::string prompt;
    int concurrency = 1;
    std::int64_t budget_max_calls = -1;  // < 0 means unlimited
    std::string log_path;                 // empty means in-memory only
    ComparisonCache* cache = nullptr;
    int max_attempts = 2;
    std::function<std::int64_t()> now;   // epoch seconds; defaults to wall clock
};

struct RunStats {
    std::int64_t pairs_total = 0;
    std::int64_t pairs_resumed = 0;  // already present in the log
    std::int64_t pairs_done = 0;     // completed this run (cache hits included)
    std::int64_t pairs_failed = 0;   // transport failure
    std::int64_t pairs_over_budget = 0;
    std::int64_t judge_calls = 0;
    std::int64_t cache_hits = 0;
    std::int64_t ties = 0;  // ties among records completed this run
    bool budget_exhausted = false;
};

struct RunResult {
    // Every record known after the run (resumed plus new), sorted by
    // canonical pair.
    std::vector<ComparisonRecord> records;
    RunStats stats;
    // Pairs still owed a verdict: transport failures and budget casualties.
    std::vector<ScheduledPair> remaining;
};

namespace detail {

inline std::uint64_t pair_key(int a, int b) {
    const int lo = std::min(a, b), hi = std::max(a, b);
    return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(lo)) << 32) |
           static_cast<std::uint32_t>(hi);
}

}  // namespace detail

// Judges every scheduled pair not already settled by the log. The log is
// append-only and is the source of truth: rerunning with the same log
// skips completed pairs and touches nothing. Transport failures and pairs
// cut off by the budget end up in `remaining` instead of aborting the run.
inline RunResult run_all(Judge& judge, const std::vector<ImageRef>& images,
                         const std::vector<ScheduledPair>& pairs, const RunOptions& opts) {
    const int n = static_cast<int>(images.size());
    if (opts.concurrency < 1) throw Error("concurrency must be >= 1");
    if (opts.max_attempts < 1) throw Error("max_attempts must be >= 1");
    for (int i = 0; i < n; ++i)
        if (images[i].id != i) throw Error("image ids must be 0..n-1 in order");
    for (const auto& p : pairs)
        if (p.lo < 0 || p.lo >= p.hi || p.hi >= n)
            throw Error("scheduled pair " + std::to_string(p.lo) + "," + std::to_string(p.hi) +
                        " out of range");

    const auto now = opts.now ? opts.now : []() {
        return static_cast<std::int64_t>(std::time(nullptr));
    };

    RunResult result;
    result.stats.pairs_total = static_cast<std::int64_t>(pairs.size());

    std::vector<ComparisonRecord> existing;
    std::unordered_set<std::uint64_t> settled;
    if (!opts.log_path.empty() && std::filesystem::exists(opts.log_path)) {
        existing = read_log(opts.log_path);
        for (const auto& r : existing) settled.insert(detail::pair_key(r.first, r.second));
    }

    std::vector<ScheduledPair> todo;
    todo.reserve(pairs.size());
    for (const auto& p : pairs) {
        if (settled.count(detail::pair_key(p.lo, p.hi))) {
            ++result.stats.pairs_resumed;
        } else {
            todo.push_back(p);
        }
    }

    const std::uint64_t prompt_hash = fnv1a64(opts.prompt.data(), opts.prompt.size());
    const std::string judge_id = judge.id();

    enum class PairState { Done, Failed, OverBudget };
    struct Slot {
        PairState state = PairState::Failed;
        ComparisonRecord rec;
    };
    std::vector<Slot> slots(todo.size());

    std::atomic<std::int64_t> budget{opts.budget_max_calls};
    auto try_acquire_call = [&]() -> bool {
        if (opts.budget_max_calls < 0) return true;
        std::int64_t cur = budget.load();
        while (cur > 0)
            if (budget.compare_exchange_weak(cur, cur - 1)) return true;
        return false;
    };

    std::mutex io_mu;
    std::ofstream log_out;
    if (!opts.log_path.empty()) {
        log_out.open(opts.log_path, std::ios::app);
        if (!log_out) throw Error("cannot open log file '" + opts.log_path + "' for append");
    }

    std::atomic<std::size_t> next{0};
    std::atomic<bool> stop{false};
    std::atomic<bool> out_of_budget{false};
    std::atomic<std::int64_t> calls_made{0};
    std::mutex fatal_mu;
    std::exception_ptr fatal;

    auto worker = [&]() {
        while (!stop.load()) {
            const std::size_t idx = next.fetch_add(1);
            if (idx >= todo.size()) return;
            const ScheduledPair& p = todo[idx];
            Slot& slot = slots[idx];
            const ImageRef& first = images[p.swapped ? p.hi : p.lo];
            const ImageRef& second = images[p.swapped ? p.lo : p.hi];
            const std::string key =
                ComparisonCache::key(p.lo, p.hi, judge_id, prompt_hash, p.swapped);
            try {
                PairResolution res;
                bool resolved = false;
                if (opts.cache) {
                    if (auto hit = opts.cache->lookup(key)) {
                        res = *hit;
                        resolved = true;
                        {
                            std::lock_guard<std::mutex> lock(io_mu);
                            ++result.stats.cache_hits;
                        }
                    }
                }
                if (!resolved) {
                    bool decisive = false;
                    for (int attempt = 1; attempt <= opts.max_attempts && !decisive; ++attempt) {
                        if (!try_acquire_call()) {
                            out_of_budget.store(true);
                            slot.state = PairState::OverBudget;
                            goto next_pair;
                        }
                        const std::string raw = judge.judge(first, second, opts.prompt, attempt);
                        calls_made.fetch_add(1);
                        res.raw = attempt == 1 ? raw : res.raw + "\n" + raw;
                        res.attempts = attempt;
                        const Decision d = parse_response(raw);
                        if (d == Decision::First) {
                            res.outcome = Outcome::FirstWins;
                            decisive = true;
                        } else if (d == Decision::Second) {
                            res.outcome = Outcome::SecondWins;
                            decisive = true;
                        }
                    }
                    if (!decisive) res.outcome = Outcome::Tie;
                    if (opts.cache) opts.cache->store(key, res);
                }
                slot.rec.first = first.id;
                slot.rec.second = second.id;
                slot.rec.outcome = res.outcome;
                slot.rec.attempts = res.attempts;
                slot.rec.judge_id = judge_id;
                slot.rec.timestamp = now();
                slot.rec.raw_response = res.raw;
                slot.state = PairState::Done;
                {
                    std::lock_guard<std::mutex> lock(io_mu);
                    if (log_out.is_open()) {
                        log_out << record_to_json(slot.rec).dump() << '\n';
                        log_out.flush();
                    }
                }
            } catch (const TransportError&) {
                slot.state = PairState::Failed;
            } catch (...) {
                {
                    std::lock_guard<std::mutex> lock(fatal_mu);
                    if (!fatal) fatal = std::current_exception();
                }
                stop.store(true);
                return;
            }
        next_pair:;
        }
    };

    const int threads_wanted =
        std::min<std::size_t>(static_cast<std::size_t>(opts.concurrency), todo.size());
    if (threads_wanted <= 1) {
        worker();
    } else {
        std::vector<std::thread> threads;
        threads.reserve(threads_wanted);
        for (int t = 0; t < threads_wanted; ++t) threads.emplace_back(worker);
        for (auto& t : threads) t.join();
    }
    if (fatal) std::rethrow_exception(fatal);

    result.stats.judge_calls = calls_made.load();
    result.stats.budget_exhausted = out_of_budget.load();

    result.records = std::move(existing);
    for (std::size_t i = 0; i < todo.size(); ++i) {
        switch (slots[i].state) {
            case PairState::Done:
                ++result.stats.pairs_done;
                if (slots[i].rec.outcome == Outcome::Tie) ++result.stats.ties;
                result.records.push_back(slots[i].rec);
                break;
            case PairState::Failed:
                ++result.stats.pairs_failed;
                result.remaining.push_back(todo[i]);
                break;
            case PairState::OverBudget:
                ++result.stats.pairs_over_budget;
                result.remaining.push_back(todo[i]);
                break;
        }
    }
    std::sort(result.records.begin(), result.records.end(),
              [](const ComparisonRecord& a, const ComparisonRecord& b) {
                  const auto ka = detail::pair_key(a.first, a.second);
                  const auto kb = detail::pair_key(b.first, b.second);
                  if (ka != kb) return ka < kb;
                  return a.timestamp < b.timestamp;
              });
    std::sort(result.remaining.begin(), result.remaining.end(),
              [](const ScheduledPair& a, const ScheduledPair& b) {
                  if (a.lo != b.lo) return a.lo < b.lo;
                  return a.hi < b.hi;
              });
    return result;
}

// ---- synthetic judge -------------------------------------------------------

// Judges from latent scores through a logistic model. With temperature t,
// the presented-first image wins with probability
// 1 / (1 + exp((s2 - s1) / t)); temperature 0 always picks the higher
// score. Each (pair, attempt) draw is a pure function of the seed, so runs
// replay exactly.
class SyntheticJudge : public Judge {
public:
    struct Config {
        double temperature = 1.0;
        double ambiguity_eps = 0.0;
        std::uint64_t seed = 0;
    };

    SyntheticJudge(std::vector<double> scores, Config cfg)
        : scores_(std::move(scores)), cfg_(cfg) {
        if (cfg_.temperature < 0.0) throw Error("temperature must be >= 0");
        if (cfg_.ambiguity_eps < 0.0 || cfg_.ambiguity_eps >= 1.0)
            throw Error("ambiguity_eps must be in [0, 1)");
    }

    std::string judge(const ImageRef& first, const ImageRef& second, const std::string&,
                      int attempt) override {
        const int n = static_cast<int>(scores_.size());
        if (first.id < 0 || first.id >= n || second.id < 0 || second.id >= n)
            throw Error("image id out of range for synthetic judge");
        const std::uint64_t pair_tag =
            (static_cast<std::uint64_t>(static_cast<std::uint32_t>(first.id)) << 32) |
            static_cast<std::uint32_t>(second.id);
        const std::uint64_t att = static_cast<std::uint64_t>(attempt);
        if (cfg_.ambiguity_eps > 0.0 &&
            u01(mix64(cfg_.seed, pair_tag, att, 0xA11BULL)) < cfg_.ambiguity_eps)
            return "Both images look equally wealthy.";
        const double s1 = scores_[first.id];
        const double s2 = scores_[second.id];
        double p_first;
        if (cfg_.temperature == 0.0) {
            p_first = s1 > s2 ? 1.0 : (s1 < s2 ? 0.0 : 0.5);
        } else {
            p_first = 1.0 / (1.0 + std::exp((s2 - s1) / cfg_.temperature));
        }
        const double u = u01(mix64(cfg_.seed, pair_tag, att, 0x71D5ULL));
        return u < p_first ? "Image 1 is wealthier." : "Image 2 is wealthier.";
    }

    std::string id() const override {
        char buf[96];
        std::snprintf(buf, sizeof(buf), "synthetic:T=%g:eps=%g:seed=%llu", cfg_.temperature,
                      cfg_.ambiguity_eps, static_cast<unsigned long long>(cfg_.seed));
        return buf;
    }

private:
    static double u01(std::uint64_t bits) {
        return static_cast<double>(bits >> 11) * 0x1.0p-53;
    }

    std::vector<double> scores_;
    Config cfg_;
};

// Convenience for runs that have labels but no real images.
inline std::vector<ImageRef> image_refs_for(const Items& items) {
    std::vector<ImageRef> refs(items.labels.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
        refs[i].id = static_cast<int>(i);
        refs[i].label = items.labels[i];
    }
    return refs;
}

inline std::vector<ImageRef> image_refs_for(const ImageManifest& manifest) {
    std::vector<ImageRef> refs(manifest.items.labels.size());
    for (std::size_t i = 0; i < refs.size(); ++i) {
        refs[i].id = static_cast<int>(i);
        refs[i].label = manifest.items.labels[i];
        refs[i].uri = manifest.uris[i];
    }
    return refs;
}

}  // namespace pairrank
