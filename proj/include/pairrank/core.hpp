#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <numeric>
#include <optional>
#include <stdexcept>
#include <string>
#include <unordered_map>
#include <vector>

namespace pairrank {

class Error : public std::runtime_error {
  public:
    using std::runtime_error::runtime_error;
};

// Distinct error types where callers need to branch on the failure mode.
class InvalidRecordError : public Error {
  public:
    using Error::Error;
};
class SingularChainError : public Error {
  public:
    using Error::Error;
};
class MetricUndefinedError : public Error {
  public:
    using Error::Error;
};

enum class Outcome { FirstWins, SecondWins, Tie };

inline const char* to_string(Outcome o) {
    switch (o) {
        case Outcome::FirstWins: return "first";
        case Outcome::SecondWins: return "second";
        case Outcome::Tie: return "tie";
    }
    return "tie";
}

inline Outcome outcome_from_string(const std::string& s) {
    if (s == "first") return Outcome::FirstWins;
    if (s == "second") return Outcome::SecondWins;
    if (s == "tie") return Outcome::Tie;
    throw Error("unknown outcome '" + s + "'");
}

// One judged pair. `first`/`second` are dense item indices in presentation
// order (first was shown as "Image 1").
struct ComparisonRecord {
    int first = 0;
    int second = 0;
    Outcome outcome = Outcome::Tie;
    int attempts = 1;
    std::string judge_id;
    std::int64_t timestamp = 0;  // seconds since Unix epoch, UTC
    std::optional<std::string> raw_response;
};

// Item labels for a dataset; index in the vector is the item id.
struct Items {
    std::vector<std::string> labels;

    int size() const { return static_cast<int>(labels.size()); }

    void validate() const {
        std::unordered_map<std::string, int> seen;
        for (int i = 0; i < size(); ++i) {
            auto [it, inserted] = seen.emplace(labels[i], i);
            if (!inserted)
                throw Error("duplicate item label '" + labels[i] + "' at indices " +
                            std::to_string(it->second) + " and " + std::to_string(i));
        }
    }

    static Items numbered(int n, const std::string& prefix = "item") {
        Items items;
        items.labels.reserve(n);
        for (int i = 0; i < n; ++i) items.labels.push_back(prefix + std::to_string(i));
        return items;
    }
};

// Sparse win counts: counts[i][j] = times item i beat item j. Ties are
// never stored; the diagonal is absent by construction.
class WinMatrix {
  public:
    explicit WinMatrix(int n) : n_(n) {
        if (n < 0) throw Error("WinMatrix size must be nonnegative");
    }

    int size() const { return n_; }

    void add_win(int winner, int loser, std::int64_t count = 1) {
        if (winner < 0 || winner >= n_ || loser < 0 || loser >= n_)
            throw Error("win index out of range");
        if (winner == loser) throw Error("self-comparison in win matrix");
        if (count < 0) throw Error("negative win count");
        if (count == 0) return;
        counts_[key(winner, loser)] += count;
        total_ += count;
    }

    std::int64_t at(int i, int j) const {
        auto it = counts_.find(key(i, j));
        return it == counts_.end() ? 0 : it->second;
    }

    std::int64_t total() const { return total_; }

    const std::unordered_map<std::uint64_t, std::int64_t>& cells() const { return counts_; }

    static std::pair<int, int> unkey(std::uint64_t k) {
        return {static_cast<int>(k >> 32), static_cast<int>(k & 0xffffffffULL)};
    }

  private:
    static std::uint64_t key(int i, int j) {
        return (static_cast<std::uint64_t>(static_cast<std::uint32_t>(i)) << 32) |
               static_cast<std::uint32_t>(j);
    }

    int n_ = 0;
    std::int64_t total_ = 0;
    std::unordered_map<std::uint64_t, std::int64_t> counts_;
};

// Ties are excluded: only decisive outcomes feed the matrix.
inline WinMatrix build_win_matrix(const std::vector<ComparisonRecord>& records, int n) {
    WinMatrix w(n);
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.first < 0 || rec.first >= n || rec.second < 0 || rec.second >= n ||
            rec.first == rec.second) {
            throw InvalidRecordError("invalid record #" + std::to_string(r) + ": pair (" +
                                     std::to_string(rec.first) + ", " +
                                     std::to_string(rec.second) + ") out of range for n=" +
                                     std::to_string(n));
        }
        switch (rec.outcome) {
            case Outcome::FirstWins: w.add_win(rec.first, rec.second); break;
            case Outcome::SecondWins: w.add_win(rec.second, rec.first); break;
            case Outcome::Tie: break;
        }
    }
    return w;
}

// Permutation of item indices, wealthiest first. Ties in score break by
// ascending item index so the result is deterministic.
inline std::vector<int> ranking_from_scores(const std::vector<double>& scores) {
    const int n = static_cast<int>(scores.size());
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(scores[i]))
            throw Error("non-finite score for item " + std::to_string(i));
    }
    std::vector<int> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::sort(order.begin(), order.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] > scores[b];
        return a < b;
    });
    return order;
}

// rank_of[item] = position in the ranking (0 = wealthiest).
inline std::vector<int> inverse_permutation(const std::vector<int>& order) {
    std::vector<int> rank_of(order.size(), -1);
    for (int r = 0; r < static_cast<int>(order.size()); ++r) {
        int item = order[r];
        if (item < 0 || item >= static_cast<int>(order.size()) || rank_of[item] != -1)
            throw Error("order is not a permutation");
        rank_of[item] = r;
    }
    return rank_of;
}

// Position-based quintiles: sort ascending by (score, index), slice into five
// blocks whose sizes differ by at most one, larger blocks first. Label 1 is
// the poorest block, label 5 the wealthiest.
inline std::vector<int> assign_quintiles(const std::vector<double>& scores) {
    const int n = static_cast<int>(scores.size());
    if (n < 5) throw Error("assign_quintiles requires at least 5 items, got " + std::to_string(n));
    for (int i = 0; i < n; ++i) {
        if (!std::isfinite(scores[i]))
            throw Error("non-finite score for item " + std::to_string(i));
    }
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) {
        if (scores[a] != scores[b]) return scores[a] < scores[b];
        return a < b;
    });
    const int base = n / 5;
    const int extra = n % 5;
    std::vector<int> labels(n, 0);
    int pos = 0;
    for (int q = 1; q <= 5; ++q) {
        int block = base + (q <= extra ? 1 : 0);
        for (int k = 0; k < block; ++k) labels[idx[pos++]] = q;
    }
    return labels;
}

enum class Algorithm { ILSR, LSR, RC };

inline const char* to_string(Algorithm a) {
    switch (a) {
        case Algorithm::ILSR: return "ilsr";
        case Algorithm::LSR: return "lsr";
        case Algorithm::RC: return "rc";
    }
    return "ilsr";
}

inline Algorithm algorithm_from_string(const std::string& s) {
    if (s == "ilsr") return Algorithm::ILSR;
    if (s == "lsr") return Algorithm::LSR;
    if (s == "rc") return Algorithm::RC;
    throw Error("unknown algorithm '" + s + "' (expected ilsr, lsr, or rc)");
}

// Fitted ranking: per-item log strengths plus the induced permutation.
struct RankingResult {
    std::vector<double> scores;  // log strengths
    std::vector<int> order;      // wealthiest (rank 0) to poorest
    Algorithm algorithm = Algorithm::ILSR;
    double alpha = 0.0;
    int iterations = 0;
    bool converged = true;
};

// Per-item welfare score plus derived quintile labels. Quintiles are only
// defined for n >= 5; smaller score sets keep an empty label vector.
struct GroundTruth {
    std::vector<double> score;
    std::vector<int> quintile;

    static GroundTruth from_scores(std::vector<double> scores) {
        GroundTruth gt;
        gt.score = std::move(scores);
        if (gt.score.size() >= 5) gt.quintile = assign_quintiles(gt.score);
        return gt;
    }

    int size() const { return static_cast<int>(score.size()); }

    const std::vector<int>& quintiles() const {
        if (quintile.empty()) throw Error("quintiles undefined for fewer than 5 items");
        return quintile;
    }
};

}  // namespace pairrank
