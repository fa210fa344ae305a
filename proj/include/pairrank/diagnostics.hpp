#pragma once

#include <bit>
#include <cmath>
#include <cstdint>
#include <map>
#include <string>
#include <vector>

#include "pairrank/core.hpp"

namespace pairrank {

// Directed comparison graph: one edge per unordered pair, winner -> loser.
// Ties are never edges. Reciprocal or duplicate edges violate the
// one-comparison-per-pair model and are rejected.
class TournamentGraph {
  public:
    explicit TournamentGraph(int n)
        : n_(n), words_((n + 63) / 64),
          out_(static_cast<std::size_t>(n) * words_, 0),
          in_(static_cast<std::size_t>(n) * words_, 0) {
        if (n < 0) throw Error("graph size must be nonnegative");
    }

    int size() const { return n_; }
    std::int64_t num_edges() const { return edges_; }

    bool has_edge(int winner, int loser) const {
        check_node(winner);
        check_node(loser);
        return (out_[row(winner) + loser / 64] >> (loser % 64)) & 1ULL;
    }

    void add_edge(int winner, int loser) {
        check_node(winner);
        check_node(loser);
        if (winner == loser) throw Error("self-loop edge");
        if (has_edge(winner, loser) || has_edge(loser, winner))
            throw Error("pair (" + std::to_string(winner) + ", " + std::to_string(loser) +
                        ") already compared");
        out_[row(winner) + loser / 64] |= 1ULL << (loser % 64);
        in_[row(loser) + winner / 64] |= 1ULL << (winner % 64);
        ++edges_;
    }

    static TournamentGraph from_records(int n, const std::vector<ComparisonRecord>& records) {
        TournamentGraph g(n);
        for (std::size_t r = 0; r < records.size(); ++r) {
            const auto& rec = records[r];
            if (rec.first < 0 || rec.first >= n || rec.second < 0 || rec.second >= n)
                throw InvalidRecordError("record #" + std::to_string(r) +
                                         " references an item outside 0.." + std::to_string(n - 1));
            switch (rec.outcome) {
                case Outcome::FirstWins: g.add_edge(rec.first, rec.second); break;
                case Outcome::SecondWins: g.add_edge(rec.second, rec.first); break;
                case Outcome::Tie: break;
            }
        }
        return g;
    }

    // Directed 3-cycles i -> j -> k -> i. Each cycle is seen once from each
    // of its three edges, hence the division.
    std::int64_t count_three_cycles() const {
        std::int64_t triple = 0;
        for (int i = 0; i < n_; ++i) {
            for (int w = 0; w < words_; ++w) {
                std::uint64_t bits = out_[row(i) + w];
                while (bits) {
                    const int j = w * 64 + std::countr_zero(bits);
                    bits &= bits - 1;
                    // successors of j that point back into i
                    for (int v = 0; v < words_; ++v)
                        triple += std::popcount(out_[row(j) + v] & in_[row(i) + v]);
                }
            }
        }
        return triple / 3;
    }

  private:
    void check_node(int v) const {
        if (v < 0 || v >= n_) throw Error("node " + std::to_string(v) + " out of range");
    }
    std::size_t row(int i) const { return static_cast<std::size_t>(i) * words_; }

    int n_ = 0;
    int words_ = 0;
    std::vector<std::uint64_t> out_, in_;
    std::int64_t edges_ = 0;
};

inline std::int64_t count_three_cycles(const TournamentGraph& g) {
    return g.count_three_cycles();
}

// Node count of the clique that would carry this many edges: n ~ sqrt(2E),
// rounded to the nearest integer (half away from zero).
inline std::int64_t clique_equivalent_size(std::int64_t num_edges) {
    if (num_edges < 0) throw Error("edge count must be nonnegative");
    return std::llround(std::sqrt(2.0 * static_cast<double>(num_edges)));
}

// Maximum number of 3-cycles of any tournament on n nodes:
// n(n^2-4)/24 for even n, n(n^2-1)/24 for odd n (both exact integers).
inline std::int64_t max_three_cycles(std::int64_t n) {
    if (n < 3) throw Error("max_three_cycles requires n >= 3");
    if (n > 2000000) throw Error("n too large for exact 3-cycle bound");
    if (n % 2 == 0) return n * (n * n - 4) / 24;
    return n * (n * n - 1) / 24;
}

// Number of decisive records whose winner the ranking places below its
// loser. Rank 0 is wealthiest, so disagreement means rank(winner) > rank(loser).
inline std::int64_t conflicts(const std::vector<int>& order,
                              const std::vector<ComparisonRecord>& records) {
    const auto rank_of = inverse_permutation(order);
    const int n = static_cast<int>(order.size());
    std::int64_t count = 0;
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.first < 0 || rec.first >= n || rec.second < 0 || rec.second >= n)
            throw InvalidRecordError("record #" + std::to_string(r) +
                                     " references an item missing from the ranking");
        if (rec.outcome == Outcome::Tie) continue;
        const int winner = rec.outcome == Outcome::FirstWins ? rec.first : rec.second;
        const int loser = rec.outcome == Outcome::FirstWins ? rec.second : rec.first;
        if (rank_of[winner] > rank_of[loser]) ++count;
    }
    return count;
}

// Sum of rank gaps over disagreeing records.
inline std::int64_t ranking_conflicts(const std::vector<int>& order,
                                      const std::vector<ComparisonRecord>& records) {
    const auto rank_of = inverse_permutation(order);
    const int n = static_cast<int>(order.size());
    std::int64_t sum = 0;
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.first < 0 || rec.first >= n || rec.second < 0 || rec.second >= n)
            throw InvalidRecordError("record #" + std::to_string(r) +
                                     " references an item missing from the ranking");
        if (rec.outcome == Outcome::Tie) continue;
        const int winner = rec.outcome == Outcome::FirstWins ? rec.first : rec.second;
        const int loser = rec.outcome == Outcome::FirstWins ? rec.second : rec.first;
        if (rank_of[winner] > rank_of[loser]) sum += rank_of[winner] - rank_of[loser];
    }
    return sum;
}

// Histogram of rank gaps for disagreeing pairs, binned by bin_width.
// total_count and weighted_total keep the exact reconciliation values
// (conflicts and ranking_conflicts) regardless of the bin width.
struct Histogram {
    int bin_width = 1;
    std::map<std::int64_t, std::int64_t> bins;  // bin lower bound -> count
    std::int64_t total_count = 0;
    std::int64_t weighted_total = 0;
};

inline Histogram disagreement_histogram(const std::vector<int>& order,
                                        const std::vector<ComparisonRecord>& records,
                                        int bin_width = 1) {
    if (bin_width < 1) throw Error("bin_width must be >= 1");
    const auto rank_of = inverse_permutation(order);
    const int n = static_cast<int>(order.size());
    Histogram h;
    h.bin_width = bin_width;
    for (std::size_t r = 0; r < records.size(); ++r) {
        const auto& rec = records[r];
        if (rec.first < 0 || rec.first >= n || rec.second < 0 || rec.second >= n)
            throw InvalidRecordError("record #" + std::to_string(r) +
                                     " references an item missing from the ranking");
        if (rec.outcome == Outcome::Tie) continue;
        const int winner = rec.outcome == Outcome::FirstWins ? rec.first : rec.second;
        const int loser = rec.outcome == Outcome::FirstWins ? rec.second : rec.first;
        const std::int64_t gap = rank_of[winner] - rank_of[loser];
        if (gap <= 0) continue;
        h.bins[(gap / bin_width) * bin_width] += 1;
        h.total_count += 1;
        h.weighted_total += gap;
    }
    return h;
}

struct DiagnosticsReport {
    std::int64_t three_cycles = 0;
    std::int64_t clique_equiv_n = 0;
    std::int64_t max_three_cycles = 0;
    std::int64_t conflicts = 0;
    std::int64_t ranking_conflicts = 0;
    Histogram disagreement_histogram;
};

inline DiagnosticsReport make_diagnostics_report(const TournamentGraph& g,
                                                 const std::vector<int>& order,
                                                 const std::vector<ComparisonRecord>& records,
                                                 int bin_width = 1) {
    DiagnosticsReport rep;
    rep.three_cycles = g.count_three_cycles();
    rep.clique_equiv_n = clique_equivalent_size(g.num_edges());
    rep.max_three_cycles = rep.clique_equiv_n >= 3 ? max_three_cycles(rep.clique_equiv_n) : 0;
    rep.conflicts = conflicts(order, records);
    rep.ranking_conflicts = ranking_conflicts(order, records);
    rep.disagreement_histogram = disagreement_histogram(order, records, bin_width);
    return rep;
}

}  // namespace pairrank
