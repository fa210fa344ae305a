#pragma once

#include <cmath>
#include <cstdint>
#include <string>
#include <vector>

#include "pairrank/core.hpp"

namespace pairrank {

struct SolverConfig {
    double alpha = 1e-9;  // virtual wins added in both directions of every pair
    double tol = 1e-9;    // max absolute change of normalized strengths
    int max_iter = 100;

    void validate() const {
        if (!(alpha > 0.0)) throw Error("alpha must be > 0");
        if (!(tol > 0.0)) throw Error("tol must be > 0");
        if (max_iter < 1) throw Error("max_iter must be >= 1");
    }
};

// Latent strengths, normalized to sum 1. All entries strictly positive.
struct Strengths {
    std::vector<double> pi;

    int size() const { return static_cast<int>(pi.size()); }

    void validate() const {
        double sum = 0.0;
        for (double v : pi) {
            if (!(v > 0.0)) throw Error("strengths must be strictly positive");
            sum += v;
        }
        if (std::abs(sum - 1.0) > 1e-12) throw Error("strengths must sum to 1");
    }
};

struct SolveOutput {
    Strengths strengths;
    int iterations = 1;
    bool converged = true;
};

namespace detail {

// Row-major dense matrix of off-diagonal transition rates; rates[i][j] is
// the rate (or probability) of moving i -> j. The diagonal is ignored.
class RateMatrix {
  public:
    explicit RateMatrix(int n) : n_(n), data_(static_cast<std::size_t>(n) * n, 0.0) {}
    double& at(int i, int j) { return data_[static_cast<std::size_t>(i) * n_ + j]; }
    double at(int i, int j) const { return data_[static_cast<std::size_t>(i) * n_ + j]; }
    int size() const { return n_; }

  private:
    int n_;
    std::vector<double> data_;
};

// Grassmann-Taksar-Heyman state reduction. Solves pi Q = 0 for the
// generator with the given off-diagonal rates using only additions,
// multiplications and divisions of nonnegative numbers, which keeps even
// the smallest stationary components accurate to relative precision.
inline std::vector<double> stationary_gth(RateMatrix q) {
    const int n = q.size();
    if (n == 0) throw SingularChainError("empty chain");
    if (n == 1) return {1.0};
    for (int k = n - 1; k >= 1; --k) {
        double s = 0.0;
        for (int j = 0; j < k; ++j) s += q.at(k, j);
        if (!(s > 0.0) || !std::isfinite(s))
            throw SingularChainError("chain not irreducible at state " + std::to_string(k));
        for (int i = 0; i < k; ++i) q.at(i, k) /= s;
        for (int i = 0; i < k; ++i) {
            const double w = q.at(i, k);
            if (w == 0.0) continue;
            for (int j = 0; j < k; ++j) {
                if (j != i) q.at(i, j) += w * q.at(k, j);
            }
        }
    }
    std::vector<double> pi(n, 0.0);
    pi[0] = 1.0;
    for (int k = 1; k < n; ++k) {
        double acc = 0.0;
        for (int i = 0; i < k; ++i) acc += pi[i] * q.at(i, k);
        pi[k] = acc;
    }
    double sum = 0.0;
    for (double v : pi) sum += v;
    if (!(sum > 0.0) || !std::isfinite(sum)) throw SingularChainError("stationary mass not positive");
    for (double& v : pi) v /= sum;
    return pi;
}

// Power iteration on the uniformized chain; used above the direct-solve
// size cutoff. Deterministic: fixed start, fixed sweep order.
inline std::vector<double> stationary_power(const RateMatrix& q, int max_sweeps = 200000,
                                            double tol = 1e-15) {
    const int n = q.size();
    double max_exit = 0.0;
    std::vector<double> exit_rate(n, 0.0);
    for (int i = 0; i < n; ++i) {
        double s = 0.0;
        for (int j = 0; j < n; ++j)
            if (j != i) s += q.at(i, j);
        exit_rate[i] = s;
        max_exit = std::max(max_exit, s);
    }
    if (!(max_exit > 0.0)) throw SingularChainError("chain has no transitions");
    const double lam = 1.05 * max_exit;
    std::vector<double> x(n, 1.0 / n), y(n, 0.0);
    for (int sweep = 0; sweep < max_sweeps; ++sweep) {
        for (int j = 0; j < n; ++j) y[j] = x[j] * (1.0 - exit_rate[j] / lam);
        for (int i = 0; i < n; ++i) {
            const double xi = x[i];
            if (xi == 0.0) continue;
            for (int j = 0; j < n; ++j) {
                if (j != i) y[j] += xi * (q.at(i, j) / lam);
            }
        }
        double sum = 0.0;
        for (double v : y) sum += v;
        double delta = 0.0;
        for (int j = 0; j < n; ++j) {
            y[j] /= sum;
            delta = std::max(delta, std::abs(y[j] - x[j]));
        }
        x.swap(y);
        if (delta < tol) break;
    }
    return x;
}

inline std::vector<double> stationary_from_rates(RateMatrix q, int direct_solve_limit) {
    if (q.size() <= direct_solve_limit) return stationary_gth(std::move(q));
    return stationary_power(q);
}

// Chain used by LSR and each I-LSR step: mass flows from the loser to the
// winner of every effective win at rate 1/(pi_ref[i] + pi_ref[j]).
inline RateMatrix build_lsr_chain(const WinMatrix& w, double alpha,
                                  const std::vector<double>& pi_ref) {
    const int n = w.size();
    RateMatrix q(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double wins_i_over_j = static_cast<double>(w.at(i, j)) + alpha;
            q.at(j, i) += wins_i_over_j / (pi_ref[i] + pi_ref[j]);
        }
    }
    return q;
}

}  // namespace detail

// Size at or below which the stationary distribution is solved directly
// (GTH elimination); larger chains fall back to power iteration.
inline constexpr int kDirectSolveLimit = 2000;

// Luce Spectral Ranking: one spectral step with a uniform reference.
inline SolveOutput lsr(const WinMatrix& w, const SolverConfig& cfg = {}) {
    cfg.validate();
    const int n = w.size();
    if (n < 1) throw Error("empty win matrix");
    std::vector<double> uniform(n, 1.0 / n);
    auto q = detail::build_lsr_chain(w, cfg.alpha, uniform);
    SolveOutput out;
    out.strengths.pi = detail::stationary_from_rates(std::move(q), kDirectSolveLimit);
    out.iterations = 1;
    out.converged = true;
    return out;
}

// Iterative LSR: repeat the spectral step with the previous iterate as the
// reference until the normalized strengths stop moving. The fixed point is
// the maximum-likelihood solution of the alpha-regularized data.
inline SolveOutput ilsr(const WinMatrix& w, const SolverConfig& cfg = {}) {
    cfg.validate();
    const int n = w.size();
    if (n < 1) throw Error("empty win matrix");
    std::vector<double> pi(n, 1.0 / n);
    SolveOutput out;
    out.converged = false;
    int t = 0;
    while (t < cfg.max_iter) {
        ++t;
        auto q = detail::build_lsr_chain(w, cfg.alpha, pi);
        auto next = detail::stationary_from_rates(std::move(q), kDirectSolveLimit);
        double delta = 0.0;
        for (int i = 0; i < n; ++i) delta = std::max(delta, std::abs(next[i] - pi[i]));
        pi = std::move(next);
        if (delta < cfg.tol) {
            out.converged = true;
            break;
        }
    }
    out.strengths.pi = std::move(pi);
    out.iterations = t;
    return out;
}

// Rank Centrality: random walk whose step i -> j moves with probability
// proportional to the fraction of comparisons between i and j lost by i.
inline SolveOutput rank_centrality(const WinMatrix& w, const SolverConfig& cfg = {}) {
    cfg.validate();
    const int n = w.size();
    if (n < 2) throw Error("rank centrality needs at least 2 items");
    // alpha > 0 makes every pair an effective neighbor.
    const double d_max = static_cast<double>(n - 1);
    detail::RateMatrix p(n);
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double wins_j = static_cast<double>(w.at(j, i)) + cfg.alpha;
            const double wins_i = static_cast<double>(w.at(i, j)) + cfg.alpha;
            p.at(i, j) = wins_j / (d_max * (wins_i + wins_j));
        }
    }
    SolveOutput out;
    out.strengths.pi = detail::stationary_from_rates(std::move(p), kDirectSolveLimit);
    out.iterations = 1;
    out.converged = true;
    return out;
}

// Log-likelihood of the alpha-regularized data under strengths pi:
// sum over ordered pairs of (w(i,j) + alpha) * ln(pi_i / (pi_i + pi_j)).
inline double btl_log_likelihood(const WinMatrix& w, const Strengths& pi, double alpha) {
    const int n = w.size();
    if (pi.size() != n) throw Error("strengths size mismatch");
    double ll = 0.0;
    for (int i = 0; i < n; ++i) {
        for (int j = 0; j < n; ++j) {
            if (i == j) continue;
            const double wins = static_cast<double>(w.at(i, j)) + alpha;
            if (wins == 0.0) continue;
            ll += wins * std::log(pi.pi[i] / (pi.pi[i] + pi.pi[j]));
        }
    }
    return ll;
}

inline RankingResult make_ranking(const SolveOutput& solved, Algorithm algo, double alpha) {
    RankingResult r;
    r.scores.reserve(solved.strengths.pi.size());
    for (double v : solved.strengths.pi) r.scores.push_back(std::log(v));
    r.order = ranking_from_scores(r.scores);
    r.algorithm = algo;
    r.alpha = alpha;
    r.iterations = solved.iterations;
    r.converged = solved.converged;
    return r;
}

inline RankingResult solve_ranking(const WinMatrix& w, Algorithm algo,
                                   const SolverConfig& cfg = {}) {
    switch (algo) {
        case Algorithm::ILSR: return make_ranking(ilsr(w, cfg), algo, cfg.alpha);
        case Algorithm::LSR: return make_ranking(lsr(w, cfg), algo, cfg.alpha);
        case Algorithm::RC: return make_ranking(rank_centrality(w, cfg), algo, cfg.alpha);
    }
    throw Error("unknown algorithm");
}

}  // namespace pairrank
