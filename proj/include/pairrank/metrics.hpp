#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <numeric>
#include <vector>

#include "pairrank/core.hpp"
#include "pairrank/rng.hpp"

namespace pairrank {

// Fractional (average) ranks, 1-based. Tied values share the mean of the
// positions they occupy.
inline std::vector<double> fractional_ranks(const std::vector<double>& v) {
    const int n = static_cast<int>(v.size());
    std::vector<int> idx(n);
    std::iota(idx.begin(), idx.end(), 0);
    std::sort(idx.begin(), idx.end(), [&](int a, int b) { return v[a] < v[b]; });
    std::vector<double> ranks(n, 0.0);
    int i = 0;
    while (i < n) {
        int j = i;
        while (j + 1 < n && v[idx[j + 1]] == v[idx[i]]) ++j;
        const double avg = 0.5 * (i + j) + 1.0;
        for (int k = i; k <= j; ++k) ranks[idx[k]] = avg;
        i = j + 1;
    }
    return ranks;
}

inline void check_paired_input(const std::vector<double>& x, const std::vector<double>& y) {
    if (x.size() != y.size()) throw Error("paired samples must have equal length");
    if (x.size() < 2) throw Error("need at least 2 observations");
    auto constant = [](const std::vector<double>& v) {
        for (double u : v)
            if (u != v[0]) return false;
        return true;
    };
    if (constant(x) || constant(y))
        throw MetricUndefinedError("correlation undefined for constant input");
}

inline double pearson(const std::vector<double>& x, const std::vector<double>& y) {
    check_paired_input(x, y);
    const int n = static_cast<int>(x.size());
    double mx = 0.0, my = 0.0;
    for (int i = 0; i < n; ++i) {
        mx += x[i];
        my += y[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0.0, sxx = 0.0, syy = 0.0;
    for (int i = 0; i < n; ++i) {
        const double dx = x[i] - mx;
        const double dy = y[i] - my;
        sxy += dx * dy;
        sxx += dx * dx;
        syy += dy * dy;
    }
    if (sxx == 0.0 || syy == 0.0)
        throw MetricUndefinedError("correlation undefined for constant input");
    return sxy / std::sqrt(sxx * syy);
}

struct PearsonResult {
    double r = 0.0;
    double r2 = 0.0;
};

inline PearsonResult pearson_r2(const std::vector<double>& x, const std::vector<double>& y) {
    const double r = pearson(x, y);
    return {r, r * r};
}

// Spearman's rho: Pearson correlation of fractional ranks.
inline double spearman(const std::vector<double>& x, const std::vector<double>& y) {
    check_paired_input(x, y);
    return pearson(fractional_ranks(x), fractional_ranks(y));
}

// k x k confusion matrix; cells[t][p] = items of true class t predicted p.
struct ConfusionMatrix {
    int k = 0;
    std::vector<std::int64_t> cells;

    explicit ConfusionMatrix(int classes = 0)
        : k(classes), cells(static_cast<std::size_t>(classes) * classes, 0) {}

    std::int64_t& at(int t, int p) { return cells[static_cast<std::size_t>(t) * k + p]; }
    std::int64_t at(int t, int p) const { return cells[static_cast<std::size_t>(t) * k + p]; }

    std::int64_t total() const {
        std::int64_t s = 0;
        for (auto c : cells) s += c;
        return s;
    }

    // labels are 1-based (1..k).
    static ConfusionMatrix from_labels(const std::vector<int>& true_labels,
                                       const std::vector<int>& pred_labels, int k) {
        if (true_labels.size() != pred_labels.size())
            throw Error("label vectors must have equal length");
        ConfusionMatrix cm(k);
        for (std::size_t i = 0; i < true_labels.size(); ++i) {
            const int t = true_labels[i], p = pred_labels[i];
            if (t < 1 || t > k || p < 1 || p > k)
                throw Error("label out of range 1.." + std::to_string(k));
            ++cm.at(t - 1, p - 1);
        }
        return cm;
    }
};

// Matthews correlation coefficient of a 2x2 confusion matrix. Returns 0
// when any marginal is empty.
inline double binary_mcc(const ConfusionMatrix& cm) {
    if (cm.k != 2) throw Error("binary_mcc requires a 2x2 confusion matrix");
    const double tn = static_cast<double>(cm.at(0, 0));
    const double fp = static_cast<double>(cm.at(0, 1));
    const double fn = static_cast<double>(cm.at(1, 0));
    const double tp = static_cast<double>(cm.at(1, 1));
    const double denom = (tp + fp) * (tp + fn) * (tn + fp) * (tn + fn);
    if (denom == 0.0) return 0.0;
    return (tp * tn - fp * fn) / std::sqrt(denom);
}

// Gorodkin's R_K statistic for k classes. Reduces to binary_mcc at k=2.
inline double multiclass_mcc(const ConfusionMatrix& cm) {
    if (cm.k < 2) throw Error("multiclass_mcc requires k >= 2");
    const int k = cm.k;
    double c = 0.0, s = 0.0;
    std::vector<double> t(k, 0.0), p(k, 0.0);
    for (int a = 0; a < k; ++a) {
        c += static_cast<double>(cm.at(a, a));
        for (int b = 0; b < k; ++b) {
            const double v = static_cast<double>(cm.at(a, b));
            s += v;
            t[a] += v;
            p[b] += v;
        }
    }
    double tp_dot = 0.0, tt = 0.0, pp = 0.0;
    for (int a = 0; a < k; ++a) {
        tp_dot += t[a] * p[a];
        tt += t[a] * t[a];
        pp += p[a] * p[a];
    }
    const double denom = (s * s - tt) * (s * s - pp);
    if (denom <= 0.0) return 0.0;
    return (c * s - tp_dot) / std::sqrt(denom);
}

// Binary MCC of the quintile dichotomy at `split`: classes {1..split}
// versus {split+1..5}.
inline double dichotomy_mcc(const std::vector<int>& true_q, const std::vector<int>& pred_q,
                            int split) {
    if (split < 1 || split > 4) throw Error("dichotomy split must be in 1..4");
    if (true_q.size() != pred_q.size()) throw Error("label vectors must have equal length");
    ConfusionMatrix cm(2);
    for (std::size_t i = 0; i < true_q.size(); ++i) {
        if (true_q[i] < 1 || true_q[i] > 5 || pred_q[i] < 1 || pred_q[i] > 5)
            throw Error("quintile label out of range 1..5");
        const int t = true_q[i] <= split ? 0 : 1;
        const int p = pred_q[i] <= split ? 0 : 1;
        ++cm.at(t, p);
    }
    return binary_mcc(cm);
}

struct MetricEstimate {
    double value = 0.0;
    double std = 0.0;
    int replicates = 0;
};

using PairedMetric =
    std::function<double(const std::vector<double>&, const std::vector<double>&)>;

namespace detail {

// Linear-interpolation quantile of a sorted sample.
inline double quantile_sorted(const std::vector<double>& sorted, double q) {
    const std::size_t m = sorted.size();
    if (m == 0) throw Error("quantile of empty sample");
    if (m == 1) return sorted[0];
    const double h = q * static_cast<double>(m - 1);
    const std::size_t lo = static_cast<std::size_t>(std::floor(h));
    const std::size_t hi = std::min(lo + 1, m - 1);
    const double frac = h - static_cast<double>(lo);
    return sorted[lo] + frac * (sorted[hi] - sorted[lo]);
}

// One paired resample: the same index draw applies to every column.
inline void resample_indices(Rng& rng, int n, std::vector<int>& idx) {
    idx.resize(n);
    for (int i = 0; i < n; ++i) idx[i] = static_cast<int>(rng.next_below(n));
}

inline void gather(const std::vector<double>& src, const std::vector<int>& idx,
                   std::vector<double>& dst) {
    dst.resize(idx.size());
    for (std::size_t i = 0; i < idx.size(); ++i) dst[i] = src[idx[i]];
}

}  // namespace detail

// Paired bootstrap over items. value is the metric on the full sample; std
// is the sample standard deviation over replicates. Replicates where the
// metric is undefined are skipped and counted; more than 20% skipped is an
// error. Deterministic given seed (each replicate derives its own stream).
inline MetricEstimate bootstrap(const PairedMetric& metric, const std::vector<double>& x,
                                const std::vector<double>& y, int replicates,
                                std::uint64_t seed) {
    if (replicates < 2) throw Error("bootstrap needs at least 2 replicates");
    if (x.size() != y.size()) throw Error("paired samples must have equal length");
    const int n = static_cast<int>(x.size());
    if (n < 1) throw Error("empty sample");

    MetricEstimate est;
    est.value = metric(x, y);

    std::vector<double> values;
    values.reserve(replicates);
    std::vector<int> idx;
    std::vector<double> xb, yb;
    int skipped = 0;
    for (int b = 0; b < replicates; ++b) {
        Rng rng(mix64(seed, 0x626f6f74ULL, static_cast<std::uint64_t>(b)));
        detail::resample_indices(rng, n, idx);
        detail::gather(x, idx, xb);
        detail::gather(y, idx, yb);
        try {
            values.push_back(metric(xb, yb));
        } catch (const MetricUndefinedError&) {
            ++skipped;
        }
    }
    if (skipped * 5 > replicates)
        throw Error("metric undefined on more than 20% of bootstrap replicates (" +
                    std::to_string(skipped) + "/" + std::to_string(replicates) + ")");
    est.replicates = static_cast<int>(values.size());
    if (est.replicates >= 2) {
        double mean = 0.0;
        for (double v : values) mean += v;
        mean /= est.replicates;
        double ss = 0.0;
        for (double v : values) ss += (v - mean) * (v - mean);
        est.std = std::sqrt(ss / (est.replicates - 1));
    }
    return est;
}

struct SignificanceResult {
    bool significant = false;
    double p_like = 1.0;    // 2 * min(tail fractions) of the replicate differences
    double diff = 0.0;      // metric(x, y_a) - metric(x, y_b) on the full sample
    double ci_low = 0.0;    // percentile interval of the replicate differences
    double ci_high = 0.0;
    int replicates = 0;
};

// Paired bootstrap test of metric(x, y_a) - metric(x, y_b): significant
// when the two-sided percentile interval at `level` excludes zero.
inline SignificanceResult significance_diff(const PairedMetric& metric,
                                            const std::vector<double>& x,
                                            const std::vector<double>& y_a,
                                            const std::vector<double>& y_b, int replicates,
                                            std::uint64_t seed, double level = 0.05) {
    if (replicates < 2) throw Error("bootstrap needs at least 2 replicates");
    if (x.size() != y_a.size() || x.size() != y_b.size())
        throw Error("paired samples must have equal length");
    if (!(level > 0.0 && level < 1.0)) throw Error("level must be in (0, 1)");
    const int n = static_cast<int>(x.size());
    if (n < 1) throw Error("empty sample");

    SignificanceResult res;
    res.diff = metric(x, y_a) - metric(x, y_b);

    std::vector<double> diffs;
    diffs.reserve(replicates);
    std::vector<int> idx;
    std::vector<double> xb, ab, bb;
    int skipped = 0;
    for (int b = 0; b < replicates; ++b) {
        Rng rng(mix64(seed, 0x736967ULL, static_cast<std::uint64_t>(b)));
        detail::resample_indices(rng, n, idx);
        detail::gather(x, idx, xb);
        detail::gather(y_a, idx, ab);
        detail::gather(y_b, idx, bb);
        try {
            diffs.push_back(metric(xb, ab) - metric(xb, bb));
        } catch (const MetricUndefinedError&) {
            ++skipped;
        }
    }
    if (skipped * 5 > replicates)
        throw Error("metric undefined on more than 20% of bootstrap replicates (" +
                    std::to_string(skipped) + "/" + std::to_string(replicates) + ")");
    res.replicates = static_cast<int>(diffs.size());
    if (res.replicates < 2) throw Error("too few usable replicates");

    std::sort(diffs.begin(), diffs.end());
    res.ci_low = detail::quantile_sorted(diffs, level / 2.0);
    res.ci_high = detail::quantile_sorted(diffs, 1.0 - level / 2.0);
    res.significant = res.ci_low > 0.0 || res.ci_high < 0.0;

    std::int64_t at_most_zero = 0, at_least_zero = 0;
    for (double d : diffs) {
        if (d <= 0.0) ++at_most_zero;
        if (d >= 0.0) ++at_least_zero;
    }
    const double lo_frac = static_cast<double>(at_most_zero) / res.replicates;
    const double hi_frac = static_cast<double>(at_least_zero) / res.replicates;
    res.p_like = std::min(1.0, 2.0 * std::min(lo_frac, hi_frac));
    return res;
}

}  // namespace pairrank
