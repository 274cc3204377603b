#pragma once

#include <algorithm>
#include <cmath>
#include <numeric>
#include <span>
#include <vector>

#include "psephos/common.hpp"

namespace psephos {

inline double mean(std::span<const double> x) {
    KahanSum s;
    for (double v : x) s.add(v);
    return s.value() / static_cast<double>(x.size());
}

// Mid-ranks: tied values share the average of the ranks they occupy.
inline std::vector<double> mid_ranks(std::span<const double> x) {
    const std::size_t n = x.size();
    std::vector<std::size_t> order(n);
    std::iota(order.begin(), order.end(), std::size_t{0});
    std::stable_sort(order.begin(), order.end(),
                     [&](std::size_t a, std::size_t b) { return x[a] < x[b]; });
    std::vector<double> ranks(n);
    std::size_t i = 0;
    while (i < n) {
        std::size_t j = i;
        while (j + 1 < n && x[order[j + 1]] == x[order[i]]) ++j;
        double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

inline double pearson(std::span<const double> a, std::span<const double> b) {
    if (a.size() != b.size() || a.size() < 2)
        throw DomainError("pearson: need two equal-length vectors of size >= 2");
    const double ma = mean(a), mb = mean(b);
    KahanSum sab, saa, sbb;
    for (std::size_t i = 0; i < a.size(); ++i) {
        double da = a[i] - ma, db = b[i] - mb;
        sab.add(da * db);
        saa.add(da * da);
        sbb.add(db * db);
    }
    if (saa.value() <= 0.0 || sbb.value() <= 0.0)
        throw DomainError("pearson: correlation undefined for a constant vector");
    return sab.value() / std::sqrt(saa.value() * sbb.value());
}

// Spearman's rank correlation: Pearson of mid-ranks.
inline double spearman(std::span<const double> a, std::span<const double> b) {
    std::vector<double> ra = mid_ranks(a);
    std::vector<double> rb = mid_ranks(b);
    return pearson(ra, rb);
}

// Regularized incomplete gamma functions, series/continued-fraction split.
inline double gamma_p(double a, double x) {
    if (x < 0.0 || a <= 0.0) throw DomainError("gamma_p: bad arguments");
    if (x == 0.0) return 0.0;
    const double lg = std::lgamma(a);
    if (x < a + 1.0) {
        double ap = a, sum = 1.0 / a, del = sum;
        for (int i = 0; i < 500; ++i) {
            ap += 1.0;
            del *= x / ap;
            sum += del;
            if (std::fabs(del) < std::fabs(sum) * 1e-15) break;
        }
        return sum * std::exp(-x + a * std::log(x) - lg);
    }
    // Lentz continued fraction for Q, then P = 1 - Q.
    double b = x + 1.0 - a, c = 1e308, d = 1.0 / b, h = d;
    for (int i = 1; i < 500; ++i) {
        double an = -static_cast<double>(i) * (static_cast<double>(i) - a);
        b += 2.0;
        d = an * d + b;
        if (std::fabs(d) < 1e-300) d = 1e-300;
        c = b + an / c;
        if (std::fabs(c) < 1e-300) c = 1e-300;
        d = 1.0 / d;
        double del = d * c;
        h *= del;
        if (std::fabs(del - 1.0) < 1e-15) break;
    }
    double q = std::exp(-x + a * std::log(x) - lg) * h;
    return 1.0 - q;
}

inline double gamma_q(double a, double x) { return 1.0 - gamma_p(a, x); }

inline double chi2_pvalue(double stat, double dof) {
    if (stat <= 0.0) return 1.0;
    return gamma_q(dof / 2.0, stat / 2.0);
}

// Chi-square goodness-of-fit against equal cell probabilities.
struct Chi2Result {
    double statistic;
    double dof;
    double p_value;
};

inline Chi2Result chi2_uniform(std::span<const std::int64_t> counts) {
    if (counts.size() < 2) throw DomainError("chi2_uniform: need >= 2 cells");
    double total = 0.0;
    for (auto c : counts) total += static_cast<double>(c);
    double expected = total / static_cast<double>(counts.size());
    double stat = 0.0;
    for (auto c : counts) {
        double d = static_cast<double>(c) - expected;
        stat += d * d / expected;
    }
    double dof = static_cast<double>(counts.size() - 1);
    return {stat, dof, chi2_pvalue(stat, dof)};
}

// One-sample Kolmogorov-Smirnov against Uniform(0, 1).
struct KsResult {
    double statistic;
    double p_value;
};

inline double ks_pvalue_from_statistic(std::size_t n, double d) {
    // Stephens' finite-sample adjustment feeding the Kolmogorov series.
    double sn = std::sqrt(static_cast<double>(n));
    double lambda = (sn + 0.12 + 0.11 / sn) * d;
    double sum = 0.0;
    for (int k = 1; k <= 100; ++k) {
        double term = std::exp(-2.0 * k * k * lambda * lambda);
        sum += (k % 2 == 1 ? 2.0 : -2.0) * term;
        if (term < 1e-12) break;
    }
    return clamp(sum, 0.0, 1.0);
}

inline KsResult ks_uniform01(std::vector<double> sample) {
    if (sample.empty()) throw DomainError("ks_uniform01: empty sample");
    std::sort(sample.begin(), sample.end());
    const double n = static_cast<double>(sample.size());
    double d = 0.0;
    for (std::size_t i = 0; i < sample.size(); ++i) {
        double x = clamp(sample[i], 0.0, 1.0);
        d = std::max(d, (static_cast<double>(i) + 1.0) / n - x);
        d = std::max(d, x - static_cast<double>(i) / n);
    }
    return {d, ks_pvalue_from_statistic(sample.size(), d)};
}

// AUC for "positives score lower than negatives" with mid-rank tie handling.
// Returns the probability that a random positive is below a random negative.
inline double auc_lower(std::span<const double> positives, std::span<const double> negatives) {
    if (positives.empty() || negatives.empty())
        throw DomainError("auc_lower: both groups must be non-empty");
    double wins = 0.0;
    for (double p : positives) {
        for (double q : negatives) {
            if (p < q)
                wins += 1.0;
            else if (p == q)
                wins += 0.5;
        }
    }
    return wins / (static_cast<double>(positives.size()) * static_cast<double>(negatives.size()));
}

}  // namespace psephos
