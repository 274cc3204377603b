#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <span>
#include <string>
#include <vector>

#include "psephos/common.hpp"
#include "psephos/election.hpp"
#include "psephos/rng.hpp"
#include "psephos/stats.hpp"

namespace psephos {

// Renormalized vote shares of one candidate's competitors, plus the effective
// number of competitors phi = 1 / sum z_j^2.
struct CompetitorProfile {
    std::vector<double> shares;  // on the simplex
    int candidate_count = 0;     // total candidates in the district, competitors + 1
    double phi = 0.0;
};

inline double effective_competitors(std::span<const double> z) {
    double hhi = 0.0;
    for (double v : z) hhi += v * v;
    if (hhi <= 0.0) throw DomainError("effective_competitors: zero vector");
    return 1.0 / hhi;
}

inline CompetitorProfile competitor_profile(std::span<const double> shares, std::size_t candidate_idx) {
    if (shares.size() < 2) throw DomainError("competitor_profile: need at least 2 candidates");
    if (candidate_idx >= shares.size()) throw DomainError("competitor_profile: bad candidate index");
    double rest = 0.0;
    for (std::size_t j = 0; j < shares.size(); ++j)
        if (j != candidate_idx) rest += shares[j];
    if (rest <= 0.0)
        throw DomainError("competitor_profile: candidate holds the entire vote, no competitors");
    CompetitorProfile p;
    p.candidate_count = static_cast<int>(shares.size());
    p.shares.reserve(shares.size() - 1);
    for (std::size_t j = 0; j < shares.size(); ++j)
        if (j != candidate_idx) p.shares.push_back(shares[j] / rest);
    p.phi = effective_competitors(p.shares);
    return p;
}

inline CompetitorProfile competitor_profile(const District& d, int candidate_idx) {
    std::vector<double> shares(d.candidates.size());
    for (int i = 0; i < d.candidate_count(); ++i) shares[i] = d.share(i);
    return competitor_profile(shares, static_cast<std::size_t>(candidate_idx));
}

struct DiversityStats {
    double vmax = 0, vmin = 0, vmedian = 0;
    double entropy = 0;        // natural log
    double hhi = 0;            // sum of squares
    double gini = 0;           // mean-normalized pairwise absolute differences
    double bhattacharyya = 0;  // angle to the barycenter
};

inline DiversityStats diversity_stats(std::span<const double> x) {
    const std::size_t n = x.size();
    if (n < 2) throw DomainError("diversity_stats: need a simplex vector with n >= 2");
    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    DiversityStats s;
    s.vmin = sorted.front();
    s.vmax = sorted.back();
    s.vmedian = n % 2 == 1 ? sorted[n / 2] : 0.5 * (sorted[n / 2 - 1] + sorted[n / 2]);
    double h = 0.0, hhi = 0.0, bc = 0.0, gini_num = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        double v = sorted[i];
        if (v > 0.0) h -= v * std::log(v);
        hhi += v * v;
        bc += std::sqrt(v / static_cast<double>(n));
        // sum_{i,j} |x_i - x_j| accumulated over the sorted order
        gini_num += (2.0 * static_cast<double>(i) + 1.0 - static_cast<double>(n)) * v;
    }
    s.entropy = h;
    s.hhi = hhi;
    s.bhattacharyya = std::acos(clamp(bc, -1.0, 1.0));
    // Mean of a simplex vector is 1/n, so G = sum|xi-xj| / (2 n^2 mu) = gini_num / n.
    s.gini = gini_num / static_cast<double>(n);
    return s;
}

// Share of the larger of two competitors, recovered from phi alone.
inline double largest_of_two(double phi) {
    if (phi < 1.0 - 1e-12 || phi > 2.0 + 1e-12)
        throw DomainError("largest_of_two: phi must lie in [1, 2]");
    double r = 2.0 / phi - 1.0;
    return 0.5 * (1.0 + std::sqrt(std::max(0.0, r)));
}

// Win/lose decision boundary for three-candidate districts as a function of
// phi: the vote share t at which beating the larger competitor becomes the
// 50% event. With m the larger competitor's renormalized share, t = m/(1+m).
inline double analytic_boundary_n3(double phi) {
    double m = largest_of_two(phi);
    return m / (1.0 + m);
}

// Probability of winning with vote share v when the renormalized share of the
// largest competitor has CDF F: the candidate wins iff v > (1-v) * Z, i.e.
// iff Z < v/(1-v).
template <typename Cdf>
double win_probability(double v, Cdf&& largest_competitor_cdf) {
    if (v < 0.0 || v > 1.0) throw DomainError("win_probability: v must lie in [0, 1]");
    if (v >= 1.0) return 1.0;
    double arg = clamp(v / (1.0 - v), 0.0, 1.0);
    return largest_competitor_cdf(arg);
}

// --- Monte Carlo diversity study -------------------------------------------

inline constexpr std::array<const char*, 8> kStudyVariables = {
    "alpha", "V1_down", "V1_up", "V_med", "H", "HHI", "Gini", "Bhatt"};

struct CorrelationStudyResult {
    int n = 0;
    std::uint64_t samples = 0;
    std::uint64_t seed = 0;
    std::array<std::array<double, 8>, 8> rho{};
};

// Draws a concentration alpha ~ Gamma(shape, 1), V ~ Dir({alpha}^n), records
// the eight variables per sample, and returns their Spearman matrix. Each
// sample uses its own RNG substream keyed by (seed, n, sample index), so the
// result does not depend on how samples are scheduled across workers.
inline CorrelationStudyResult diversity_study_for_n(int n, std::uint64_t samples, std::uint64_t seed,
                                                    double concentration_shape = 2.0) {
    if (n < 2) throw DomainError("diversity_study_for_n: n must be >= 2");
    if (samples < 1) throw DomainError("diversity_study_for_n: need samples >= 1");
    std::array<std::vector<double>, 8> cols;
    for (auto& c : cols) c.resize(samples);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (std::uint64_t i = 0; i < samples; ++i) {
        Rng rng = Rng::substream(seed, (static_cast<std::uint64_t>(n) << 40) + i);
        double alpha = rng.gamma(concentration_shape);
        rng.dirichlet(alpha, v);
        DiversityStats d = diversity_stats(v);
        cols[0][i] = alpha;
        cols[1][i] = d.vmax;
        cols[2][i] = d.vmin;
        cols[3][i] = d.vmedian;
        cols[4][i] = d.entropy;
        cols[5][i] = d.hhi;
        cols[6][i] = d.gini;
        cols[7][i] = d.bhattacharyya;
    }
    CorrelationStudyResult r;
    r.n = n;
    r.samples = samples;
    r.seed = seed;
    std::array<std::vector<double>, 8> ranks;
    for (int a = 0; a < 8; ++a) ranks[a] = mid_ranks(cols[a]);
    for (int a = 0; a < 8; ++a) {
        r.rho[a][a] = 1.0;
        for (int b = a + 1; b < 8; ++b) {
            double rho = pearson(ranks[a], ranks[b]);
            r.rho[a][b] = rho;
            r.rho[b][a] = rho;
        }
    }
    return r;
}

inline std::vector<CorrelationStudyResult> run_diversity_study(int n_min, int n_max, std::uint64_t samples,
                                                               std::uint64_t seed,
                                                               double concentration_shape = 2.0) {
    if (n_min < 2 || n_max < n_min) throw DomainError("run_diversity_study: bad n range");
    std::vector<CorrelationStudyResult> out;
    for (int n = n_min; n <= n_max; ++n)
        out.push_back(diversity_study_for_n(n, samples, seed, concentration_shape));
    return out;
}

inline std::string study_result_tsv(const CorrelationStudyResult& r) {
    std::ostringstream out;
    out << "variable";
    for (auto* name : kStudyVariables) out << '\t' << name;
    out << '\n';
    for (int a = 0; a < 8; ++a) {
        out << kStudyVariables[a];
        for (int b = 0; b < 8; ++b) out << '\t' << format_double(r.rho[a][b]);
        out << '\n';
    }
    return out.str();
}

}  // namespace psephos
