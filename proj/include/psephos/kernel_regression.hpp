#pragma once

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>
#include <queue>
#include <span>
#include <string>
#include <vector>

#include "psephos/common.hpp"

namespace psephos {

// N x D predictor matrix with responses; optional per-row weights.
struct FeatureMatrix {
    std::size_t rows = 0;
    std::size_t dims = 0;
    std::vector<double> x;         // row-major, rows * dims
    std::vector<double> response;  // rows
    std::vector<double> weight;    // empty, or rows

    double at(std::size_t row, std::size_t dim) const { return x[row * dims + dim]; }
    void validate() const {
        if (rows == 0 || dims == 0) throw DomainError("FeatureMatrix: empty");
        if (x.size() != rows * dims || response.size() != rows)
            throw DomainError("FeatureMatrix: shape mismatch");
        if (!weight.empty() && weight.size() != rows) throw DomainError("FeatureMatrix: bad weight length");
        for (double v : x)
            if (!std::isfinite(v)) throw DomainError("FeatureMatrix: non-finite predictor");
    }
};

enum class BandwidthScheme { Fixed, GeneralizedNN, AdaptiveNN, MultivariateAdaptiveNN };

inline const char* to_string(BandwidthScheme s) {
    switch (s) {
        case BandwidthScheme::Fixed: return "fixed";
        case BandwidthScheme::GeneralizedNN: return "generalized-nn";
        case BandwidthScheme::AdaptiveNN: return "adaptive-nn";
        case BandwidthScheme::MultivariateAdaptiveNN: return "multivariate-adaptive-nn";
    }
    return "?";
}

inline BandwidthScheme bandwidth_scheme_from_string(const std::string& s) {
    if (s == "fixed") return BandwidthScheme::Fixed;
    if (s == "generalized-nn") return BandwidthScheme::GeneralizedNN;
    if (s == "adaptive-nn") return BandwidthScheme::AdaptiveNN;
    if (s == "multivariate-adaptive-nn") return BandwidthScheme::MultivariateAdaptiveNN;
    throw ParseError("unknown bandwidth scheme '" + s + "'");
}

struct BandwidthSpec {
    BandwidthScheme scheme = BandwidthScheme::MultivariateAdaptiveNN;
    std::vector<double> h0{1.0};  // scalar broadcasts; per-dimension for the multivariate scheme
    int k = 8;                    // nearest-neighbor rank
};

inline double gaussian_kernel(std::span<const double> u) {
    double q = 0.0;
    for (double v : u) q += v * v;
    static const double inv_sqrt_2pi = 0.3989422804014326779399461;
    double norm = 1.0;
    for (std::size_t d = 0; d < u.size(); ++d) norm *= inv_sqrt_2pi;
    return norm * std::exp(-0.5 * q);
}

namespace detail {

// Exact k-NN over the active dimensions; kd-tree above the brute-force
// cutoff. Ties broken by (distance, index) so queries are deterministic.
class KnnIndex {
public:
    static constexpr std::size_t kBruteForceLimit = 256;

    void build(std::vector<double> pts, std::size_t n, std::size_t d) {
        pts_ = std::move(pts);
        n_ = n;
        d_ = d;
        if (n_ >= kBruteForceLimit) {
            order_.resize(n_);
            std::iota(order_.begin(), order_.end(), std::size_t{0});
            nodes_.clear();
            nodes_.reserve(2 * n_);
            root_ = build_node(0, n_);
        }
    }

    struct Hit {
        double dist2;
        std::size_t idx;
        bool operator<(const Hit& o) const {
            return dist2 != o.dist2 ? dist2 < o.dist2 : idx < o.idx;
        }
    };

    // k-th best hit (1-based rank), skipping `exclude_idx` and, optionally,
    // zero-distance rows. Falls back to the farthest available hit when
    // fewer than k rows qualify.
    Hit kth_neighbor(std::span<const double> q, int k, std::ptrdiff_t exclude_idx, bool exclude_zero) const {
        std::priority_queue<Hit> best;  // max-heap of the k best
        auto offer = [&](std::size_t idx) {
            if (static_cast<std::ptrdiff_t>(idx) == exclude_idx) return;
            double dist2 = 0.0;
            const double* p = &pts_[idx * d_];
            for (std::size_t dd = 0; dd < d_; ++dd) {
                double diff = p[dd] - q[dd];
                dist2 += diff * diff;
            }
            if (exclude_zero && dist2 == 0.0) return;
            Hit h{dist2, idx};
            if (best.size() < static_cast<std::size_t>(k))
                best.push(h);
            else if (h < best.top()) {
                best.pop();
                best.push(h);
            }
        };
        if (n_ < kBruteForceLimit) {
            for (std::size_t i = 0; i < n_; ++i) offer(i);
        } else {
            search(root_, q, k, exclude_idx, exclude_zero, best);
        }
        if (best.empty()) throw DomainError("kth_neighbor: no eligible rows");
        return best.top();
    }

private:
    struct Node {
        int left = -1, right = -1;
        std::size_t begin = 0, end = 0;  // leaf range in order_
        std::size_t split_dim = 0;
        double split_val = 0.0;
    };

    int build_node(std::size_t begin, std::size_t end) {
        Node node;
        node.begin = begin;
        node.end = end;
        int id = static_cast<int>(nodes_.size());
        nodes_.push_back(node);
        if (end - begin <= 16) return id;
        // split on the widest dimension at the median
        std::size_t best_dim = 0;
        double best_spread = -1.0;
        for (std::size_t dd = 0; dd < d_; ++dd) {
            double lo = 1e300, hi = -1e300;
            for (std::size_t i = begin; i < end; ++i) {
                double v = pts_[order_[i] * d_ + dd];
                lo = std::min(lo, v);
                hi = std::max(hi, v);
            }
            if (hi - lo > best_spread) {
                best_spread = hi - lo;
                best_dim = dd;
            }
        }
        if (best_spread <= 0.0) return id;  // all identical, keep as leaf
        std::size_t mid = (begin + end) / 2;
        std::nth_element(order_.begin() + begin, order_.begin() + mid, order_.begin() + end,
                         [&](std::size_t a, std::size_t b) {
                             double va = pts_[a * d_ + best_dim], vb = pts_[b * d_ + best_dim];
                             return va != vb ? va < vb : a < b;
                         });
        nodes_[id].split_dim = best_dim;
        nodes_[id].split_val = pts_[order_[mid] * d_ + best_dim];
        nodes_[id].left = build_node(begin, mid);
        nodes_[id].right = build_node(mid, end);
        return id;
    }

    void search(int id, std::span<const double> q, int k, std::ptrdiff_t exclude_idx, bool exclude_zero,
                std::priority_queue<Hit>& best) const {
        const Node& node = nodes_[id];
        if (node.left < 0) {
            for (std::size_t i = node.begin; i < node.end; ++i) {
                std::size_t idx = order_[i];
                if (static_cast<std::ptrdiff_t>(idx) == exclude_idx) continue;
                double dist2 = 0.0;
                const double* p = &pts_[idx * d_];
                for (std::size_t dd = 0; dd < d_; ++dd) {
                    double diff = p[dd] - q[dd];
                    dist2 += diff * diff;
                }
                if (exclude_zero && dist2 == 0.0) continue;
                Hit h{dist2, idx};
                if (best.size() < static_cast<std::size_t>(k))
                    best.push(h);
                else if (h < best.top()) {
                    best.pop();
                    best.push(h);
                }
            }
            return;
        }
        double delta = q[node.split_dim] - node.split_val;
        int near = delta < 0.0 ? node.left : node.right;
        int far = delta < 0.0 ? node.right : node.left;
        search(near, q, k, exclude_idx, exclude_zero, best);
        if (best.size() < static_cast<std::size_t>(k) || delta * delta <= best.top().dist2)
            search(far, q, k, exclude_idx, exclude_zero, best);
    }

    std::vector<double> pts_;
    std::size_t n_ = 0, d_ = 0;
    std::vector<std::size_t> order_;
    std::vector<Node> nodes_;
    int root_ = -1;
};

}  // namespace detail

// Locally-constant (Nadaraya-Watson) regression with a Gaussian kernel and
// per-pair bandwidths. Rows are stored in a canonical sorted order, and all
// reductions run compensated in that order, so predictions are bitwise
// reproducible and invariant under permutations of the input rows.
class KernelModel {
public:
    KernelModel() = default;

    KernelModel(FeatureMatrix data, BandwidthSpec bw, Warnings* warnings = nullptr) {
        data.validate();
        if (bw.k < 1) throw DomainError("KernelModel: k must be >= 1");
        if (bw.k >= static_cast<int>(data.rows) && data.rows > 1)
            throw DomainError("KernelModel: k must be < number of rows");
        for (double h : bw.h0)
            if (!(h > 0.0)) throw DomainError("KernelModel: h0 must be positive");
        canonicalize(data);
        data_ = std::move(data);
        bw_ = std::move(bw);

        // active dimensions: constant columns carry no information and are
        // dropped (a warning is emitted; distances are unaffected)
        for (std::size_t d = 0; d < data_.dims; ++d) {
            double lo = 1e300, hi = -1e300;
            for (std::size_t i = 0; i < data_.rows; ++i) {
                lo = std::min(lo, data_.at(i, d));
                hi = std::max(hi, data_.at(i, d));
            }
            if (hi > lo) {
                active_.push_back(d);
                range_.push_back(hi - lo);
            } else {
                warn(warnings, "KernelModel: dimension " + std::to_string(d) + " is constant and was dropped");
            }
        }
        if (bw_.h0.size() != 1 && bw_.h0.size() != data_.dims)
            throw DomainError("KernelModel: h0 must be scalar or one entry per dimension");

        // compact active-dimension copy of the points
        apts_.resize(data_.rows * active_.size());
        for (std::size_t i = 0; i < data_.rows; ++i)
            for (std::size_t a = 0; a < active_.size(); ++a) apts_[i * active_.size() + a] = data_.at(i, active_[a]);

        build_tables();
    }

    const FeatureMatrix& data() const { return data_; }
    const BandwidthSpec& bandwidth_spec() const { return bw_; }
    std::size_t active_dims() const { return active_.size(); }
    std::size_t underflow_fallbacks() const { return underflow_fallbacks_; }

    // Bandwidth vector (one entry per active dimension) for the pair
    // (query point, row j). Zero components are floored at 1e-8 x the data
    // range of the dimension.
    std::vector<double> bandwidth_for_pair(std::span<const double> x0, std::size_t j) const {
        std::vector<double> q = project(x0);
        std::vector<double> h(active_.size(), 0.0);
        eval_bandwidth(q, j, precompute_query(q, -1), h);
        return h;
    }

    double expectation(std::span<const double> x0) const {
        return weighted_average(project(x0), data_.response, -1);
    }

    // F(s | x0): the same averaging applied to threshold indicators; a
    // non-decreasing right-continuous step function of s.
    double conditional_cdf(std::span<const double> x0, double s) const {
        std::vector<double> q = project(x0);
        QueryScratch scratch = precompute_query(q, -1);
        Accum acc = accumulate(q, -1, scratch, [&](std::size_t j) {
            return data_.response[j] <= s ? 1.0 : 0.0;
        });
        if (acc.den <= 0.0) return fallback(q, -1) <= s ? 1.0 : 0.0;
        return clamp(acc.num / acc.den, 0.0, 1.0);
    }

    double loo_expectation(std::size_t j) const {
        if (data_.rows < 2) throw DomainError("loo_expectation: need at least 2 rows");
        std::vector<double> q(active_.size());
        for (std::size_t a = 0; a < active_.size(); ++a) q[a] = apts_[j * active_.size() + a];
        return weighted_average(q, data_.response, static_cast<std::ptrdiff_t>(j));
    }

    double loo_cdf(std::size_t j, double s) const {
        std::vector<double> q(active_.size());
        for (std::size_t a = 0; a < active_.size(); ++a) q[a] = apts_[j * active_.size() + a];
        QueryScratch scratch = precompute_query(q, static_cast<std::ptrdiff_t>(j));
        Accum acc = accumulate(q, static_cast<std::ptrdiff_t>(j), scratch, [&](std::size_t l) {
            return data_.response[l] <= s ? 1.0 : 0.0;
        });
        if (acc.den <= 0.0) return fallback(q, static_cast<std::ptrdiff_t>(j)) <= s ? 1.0 : 0.0;
        return clamp(acc.num / acc.den, 0.0, 1.0);
    }

    // Per-row kernel weights against a query, in canonical row order.
    // Exposed for criterion computations that need the raw smoother row.
    void weights_for(std::span<const double> x0_active, std::ptrdiff_t exclude,
                     std::vector<double>& out) const {
        out.assign(data_.rows, 0.0);
        std::vector<double> q(x0_active.begin(), x0_active.end());
        QueryScratch scratch = precompute_query(q, exclude);
        std::vector<double> h(active_.size());
        std::vector<double> u(active_.size());
        for (std::size_t j = 0; j < data_.rows; ++j) {
            if (static_cast<std::ptrdiff_t>(j) == exclude) continue;
            eval_bandwidth(q, j, scratch, h);
            for (std::size_t a = 0; a < active_.size(); ++a)
                u[a] = (apts_[j * active_.size() + a] - q[a]) / h[a];
            out[j] = gaussian_kernel(u) * row_weight(j);
        }
    }

    // Trace of the smoother matrix with the own point included.
    double smoother_trace() const {
        KahanSum tr;
        std::vector<double> w;
        std::vector<double> q(active_.size());
        for (std::size_t j = 0; j < data_.rows; ++j) {
            for (std::size_t a = 0; a < active_.size(); ++a) q[a] = apts_[j * active_.size() + a];
            weights_for(q, -1, w);
            KahanSum den;
            for (double v : w) den.add(v);
            if (den.value() > 0.0) tr.add(w[j] / den.value());
        }
        return tr.value();
    }

    double full_prediction(std::size_t j) const {
        std::vector<double> q(active_.size());
        for (std::size_t a = 0; a < active_.size(); ++a) q[a] = apts_[j * active_.size() + a];
        return weighted_average(q, data_.response, -1);
    }

    std::vector<double> project(std::span<const double> x0) const {
        if (x0.size() != data_.dims && x0.size() != active_.size())
            throw DomainError("KernelModel: query dimension mismatch");
        std::vector<double> q(active_.size());
        if (x0.size() == data_.dims)
            for (std::size_t a = 0; a < active_.size(); ++a) q[a] = x0[active_[a]];
        else
            for (std::size_t a = 0; a < active_.size(); ++a) q[a] = x0[a];
        return q;
    }

private:
    struct Accum {
        double num = 0.0;
        double den = 0.0;
    };

    struct QueryScratch {
        double gnn_dist = 0.0;  // distance to the query's k-th neighbor (GeneralizedNN)
    };

    static void canonicalize(FeatureMatrix& m) {
        std::vector<std::size_t> order(m.rows);
        std::iota(order.begin(), order.end(), std::size_t{0});
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
            for (std::size_t d = 0; d < m.dims; ++d) {
                double va = m.x[a * m.dims + d], vb = m.x[b * m.dims + d];
                if (va != vb) return va < vb;
            }
            if (m.response[a] != m.response[b]) return m.response[a] < m.response[b];
            if (!m.weight.empty() && m.weight[a] != m.weight[b]) return m.weight[a] < m.weight[b];
            return false;
        });
        FeatureMatrix sorted;
        sorted.rows = m.rows;
        sorted.dims = m.dims;
        sorted.x.resize(m.x.size());
        sorted.response.resize(m.rows);
        if (!m.weight.empty()) sorted.weight.resize(m.rows);
        for (std::size_t i = 0; i < m.rows; ++i) {
            for (std::size_t d = 0; d < m.dims; ++d) sorted.x[i * m.dims + d] = m.x[order[i] * m.dims + d];
            sorted.response[i] = m.response[order[i]];
            if (!m.weight.empty()) sorted.weight[i] = m.weight[order[i]];
        }
        m = std::move(sorted);
    }

    double row_weight(std::size_t j) const { return data_.weight.empty() ? 1.0 : data_.weight[j]; }

    void build_tables() {
        const std::size_t ad = active_.size();
        if (ad == 0) return;  // degenerate: every weight is K(0) x row weight
        const std::size_t n = data_.rows;
        floor_.resize(ad);
        for (std::size_t a = 0; a < ad; ++a) floor_[a] = 1e-8 * range_[a];

        if (bw_.scheme == BandwidthScheme::MultivariateAdaptiveNN) {
            // per-dimension sorted columns, then the k-th 1-D neighbor of
            // every row by outward expansion
            mann_coord_.resize(n * ad);
            for (std::size_t a = 0; a < ad; ++a) {
                std::vector<std::size_t> order(n);
                std::iota(order.begin(), order.end(), std::size_t{0});
                std::stable_sort(order.begin(), order.end(), [&](std::size_t i, std::size_t j) {
                    return apts_[i * ad + a] < apts_[j * ad + a];
                });
                std::vector<std::size_t> pos(n);
                for (std::size_t r = 0; r < n; ++r) pos[order[r]] = r;
                for (std::size_t i = 0; i < n; ++i) {
                    double xi = apts_[i * ad + a];
                    std::ptrdiff_t l = static_cast<std::ptrdiff_t>(pos[i]) - 1;
                    std::size_t r = pos[i] + 1;
                    double coord = xi;
                    for (int step = 0; step < bw_.k; ++step) {
                        double dl = l >= 0 ? xi - apts_[order[static_cast<std::size_t>(l)] * ad + a] : 1e300;
                        double dr = r < n ? apts_[order[r] * ad + a] - xi : 1e300;
                        if (dl == 1e300 && dr == 1e300) break;
                        if (dl <= dr) {
                            coord = apts_[order[static_cast<std::size_t>(l)] * ad + a];
                            --l;
                        } else {
                            coord = apts_[order[r] * ad + a];
                            ++r;
                        }
                    }
                    mann_coord_[i * ad + a] = coord;
                }
            }
        } else if (bw_.scheme == BandwidthScheme::AdaptiveNN || bw_.scheme == BandwidthScheme::GeneralizedNN) {
            knn_.build(apts_, n, ad);  // copies the points
            if (bw_.scheme == BandwidthScheme::AdaptiveNN) {
                ann_idx_.reserve(n);
                std::vector<double> q(ad);
                for (std::size_t i = 0; i < n; ++i) {
                    for (std::size_t a = 0; a < ad; ++a) q[a] = apts_[i * ad + a];
                    auto hit = knn_.kth_neighbor(q, bw_.k, static_cast<std::ptrdiff_t>(i), false);
                    ann_idx_.push_back(hit.idx);
                }
            }
        }
    }

    QueryScratch precompute_query(std::span<const double> q, std::ptrdiff_t exclude) const {
        QueryScratch s;
        if (bw_.scheme == BandwidthScheme::GeneralizedNN && !active_.empty() && data_.rows > 1) {
            // rows identical to the query are not its neighbors; `exclude`
            // additionally drops the held-out row during cross-validation
            auto hit = knn_.kth_neighbor(q, bw_.k, exclude, true);
            s.gnn_dist = std::sqrt(hit.dist2);
        }
        return s;
    }

    double h0_for_dim(std::size_t active_idx) const {
        if (bw_.h0.size() == 1) return bw_.h0[0];
        return bw_.h0[active_[active_idx]];
    }

    void eval_bandwidth(std::span<const double> q, std::size_t j, const QueryScratch& scratch,
                        std::vector<double>& h) const {
        const std::size_t ad = active_.size();
        switch (bw_.scheme) {
            case BandwidthScheme::Fixed:
                for (std::size_t a = 0; a < ad; ++a) h[a] = h0_for_dim(a);
                break;
            case BandwidthScheme::GeneralizedNN: {
                double v = bw_.h0[0] * scratch.gnn_dist;
                for (std::size_t a = 0; a < ad; ++a) h[a] = v;
                break;
            }
            case BandwidthScheme::AdaptiveNN: {
                // distance from the query to the k-th neighbor of row j
                const double* nb = &apts_[ann_idx_[j] * ad];
                double dist2 = 0.0;
                for (std::size_t a = 0; a < ad; ++a) {
                    double diff = nb[a] - q[a];
                    dist2 += diff * diff;
                }
                double v = bw_.h0[0] * std::sqrt(dist2);
                for (std::size_t a = 0; a < ad; ++a) h[a] = v;
                break;
            }
            case BandwidthScheme::MultivariateAdaptiveNN:
                for (std::size_t a = 0; a < ad; ++a)
                    h[a] = h0_for_dim(a) * std::fabs(q[a] - mann_coord_[j * ad + a]);
                break;
        }
        for (std::size_t a = 0; a < ad; ++a)
            if (!(h[a] > floor_[a])) h[a] = floor_[a];
    }

    template <typename ResponseFn>
    Accum accumulate(std::span<const double> q, std::ptrdiff_t exclude, const QueryScratch& scratch,
                     ResponseFn&& resp) const {
        const std::size_t ad = active_.size();
        KahanSum num, den;
        std::vector<double> h(ad), u(ad);
        for (std::size_t j = 0; j < data_.rows; ++j) {
            if (static_cast<std::ptrdiff_t>(j) == exclude) continue;
            double w;
            if (ad == 0) {
                w = row_weight(j);
            } else {
                eval_bandwidth(q, j, scratch, h);
                for (std::size_t a = 0; a < ad; ++a) u[a] = (apts_[j * ad + a] - q[a]) / h[a];
                w = gaussian_kernel(u) * row_weight(j);
            }
            num.add(w * resp(j));
            den.add(w);
        }
        return {num.value(), den.value()};
    }

    // Nearest-row response, used when every kernel weight underflows.
    double fallback(std::span<const double> q, std::ptrdiff_t exclude) const {
        ++underflow_fallbacks_;
        const std::size_t ad = active_.size();
        double best = std::numeric_limits<double>::infinity();
        std::size_t best_j = 0;
        for (std::size_t j = 0; j < data_.rows; ++j) {
            if (static_cast<std::ptrdiff_t>(j) == exclude) continue;
            double dist2 = 0.0;
            for (std::size_t a = 0; a < ad; ++a) {
                double diff = apts_[j * ad + a] - q[a];
                dist2 += diff * diff;
            }
            if (dist2 < best) {
                best = dist2;
                best_j = j;
            }
        }
        return data_.response[best_j];
    }

    double weighted_average(std::span<const double> q, const std::vector<double>& resp,
                            std::ptrdiff_t exclude) const {
        QueryScratch scratch = precompute_query(q, exclude);
        Accum acc = accumulate(q, exclude, scratch, [&](std::size_t j) { return resp[j]; });
        if (acc.den <= 0.0) return fallback(q, exclude);
        double lo = 1e300, hi = -1e300;
        for (std::size_t j = 0; j < data_.rows; ++j) {
            if (static_cast<std::ptrdiff_t>(j) == exclude) continue;
            lo = std::min(lo, resp[j]);
            hi = std::max(hi, resp[j]);
        }
        return clamp(acc.num / acc.den, lo, hi);
    }

    FeatureMatrix data_;
    BandwidthSpec bw_;
    std::vector<std::size_t> active_;
    std::vector<double> range_;
    std::vector<double> floor_;
    std::vector<double> apts_;        // rows x active dims
    std::vector<double> mann_coord_;  // rows x active dims
    std::vector<std::size_t> ann_idx_;
    detail::KnnIndex knn_;
    mutable std::size_t underflow_fallbacks_ = 0;
};

// --- bandwidth selection ----------------------------------------------------

enum class SelectionCriterion { LooSquaredError, LooCdfDeviance, HurvichAicc };

inline const char* to_string(SelectionCriterion c) {
    switch (c) {
        case SelectionCriterion::LooSquaredError: return "loo-squared-error";
        case SelectionCriterion::LooCdfDeviance: return "loo-cdf-deviance";
        case SelectionCriterion::HurvichAicc: return "hurvich-aicc";
    }
    return "?";
}

inline SelectionCriterion selection_criterion_from_string(const std::string& s) {
    if (s == "loo-squared-error") return SelectionCriterion::LooSquaredError;
    if (s == "loo-cdf-deviance") return SelectionCriterion::LooCdfDeviance;
    if (s == "hurvich-aicc") return SelectionCriterion::HurvichAicc;
    throw ParseError("unknown selection criterion '" + s + "'");
}

struct BandwidthSearchSpace {
    std::vector<double> h0_grid{0.5, 1.0, 2.0, 4.0};
    std::vector<int> k_grid{8, 16, 32, 64};
};

struct BandwidthSelection {
    BandwidthSpec spec;
    double criterion_value = 0.0;
    std::size_t candidates_tried = 0;
    std::size_t candidates_rejected = 0;
};

namespace detail {

inline double criterion_value(const KernelModel& model, SelectionCriterion criterion) {
    const FeatureMatrix& data = model.data();
    const std::size_t n = data.rows;
    switch (criterion) {
        case SelectionCriterion::LooSquaredError: {
            KahanSum sse;
            for (std::size_t j = 0; j < n; ++j) {
                double d = data.response[j] - model.loo_expectation(j);
                sse.add(d * d);
            }
            return sse.value();
        }
        case SelectionCriterion::LooCdfDeviance: {
            // binary cross-entropy of leave-one-out CDF estimates over the
            // response deciles plus tail quantiles; the tail thresholds
            // penalize bandwidths whose estimates degenerate to 0/1 there
            std::vector<double> sorted = data.response;
            std::sort(sorted.begin(), sorted.end());
            std::vector<double> taus;
            static const double levels[] = {0.025, 0.05, 0.1, 0.2, 0.3, 0.4, 0.5,
                                            0.6,   0.7,  0.8, 0.9, 0.95, 0.975};
            for (double level : levels) {
                double t = sorted[std::min(n - 1, static_cast<std::size_t>(level * static_cast<double>(n)))];
                if (taus.empty() || t > taus.back()) taus.push_back(t);
            }
            std::vector<std::size_t> by_resp(n);
            std::iota(by_resp.begin(), by_resp.end(), std::size_t{0});
            std::stable_sort(by_resp.begin(), by_resp.end(),
                             [&](std::size_t a, std::size_t b) { return data.response[a] < data.response[b]; });
            KahanSum dev;
            std::vector<double> w;
            std::vector<double> full(data.dims);
            for (std::size_t j = 0; j < n; ++j) {
                for (std::size_t d = 0; d < data.dims; ++d) full[d] = data.at(j, d);
                std::vector<double> qj = model.project(full);
                model.weights_for(qj, static_cast<std::ptrdiff_t>(j), w);
                KahanSum den;
                for (double v : w) den.add(v);
                if (den.value() <= 0.0) return std::numeric_limits<double>::infinity();
                // prefix weights in response order give every threshold in one pass
                KahanSum cum;
                std::size_t pos = 0;
                for (double tau : taus) {
                    while (pos < n && data.response[by_resp[pos]] <= tau) {
                        cum.add(w[by_resp[pos]]);
                        ++pos;
                    }
                    double yhat = clamp(cum.value() / den.value(), 1e-6, 1.0 - 1e-6);
                    double y = data.response[j] <= tau ? 1.0 : 0.0;
                    dev.add(-(y * std::log(yhat) + (1.0 - y) * std::log(1.0 - yhat)));
                }
            }
            return dev.value();
        }
        case SelectionCriterion::HurvichAicc: {
            double tr = model.smoother_trace();
            double nn = static_cast<double>(n);
            if (tr + 2.0 >= nn) return std::numeric_limits<double>::infinity();
            KahanSum sse;
            for (std::size_t j = 0; j < n; ++j) {
                double d = data.response[j] - model.full_prediction(j);
                sse.add(d * d);
            }
            double sigma2 = sse.value() / nn;
            if (sigma2 <= 0.0) sigma2 = 1e-300;
            return std::log(sigma2) + (1.0 + tr / nn) / (1.0 - (tr + 2.0) / nn);
        }
    }
    return std::numeric_limits<double>::infinity();
}

}  // namespace detail

// Grid search over (h0, k); candidates are ordered (k ascending, h0
// ascending) and the first strict minimum wins, so ties resolve to the
// smallest candidate.
inline BandwidthSelection select_bandwidth(const FeatureMatrix& data, BandwidthScheme scheme,
                                           const BandwidthSearchSpace& space, SelectionCriterion criterion,
                                           Warnings* warnings = nullptr, unsigned workers = 1) {
    data.validate();
    if (data.rows < 10) throw DomainError("select_bandwidth: need at least 10 rows");
    if (space.h0_grid.empty() || (scheme != BandwidthScheme::Fixed && space.k_grid.empty()))
        throw DomainError("select_bandwidth: empty search space");

    std::vector<int> ks = scheme == BandwidthScheme::Fixed ? std::vector<int>{1} : space.k_grid;
    std::sort(ks.begin(), ks.end());
    std::vector<double> h0s = space.h0_grid;
    std::sort(h0s.begin(), h0s.end());

    struct Candidate {
        BandwidthSpec spec;
        double value = std::numeric_limits<double>::infinity();
        std::string rejection;
    };
    std::vector<Candidate> cands;
    for (int k : ks) {
        if (k >= static_cast<int>(data.rows)) continue;
        for (double h0 : h0s) cands.push_back({BandwidthSpec{scheme, {h0}, k}, 0.0, {}});
    }
    if (cands.empty()) {
        // every requested rank exceeds the sample; fall back to the largest
        // admissible one rather than failing a small stratum outright
        int k_fallback = static_cast<int>(data.rows) - 1;
        warn(warnings, "select_bandwidth: every k in the grid is >= N=" + std::to_string(data.rows) +
                           "; falling back to k=" + std::to_string(k_fallback));
        for (double h0 : h0s) cands.push_back({BandwidthSpec{scheme, {h0}, k_fallback}, 0.0, {}});
    }

    parallel_for(cands.size(), workers, [&](std::size_t i) {
        try {
            KernelModel model(data, cands[i].spec, nullptr);
            cands[i].value = detail::criterion_value(model, criterion);
            if (!std::isfinite(cands[i].value)) cands[i].rejection = "criterion not finite (penalty pole)";
        } catch (const std::exception& ex) {
            cands[i].value = std::numeric_limits<double>::infinity();
            cands[i].rejection = ex.what();
        }
    });

    BandwidthSelection out;
    out.candidates_tried = cands.size();
    double best = std::numeric_limits<double>::infinity();
    std::string reasons;
    for (const auto& c : cands) {
        if (!c.rejection.empty() || !std::isfinite(c.value)) {
            out.candidates_rejected += 1;
            if (!c.rejection.empty() && reasons.size() < 500)
                reasons += "[k=" + std::to_string(c.spec.k) + ",h0=" + std::to_string(c.spec.h0[0]) + "] " +
                           c.rejection + "; ";
            continue;
        }
        if (c.value < best) {
            best = c.value;
            out.spec = c.spec;
            out.criterion_value = c.value;
        }
    }
    if (!std::isfinite(best))
        throw ValidationError("select_bandwidth: all candidates rejected: " +
                              (reasons.empty() ? std::string("criterion not finite") : reasons));
    if (out.candidates_rejected > 0)
        warn(warnings, "select_bandwidth: rejected " + std::to_string(out.candidates_rejected) + " of " +
                           std::to_string(out.candidates_tried) + " candidates");
    return out;
}

}  // namespace psephos
