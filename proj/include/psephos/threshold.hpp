#pragma once

#include <cmath>
#include <map>
#include <memory>
#include <numeric>
#include <optional>
#include <span>
#include <vector>

#include "psephos/bspline.hpp"
#include "psephos/common.hpp"
#include "psephos/competition.hpp"
#include "psephos/election.hpp"
#include "psephos/rng.hpp"
#include "psephos/svm.hpp"

namespace psephos {

// One candidate observation: district vote share, effective number of
// competitors, and whether the candidate took the seat.
struct TrainingPoint {
    double v = 0.0;
    double phi = 1.0;
    bool won = false;
};

// One observation per candidate per contested district, grouped by the
// district's candidate count. Tied districts contribute nothing.
inline std::map<int, std::vector<TrainingPoint>> extract_training_points(std::span<const Election> elections) {
    std::map<int, std::vector<TrainingPoint>> by_n;
    for (const auto& e : elections) {
        for (const auto& d : e.districts) {
            if (d.tie) continue;
            for (int i = 0; i < d.candidate_count(); ++i) {
                CompetitorProfile p = competitor_profile(d, i);
                by_n[d.candidate_count()].push_back({d.share(i), p.phi, d.winner == i});
            }
        }
    }
    return by_n;
}

struct ThresholdTrainOptions {
    std::size_t min_group = 200;
    std::vector<double> c_grid{0.1, 1.0, 10.0};
    int cv_folds = 5;
    int trace_points = 200;
    std::vector<int> knot_counts{0, 1, 2, 3, 4, 6, 8};
    double holdout_fraction = 0.2;
    std::uint64_t seed = 1;
};

// Learned boundary for one candidate count: a non-increasing cubic spline
// t(phi) over [1, n-1] with values clamped into [1/n, 1/2].
struct BoundaryCurve {
    int n = 0;
    std::vector<int> covered_n;  // candidate counts served by this curve
    CubicBSpline spline;
    double r_insample = 0.0;
    double r_holdout = 0.0;
    std::size_t points = 0;
    double c_reg = 0.0;
    int interior_knots = 0;
    std::uint64_t seed = 0;
};

namespace detail {

inline double misclassification(const CubicBSpline& s, std::span<const TrainingPoint> pts, double lo,
                                double hi) {
    if (pts.empty()) return 0.0;
    std::size_t wrong = 0;
    for (const auto& p : pts) {
        double t = clamp(s(p.phi), lo, hi);
        if ((p.v > t) != p.won) ++wrong;
    }
    return static_cast<double>(wrong) / static_cast<double>(pts.size());
}

// Locate the lost->won crossing of the decision function along v at fixed
// phi. The decision surface is cubic in v, so there can be spurious sign
// changes; preference goes to the crossing nearest the previous phi's value
// (the boundary is continuous in phi).
inline std::optional<double> trace_crossing(const PolySvm& svm, double phi, double v_lo, double v_hi,
                                            std::optional<double> previous) {
    const int grid = 256;
    double pt[2];
    std::vector<double> vals(grid + 1);
    for (int i = 0; i <= grid; ++i) {
        double v = v_lo + (v_hi - v_lo) * static_cast<double>(i) / grid;
        pt[0] = v;
        pt[1] = phi;
        vals[i] = svm.decision(pt);
    }
    std::vector<double> crossings;
    for (int i = 0; i < grid; ++i) {
        if (vals[i] < 0.0 && vals[i + 1] >= 0.0) {
            double a = v_lo + (v_hi - v_lo) * static_cast<double>(i) / grid;
            double b = a + (v_hi - v_lo) / grid;
            for (int it = 0; it < 40; ++it) {
                double mid = 0.5 * (a + b);
                pt[0] = mid;
                pt[1] = phi;
                if (svm.decision(pt) < 0.0)
                    a = mid;
                else
                    b = mid;
            }
            crossings.push_back(0.5 * (a + b));
        }
    }
    if (crossings.empty()) return std::nullopt;
    if (crossings.size() == 1) return crossings[0];
    double anchor = previous ? *previous : 0.4;
    double best = crossings[0];
    for (double c : crossings)
        if (std::fabs(c - anchor) < std::fabs(best - anchor)) best = c;
    return best;
}

}  // namespace detail

// SVM + monotone-spline boundary for one candidate count n > 3.
inline BoundaryCurve train_boundary(std::vector<TrainingPoint> points, int n,
                                    const ThresholdTrainOptions& opt) {
    if (points.size() < 8) throw ValidationError("train_boundary: too few points");
    bool won = false, lost = false;
    for (const auto& p : points) (p.won ? won : lost) = true;
    if (!won || !lost) throw ValidationError("train_boundary: single-label data");

    Rng rng = Rng::substream(opt.seed, static_cast<std::uint64_t>(n));
    std::vector<std::size_t> order(points.size());
    std::iota(order.begin(), order.end(), std::size_t{0});
    {
        std::vector<std::size_t> tmp = order;
        rng.shuffle(tmp);
        order = tmp;
    }
    std::size_t holdout = static_cast<std::size_t>(opt.holdout_fraction * static_cast<double>(points.size()));
    std::vector<TrainingPoint> train, held;
    train.reserve(points.size() - holdout);
    held.reserve(holdout);
    for (std::size_t i = 0; i < order.size(); ++i)
        (i < holdout ? held : train).push_back(points[order[i]]);

    auto pack = [](std::span<const TrainingPoint> pts, std::vector<double>& x, std::vector<int>& y) {
        x.resize(pts.size() * 2);
        y.resize(pts.size());
        for (std::size_t i = 0; i < pts.size(); ++i) {
            x[i * 2] = pts[i].v;
            x[i * 2 + 1] = pts[i].phi;
            y[i] = pts[i].won ? 1 : -1;
        }
    };

    // regularization weight by K-fold CV on margin misclassification
    double best_c = opt.c_grid.front();
    if (opt.c_grid.size() > 1 && static_cast<int>(train.size()) >= 4 * opt.cv_folds) {
        double best_err = 1e300;
        for (double c : opt.c_grid) {
            std::size_t wrong = 0, total = 0;
            for (int fold = 0; fold < opt.cv_folds; ++fold) {
                std::vector<TrainingPoint> tr, va;
                for (std::size_t i = 0; i < train.size(); ++i)
                    (static_cast<int>(i % opt.cv_folds) == fold ? va : tr).push_back(train[i]);
                std::vector<double> x;
                std::vector<int> y;
                pack(tr, x, y);
                PolySvm svm;
                svm.train(x, 2, y, {.c = c});
                for (const auto& p : va) {
                    double pt[2] = {p.v, p.phi};
                    if ((svm.decision(pt) > 0.0) != p.won) ++wrong;
                }
                total += va.size();
            }
            double err = static_cast<double>(wrong) / static_cast<double>(total);
            if (err < best_err - 1e-12) {
                best_err = err;
                best_c = c;
            }
        }
    }

    std::vector<double> x;
    std::vector<int> y;
    pack(train, x, y);
    PolySvm svm;
    svm.train(x, 2, y, {.c = best_c});

    // trace the decision boundary over phi, then smooth it
    const double phi_lo = 1.0, phi_hi = static_cast<double>(n - 1);
    std::vector<double> bx, by;
    std::optional<double> prev;
    for (int g = 0; g < opt.trace_points; ++g) {
        double phi = phi_lo + (phi_hi - phi_lo) * (static_cast<double>(g) + 0.5) / opt.trace_points;
        auto v = detail::trace_crossing(svm, phi, 0.01, 0.75, prev);
        if (!v) continue;
        prev = v;
        bx.push_back(phi);
        by.push_back(*v);
    }
    if (bx.size() < 8) throw ValidationError("train_boundary: decision boundary could not be traced");

    const double t_lo = 1.0 / static_cast<double>(n), t_hi = 0.5;
    std::vector<int> knot_counts = opt.knot_counts;
    std::sort(knot_counts.begin(), knot_counts.end());
    int best_knots = 0;
    double best_sse = 1e300;
    const int folds = std::max(2, opt.cv_folds);
    for (int kc : knot_counts) {
        if (bx.size() < static_cast<std::size_t>(kc) + 6) continue;  // not enough points for this many knots
        double sse = 0.0;
        bool ok = true;
        for (int fold = 0; fold < folds; ++fold) {
            std::vector<double> tx, ty, vx, vy;
            for (std::size_t i = 0; i < bx.size(); ++i) {
                if (static_cast<int>(i % folds) == fold) {
                    vx.push_back(bx[i]);
                    vy.push_back(by[i]);
                } else {
                    tx.push_back(bx[i]);
                    ty.push_back(by[i]);
                }
            }
            if (tx.size() < static_cast<std::size_t>(kc) + 4) {
                ok = false;
                break;
            }
            CubicBSpline s = fit_bspline_nonincreasing(tx, ty, CubicBSpline::clamped_knots(phi_lo, phi_hi, kc),
                                                       t_lo, t_hi);
            for (std::size_t i = 0; i < vx.size(); ++i) {
                double d = s(vx[i]) - vy[i];
                sse += d * d;
            }
        }
        if (ok && sse < best_sse - 1e-12) {
            best_sse = sse;
            best_knots = kc;
        }
    }

    BoundaryCurve out;
    out.n = n;
    out.covered_n = {n};
    out.spline = fit_bspline_nonincreasing(bx, by, CubicBSpline::clamped_knots(phi_lo, phi_hi, best_knots),
                                           t_lo, t_hi);
    out.points = points.size();
    out.c_reg = best_c;
    out.interior_knots = best_knots;
    out.seed = opt.seed;
    out.r_insample = detail::misclassification(out.spline, train, t_lo, t_hi);
    out.r_holdout = held.empty() ? out.r_insample : detail::misclassification(out.spline, held, t_lo, t_hi);
    return out;
}

// Per-candidate-count seat threshold model. n = 2 and n = 3 are closed-form;
// learned splines cover n > 3.
class ThresholdModel {
public:
    ThresholdModel() = default;

    void add_curve(std::shared_ptr<BoundaryCurve> curve) {
        for (int n : curve->covered_n) by_n_[n] = curve;
        max_n_ = std::max(max_n_, curve->n);
    }

    const std::map<int, std::shared_ptr<BoundaryCurve>>& curves() const { return by_n_; }
    int max_trained_n() const { return max_n_; }

    double threshold(int n, double phi, Warnings* warnings = nullptr) const {
        if (n < 2) throw DomainError("threshold: candidate count must be >= 2");
        double phi_max = static_cast<double>(n - 1);
        if (phi < 1.0 - 1e-9 || phi > phi_max + 1e-9)
            warn(warnings, "threshold: phi " + std::to_string(phi) + " clamped into [1, " +
                               std::to_string(phi_max) + "]");
        phi = clamp(phi, 1.0, phi_max);
        if (n == 2) return 0.5;
        if (n == 3) return analytic_boundary_n3(phi);
        const BoundaryCurve* curve = lookup(n);
        if (curve == nullptr) {
            // untrained candidate count: evaluate the widest trained curve,
            // but keep this n's own admissible range
            if (by_n_.empty()) throw ValidationError("threshold: no trained curves for n > 3");
            curve = by_n_.rbegin()->second.get();
            warn(warnings, "threshold: no curve for n=" + std::to_string(n) + ", using n=" +
                               std::to_string(curve->n));
        }
        double t = curve->spline(clamp(phi, curve->spline.domain_lo(), curve->spline.domain_hi()));
        return clamp(t, 1.0 / static_cast<double>(n), 0.5);
    }

    bool classify(double v, int n, double phi, Warnings* warnings = nullptr) const {
        return v > threshold(n, phi, warnings);
    }

private:
    const BoundaryCurve* lookup(int n) const {
        auto it = by_n_.find(n);
        if (it != by_n_.end()) return it->second.get();
        // merged or missing group: nearest trained curve above, else the largest
        auto up = by_n_.upper_bound(n);
        if (up != by_n_.end()) return up->second.get();
        return nullptr;
    }

    std::map<int, std::shared_ptr<BoundaryCurve>> by_n_;
    int max_n_ = 0;
};

// Groups of fewer than min_group points merge into the next candidate count
// up (the last group merges down) before training.
inline ThresholdModel train_threshold_model(const std::map<int, std::vector<TrainingPoint>>& by_n,
                                            const ThresholdTrainOptions& opt, Warnings* warnings = nullptr) {
    ThresholdModel model;
    std::vector<std::pair<int, std::vector<TrainingPoint>>> groups;
    for (const auto& [n, pts] : by_n) {
        if (n <= 3) continue;  // closed-form
        groups.emplace_back(n, pts);
    }
    if (groups.empty()) return model;

    // merge undersized groups upward
    std::vector<std::pair<std::vector<int>, std::vector<TrainingPoint>>> merged;
    std::vector<int> pending_n;
    std::vector<TrainingPoint> pending;
    for (auto& [n, pts] : groups) {
        pending_n.push_back(n);
        pending.insert(pending.end(), pts.begin(), pts.end());
        if (pending.size() >= opt.min_group) {
            merged.emplace_back(pending_n, std::move(pending));
            pending_n.clear();
            pending.clear();
        }
    }
    if (!pending.empty()) {
        if (!merged.empty()) {
            auto& last = merged.back();
            last.first.insert(last.first.end(), pending_n.begin(), pending_n.end());
            last.second.insert(last.second.end(), pending.begin(), pending.end());
            warn(warnings, "threshold training: merged undersized top group into n=" +
                               std::to_string(last.first.front()));
        } else {
            merged.emplace_back(pending_n, std::move(pending));
            warn(warnings, "threshold training: only an undersized group is available");
        }
    }

    for (auto& [ns, pts] : merged) {
        int n_train = *std::max_element(ns.begin(), ns.end());
        if (ns.size() > 1)
            warn(warnings, "threshold training: groups for " + std::to_string(ns.size()) +
                               " candidate counts merged into n=" + std::to_string(n_train));
        auto curve = std::make_shared<BoundaryCurve>(train_boundary(pts, n_train, opt));
        curve->covered_n = ns;
        model.add_curve(curve);
    }
    return model;
}

// Unweighted mean of the party's per-district thresholds.
inline double mean_effective_seat_threshold(const Election& e, const PartyStats& party,
                                            const ThresholdModel& model, Warnings* warnings = nullptr) {
    if (party.districts.empty()) throw DomainError("mean_effective_seat_threshold: party contests nothing");
    KahanSum sum;
    for (std::size_t idx = 0; idx < party.districts.size(); ++idx) {
        const District& d = e.districts[static_cast<std::size_t>(party.districts[idx])];
        int cand = -1;
        for (int i = 0; i < d.candidate_count(); ++i)
            if (d.candidates[i].party == party.party) cand = i;
        if (cand < 0) throw ValidationError("mean_effective_seat_threshold: inconsistent party index");
        CompetitorProfile p = competitor_profile(d, cand);
        sum.add(model.threshold(d.candidate_count(), p.phi, warnings));
    }
    return sum.value() / static_cast<double>(party.districts.size());
}

}  // namespace psephos
