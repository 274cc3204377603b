#pragma once

#include <algorithm>
#include <sstream>
#include <string>
#include <vector>

#include "psephos/bias.hpp"
#include "psephos/csv.hpp"

namespace psephos {

namespace detail {

inline std::vector<double> quantiles(std::vector<double> values, std::initializer_list<double> qs) {
    std::sort(values.begin(), values.end());
    std::vector<double> out;
    for (double q : qs) {
        double pos = q * static_cast<double>(values.size() - 1);
        std::size_t lo = static_cast<std::size_t>(pos);
        double frac = pos - static_cast<double>(lo);
        double v = lo + 1 < values.size() ? values[lo] * (1.0 - frac) + values[lo + 1] * frac : values[lo];
        out.push_back(v);
    }
    return out;
}

}  // namespace detail

// Plot-ready expected-seat-share curves: for a handful of threshold
// quantiles, a grid of vote shares with the model's conditional expectation.
inline std::string seats_votes_curves_tsv(const SeatsVotesModel& model) {
    const auto& stratum = model.strata.back();  // pooled
    const FeatureMatrix& data = stratum.model.data();
    std::vector<double> ts(data.rows);
    for (std::size_t i = 0; i < data.rows; ++i) ts[i] = data.at(i, 1);
    std::vector<double> t_q = detail::quantiles(ts, {0.1, 0.25, 0.5, 0.75, 0.9});

    std::ostringstream out;
    out << "t_quantile\tt\tv\texpected_seat_share\n";
    const char* labels[] = {"q10", "q25", "q50", "q75", "q90"};
    for (std::size_t qi = 0; qi < t_q.size(); ++qi) {
        for (int i = 0; i <= 48; ++i) {
            double v = 0.02 + 0.96 * static_cast<double>(i) / 48.0;
            std::vector<double> x0{v, t_q[qi]};
            out << labels[qi] << '\t' << format_double(t_q[qi]) << '\t' << format_double(v) << '\t'
                << format_double(stratum.model.expectation(x0)) << '\n';
        }
    }
    return out.str();
}

// Smoothed surfaces over the (v, t) plane: the observed seat share, the
// share the threshold classifier would predict from district-level votes,
// and their difference.
inline std::string seats_votes_surfaces_tsv(const SeatsVotesModel& model, std::span<const PartyRow> rows) {
    if (rows.empty()) throw DomainError("seats_votes_surfaces_tsv: no rows");
    FeatureMatrix observed, predicted;
    observed.rows = predicted.rows = rows.size();
    observed.dims = predicted.dims = 2;
    for (const auto& r : rows) {
        observed.x.push_back(r.v);
        observed.x.push_back(r.t);
        observed.response.push_back(r.s);
        predicted.x.push_back(r.v);
        predicted.x.push_back(r.t);
        predicted.response.push_back(r.s_pred);
    }
    const BandwidthSpec& bw = model.strata.back().bw;
    KernelModel obs_model(std::move(observed), bw);
    KernelModel pred_model(std::move(predicted), bw);

    double v_lo = 1e300, v_hi = -1e300, t_lo = 1e300, t_hi = -1e300;
    for (const auto& r : rows) {
        v_lo = std::min(v_lo, r.v);
        v_hi = std::max(v_hi, r.v);
        t_lo = std::min(t_lo, r.t);
        t_hi = std::max(t_hi, r.t);
    }
    std::ostringstream out;
    out << "v\tt\tempirical_seat_share\texpected_seat_share\tdifference\n";
    const int grid = 24;
    for (int i = 0; i <= grid; ++i) {
        double v = v_lo + (v_hi - v_lo) * static_cast<double>(i) / grid;
        for (int j = 0; j <= grid; ++j) {
            double t = t_lo + (t_hi - t_lo) * static_cast<double>(j) / grid;
            std::vector<double> x0{v, t};
            double emp = obs_model.expectation(x0);
            double exp_s = pred_model.expectation(x0);
            out << format_double(v) << '\t' << format_double(t) << '\t' << format_double(emp) << '\t'
                << format_double(exp_s) << '\t' << format_double(emp - exp_s) << '\n';
        }
    }
    return out.str();
}

inline std::string party_scores_csv(std::span<const ElectionScore> scores) {
    std::ostringstream out;
    out << "election_id,party_id,v,s,t,c,w,p_value\n";
    for (const auto& e : scores)
        for (const auto& p : e.parties)
            out << e.election_id << ',' << p.row.party_id << ',' << format_double(p.row.v) << ','
                << format_double(p.row.s) << ',' << format_double(p.row.t) << ',' << p.row.c << ','
                << format_double(p.row.w) << ',' << format_double(p.p_value) << '\n';
    return out.str();
}

inline std::string election_scores_csv(std::span<const ElectionScore> scores) {
    std::ostringstream out;
    out << "election_id,pi,flagged\n";
    for (const auto& e : scores)
        out << e.election_id << ',' << format_double(e.pi) << ',' << (e.flagged ? 1 : 0) << '\n';
    return out.str();
}

}  // namespace psephos
