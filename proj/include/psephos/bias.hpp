#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "psephos/common.hpp"
#include "psephos/election.hpp"
#include "psephos/kernel_regression.hpp"
#include "psephos/rng.hpp"
#include "psephos/threshold.hpp"

namespace psephos {

// One party observation for the seats-votes model: the regression features
// (v, t), the seat-share response, the district count, and the within-
// election vote weight used for aggregation.
struct PartyRow {
    std::string election_id;
    std::string party_id;
    double v = 0.0;       // aggregate vote share
    double t = 0.5;       // mean effective seat threshold
    double s = 0.0;       // aggregate seat share
    double s_pred = 0.0;  // classifier-implied seat share (reporting aid)
    double w = 0.0;       // vote weight within the election
    int c = 0;            // contested district count
};

inline std::vector<PartyRow> build_party_rows(std::span<const Election> elections,
                                              const ThresholdModel& thresholds,
                                              Warnings* warnings = nullptr) {
    std::vector<PartyRow> rows;
    for (const auto& e : elections) {
        for (const auto& p : e.parties) {
            PartyRow r;
            r.election_id = e.id;
            r.party_id = p.party;
            r.v = p.vote_share;
            r.s = p.seat_share;
            r.w = p.weight;
            r.c = p.contested;
            r.t = mean_effective_seat_threshold(e, p, thresholds, warnings);
            // seat share the threshold classifier would predict from the
            // district-level shares
            int predicted = 0;
            for (std::size_t idx = 0; idx < p.districts.size(); ++idx) {
                const District& d = e.districts[static_cast<std::size_t>(p.districts[idx])];
                int cand = -1;
                for (int i = 0; i < d.candidate_count(); ++i)
                    if (d.candidates[i].party == p.party) cand = i;
                CompetitorProfile cp = competitor_profile(d, cand);
                if (thresholds.classify(d.share(cand), d.candidate_count(), cp.phi, warnings)) ++predicted;
            }
            r.s_pred = static_cast<double>(predicted) / static_cast<double>(p.contested);
            rows.push_back(std::move(r));
        }
    }
    return rows;
}

struct SeatsVotesOptions {
    int k0 = 0;  // 0 = derive from the district-count distribution (floor 5)
    BandwidthScheme scheme = BandwidthScheme::MultivariateAdaptiveNN;
    BandwidthSearchSpace space;
    SelectionCriterion criterion = SelectionCriterion::LooCdfDeviance;
    std::size_t min_stratum_rows = 10;
    unsigned workers = 1;
};

// District-count stratified conditional seat-share model. The stratum for
// count c is trained on parties contesting at least c districts; parties at
// or above the cutoff k0 share one pooled stratum.
class SeatsVotesModel {
public:
    struct Stratum {
        int c = -1;  // -1 marks the pooled stratum
        KernelModel model;
        BandwidthSpec bw;
        std::size_t rows = 0;
        double criterion_value = 0.0;
    };

    int k0 = 0;
    std::vector<Stratum> strata;  // ascending by c, pooled last

    const Stratum& stratum_for(int c) const {
        if (strata.empty()) throw ValidationError("SeatsVotesModel: untrained");
        if (c < k0) {
            // smallest stratum floor at or above the party's count; its
            // training set is the tightest admissible superset
            for (const auto& s : strata)
                if (s.c >= 0 && s.c >= c) return s;
        }
        return strata.back();
    }
};

inline int derive_cutoff(std::span<const PartyRow> rows) {
    // largest district count still covered by at least 20% of parties:
    // with ceil(N/5) parties required, that is the element this far from
    // the top of the sorted counts
    std::vector<int> cs;
    cs.reserve(rows.size());
    for (const auto& r : rows) cs.push_back(r.c);
    std::sort(cs.begin(), cs.end());
    std::size_t need = (cs.size() + 4) / 5;
    int k0 = cs[cs.size() - need];
    return std::max(5, k0);
}

inline SeatsVotesModel train_seats_votes(std::span<const PartyRow> rows, const SeatsVotesOptions& opt,
                                         Warnings* warnings = nullptr) {
    if (rows.size() < 50) throw ValidationError("train_seats_votes: need at least 50 parties");
    SeatsVotesModel model;
    model.k0 = opt.k0 > 0 ? opt.k0 : derive_cutoff(rows);

    auto train_stratum = [&](int c, std::vector<const PartyRow*> members) -> SeatsVotesModel::Stratum {
        FeatureMatrix m;
        m.rows = members.size();
        m.dims = 2;
        for (const PartyRow* r : members) {
            m.x.push_back(r->v);
            m.x.push_back(r->t);
            m.response.push_back(r->s);
        }
        auto sel = select_bandwidth(m, opt.scheme, opt.space, opt.criterion, warnings, opt.workers);
        SeatsVotesModel::Stratum s;
        s.c = c;
        s.bw = sel.spec;
        s.rows = members.size();
        s.criterion_value = sel.criterion_value;
        s.model = KernelModel(std::move(m), sel.spec, warnings);
        return s;
    };

    // distinct district counts below the cutoff get their own stratum
    std::vector<int> below;
    for (const auto& r : rows)
        if (r.c < model.k0) below.push_back(r.c);
    std::sort(below.begin(), below.end());
    below.erase(std::unique(below.begin(), below.end()), below.end());

    for (int c : below) {
        std::vector<const PartyRow*> members;
        for (const auto& r : rows)
            if (r.c >= c) members.push_back(&r);
        if (members.size() < opt.min_stratum_rows) {
            warn(warnings, "seats-votes stratum c=" + std::to_string(c) + " has only " +
                               std::to_string(members.size()) + " rows; folded into the pooled stratum");
            continue;
        }
        model.strata.push_back(train_stratum(c, std::move(members)));
    }

    std::vector<const PartyRow*> pooled;
    for (const auto& r : rows)
        if (r.c >= model.k0) pooled.push_back(&r);
    if (pooled.size() < opt.min_stratum_rows) {
        warn(warnings, "pooled stratum is undersized (" + std::to_string(pooled.size()) +
                           " rows); training it on every party");
        pooled.clear();
        for (const auto& r : rows) pooled.push_back(&r);
    }
    model.strata.push_back(train_stratum(-1, std::move(pooled)));
    return model;
}

// min{F(s), 1 - F(s)} under the party's stratum model, clamped away from 0.
inline double party_p_value(const SeatsVotesModel& model, const PartyRow& party) {
    const auto& stratum = model.stratum_for(party.c);
    std::vector<double> x0{party.v, party.t};
    double f = stratum.model.conditional_cdf(x0, party.s);
    return clamp(std::min(f, 1.0 - f), 1e-6, 0.5);
}

// Vote-weighted geometric mean of party p-values.
inline double election_p_value(std::span<const double> p_values, std::span<const double> weights) {
    if (p_values.size() != weights.size() || p_values.empty())
        throw DomainError("election_p_value: need matching non-empty vectors");
    KahanSum wsum;
    for (double w : weights) wsum.add(w);
    if (std::fabs(wsum.value() - 1.0) > 1e-9)
        throw DomainError("election_p_value: weights must sum to 1");
    KahanSum acc;
    for (std::size_t i = 0; i < p_values.size(); ++i) {
        if (!(p_values[i] > 0.0)) throw DomainError("election_p_value: p-values must be positive");
        acc.add(weights[i] * std::log(p_values[i]));
    }
    return std::exp(acc.value());
}

struct PartyScore {
    PartyRow row;
    double p_value = 0.0;
};

struct ElectionScore {
    std::string election_id;
    std::vector<PartyScore> parties;
    double pi = 0.0;
    bool flagged = false;
};

struct ScoreSummary {
    std::size_t elections = 0;
    double mean_pi = 0.0;
    double frac_flagged = 0.0;
    double alpha = 0.0;
    bool defined = false;
};

inline std::pair<std::vector<ElectionScore>, ScoreSummary> score_dataset(
    const SeatsVotesModel& model, const ThresholdModel& thresholds, std::span<const Election> elections,
    double alpha, Warnings* warnings = nullptr) {
    std::vector<ElectionScore> scores;
    KahanSum pi_sum;
    std::size_t flagged = 0;
    for (const auto& e : elections) {
        std::vector<Election> one{e};
        std::vector<PartyRow> rows = build_party_rows(one, thresholds, warnings);
        ElectionScore es;
        es.election_id = e.id;
        std::vector<double> ps, ws;
        for (const auto& r : rows) {
            PartyScore sc;
            sc.row = r;
            sc.p_value = party_p_value(model, r);
            ps.push_back(sc.p_value);
            ws.push_back(r.w);
            es.parties.push_back(std::move(sc));
        }
        es.pi = election_p_value(ps, ws);
        es.flagged = es.pi < alpha;
        if (es.flagged) ++flagged;
        pi_sum.add(es.pi);
        scores.push_back(std::move(es));
    }
    ScoreSummary summary;
    summary.alpha = alpha;
    summary.elections = scores.size();
    if (!scores.empty()) {
        summary.defined = true;
        summary.mean_pi = pi_sum.value() / static_cast<double>(scores.size());
        summary.frac_flagged = static_cast<double>(flagged) / static_cast<double>(scores.size());
    }
    return {std::move(scores), summary};
}

// Reference density for the weighted-geometric-mean score under independent
// uniform party p-values. Shipped as a diagnostic: it is evaluated literally
// and is not a normalized density on (0, 1).
inline double null_density(double x, int n) {
    if (!(x > 0.0 && x < 1.0)) throw DomainError("null_density: x must lie in (0, 1)");
    if (n < 1) throw DomainError("null_density: n must be >= 1");
    double log_term = -2.0 * std::log(x);
    return std::exp(static_cast<double>(n - 1) * std::log(log_term) - std::lgamma(static_cast<double>(n))) /
           (2.0 * x);
}

// Monte Carlo reference: the empirical distribution of the weighted
// geometric mean of independent Uniform(0, 1/2) party p-values. Sorted
// ascending, so it doubles as an empirical CDF.
inline std::vector<double> null_mc_oracle(std::span<const double> weights, std::size_t samples,
                                          std::uint64_t seed) {
    if (weights.empty()) throw DomainError("null_mc_oracle: need weights");
    if (samples < 10000) throw DomainError("null_mc_oracle: need at least 1e4 samples");
    std::vector<double> out(samples);
    for (std::size_t i = 0; i < samples; ++i) {
        Rng rng = Rng::substream(seed, i);
        KahanSum acc;
        for (double w : weights) {
            double u = 0.5 * (1.0 - rng.uniform());  // in (0, 1/2]
            acc.add(w * std::log(u));
        }
        out[i] = std::exp(acc.value());
    }
    std::sort(out.begin(), out.end());
    return out;
}

}  // namespace psephos
