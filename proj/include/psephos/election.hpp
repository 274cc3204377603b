#pragma once

#include <algorithm>
#include <map>
#include <optional>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "psephos/common.hpp"
#include "psephos/csv.hpp"

namespace psephos {

// How tied districts are resolved. Under Flag a tie produces no winner and
// the district contributes no winner observation downstream; FirstListed
// deterministically awards the seat to the earliest-listed tied candidate.
enum class TiePolicy { Flag, FirstListed };

struct Candidate {
    std::string party;
    long long votes = 0;
};

struct District {
    std::string id;
    std::vector<Candidate> candidates;  // input order preserved
    long long total_votes = 0;
    int winner = -1;  // candidate index, -1 when tied under TiePolicy::Flag
    bool tie = false;

    int candidate_count() const { return static_cast<int>(candidates.size()); }
    double share(int candidate_idx) const {
        return static_cast<double>(candidates[candidate_idx].votes) / static_cast<double>(total_votes);
    }
};

// Per-party aggregates within one election.
struct PartyStats {
    std::string party;
    std::vector<int> districts;          // indices into Election::districts
    std::vector<double> district_shares; // v per contested district, aligned with `districts`
    std::vector<char> won;               // seat indicator per contested district
    int contested = 0;
    int seats = 0;
    double vote_share = 0.0;   // vote-weighted share over contested districts
    double seat_share = 0.0;   // seats / contested
    double weight = 0.0;       // party votes / all valid votes in the election
    long long votes = 0;
};

struct Election {
    std::string id;
    std::vector<District> districts;
    std::vector<PartyStats> parties;  // sorted by party id
    long long total_votes = 0;

    const PartyStats* find_party(const std::string& party) const {
        auto it = std::lower_bound(parties.begin(), parties.end(), party,
                                   [](const PartyStats& p, const std::string& s) { return p.party < s; });
        if (it == parties.end() || it->party != party) return nullptr;
        return &*it;
    }
};

inline int district_winner(const District& d, TiePolicy policy) {
    if (d.candidates.empty()) throw ValidationError("district_winner: no candidates");
    long long best = -1;
    int best_idx = -1;
    bool tied = false;
    for (int i = 0; i < d.candidate_count(); ++i) {
        long long v = d.candidates[i].votes;
        if (v > best) {
            best = v;
            best_idx = i;
            tied = false;
        } else if (v == best) {
            tied = true;
        }
    }
    if (tied && policy == TiePolicy::Flag) return -1;
    return best_idx;
}

// Fills winners and party aggregates. Districts must already be validated.
inline void compute_aggregates(Election& e, TiePolicy policy) {
    e.total_votes = 0;
    for (auto& d : e.districts) {
        int w = district_winner(d, policy);
        d.winner = w;
        d.tie = (w == -1);
        e.total_votes += d.total_votes;
    }

    std::map<std::string, PartyStats> acc;
    for (int k = 0; k < static_cast<int>(e.districts.size()); ++k) {
        const District& d = e.districts[k];
        for (int i = 0; i < d.candidate_count(); ++i) {
            const Candidate& c = d.candidates[i];
            PartyStats& p = acc[c.party];
            p.party = c.party;
            p.districts.push_back(k);
            p.district_shares.push_back(d.share(i));
            bool seat = (d.winner == i);
            p.won.push_back(seat ? 1 : 0);
            if (seat) p.seats += 1;
            p.votes += c.votes;
        }
    }

    e.parties.clear();
    e.parties.reserve(acc.size());
    for (auto& [name, p] : acc) {
        p.contested = static_cast<int>(p.districts.size());
        long long contested_votes = 0;
        for (int k : p.districts) contested_votes += e.districts[k].total_votes;
        // v_i = sum of the party's votes over contested districts divided by
        // the turnout of those districts; equal to the share-weighted form.
        p.vote_share = static_cast<double>(p.votes) / static_cast<double>(contested_votes);
        p.seat_share = static_cast<double>(p.seats) / static_cast<double>(p.contested);
        p.weight = static_cast<double>(p.votes) / static_cast<double>(e.total_votes);
        e.parties.push_back(std::move(p));
    }
}

namespace detail {

struct RawRow {
    std::string election, district, party;
    long long votes;
    std::size_t line;
};

}  // namespace detail

// Ingests the candidate-level CSV (`election_id,district_id,party_id,votes`).
// Unopposed districts are dropped with a warning before any computation, and
// every aggregate is derived from what remains.
inline std::vector<Election> parse_candidate_csv(std::istream& in, TiePolicy policy,
                                                 Warnings* warnings = nullptr) {
    std::vector<detail::RawRow> rows;
    for_each_csv_row(in, {"election_id", "district_id", "party_id", "votes"},
                     [&](std::size_t line, const std::vector<std::string>& f) {
                         if (f.size() != 4) throw ParseError("expected 4 fields, got " + std::to_string(f.size()), line);
                         detail::RawRow r;
                         r.election = trim(f[0]);
                         r.district = trim(f[1]);
                         r.party = trim(f[2]);
                         r.votes = parse_count(f[3], line);
                         if (r.election.empty() || r.district.empty() || r.party.empty())
                             throw ParseError("empty identifier field", line);
                         if (r.votes < 0) throw ValidationError("votes must be non-negative", line);
                         r.line = line;
                         rows.push_back(std::move(r));
                     });
    if (rows.empty()) throw ParseError("no candidate rows in input");

    std::set<std::tuple<std::string, std::string, std::string>> seen;
    for (const auto& r : rows) {
        if (!seen.emplace(r.election, r.district, r.party).second)
            throw ValidationError("duplicate candidate for party '" + r.party + "' in district '" + r.district +
                                      "' of election '" + r.election + "'",
                                  r.line);
    }

    std::map<std::string, std::map<std::string, District>> grouped;
    for (auto& r : rows) {
        District& d = grouped[r.election][r.district];
        d.id = r.district;
        d.candidates.push_back({r.party, r.votes});
        d.total_votes += r.votes;
    }

    std::vector<Election> out;
    for (auto& [eid, districts] : grouped) {
        Election e;
        e.id = eid;
        for (auto& [did, d] : districts) {
            if (d.total_votes == 0)
                throw ValidationError("district '" + did + "' in election '" + eid + "' has zero votes");
            if (d.candidate_count() < 2) {
                warn(warnings, "election '" + eid + "': dropping unopposed district '" + did + "'");
                continue;
            }
            e.districts.push_back(std::move(d));
        }
        if (e.districts.empty()) {
            warn(warnings, "election '" + eid + "' has no contested districts after filtering; dropped");
            continue;
        }
        compute_aggregates(e, policy);
        out.push_back(std::move(e));
    }
    if (out.empty()) throw ValidationError("no elections left after filtering");
    return out;
}

inline std::vector<Election> load_candidate_csv(const std::filesystem::path& path, TiePolicy policy,
                                                Warnings* warnings = nullptr) {
    std::ifstream in(path);
    if (!in) throw ParseError("cannot open: " + path.string());
    return parse_candidate_csv(in, policy, warnings);
}

// In-memory construction used by the plan pipeline and tests: one row per
// candidate as (district_id, party_id, votes).
inline Election make_election(std::string id,
                              const std::vector<std::tuple<std::string, std::string, long long>>& rows,
                              TiePolicy policy = TiePolicy::Flag) {
    std::map<std::string, District> districts;
    for (const auto& [did, party, votes] : rows) {
        District& d = districts[did];
        d.id = did;
        d.candidates.push_back({party, votes});
        d.total_votes += votes;
    }
    Election e;
    e.id = std::move(id);
    for (auto& [did, d] : districts) {
        if (d.total_votes == 0) throw ValidationError("district '" + did + "' has zero votes");
        if (d.candidate_count() < 2) throw ValidationError("district '" + did + "' is unopposed");
        e.districts.push_back(std::move(d));
    }
    compute_aggregates(e, policy);
    return e;
}

inline std::string serialize_candidate_csv(std::span<const Election> elections) {
    std::ostringstream out;
    out << "election_id,district_id,party_id,votes\n";
    for (const auto& e : elections)
        for (const auto& d : e.districts)
            for (const auto& c : d.candidates)
                out << e.id << ',' << d.id << ',' << c.party << ',' << c.votes << '\n';
    return out.str();
}

// Dataset-level summary in the shape used for reporting basic characteristics:
// district counts, candidates per district, effective candidates, and the
// number of candidates clearing 5% of the district vote.
struct DatasetSummary {
    std::size_t elections = 0;
    std::size_t districts = 0;
    std::size_t parties = 0;
    std::size_t candidates = 0;
    double c_median = 0, c_min = 0, c_max = 0;
    double n_avg = 0, n_max = 0;
    double phi_avg = 0, phi_min = 0, phi_max = 0;
    double nr_avg = 0, nr_min = 0, nr_max = 0;
};

inline double effective_candidate_count(const District& d) {
    double hhi = 0.0;
    for (int i = 0; i < d.candidate_count(); ++i) {
        double s = d.share(i);
        hhi += s * s;
    }
    return 1.0 / hhi;
}

inline DatasetSummary summarize_dataset(std::span<const Election> elections) {
    DatasetSummary s;
    std::vector<double> cs;
    double n_sum = 0, phi_sum = 0, nr_sum = 0;
    s.n_max = 0;
    s.phi_min = 1e300;
    s.phi_max = -1e300;
    s.nr_min = 1e300;
    s.nr_max = -1e300;
    for (const auto& e : elections) {
        s.elections += 1;
        s.parties += e.parties.size();
        cs.push_back(static_cast<double>(e.districts.size()));
        for (const auto& d : e.districts) {
            s.districts += 1;
            s.candidates += d.candidates.size();
            double n = static_cast<double>(d.candidate_count());
            n_sum += n;
            s.n_max = std::max(s.n_max, n);
            double phi = effective_candidate_count(d);
            phi_sum += phi;
            s.phi_min = std::min(s.phi_min, phi);
            s.phi_max = std::max(s.phi_max, phi);
            double nr = 0;
            for (int i = 0; i < d.candidate_count(); ++i)
                if (d.share(i) >= 0.05) nr += 1;
            nr_sum += nr;
            s.nr_min = std::min(s.nr_min, nr);
            s.nr_max = std::max(s.nr_max, nr);
        }
    }
    std::sort(cs.begin(), cs.end());
    if (!cs.empty()) {
        s.c_min = cs.front();
        s.c_max = cs.back();
        s.c_median = cs.size() % 2 == 1 ? cs[cs.size() / 2] : 0.5 * (cs[cs.size() / 2 - 1] + cs[cs.size() / 2]);
    }
    if (s.districts > 0) {
        s.n_avg = n_sum / static_cast<double>(s.districts);
        s.phi_avg = phi_sum / static_cast<double>(s.districts);
        s.nr_avg = nr_sum / static_cast<double>(s.districts);
    }
    return s;
}

}  // namespace psephos
