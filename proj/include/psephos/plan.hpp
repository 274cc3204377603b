#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <numeric>
#include <queue>
#include <set>
#include <span>
#include <sstream>
#include <string>
#include <vector>

#include "psephos/common.hpp"
#include "psephos/csv.hpp"
#include "psephos/election.hpp"

namespace psephos {

struct Precinct {
    std::string id;
    long long population = 0;
    std::vector<long long> votes;  // aligned with PrecinctGraph::parties
};

// Undirected contiguity graph over precincts.
struct PrecinctGraph {
    std::vector<Precinct> nodes;
    std::vector<std::string> parties;
    std::vector<std::pair<int, int>> edges;
    std::vector<std::vector<int>> adj;

    int size() const { return static_cast<int>(nodes.size()); }

    long long total_population() const {
        long long total = 0;
        for (const auto& n : nodes) total += n.population;
        return total;
    }

    long long total_votes(std::size_t party) const {
        long long total = 0;
        for (const auto& n : nodes) total += n.votes[party];
        return total;
    }

    void finalize() {
        adj.assign(nodes.size(), {});
        std::set<std::pair<int, int>> seen;
        for (auto [a, b] : edges) {
            if (a == b) throw ValidationError("precinct graph: self-loop at node " + nodes[a].id);
            if (a > b) std::swap(a, b);
            if (!seen.emplace(a, b).second) continue;
            adj[a].push_back(b);
            adj[b].push_back(a);
        }
        edges.assign(seen.begin(), seen.end());
        for (auto& list : adj) std::sort(list.begin(), list.end());
    }

    bool connected() const {
        if (nodes.empty()) return false;
        std::vector<char> seen(nodes.size(), 0);
        std::queue<int> q;
        q.push(0);
        seen[0] = 1;
        std::size_t visited = 1;
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int v : adj[u])
                if (!seen[v]) {
                    seen[v] = 1;
                    ++visited;
                    q.push(v);
                }
        }
        return visited == nodes.size();
    }
};

// Assignment of every precinct to one of `count` districts (0-based).
struct Plan {
    std::vector<int> district;
    int count = 0;

    bool operator==(const Plan& other) const = default;
};

struct PopulationBounds {
    double lo = 0.0;
    double hi = 0.0;
};

inline PopulationBounds population_bounds(const PrecinctGraph& g, int districts, double deviation) {
    double target = static_cast<double>(g.total_population()) / static_cast<double>(districts);
    return {(1.0 - deviation) * target, (1.0 + deviation) * target};
}

inline std::vector<long long> district_populations(const PrecinctGraph& g, const Plan& plan) {
    std::vector<long long> pops(static_cast<std::size_t>(plan.count), 0);
    for (int i = 0; i < g.size(); ++i) pops[static_cast<std::size_t>(plan.district[i])] += g.nodes[i].population;
    return pops;
}

// Checks contiguity and population balance; returns one message per
// violation (empty = valid plan).
inline std::vector<std::string> validate_plan(const PrecinctGraph& g, const Plan& plan, double deviation) {
    std::vector<std::string> violations;
    if (static_cast<int>(plan.district.size()) != g.size()) {
        violations.push_back("assignment length does not match the graph");
        return violations;
    }
    for (int d : plan.district)
        if (d < 0 || d >= plan.count) {
            violations.push_back("district index out of range");
            return violations;
        }

    PopulationBounds bounds = population_bounds(g, plan.count, deviation);
    std::vector<long long> pops = district_populations(g, plan);
    std::vector<std::vector<int>> members(static_cast<std::size_t>(plan.count));
    for (int i = 0; i < g.size(); ++i) members[static_cast<std::size_t>(plan.district[i])].push_back(i);

    for (int d = 0; d < plan.count; ++d) {
        const auto& m = members[static_cast<std::size_t>(d)];
        if (m.empty()) {
            violations.push_back("district " + std::to_string(d + 1) + " is empty");
            continue;
        }
        // contiguity by flood fill within the district
        std::vector<char> seen(g.nodes.size(), 0);
        std::queue<int> q;
        q.push(m[0]);
        seen[m[0]] = 1;
        std::size_t visited = 1;
        while (!q.empty()) {
            int u = q.front();
            q.pop();
            for (int v : g.adj[u])
                if (plan.district[v] == d && !seen[v]) {
                    seen[v] = 1;
                    ++visited;
                    q.push(v);
                }
        }
        if (visited != m.size())
            violations.push_back("district " + std::to_string(d + 1) + " is not contiguous");
        double pop = static_cast<double>(pops[static_cast<std::size_t>(d)]);
        if (pop < bounds.lo || pop > bounds.hi)
            violations.push_back("district " + std::to_string(d + 1) + " population " +
                                 std::to_string(pops[static_cast<std::size_t>(d)]) + " outside [" +
                                 std::to_string(static_cast<long long>(bounds.lo)) + ", " +
                                 std::to_string(static_cast<long long>(bounds.hi)) + "]");
    }
    return violations;
}

inline bool plan_valid(const PrecinctGraph& g, const Plan& plan, double deviation) {
    return validate_plan(g, plan, deviation).empty();
}

struct PlanOutcome {
    std::vector<std::vector<long long>> district_votes;  // district x party
    std::vector<int> winners;                            // party index, -1 for a tie
    std::vector<int> seats;                              // per party
    int tied_districts = 0;
};

inline PlanOutcome evaluate_plan(const PrecinctGraph& g, const Plan& plan) {
    PlanOutcome out;
    out.district_votes.assign(static_cast<std::size_t>(plan.count),
                              std::vector<long long>(g.parties.size(), 0));
    for (int i = 0; i < g.size(); ++i)
        for (std::size_t p = 0; p < g.parties.size(); ++p)
            out.district_votes[static_cast<std::size_t>(plan.district[i])][p] += g.nodes[i].votes[p];
    out.seats.assign(g.parties.size(), 0);
    for (int d = 0; d < plan.count; ++d) {
        const auto& votes = out.district_votes[static_cast<std::size_t>(d)];
        long long best = -1;
        int winner = -1;
        bool tie = false;
        for (std::size_t p = 0; p < votes.size(); ++p) {
            if (votes[p] > best) {
                best = votes[p];
                winner = static_cast<int>(p);
                tie = false;
            } else if (votes[p] == best) {
                tie = true;
            }
        }
        if (tie) {
            out.winners.push_back(-1);
            ++out.tied_districts;
        } else {
            out.winners.push_back(winner);
            out.seats[static_cast<std::size_t>(winner)] += 1;
        }
    }
    return out;
}

// One election with the plan's districts; parties with at most one candidate
// per district, as the scoring pipeline expects.
inline Election plan_to_election(const PrecinctGraph& g, const Plan& plan, std::string election_id) {
    PlanOutcome outcome = evaluate_plan(g, plan);
    std::vector<std::tuple<std::string, std::string, long long>> rows;
    for (int d = 0; d < plan.count; ++d) {
        std::string did = "d" + std::string(plan.count >= 10 && d + 1 < 10 ? "0" : "") + std::to_string(d + 1);
        for (std::size_t p = 0; p < g.parties.size(); ++p) {
            long long v = outcome.district_votes[static_cast<std::size_t>(d)][p];
            if (v > 0) rows.emplace_back(did, g.parties[p], v);
        }
    }
    return make_election(std::move(election_id), rows);
}

// --- coarsening --------------------------------------------------------------

struct Coarsening {
    PrecinctGraph graph;
    std::vector<std::vector<int>> members;  // coarse node -> original nodes
    std::vector<int> coarse_of;             // original node -> coarse node
};

// Greedy contraction: leaves and small precincts first, each merged into the
// neighbor with the closest leading-party vote share, subject to a cap on
// the merged mass. Populations and votes are conserved exactly.
inline Coarsening coarsen_graph(const PrecinctGraph& g, int target_nodes) {
    if (target_nodes < 1) throw DomainError("coarsen_graph: target must be positive");
    if (target_nodes > g.size()) throw DomainError("coarsen_graph: target exceeds node count");

    // union-find over original nodes
    std::vector<int> parent(g.nodes.size());
    std::iota(parent.begin(), parent.end(), 0);
    std::function<int(int)> find = [&](int x) {
        while (parent[x] != x) x = parent[x] = parent[parent[x]];
        return x;
    };

    std::vector<long long> pop(g.nodes.size());
    for (int i = 0; i < g.size(); ++i) pop[i] = g.nodes[i].population;
    std::vector<std::vector<long long>> votes(g.nodes.size());
    for (int i = 0; i < g.size(); ++i) votes[i] = g.nodes[i].votes;
    int alive = g.size();
    const std::size_t lead_party = 0;

    auto cluster_share = [&](int root) {
        long long total = 0, lead = 0;
        for (std::size_t p = 0; p < g.parties.size(); ++p) total += votes[root][p];
        lead = g.parties.empty() ? 0 : votes[root][lead_party];
        return total == 0 ? 0.0 : static_cast<double>(lead) / static_cast<double>(total);
    };

    auto neighbors_of = [&](int root) {
        std::set<int> out;
        for (int i = 0; i < g.size(); ++i) {
            if (find(i) != root) continue;
            for (int v : g.adj[i]) {
                int rv = find(v);
                if (rv != root) out.insert(rv);
            }
        }
        return out;
    };

    while (alive > target_nodes) {
        // candidate order: leaf clusters, then the lightest cluster
        std::vector<int> roots;
        for (int i = 0; i < g.size(); ++i)
            if (find(i) == i) roots.push_back(i);
        double avg_mass = static_cast<double>(g.total_population()) / static_cast<double>(alive);

        int pick = -1;
        std::set<int> pick_nbrs;
        for (int r : roots) {
            auto nbrs = neighbors_of(r);
            if (nbrs.size() == 1) {
                pick = r;
                pick_nbrs = std::move(nbrs);
                break;
            }
        }
        if (pick < 0) {
            long long best_pop = -1;
            for (int r : roots) {
                if (best_pop < 0 || pop[r] < best_pop) {
                    best_pop = pop[r];
                    pick = r;
                }
            }
            pick_nbrs = neighbors_of(pick);
        }
        if (pick_nbrs.empty()) throw ValidationError("coarsen_graph: graph is disconnected");

        // merge into the most similar neighbor under the mass cap; if the
        // cap blocks everything, take the lightest neighbor
        double share = cluster_share(pick);
        int best = -1;
        double best_diff = 1e300;
        for (int nb : pick_nbrs) {
            if (static_cast<double>(pop[pick] + pop[nb]) > 1.25 * avg_mass) continue;
            double diff = std::fabs(cluster_share(nb) - share);
            if (diff < best_diff - 1e-15 || (std::fabs(diff - best_diff) <= 1e-15 && (best < 0 || nb < best))) {
                best_diff = diff;
                best = nb;
            }
        }
        if (best < 0) {
            long long lightest = -1;
            for (int nb : pick_nbrs)
                if (lightest < 0 || pop[nb] < lightest) {
                    lightest = pop[nb];
                    best = nb;
                }
        }

        int keep = std::min(pick, best), drop = std::max(pick, best);
        parent[drop] = keep;
        pop[keep] += pop[drop];
        for (std::size_t p = 0; p < g.parties.size(); ++p) votes[keep][p] += votes[drop][p];
        --alive;
    }

    Coarsening out;
    std::map<int, int> root_to_coarse;
    for (int i = 0; i < g.size(); ++i) {
        int r = find(i);
        if (!root_to_coarse.count(r)) {
            int idx = static_cast<int>(root_to_coarse.size());
            root_to_coarse[r] = idx;
            Precinct pc;
            pc.id = "m" + std::to_string(idx + 1);
            pc.population = 0;
            pc.votes.assign(g.parties.size(), 0);
            out.graph.nodes.push_back(std::move(pc));
            out.members.emplace_back();
        }
    }
    out.graph.parties = g.parties;
    out.coarse_of.resize(g.nodes.size());
    for (int i = 0; i < g.size(); ++i) {
        int c = root_to_coarse[find(i)];
        out.coarse_of[i] = c;
        out.members[static_cast<std::size_t>(c)].push_back(i);
        out.graph.nodes[static_cast<std::size_t>(c)].population += g.nodes[i].population;
        for (std::size_t p = 0; p < g.parties.size(); ++p)
            out.graph.nodes[static_cast<std::size_t>(c)].votes[p] += g.nodes[i].votes[p];
    }
    for (auto [a, b] : g.edges) {
        int ca = out.coarse_of[a], cb = out.coarse_of[b];
        if (ca != cb) out.graph.edges.emplace_back(std::min(ca, cb), std::max(ca, cb));
    }
    out.graph.finalize();
    return out;
}

inline Plan expand_plan(const Coarsening& coarsening, const Plan& coarse_plan) {
    Plan fine;
    fine.count = coarse_plan.count;
    fine.district.resize(coarsening.coarse_of.size());
    for (std::size_t i = 0; i < coarsening.coarse_of.size(); ++i)
        fine.district[i] = coarse_plan.district[static_cast<std::size_t>(coarsening.coarse_of[i])];
    return fine;
}

// --- CSV interfaces -----------------------------------------------------------

inline PrecinctGraph load_precinct_graph(const std::filesystem::path& nodes_csv,
                                         const std::filesystem::path& edges_csv) {
    PrecinctGraph g;
    {
        std::ifstream in(nodes_csv);
        if (!in) throw ParseError("cannot open: " + nodes_csv.string());
        std::string header_line;
        if (!std::getline(in, header_line)) throw ParseError("empty file: " + nodes_csv.string());
        auto header = split_fields(header_line);
        if (header.size() < 3 || trim(header[0]) != "precinct_id" || trim(header[1]) != "population")
            throw ParseError("nodes csv must start with 'precinct_id,population,votes_<party>...'");
        for (std::size_t i = 2; i < header.size(); ++i) {
            std::string col = trim(header[i]);
            if (col.rfind("votes_", 0) != 0)
                throw ParseError("nodes csv: vote column '" + col + "' must be named votes_<party>");
            g.parties.push_back(col.substr(6));
        }
        std::string line;
        std::size_t line_no = 1;
        while (std::getline(in, line)) {
            ++line_no;
            if (trim(line).empty()) continue;
            auto f = split_fields(line);
            if (f.size() != header.size())
                throw ParseError("wrong field count", line_no);
            Precinct p;
            p.id = trim(f[0]);
            p.population = parse_count(f[1], line_no);
            if (p.population <= 0) throw ValidationError("population must be positive", line_no);
            for (std::size_t i = 2; i < f.size(); ++i) {
                long long v = parse_count(f[i], line_no);
                if (v < 0) throw ValidationError("votes must be non-negative", line_no);
                p.votes.push_back(v);
            }
            g.nodes.push_back(std::move(p));
        }
    }
    std::map<std::string, int> index;
    for (int i = 0; i < g.size(); ++i) {
        if (!index.emplace(g.nodes[i].id, i).second)
            throw ValidationError("duplicate precinct id '" + g.nodes[i].id + "'");
    }
    {
        std::ifstream in(edges_csv);
        if (!in) throw ParseError("cannot open: " + edges_csv.string());
        for_each_csv_row(in, {"precinct_a", "precinct_b"},
                         [&](std::size_t line, const std::vector<std::string>& f) {
                             if (f.size() != 2) throw ParseError("expected 2 fields", line);
                             auto a = index.find(trim(f[0]));
                             auto b = index.find(trim(f[1]));
                             if (a == index.end() || b == index.end())
                                 throw ValidationError("edge references unknown precinct", line);
                             g.edges.emplace_back(a->second, b->second);
                         });
    }
    g.finalize();
    if (!g.connected()) throw ValidationError("precinct graph is not connected");
    return g;
}

inline std::string precinct_graph_nodes_csv(const PrecinctGraph& g) {
    std::ostringstream out;
    out << "precinct_id,population";
    for (const auto& p : g.parties) out << ",votes_" << p;
    out << '\n';
    for (const auto& n : g.nodes) {
        out << n.id << ',' << n.population;
        for (long long v : n.votes) out << ',' << v;
        out << '\n';
    }
    return out.str();
}

inline std::string precinct_graph_edges_csv(const PrecinctGraph& g) {
    std::ostringstream out;
    out << "precinct_a,precinct_b\n";
    for (auto [a, b] : g.edges) out << g.nodes[a].id << ',' << g.nodes[b].id << '\n';
    return out.str();
}

inline std::string plans_csv(const PrecinctGraph& g, std::span<const Plan> plans) {
    std::ostringstream out;
    out << "plan_id,precinct_id,district\n";
    for (std::size_t p = 0; p < plans.size(); ++p)
        for (int i = 0; i < g.size(); ++i)
            out << (p + 1) << ',' << g.nodes[i].id << ',' << (plans[p].district[i] + 1) << '\n';
    return out.str();
}

}  // namespace psephos
