#pragma once

#include <algorithm>
#include <cmath>
#include <map>
#include <queue>
#include <set>
#include <span>
#include <vector>

#include "psephos/common.hpp"
#include "psephos/plan.hpp"
#include "psephos/rng.hpp"

namespace psephos {

struct McmcParams {
    // probability that an intra-district edge is disabled in a sweep
    double edge_disable_prob = 0.85;
    // distribution of R, the number of boundary components proposed per
    // step; index = value of R. Pr(R = 0) must be positive for ergodicity.
    // The default keeps R <= 1: single-component exchanges satisfy detailed
    // balance exactly (verified against exact enumeration), while the
    // multi-component selection is only approximately corrected and
    // measurably biases the stationary distribution on enumerable graphs.
    std::vector<double> r_probs{0.2, 0.8};
    double delta = 0.25;  // permissible population deviation
    // tempered population constraint during burn-in; 0 keeps it hard
    double temperature = 0.0;
};

namespace detail {

inline int sample_r(const std::vector<double>& probs, Rng& rng) {
    double u = rng.uniform();
    double acc = 0.0;
    for (std::size_t i = 0; i < probs.size(); ++i) {
        acc += probs[i];
        if (u < acc) return static_cast<int>(i);
    }
    return static_cast<int>(probs.size()) - 1;
}

// Population-bound violation mass, for the tempered burn-in variant.
inline double population_excess(const PrecinctGraph& g, std::span<const long long> pops,
                                const PopulationBounds& bounds) {
    double scale = static_cast<double>(g.total_population());
    double excess = 0.0;
    for (long long p : pops) {
        double v = static_cast<double>(p);
        if (v < bounds.lo) excess += (bounds.lo - v) / scale;
        if (v > bounds.hi) excess += (v - bounds.hi) / scale;
    }
    return excess;
}

// Counts components whose nodes touch another district, given labels.
inline int count_boundary_components(const PrecinctGraph& g, const std::vector<int>& comp,
                                     const std::vector<int>& district, int n_comps) {
    std::vector<char> boundary(static_cast<std::size_t>(n_comps), 0);
    for (auto [a, b] : g.edges)
        if (district[a] != district[b]) {
            boundary[static_cast<std::size_t>(comp[a])] = 1;
            boundary[static_cast<std::size_t>(comp[b])] = 1;
        }
    int count = 0;
    for (char c : boundary) count += c;
    return count;
}

inline bool district_connected_without(const PrecinctGraph& g, const std::vector<int>& district, int d,
                                       const std::vector<char>& removed) {
    int start = -1;
    std::size_t expected = 0;
    for (int i = 0; i < g.size(); ++i) {
        if (district[i] == d && !removed[i]) {
            ++expected;
            if (start < 0) start = i;
        }
    }
    if (expected == 0) return false;
    std::vector<char> seen(g.nodes.size(), 0);
    std::queue<int> q;
    q.push(start);
    seen[start] = 1;
    std::size_t visited = 1;
    while (!q.empty()) {
        int u = q.front();
        q.pop();
        for (int v : g.adj[u])
            if (district[v] == d && !removed[v] && !seen[v]) {
                seen[v] = 1;
                ++visited;
                q.push(v);
            }
    }
    return visited == expected;
}

}  // namespace detail

// One sweep of the cluster-exchange walk: disable intra-district edges at
// random, pick up to R non-adjoining boundary components, and propose moving
// each to a neighboring district under a Metropolis-Hastings correction.
// The correction multiplies the disable-probability ratio of the cut edges
// (the reverse move must cut the component out of its new district) by the
// ratio of boundary-component counts before and after the exchange.
// Returns the number of accepted exchanges.
inline int mcmc_fair_step(const PrecinctGraph& g, Plan& plan, const McmcParams& params, Rng& rng) {
    const double q_disable = params.edge_disable_prob;
    if (!(q_disable > 0.0 && q_disable < 1.0))
        throw DomainError("mcmc_fair_step: edge_disable_prob must lie in (0, 1)");
    if (params.r_probs.empty() || !(params.r_probs[0] > 0.0))
        throw DomainError("mcmc_fair_step: Pr(R = 0) must be positive");

    int r = detail::sample_r(params.r_probs, rng);

    // edge realization is drawn every sweep so the RNG stream does not
    // depend on R
    std::vector<char> enabled(g.edges.size(), 0);
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        auto [a, b] = g.edges[e];
        bool intra = plan.district[a] == plan.district[b];
        bool keep = rng.uniform() >= q_disable;
        enabled[e] = static_cast<char>(intra && keep);
    }
    if (r == 0) return 0;

    // components of the enabled intra-district subgraph
    std::vector<std::vector<int>> enabled_adj(g.nodes.size());
    for (std::size_t e = 0; e < g.edges.size(); ++e) {
        if (!enabled[e]) continue;
        auto [a, b] = g.edges[e];
        enabled_adj[static_cast<std::size_t>(a)].push_back(b);
        enabled_adj[static_cast<std::size_t>(b)].push_back(a);
    }
    std::vector<int> comp(g.nodes.size(), -1);
    int n_comps = 0;
    for (int i = 0; i < g.size(); ++i) {
        if (comp[i] >= 0) continue;
        std::queue<int> bfs;
        bfs.push(i);
        comp[i] = n_comps;
        while (!bfs.empty()) {
            int u = bfs.front();
            bfs.pop();
            for (int v : enabled_adj[static_cast<std::size_t>(u)])
                if (comp[v] < 0) {
                    comp[v] = n_comps;
                    bfs.push(v);
                }
        }
        ++n_comps;
    }

    std::vector<std::vector<int>> comp_nodes(static_cast<std::size_t>(n_comps));
    for (int i = 0; i < g.size(); ++i) comp_nodes[static_cast<std::size_t>(comp[i])].push_back(i);

    // boundary components and the component adjacency needed for the
    // non-adjoining selection
    std::vector<char> is_boundary(static_cast<std::size_t>(n_comps), 0);
    std::set<std::pair<int, int>> comp_adj;
    for (auto [a, b] : g.edges) {
        if (plan.district[a] != plan.district[b]) {
            is_boundary[static_cast<std::size_t>(comp[a])] = 1;
            is_boundary[static_cast<std::size_t>(comp[b])] = 1;
        }
        if (comp[a] != comp[b])
            comp_adj.emplace(std::min(comp[a], comp[b]), std::max(comp[a], comp[b]));
    }

    std::vector<int> candidates;
    for (int c = 0; c < n_comps; ++c)
        if (is_boundary[static_cast<std::size_t>(c)]) candidates.push_back(c);
    if (candidates.empty()) return 0;
    rng.shuffle(candidates);

    std::vector<int> chosen;
    for (int c : candidates) {
        if (static_cast<int>(chosen.size()) == r) break;
        bool ok = true;
        for (int other : chosen) {
            auto key = std::make_pair(std::min(c, other), std::max(c, other));
            if (comp_adj.count(key)) {
                ok = false;
                break;
            }
        }
        if (ok) chosen.push_back(c);
    }

    PopulationBounds bounds = population_bounds(g, plan.count, params.delta);
    std::vector<long long> pops = district_populations(g, plan);
    int accepted = 0;

    for (int c : chosen) {
        const std::vector<int>& nodes = comp_nodes[static_cast<std::size_t>(c)];
        int from = plan.district[nodes[0]];

        // neighboring districts of the component under the current labels
        std::set<int> dests;
        std::vector<char> in_comp(g.nodes.size(), 0);
        for (int u : nodes) in_comp[u] = 1;
        for (int u : nodes)
            for (int v : g.adj[u])
                if (!in_comp[v] && plan.district[v] != from) dests.insert(plan.district[v]);
        if (dests.empty()) continue;
        std::vector<int> dest_list(dests.begin(), dests.end());
        int to = dest_list[static_cast<std::size_t>(rng.uniform_int(dest_list.size()))];

        // cut sizes: edges from the component into its own district, and
        // into the destination district
        int cut_from = 0, cut_to = 0;
        for (int u : nodes)
            for (int v : g.adj[u]) {
                if (in_comp[v]) continue;
                if (plan.district[v] == from) ++cut_from;
                if (plan.district[v] == to) ++cut_to;
            }

        // donor must stay non-empty and contiguous
        long long comp_pop = 0;
        for (int u : nodes) comp_pop += g.nodes[u].population;
        if (pops[static_cast<std::size_t>(from)] == comp_pop) continue;  // would empty the donor
        if (!detail::district_connected_without(g, plan.district, from, in_comp)) continue;

        double pop_penalty = 0.0;
        long long new_from = pops[static_cast<std::size_t>(from)] - comp_pop;
        long long new_to = pops[static_cast<std::size_t>(to)] + comp_pop;
        bool in_bounds = static_cast<double>(new_from) >= bounds.lo && static_cast<double>(new_to) <= bounds.hi;
        if (!in_bounds) {
            if (params.temperature <= 0.0) continue;
            std::vector<long long> pops_after = pops;
            pops_after[static_cast<std::size_t>(from)] = new_from;
            pops_after[static_cast<std::size_t>(to)] = new_to;
            pop_penalty = (detail::population_excess(g, pops_after, bounds) -
                           detail::population_excess(g, pops, bounds)) /
                          params.temperature;
        }

        // boundary-component count after the exchange, with the same
        // component partition and updated labels
        int boundary_before = 0;
        for (char b : is_boundary) boundary_before += b;
        std::vector<int> district_after = plan.district;
        for (int u : nodes) district_after[u] = to;
        int boundary_after = detail::count_boundary_components(g, comp, district_after, n_comps);
        if (boundary_after == 0) continue;

        double log_alpha = static_cast<double>(cut_to - cut_from) * std::log(q_disable) +
                           std::log(static_cast<double>(boundary_before)) -
                           std::log(static_cast<double>(boundary_after)) - pop_penalty;
        if (log_alpha < 0.0 && rng.uniform() >= std::exp(log_alpha)) continue;

        // apply the exchange
        for (int u : nodes) plan.district[u] = to;
        pops[static_cast<std::size_t>(from)] = new_from;
        pops[static_cast<std::size_t>(to)] = new_to;
        is_boundary.assign(static_cast<std::size_t>(n_comps), 0);
        for (auto [a, b] : g.edges)
            if (plan.district[a] != plan.district[b]) {
                is_boundary[static_cast<std::size_t>(comp[a])] = 1;
                is_boundary[static_cast<std::size_t>(comp[b])] = 1;
            }
        ++accepted;
    }
    return accepted;
}

// Region-growing start: seed `count` districts at random nodes, grow the
// lightest district along the frontier, then repair population imbalance
// with boundary moves.
inline Plan initial_plan(const PrecinctGraph& g, int districts, double delta, Rng& rng, int attempts = 200) {
    if (districts < 1 || districts > g.size())
        throw DomainError("initial_plan: bad district count");
    PopulationBounds bounds = population_bounds(g, districts, delta);
    for (int attempt = 0; attempt < attempts; ++attempt) {
        Plan plan;
        plan.count = districts;
        plan.district.assign(g.nodes.size(), -1);
        std::vector<int> order(g.nodes.size());
        std::iota(order.begin(), order.end(), 0);
        rng.shuffle(order);
        std::vector<long long> pops(static_cast<std::size_t>(districts), 0);
        for (int d = 0; d < districts; ++d) {
            plan.district[order[static_cast<std::size_t>(d)]] = d;
            pops[static_cast<std::size_t>(d)] = g.nodes[order[static_cast<std::size_t>(d)]].population;
        }
        // grow: repeatedly attach an unassigned frontier node to its
        // lightest neighboring district
        for (;;) {
            int best_node = -1, best_d = -1;
            long long best_pop = 0;
            for (int i = 0; i < g.size(); ++i) {
                if (plan.district[i] >= 0) continue;
                for (int v : g.adj[i]) {
                    int d = plan.district[v];
                    if (d < 0) continue;
                    if (best_node < 0 || pops[static_cast<std::size_t>(d)] < best_pop) {
                        best_node = i;
                        best_d = d;
                        best_pop = pops[static_cast<std::size_t>(d)];
                    }
                }
            }
            if (best_node < 0) break;
            plan.district[best_node] = best_d;
            pops[static_cast<std::size_t>(best_d)] += g.nodes[best_node].population;
        }
        bool assigned_all = std::all_of(plan.district.begin(), plan.district.end(),
                                        [](int d) { return d >= 0; });
        if (!assigned_all) continue;

        // repair: move boundary nodes from heavy to light districts
        for (int pass = 0; pass < 20 * g.size(); ++pass) {
            if (plan_valid(g, plan, delta)) return plan;
            pops = district_populations(g, plan);
            bool moved = false;
            std::vector<int> scan(g.nodes.size());
            std::iota(scan.begin(), scan.end(), 0);
            rng.shuffle(scan);
            for (int i : scan) {
                int from = plan.district[i];
                if (static_cast<double>(pops[static_cast<std::size_t>(from)]) <= bounds.hi) continue;
                for (int v : g.adj[i]) {
                    int to = plan.district[v];
                    if (to == from) continue;
                    if (static_cast<double>(pops[static_cast<std::size_t>(to)] + g.nodes[i].population) >
                        bounds.hi)
                        continue;
                    std::vector<char> removed(g.nodes.size(), 0);
                    removed[i] = 1;
                    if (!detail::district_connected_without(g, plan.district, from, removed)) continue;
                    plan.district[i] = to;
                    pops[static_cast<std::size_t>(from)] -= g.nodes[i].population;
                    pops[static_cast<std::size_t>(to)] += g.nodes[i].population;
                    moved = true;
                    break;
                }
                if (moved) break;
            }
            if (!moved) break;
        }
        if (plan_valid(g, plan, delta)) return plan;
    }
    throw ValidationError("initial_plan: no feasible plan found; relax the deviation bound or check the graph");
}

struct PlanBatch {
    std::vector<Plan> plans;
    std::uint64_t seed = 0;
    McmcParams params;
    std::size_t burn_in = 0;
    std::size_t thinning = 0;
};

// Samples `count` plans from the walk: burn-in first (optionally tempered,
// cooling linearly to the hard constraint), then one record every
// `thinning` sweeps of the exact hard-constraint kernel.
inline PlanBatch sample_fair_plans(const PrecinctGraph& g, int districts, std::size_t count,
                                   const McmcParams& params, std::size_t burn_in, std::size_t thinning,
                                   std::uint64_t seed) {
    if (!g.connected()) throw ValidationError("sample_fair_plans: graph must be connected");
    Rng rng(seed);
    Plan plan = initial_plan(g, districts, params.delta, rng);

    McmcParams tempered = params;
    for (std::size_t step = 0; step < burn_in; ++step) {
        if (params.temperature > 0.0) {
            double frac = static_cast<double>(step) / std::max<std::size_t>(1, burn_in);
            tempered.temperature = params.temperature * (1.0 - frac);
        } else {
            tempered.temperature = 0.0;
        }
        mcmc_fair_step(g, plan, tempered, rng);
    }
    // tempered burn-in may end out of bounds; walk back with the hard kernel
    tempered.temperature = 0.0;
    std::size_t guard = 0;
    while (!plan_valid(g, plan, params.delta)) {
        mcmc_fair_step(g, plan, tempered, rng);
        if (++guard > 100000)
            throw ValidationError("sample_fair_plans: burn-in did not return to the feasible region");
    }

    PlanBatch batch;
    batch.seed = seed;
    batch.params = params;
    batch.burn_in = burn_in;
    batch.thinning = thinning;
    for (std::size_t i = 0; i < count; ++i) {
        if (i > 0)
            for (std::size_t s = 0; s < std::max<std::size_t>(1, thinning); ++s)
                mcmc_fair_step(g, plan, tempered, rng);
        batch.plans.push_back(plan);
    }
    return batch;
}

}  // namespace psephos
