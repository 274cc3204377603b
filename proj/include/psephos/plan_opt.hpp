#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <functional>
#include <set>
#include <vector>

#include "psephos/common.hpp"
#include "psephos/plan.hpp"
#include "psephos/plan_mcmc.hpp"
#include "psephos/rng.hpp"

namespace psephos {

namespace detail {

// Fixed-width bitset sized at construction; enough for coarse graphs.
struct NodeMask {
    std::vector<std::uint64_t> words;

    explicit NodeMask(std::size_t bits = 0) : words((bits + 63) / 64, 0) {}
    void set(std::size_t i) { words[i >> 6] |= std::uint64_t{1} << (i & 63); }
    void clear(std::size_t i) { words[i >> 6] &= ~(std::uint64_t{1} << (i & 63)); }
    bool test(std::size_t i) const { return (words[i >> 6] >> (i & 63)) & 1; }
    bool intersects(const NodeMask& o) const {
        for (std::size_t w = 0; w < words.size(); ++w)
            if (words[w] & o.words[w]) return true;
        return false;
    }
    void merge(const NodeMask& o) {
        for (std::size_t w = 0; w < words.size(); ++w) words[w] |= o.words[w];
    }
    bool full(std::size_t bits) const {
        for (std::size_t i = 0; i < bits; ++i)
            if (!test(i)) return false;
        return true;
    }
};

}  // namespace detail

// A feasible district: a connected node set with admissible population.
struct DistrictCandidate {
    detail::NodeMask mask;
    std::vector<int> nodes;
    long long population = 0;
    int score = 0;  // +1 / 0 / -1 for the optimizing party
};

// District-level contribution to the optimizer objective: +1 when party x
// leads party y by at least `margin` (as a fraction of the district vote),
// -1 when y leads outright, 0 otherwise. A tie counts for nobody.
inline int district_score(long long x_votes, long long y_votes, long long total_votes, double margin) {
    long long lead = x_votes - y_votes;
    if (lead > 0 && static_cast<double>(lead) >= margin * static_cast<double>(total_votes) - 1e-9) return 1;
    if (lead < 0) return -1;
    return 0;
}

// Enumerates every connected node subset whose population falls inside the
// bounds. Throws when the count exceeds `cap` (coarsen first, or use local
// search). Each subset is produced exactly once: growth is rooted at its
// lowest node, and once a frontier node's inclusion branch has been
// explored the node is forbidden for the remaining branches.
inline std::vector<DistrictCandidate> enumerate_feasible_districts(const PrecinctGraph& g, int districts,
                                                                   double delta, std::size_t cap = 1000000) {
    PopulationBounds bounds = population_bounds(g, districts, delta);
    std::vector<DistrictCandidate> out;
    const std::size_t n = g.nodes.size();

    std::vector<int> subset;
    detail::NodeMask in_set(n);

    std::function<void(int, long long, std::vector<int>, detail::NodeMask)> grow =
        [&](int root, long long pop, std::vector<int> frontier, detail::NodeMask forbidden) {
            if (static_cast<double>(pop) >= bounds.lo && static_cast<double>(pop) <= bounds.hi) {
                DistrictCandidate cand;
                cand.mask = in_set;
                cand.nodes = subset;
                cand.population = pop;
                out.push_back(std::move(cand));
                if (out.size() > cap)
                    throw ValidationError(
                        "enumerate_feasible_districts: candidate cap exceeded; coarsen the graph or use "
                        "local search");
            }
            while (!frontier.empty()) {
                int v = frontier.back();
                frontier.pop_back();
                long long grown = pop + g.nodes[static_cast<std::size_t>(v)].population;
                // populations are positive, so an over-heavy subset can never recover
                if (static_cast<double>(grown) <= bounds.hi) {
                    subset.push_back(v);
                    in_set.set(static_cast<std::size_t>(v));
                    std::vector<int> extended = frontier;
                    for (int w : g.adj[v]) {
                        if (w <= root) continue;
                        if (in_set.test(static_cast<std::size_t>(w))) continue;
                        if (forbidden.test(static_cast<std::size_t>(w))) continue;
                        if (std::find(extended.begin(), extended.end(), w) == extended.end())
                            extended.push_back(w);
                    }
                    grow(root, grown, std::move(extended), forbidden);
                    in_set.clear(static_cast<std::size_t>(v));
                    subset.pop_back();
                }
                forbidden.set(static_cast<std::size_t>(v));
            }
        };

    for (int root = 0; root < g.size(); ++root) {
        subset = {root};
        in_set = detail::NodeMask(n);
        in_set.set(static_cast<std::size_t>(root));
        std::vector<int> frontier;
        for (int w : g.adj[root])
            if (w > root) frontier.push_back(w);
        std::sort(frontier.begin(), frontier.end());
        grow(root, g.nodes[static_cast<std::size_t>(root)].population, std::move(frontier),
             detail::NodeMask(n));
    }
    return out;
}

enum class OptimizeMode { ExactEnumeration, CoarsenExact, LocalSearch };

struct OptimizeOptions {
    OptimizeMode mode = OptimizeMode::CoarsenExact;
    std::size_t enumeration_cap = 1000000;
    int coarsen_target = 24;
    int local_search_restarts = 6;
    int local_search_iters = 4000;
    // iterated refinement: perturb the incumbent with a few sampler sweeps,
    // re-climb, keep strict improvements
    int kick_rounds = 24;
    int kick_sweeps = 40;
    std::size_t fair_burn_in = 400;
    std::uint64_t seed = 1;
};

struct OptimizeResult {
    Plan plan;
    int seats_won = 0;   // strict plurality wins for the optimizing party
    int objective = 0;   // margin-counted wins minus opponent wins
    bool exact = false;  // true when branch and bound proved optimality
};

namespace detail {

struct BnbContext {
    const PrecinctGraph* g;
    const std::vector<DistrictCandidate>* cands;
    std::vector<std::vector<std::size_t>> by_lowest_node;
    int districts = 0;
    double lo = 0, hi = 0;
    long long total_pop = 0;
    int best_score = 0;
    bool found = false;
    std::vector<std::size_t> best_pick, pick;
};

inline void bnb(BnbContext& ctx, const NodeMask& used, int chosen, int score, long long pop_used) {
    if (chosen == ctx.districts) {
        if (used.full(ctx.g->nodes.size()) && (!ctx.found || score > ctx.best_score)) {
            ctx.best_score = score;
            ctx.best_pick = ctx.pick;
            ctx.found = true;
        }
        return;
    }
    // optimistic bound: every remaining district scores +1
    int remaining = ctx.districts - chosen;
    if (ctx.found && score + remaining <= ctx.best_score) return;
    // population feasibility of the remainder
    long long rem_pop = ctx.total_pop - pop_used;
    if (static_cast<double>(rem_pop) < ctx.lo * remaining - 1e-9 ||
        static_cast<double>(rem_pop) > ctx.hi * remaining + 1e-9)
        return;
    // cover the lowest unassigned node
    std::size_t node = 0;
    while (node < ctx.g->nodes.size() && used.test(node)) ++node;
    if (node == ctx.g->nodes.size()) return;  // nodes exhausted before districts
    for (std::size_t ci : ctx.by_lowest_node[node]) {
        const DistrictCandidate& cand = (*ctx.cands)[ci];
        if (cand.mask.intersects(used)) continue;
        NodeMask next = used;
        next.merge(cand.mask);
        ctx.pick.push_back(ci);
        bnb(ctx, next, chosen + 1, score + cand.score, pop_used + cand.population);
        ctx.pick.pop_back();
    }
}

}  // namespace detail

// Exact set-partition optimum over the given candidate districts.
inline OptimizeResult solve_partition(const PrecinctGraph& g, std::vector<DistrictCandidate> cands,
                                      int districts, double delta, std::size_t x_party, std::size_t y_party,
                                      double margin) {
    for (auto& cand : cands) {
        long long xv = 0, yv = 0, tot = 0;
        for (int u : cand.nodes) {
            xv += g.nodes[u].votes[x_party];
            yv += g.nodes[u].votes[y_party];
            for (long long v : g.nodes[u].votes) tot += v;
        }
        cand.score = district_score(xv, yv, tot, margin);
    }

    detail::BnbContext ctx;
    ctx.g = &g;
    ctx.cands = &cands;
    ctx.districts = districts;
    PopulationBounds bounds = population_bounds(g, districts, delta);
    ctx.lo = bounds.lo;
    ctx.hi = bounds.hi;
    ctx.total_pop = g.total_population();
    ctx.by_lowest_node.assign(g.nodes.size(), {});
    for (std::size_t i = 0; i < cands.size(); ++i)
        ctx.by_lowest_node[static_cast<std::size_t>(cands[i].nodes.front())].push_back(i);
    // good incumbents early: high score, then small candidate index
    for (auto& list : ctx.by_lowest_node)
        std::stable_sort(list.begin(), list.end(), [&](std::size_t a, std::size_t b) {
            return cands[a].score != cands[b].score ? cands[a].score > cands[b].score : a < b;
        });

    detail::NodeMask used(g.nodes.size());
    detail::bnb(ctx, used, 0, 0, 0);
    if (!ctx.found) throw ValidationError("solve_partition: no feasible districting exists");

    OptimizeResult res;
    res.exact = true;
    res.objective = ctx.best_score;
    res.plan.count = districts;
    res.plan.district.assign(g.nodes.size(), -1);
    // canonical numbering: districts ordered by their lowest node
    std::vector<std::size_t> picks = ctx.best_pick;
    std::sort(picks.begin(), picks.end(), [&](std::size_t a, std::size_t b) {
        return cands[a].nodes.front() < cands[b].nodes.front();
    });
    for (int d = 0; d < districts; ++d)
        for (int u : cands[picks[static_cast<std::size_t>(d)]].nodes)
            res.plan.district[static_cast<std::size_t>(u)] = d;
    PlanOutcome outcome = evaluate_plan(g, res.plan);
    res.seats_won = outcome.seats[x_party];
    return res;
}

inline int plan_objective(const PrecinctGraph& g, const Plan& plan, std::size_t x_party, std::size_t y_party,
                          double margin) {
    PlanOutcome outcome = evaluate_plan(g, plan);
    int score = 0;
    for (int d = 0; d < plan.count; ++d) {
        long long tot = 0;
        for (long long v : outcome.district_votes[static_cast<std::size_t>(d)]) tot += v;
        score += district_score(outcome.district_votes[static_cast<std::size_t>(d)][x_party],
                                outcome.district_votes[static_cast<std::size_t>(d)][y_party], tot, margin);
    }
    return score;
}

// Secondary hill-climbing key: leads are valuable up to just past the
// required margin; surplus beyond that is wasted packing.
inline double plan_vote_efficiency(const PrecinctGraph& g, const Plan& plan, std::size_t x_party,
                                   std::size_t y_party, double margin) {
    PlanOutcome outcome = evaluate_plan(g, plan);
    double total = 0;
    for (int d = 0; d < plan.count; ++d) {
        long long tot = 0;
        for (long long v : outcome.district_votes[static_cast<std::size_t>(d)]) tot += v;
        double lead = static_cast<double>(outcome.district_votes[static_cast<std::size_t>(d)][x_party] -
                                          outcome.district_votes[static_cast<std::size_t>(d)][y_party]) /
                      static_cast<double>(tot);
        total += std::min(lead, margin + 0.02);
    }
    return total;
}

// First-improvement hill climb over single-node boundary moves and pairwise
// swaps between adjacent districts; the (objective, efficiency) key never
// decreases across accepted moves.
inline Plan local_search_improve(const PrecinctGraph& g, Plan plan, std::size_t x_party, std::size_t y_party,
                                 double margin, double delta, int max_iters, Rng& rng) {
    PopulationBounds bounds = population_bounds(g, plan.count, delta);
    int obj = plan_objective(g, plan, x_party, y_party, margin);
    double eff = plan_vote_efficiency(g, plan, x_party, y_party, margin);
    std::vector<long long> pops = district_populations(g, plan);

    auto district_ok = [&](int d) {
        std::vector<char> removed(g.nodes.size(), 0);
        return detail::district_connected_without(g, plan.district, d, removed);
    };
    auto better = [&](int new_obj, double new_eff) {
        return new_obj > obj || (new_obj == obj && new_eff > eff + 1e-12);
    };

    for (int iter = 0; iter < max_iters; ++iter) {
        bool improved = false;
        std::vector<int> scan(g.nodes.size());
        std::iota(scan.begin(), scan.end(), 0);
        rng.shuffle(scan);

        // single-node relocations
        for (int i : scan) {
            int from = plan.district[i];
            std::set<int> dests;
            for (int v : g.adj[i])
                if (plan.district[v] != from) dests.insert(plan.district[v]);
            for (int to : dests) {
                if (static_cast<double>(pops[static_cast<std::size_t>(from)] - g.nodes[i].population) <
                        bounds.lo ||
                    static_cast<double>(pops[static_cast<std::size_t>(to)] + g.nodes[i].population) > bounds.hi)
                    continue;
                std::vector<char> removed(g.nodes.size(), 0);
                removed[i] = 1;
                if (!detail::district_connected_without(g, plan.district, from, removed)) continue;
                plan.district[i] = to;
                int new_obj = plan_objective(g, plan, x_party, y_party, margin);
                double new_eff = plan_vote_efficiency(g, plan, x_party, y_party, margin);
                if (better(new_obj, new_eff)) {
                    obj = new_obj;
                    eff = new_eff;
                    pops[static_cast<std::size_t>(from)] -= g.nodes[i].population;
                    pops[static_cast<std::size_t>(to)] += g.nodes[i].population;
                    improved = true;
                    break;
                }
                plan.district[i] = from;
            }
            if (improved) break;
        }

        // pairwise swaps between boundary nodes of adjacent districts
        if (!improved) {
            for (std::size_t a_pos = 0; a_pos < scan.size() && !improved; ++a_pos) {
                int i = scan[a_pos];
                int di = plan.district[i];
                for (std::size_t b_pos = a_pos + 1; b_pos < scan.size() && !improved; ++b_pos) {
                    int j = scan[b_pos];
                    int dj = plan.district[j];
                    if (di == dj) continue;
                    bool i_touches_dj = false, j_touches_di = false;
                    for (int v : g.adj[i]) i_touches_dj |= (plan.district[v] == dj && v != j);
                    for (int v : g.adj[j]) j_touches_di |= (plan.district[v] == di && v != i);
                    if (!i_touches_dj || !j_touches_di) continue;
                    long long shift = g.nodes[i].population - g.nodes[j].population;
                    if (static_cast<double>(pops[static_cast<std::size_t>(di)] - shift) < bounds.lo ||
                        static_cast<double>(pops[static_cast<std::size_t>(di)] - shift) > bounds.hi ||
                        static_cast<double>(pops[static_cast<std::size_t>(dj)] + shift) < bounds.lo ||
                        static_cast<double>(pops[static_cast<std::size_t>(dj)] + shift) > bounds.hi)
                        continue;
                    plan.district[i] = dj;
                    plan.district[j] = di;
                    if (district_ok(di) && district_ok(dj)) {
                        int new_obj = plan_objective(g, plan, x_party, y_party, margin);
                        double new_eff = plan_vote_efficiency(g, plan, x_party, y_party, margin);
                        if (better(new_obj, new_eff)) {
                            obj = new_obj;
                            eff = new_eff;
                            pops[static_cast<std::size_t>(di)] -= shift;
                            pops[static_cast<std::size_t>(dj)] += shift;
                            improved = true;
                            break;
                        }
                    }
                    plan.district[i] = di;
                    plan.district[j] = dj;
                }
            }
        }
        if (!improved) break;
    }
    return plan;
}

// Climb, then repeatedly perturb with sampler sweeps and re-climb, keeping
// the best (objective, efficiency) seen. Deterministic given the seed.
inline Plan iterated_improve(const PrecinctGraph& g, Plan plan, std::size_t x_party, std::size_t y_party,
                             double margin, double delta, const OptimizeOptions& opt, std::uint64_t seed) {
    Rng rng = Rng::substream(seed, 0x11);
    plan = local_search_improve(g, plan, x_party, y_party, margin, delta, opt.local_search_iters, rng);
    int best_obj = plan_objective(g, plan, x_party, y_party, margin);
    double best_eff = plan_vote_efficiency(g, plan, x_party, y_party, margin);
    McmcParams kick_params;
    kick_params.delta = delta;
    for (int round = 0; round < opt.kick_rounds; ++round) {
        Rng kick_rng = Rng::substream(seed, 0x100 + static_cast<std::uint64_t>(round));
        Plan trial = plan;
        for (int s = 0; s < opt.kick_sweeps; ++s) mcmc_fair_step(g, trial, kick_params, kick_rng);
        trial = local_search_improve(g, trial, x_party, y_party, margin, delta, opt.local_search_iters,
                                     kick_rng);
        int obj = plan_objective(g, trial, x_party, y_party, margin);
        double eff = plan_vote_efficiency(g, trial, x_party, y_party, margin);
        if (obj > best_obj || (obj == best_obj && eff > best_eff + 1e-12)) {
            best_obj = obj;
            best_eff = eff;
            plan = std::move(trial);
        }
    }
    return plan;
}

// Seat-maximizing plan for party x against party y.
inline OptimizeResult optimize_unfair_plan(const PrecinctGraph& g, std::size_t x_party, std::size_t y_party,
                                           int districts, double delta, double margin,
                                           const OptimizeOptions& opt) {
    if (x_party >= g.parties.size() || y_party >= g.parties.size() || x_party == y_party)
        throw DomainError("optimize_unfair_plan: bad party indices");
    switch (opt.mode) {
        case OptimizeMode::ExactEnumeration: {
            auto cands = enumerate_feasible_districts(g, districts, delta, opt.enumeration_cap);
            if (cands.empty()) throw ValidationError("optimize_unfair_plan: no feasible districts");
            return solve_partition(g, std::move(cands), districts, delta, x_party, y_party, margin);
        }
        case OptimizeMode::CoarsenExact: {
            // several coarsening granularities, each solved exactly on the
            // coarse instance and refined on the full graph; best kept
            OptimizeResult best;
            bool have = false;
            std::vector<int> targets{opt.coarsen_target, opt.coarsen_target + 8,
                                     std::max(districts * 2, opt.coarsen_target - 8)};
            std::sort(targets.begin(), targets.end());
            targets.erase(std::unique(targets.begin(), targets.end()), targets.end());
            for (std::size_t ti = 0; ti < targets.size(); ++ti) {
                int target = std::max(districts, std::min(targets[ti], g.size()));
                Coarsening coarse = coarsen_graph(g, target);
                std::vector<DistrictCandidate> cands;
                try {
                    cands = enumerate_feasible_districts(coarse.graph, districts, delta, opt.enumeration_cap);
                } catch (const ValidationError&) {
                    continue;  // too fine for the cap; the next target may fit
                }
                if (cands.empty()) continue;
                OptimizeResult coarse_res;
                try {
                    coarse_res = solve_partition(coarse.graph, std::move(cands), districts, delta, x_party,
                                                 y_party, margin);
                } catch (const ValidationError&) {
                    continue;  // no feasible partition at this granularity
                }
                Plan fine = expand_plan(coarse, coarse_res.plan);
                fine = iterated_improve(g, std::move(fine), x_party, y_party, margin, delta, opt,
                                        Rng::substream(opt.seed, 0xC0A5 + ti).next_u64());
                int obj = plan_objective(g, fine, x_party, y_party, margin);
                if (!have || obj > best.objective) {
                    best.plan = std::move(fine);
                    best.objective = obj;
                    best.seats_won = evaluate_plan(g, best.plan).seats[x_party];
                    best.exact = false;  // exact only on the coarse instance
                    have = true;
                }
            }
            if (!have)
                throw ValidationError("optimize_unfair_plan: no coarsening granularity was solvable");
            return best;
        }
        case OptimizeMode::LocalSearch: {
            OptimizeResult best;
            bool have = false;
            for (int restart = 0; restart < opt.local_search_restarts; ++restart) {
                McmcParams params;
                params.delta = delta;
                PlanBatch batch = sample_fair_plans(g, districts, 1, params, opt.fair_burn_in, 1,
                                                    Rng::substream(opt.seed, restart).next_u64());
                Plan plan = iterated_improve(g, batch.plans[0], x_party, y_party, margin, delta, opt,
                                             Rng::substream(opt.seed, 0x10CA1 + restart).next_u64());
                int obj = plan_objective(g, plan, x_party, y_party, margin);
                if (!have || obj > best.objective) {
                    best.plan = std::move(plan);
                    best.objective = obj;
                    best.seats_won = evaluate_plan(g, best.plan).seats[x_party];
                    best.exact = false;
                    have = true;
                }
            }
            if (!have) throw ValidationError("optimize_unfair_plan: local search produced no plan");
            return best;
        }
    }
    throw DomainError("optimize_unfair_plan: unknown mode");
}

}  // namespace psephos
