#pragma once

#include <json.hpp>

#include <set>
#include <string>

#include "psephos/bias.hpp"
#include "psephos/election.hpp"
#include "psephos/experiment.hpp"
#include "psephos/kernel_regression.hpp"
#include "psephos/plan_mcmc.hpp"
#include "psephos/plan_opt.hpp"

namespace psephos {

// Structured run configuration with documented defaults. Unknown keys are
// rejected so typos fail fast instead of silently running defaults.
struct RunConfig {
    std::uint64_t seed = 1;
    unsigned workers = 1;
    double alpha = 0.05;
    TiePolicy tie_policy = TiePolicy::Flag;
    int cutoff_k0 = 0;  // 0 = derive from the data

    BandwidthScheme bandwidth_scheme = BandwidthScheme::MultivariateAdaptiveNN;
    BandwidthSearchSpace bandwidth_space;
    std::string bandwidth_criterion = "auto";  // auto, loo-squared-error, loo-cdf-deviance, hurvich-aicc

    ThresholdTrainOptions threshold;
    McmcParams mcmc;
    std::size_t mcmc_burn_in = 1200;
    std::size_t mcmc_thinning = 150;
    OptimizeOptions optimizer;
    ExperimentConfig experiment;

    SelectionCriterion cdf_criterion() const {
        if (bandwidth_criterion == "auto") return SelectionCriterion::LooCdfDeviance;
        return selection_criterion_from_string(bandwidth_criterion);
    }
    SelectionCriterion expectation_criterion() const {
        if (bandwidth_criterion == "auto") return SelectionCriterion::HurvichAicc;
        return selection_criterion_from_string(bandwidth_criterion);
    }
};

namespace detail {

inline void reject_unknown_keys(const nlohmann::json& j, const std::set<std::string>& known,
                                const std::string& where) {
    for (auto it = j.begin(); it != j.end(); ++it)
        if (!known.count(it.key()))
            throw ParseError("config: unknown key '" + it.key() + "' in " + where);
}

template <typename T>
void maybe(const nlohmann::json& j, const char* key, T& out) {
    if (j.contains(key)) out = j.at(key).get<T>();
}

}  // namespace detail

inline RunConfig run_config_from_json(const nlohmann::json& j) {
    RunConfig cfg;
    detail::reject_unknown_keys(j, {"seed", "workers", "alpha", "tie_policy", "cutoff_k0", "bandwidth",
                                    "threshold", "mcmc", "optimizer", "experiment"},
                                "the top level");
    detail::maybe(j, "seed", cfg.seed);
    detail::maybe(j, "workers", cfg.workers);
    detail::maybe(j, "alpha", cfg.alpha);
    detail::maybe(j, "cutoff_k0", cfg.cutoff_k0);
    if (j.contains("tie_policy")) {
        std::string p = j.at("tie_policy").get<std::string>();
        if (p == "flag")
            cfg.tie_policy = TiePolicy::Flag;
        else if (p == "first-listed")
            cfg.tie_policy = TiePolicy::FirstListed;
        else
            throw ParseError("config: tie_policy must be 'flag' or 'first-listed'");
    }
    if (j.contains("bandwidth")) {
        const auto& b = j.at("bandwidth");
        detail::reject_unknown_keys(b, {"scheme", "h0_grid", "k_grid", "criterion"}, "bandwidth");
        if (b.contains("scheme"))
            cfg.bandwidth_scheme = bandwidth_scheme_from_string(b.at("scheme").get<std::string>());
        detail::maybe(b, "h0_grid", cfg.bandwidth_space.h0_grid);
        detail::maybe(b, "k_grid", cfg.bandwidth_space.k_grid);
        detail::maybe(b, "criterion", cfg.bandwidth_criterion);
        if (cfg.bandwidth_criterion != "auto") selection_criterion_from_string(cfg.bandwidth_criterion);
    }
    if (j.contains("threshold")) {
        const auto& t = j.at("threshold");
        detail::reject_unknown_keys(
            t, {"min_group", "c_grid", "cv_folds", "trace_points", "knot_counts", "holdout_fraction"},
            "threshold");
        detail::maybe(t, "min_group", cfg.threshold.min_group);
        detail::maybe(t, "c_grid", cfg.threshold.c_grid);
        detail::maybe(t, "cv_folds", cfg.threshold.cv_folds);
        detail::maybe(t, "trace_points", cfg.threshold.trace_points);
        detail::maybe(t, "knot_counts", cfg.threshold.knot_counts);
        detail::maybe(t, "holdout_fraction", cfg.threshold.holdout_fraction);
    }
    if (j.contains("mcmc")) {
        const auto& m = j.at("mcmc");
        detail::reject_unknown_keys(
            m, {"edge_disable_prob", "r_probs", "delta", "temperature", "burn_in", "thinning"}, "mcmc");
        detail::maybe(m, "edge_disable_prob", cfg.mcmc.edge_disable_prob);
        detail::maybe(m, "r_probs", cfg.mcmc.r_probs);
        detail::maybe(m, "delta", cfg.mcmc.delta);
        detail::maybe(m, "temperature", cfg.mcmc.temperature);
        detail::maybe(m, "burn_in", cfg.mcmc_burn_in);
        detail::maybe(m, "thinning", cfg.mcmc_thinning);
    }
    if (j.contains("optimizer")) {
        const auto& o = j.at("optimizer");
        detail::reject_unknown_keys(o,
                                    {"mode", "enumeration_cap", "coarsen_target", "local_search_restarts",
                                     "local_search_iters", "kick_rounds", "kick_sweeps"},
                                    "optimizer");
        if (o.contains("mode")) {
            std::string m = o.at("mode").get<std::string>();
            if (m == "exact-enumeration")
                cfg.optimizer.mode = OptimizeMode::ExactEnumeration;
            else if (m == "coarsen+exact")
                cfg.optimizer.mode = OptimizeMode::CoarsenExact;
            else if (m == "local-search")
                cfg.optimizer.mode = OptimizeMode::LocalSearch;
            else
                throw ParseError("config: optimizer mode must be exact-enumeration, coarsen+exact or local-search");
        }
        detail::maybe(o, "enumeration_cap", cfg.optimizer.enumeration_cap);
        detail::maybe(o, "coarsen_target", cfg.optimizer.coarsen_target);
        detail::maybe(o, "local_search_restarts", cfg.optimizer.local_search_restarts);
        detail::maybe(o, "local_search_iters", cfg.optimizer.local_search_iters);
        detail::maybe(o, "kick_rounds", cfg.optimizer.kick_rounds);
        detail::maybe(o, "kick_sweeps", cfg.optimizer.kick_sweeps);
    }
    if (j.contains("experiment")) {
        const auto& e = j.at("experiment");
        detail::reject_unknown_keys(e,
                                    {"grid_width", "grid_height", "districts", "delta", "fair_plans",
                                     "margins", "training_instances", "training_plans_per_instance",
                                     "spread", "blur_sigma", "spread_jitter"},
                                    "experiment");
        detail::maybe(e, "grid_width", cfg.experiment.instance.width);
        detail::maybe(e, "grid_height", cfg.experiment.instance.height);
        detail::maybe(e, "districts", cfg.experiment.districts);
        detail::maybe(e, "delta", cfg.experiment.delta);
        detail::maybe(e, "fair_plans", cfg.experiment.fair_plans);
        detail::maybe(e, "margins", cfg.experiment.margins);
        detail::maybe(e, "training_instances", cfg.experiment.training_instances);
        detail::maybe(e, "training_plans_per_instance", cfg.experiment.training_plans_per_instance);
        detail::maybe(e, "spread", cfg.experiment.instance.spread);
        detail::maybe(e, "blur_sigma", cfg.experiment.instance.blur_sigma);
        detail::maybe(e, "spread_jitter", cfg.experiment.instance.spread_jitter);
    }
    // global knobs flow into the sub-configs
    cfg.experiment.alpha = cfg.alpha;
    cfg.experiment.seed = cfg.seed;
    cfg.experiment.workers = cfg.workers;
    cfg.experiment.mcmc = cfg.mcmc;
    cfg.experiment.burn_in = cfg.mcmc_burn_in;
    cfg.experiment.thinning = cfg.mcmc_thinning;
    cfg.experiment.optimizer = cfg.optimizer;
    cfg.threshold.seed = cfg.seed;
    return cfg;
}

inline RunConfig load_run_config(const std::filesystem::path& path) {
    nlohmann::json j = nlohmann::json::parse(read_file(path));
    return run_config_from_json(j);
}

inline nlohmann::json run_config_echo(const RunConfig& cfg) {
    return {{"seed", cfg.seed},
            {"workers", cfg.workers},
            {"alpha", cfg.alpha},
            {"tie_policy", cfg.tie_policy == TiePolicy::Flag ? "flag" : "first-listed"},
            {"cutoff_k0", cfg.cutoff_k0},
            {"bandwidth",
             {{"scheme", to_string(cfg.bandwidth_scheme)},
              {"h0_grid", cfg.bandwidth_space.h0_grid},
              {"k_grid", cfg.bandwidth_space.k_grid},
              {"criterion", cfg.bandwidth_criterion}}}};
}

}  // namespace psephos
