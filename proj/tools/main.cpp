// Command-line front end: ingestion, model training, scoring, the
// correlation study, plan generation, the labeled-plan experiment, and
// plot-ready report emission.

#include <CLI11.hpp>
#include <json.hpp>

#include <filesystem>
#include <iostream>
#include <optional>

#include "psephos/bias.hpp"
#include "psephos/competition.hpp"
#include "psephos/config.hpp"
#include "psephos/csv.hpp"
#include "psephos/election.hpp"
#include "psephos/experiment.hpp"
#include "psephos/model_io.hpp"
#include "psephos/plan.hpp"
#include "psephos/plan_mcmc.hpp"
#include "psephos/plan_opt.hpp"
#include "psephos/report.hpp"
#include "psephos/synth.hpp"
#include "psephos/threshold.hpp"

namespace fs = std::filesystem;
using nlohmann::json;
using namespace psephos;

namespace {

struct GlobalArgs {
    std::string config_path;
    std::optional<std::uint64_t> seed;
    std::optional<unsigned> workers;
    std::string out_dir = ".";
};

RunConfig resolve_config(const GlobalArgs& g) {
    RunConfig cfg;
    if (!g.config_path.empty()) cfg = load_run_config(g.config_path);
    if (g.seed) {
        cfg.seed = *g.seed;
        cfg.experiment.seed = *g.seed;
        cfg.threshold.seed = *g.seed;
    }
    if (g.workers) {
        cfg.workers = *g.workers;
        cfg.experiment.workers = *g.workers;
    }
    return cfg;
}

void print_warnings(const Warnings& w) {
    for (const auto& msg : w.messages()) std::cerr << "warning: " << msg << "\n";
}

json summary_to_json(const DatasetSummary& s) {
    return {{"elections", s.elections},
            {"districts", s.districts},
            {"parties", s.parties},
            {"candidates", s.candidates},
            {"district_count", {{"median", s.c_median}, {"min", s.c_min}, {"max", s.c_max}}},
            {"candidates_per_district", {{"avg", s.n_avg}, {"max", s.n_max}}},
            {"effective_candidates", {{"avg", s.phi_avg}, {"min", s.phi_min}, {"max", s.phi_max}}},
            {"candidates_over_5pct", {{"avg", s.nr_avg}, {"min", s.nr_min}, {"max", s.nr_max}}}};
}

int cmd_ingest(const GlobalArgs& g, const std::string& input) {
    RunConfig cfg = resolve_config(g);
    Warnings w;
    std::vector<Election> elections = load_candidate_csv(input, cfg.tie_policy, &w);
    fs::create_directories(g.out_dir);
    atomic_write_file(fs::path(g.out_dir) / "dataset.csv", serialize_candidate_csv(elections));
    json report = {{"summary", summary_to_json(summarize_dataset(elections))},
                   {"warnings", w.messages()}};
    atomic_write_file(fs::path(g.out_dir) / "ingest_report.json", report.dump(2) + "\n");
    print_warnings(w);
    std::cout << "ingested " << elections.size() << " elections into " << g.out_dir << "\n";
    return 0;
}

int cmd_train(const GlobalArgs& g, const std::string& dataset, const std::string& thresholds_out) {
    RunConfig cfg = resolve_config(g);
    Warnings w;
    std::vector<Election> elections = load_candidate_csv(dataset, cfg.tie_policy, &w);

    ThresholdModel thresholds = train_threshold_model(extract_training_points(elections), cfg.threshold, &w);
    std::vector<PartyRow> rows = build_party_rows(elections, thresholds, &w);

    SeatsVotesOptions opt;
    opt.k0 = cfg.cutoff_k0;
    opt.scheme = cfg.bandwidth_scheme;
    opt.space = cfg.bandwidth_space;
    opt.criterion = cfg.cdf_criterion();
    opt.workers = cfg.workers;
    SeatsVotesModel sv = train_seats_votes(rows, opt, &w);

    fs::create_directories(g.out_dir);
    json bundle = model_bundle_to_json(thresholds, sv, cfg.seed, run_config_echo(cfg));
    atomic_write_file(fs::path(g.out_dir) / "model.json", bundle.dump(2) + "\n");
    if (!thresholds_out.empty())
        atomic_write_file(thresholds_out, threshold_model_to_json(thresholds).dump(2) + "\n");
    print_warnings(w);
    std::cout << "trained on " << rows.size() << " parties (k0 = " << sv.k0 << ", "
              << sv.strata.size() << " strata); model written to " << g.out_dir << "/model.json\n";
    return 0;
}

int cmd_score(const GlobalArgs& g, const std::string& dataset, const std::string& model_path) {
    RunConfig cfg = resolve_config(g);
    Warnings w;
    std::vector<Election> elections = load_candidate_csv(dataset, cfg.tie_policy, &w);
    ModelBundle bundle = model_bundle_from_json(json::parse(read_file(model_path)));
    auto [scores, summary] = score_dataset(bundle.seats_votes, bundle.thresholds, elections, cfg.alpha, &w);

    fs::create_directories(g.out_dir);
    atomic_write_file(fs::path(g.out_dir) / "party_scores.csv", party_scores_csv(scores));
    atomic_write_file(fs::path(g.out_dir) / "election_scores.csv", election_scores_csv(scores));
    json sj = {{"elections", summary.elections},
               {"alpha", summary.alpha},
               {"mean_pi", summary.defined ? json(summary.mean_pi) : json()},
               {"frac_flagged", summary.defined ? json(summary.frac_flagged) : json()}};
    atomic_write_file(fs::path(g.out_dir) / "score_summary.json", sj.dump(2) + "\n");
    print_warnings(w);
    std::cout << "scored " << summary.elections << " elections; mean pi "
              << (summary.defined ? format_double(summary.mean_pi) : "n/a") << "\n";
    return 0;
}

int cmd_diversity_study(const GlobalArgs& g, int n_min, int n_max, std::uint64_t samples) {
    RunConfig cfg = resolve_config(g);
    fs::create_directories(g.out_dir);
    auto results = run_diversity_study(n_min, n_max, samples, cfg.seed);
    for (const auto& r : results)
        atomic_write_file(fs::path(g.out_dir) / ("diversity_n" + std::to_string(r.n) + ".tsv"),
                          study_result_tsv(r));
    std::cout << "wrote " << results.size() << " correlation tables to " << g.out_dir << "\n";
    return 0;
}

int cmd_genplans(const GlobalArgs& g, const std::string& nodes, const std::string& edges,
                 const std::string& mode, int count, int districts, const std::string& party,
                 double margin) {
    RunConfig cfg = resolve_config(g);
    PrecinctGraph graph = nodes.empty() ? make_grid_instance(cfg.experiment.instance, cfg.seed)
                                        : load_precinct_graph(nodes, edges);
    fs::create_directories(g.out_dir);
    if (nodes.empty()) {
        atomic_write_file(fs::path(g.out_dir) / "nodes.csv", precinct_graph_nodes_csv(graph));
        atomic_write_file(fs::path(g.out_dir) / "edges.csv", precinct_graph_edges_csv(graph));
    }
    std::vector<Plan> plans;
    json meta = {{"seed", cfg.seed}, {"mode", mode}, {"districts", districts}, {"delta", cfg.mcmc.delta}};
    if (mode == "fair") {
        PlanBatch batch = sample_fair_plans(graph, districts, static_cast<std::size_t>(count), cfg.mcmc,
                                            cfg.mcmc_burn_in, cfg.mcmc_thinning, cfg.seed);
        plans = std::move(batch.plans);
        meta["burn_in"] = cfg.mcmc_burn_in;
        meta["thinning"] = cfg.mcmc_thinning;
    } else if (mode == "unfair") {
        std::size_t x = graph.parties.size();
        for (std::size_t p = 0; p < graph.parties.size(); ++p)
            if (graph.parties[p] == party) x = p;
        if (x == graph.parties.size())
            throw ValidationError("genplans: --party must name a party in the graph");
        std::size_t y = x == 0 ? 1 : 0;
        OptimizeOptions oo = cfg.optimizer;
        for (int i = 0; i < count; ++i) {
            oo.seed = Rng::substream(cfg.seed, static_cast<std::uint64_t>(i)).next_u64();
            OptimizeResult res = optimize_unfair_plan(graph, x, y, districts, cfg.mcmc.delta, margin, oo);
            plans.push_back(std::move(res.plan));
        }
        meta["party"] = party;
        meta["margin"] = margin;
    } else {
        throw ValidationError("genplans: --mode must be fair or unfair");
    }
    for (const auto& plan : plans) {
        auto violations = validate_plan(graph, plan, cfg.mcmc.delta);
        if (!violations.empty()) throw ValidationError("generated plan failed validation: " + violations[0]);
    }
    atomic_write_file(fs::path(g.out_dir) / "plans.csv", plans_csv(graph, plans));
    json seats = json::array();
    for (const auto& plan : plans) seats.push_back(evaluate_plan(graph, plan).seats);
    meta["plans"] = plans.size();
    meta["seats"] = seats;
    atomic_write_file(fs::path(g.out_dir) / "plans_meta.json", meta.dump(2) + "\n");
    std::cout << "wrote " << plans.size() << " plans to " << g.out_dir << "\n";
    return 0;
}

int cmd_experiment(const GlobalArgs& g) {
    RunConfig cfg = resolve_config(g);
    Warnings w;
    ExperimentReport rep = run_experiment(cfg.experiment, &w);
    fs::create_directories(g.out_dir);
    json rows = json::array();
    for (const auto& r : rep.rows)
        rows.push_back({{"plan_id", r.plan_id},
                        {"fair", r.fair},
                        {"optimized_for", r.optimized_for},
                        {"margin", r.margin},
                        {"seats", r.seats},
                        {"pi", r.pi},
                        {"flagged", r.flagged}});
    json out = {{"seed", rep.seed},
                {"alpha", rep.alpha},
                {"training_rows", rep.training_rows},
                {"fair_plans", rep.fair_count},
                {"unfair_plans", rep.unfair_count},
                {"precision", rep.precision_defined ? json(rep.precision) : json()},
                {"recall", rep.recall_defined ? json(rep.recall) : json()},
                {"auc", rep.recall_defined ? json(rep.auc) : json()},
                {"plans", rows}};
    atomic_write_file(fs::path(g.out_dir) / "experiment.json", out.dump(2) + "\n");
    print_warnings(w);
    std::cout << "experiment: precision " << (rep.precision_defined ? format_double(rep.precision) : "n/a")
              << ", recall " << (rep.recall_defined ? format_double(rep.recall) : "n/a") << ", auc "
              << (rep.recall_defined ? format_double(rep.auc) : "n/a") << "\n";
    return 0;
}

int cmd_report(const GlobalArgs& g, const std::string& dataset, const std::string& model_path) {
    RunConfig cfg = resolve_config(g);
    Warnings w;
    std::vector<Election> elections = load_candidate_csv(dataset, cfg.tie_policy, &w);
    ModelBundle bundle = model_bundle_from_json(json::parse(read_file(model_path)));
    std::vector<PartyRow> rows = build_party_rows(elections, bundle.thresholds, &w);
    fs::create_directories(g.out_dir);
    atomic_write_file(fs::path(g.out_dir) / "seats_votes_curves.tsv",
                      seats_votes_curves_tsv(bundle.seats_votes));
    atomic_write_file(fs::path(g.out_dir) / "seats_votes_surfaces.tsv",
                      seats_votes_surfaces_tsv(bundle.seats_votes, rows));
    print_warnings(w);
    std::cout << "wrote seats-votes curve and surface tables to " << g.out_dir << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"electoral bias detection toolkit"};
    app.require_subcommand(1);

    GlobalArgs g;
    app.add_option("--config", g.config_path, "JSON configuration file");
    std::uint64_t seed_opt = 0;
    unsigned workers_opt = 0;
    auto* seed_flag = app.add_option("--seed", seed_opt, "override the configured seed");
    auto* workers_flag =
        app.add_option("--workers", workers_opt, "worker threads (results are identical for any count)");
    app.add_option("--out", g.out_dir, "output directory")->capture_default_str();

    std::string input, dataset, model_path, thresholds_out, nodes, edges, mode = "fair", party = "p";
    int n_min = 3, n_max = 12, count = 8, districts = 8;
    std::uint64_t samples = 65536;
    double margin = 0.0;

    auto* ingest = app.add_subcommand("ingest", "validate a candidate-level CSV and emit a normalized dataset");
    ingest->add_option("--input", input, "candidate CSV (election_id,district_id,party_id,votes)")->required();

    auto* train = app.add_subcommand("train", "fit the threshold classifier and the seats-votes model");
    train->add_option("--dataset", dataset, "candidate CSV")->required();
    train->add_option("--thresholds-out", thresholds_out, "also write the threshold model on its own");

    auto* score = app.add_subcommand("score", "score a dataset against a trained model");
    score->add_option("--dataset", dataset, "candidate CSV")->required();
    score->add_option("--model", model_path, "model bundle (model.json)")->required();

    auto* study = app.add_subcommand("diversity-study", "correlation study of competitor diversity measures");
    study->add_option("--n-min", n_min, "smallest candidate count")->capture_default_str();
    study->add_option("--n-max", n_max, "largest candidate count")->capture_default_str();
    study->add_option("--samples", samples, "draws per candidate count")->capture_default_str();

    auto* genplans = app.add_subcommand("genplans", "sample fair plans or optimize unfair ones");
    genplans->add_option("--nodes", nodes, "precinct csv (omit for the built-in synthetic grid)");
    genplans->add_option("--edges", edges, "adjacency csv");
    genplans->add_option("--mode", mode, "fair | unfair")->capture_default_str();
    genplans->add_option("--count", count, "number of plans")->capture_default_str();
    genplans->add_option("--districts", districts, "district count")->capture_default_str();
    genplans->add_option("--party", party, "party to favor (unfair mode)")->capture_default_str();
    genplans->add_option("--margin", margin, "required victory margin (unfair mode)")->capture_default_str();

    auto* experiment = app.add_subcommand("experiment", "fair-vs-gerrymandered detection experiment");

    auto* report = app.add_subcommand("report", "emit plot-ready seats-votes tables");
    report->add_option("--dataset", dataset, "candidate CSV")->required();
    report->add_option("--model", model_path, "model bundle (model.json)")->required();

    CLI11_PARSE(app, argc, argv);
    if (!seed_flag->empty()) g.seed = seed_opt;
    if (!workers_flag->empty()) g.workers = workers_opt;

    try {
        if (app.got_subcommand(ingest)) return cmd_ingest(g, input);
        if (app.got_subcommand(train)) return cmd_train(g, dataset, thresholds_out);
        if (app.got_subcommand(score)) return cmd_score(g, dataset, model_path);
        if (app.got_subcommand(study)) return cmd_diversity_study(g, n_min, n_max, samples);
        if (app.got_subcommand(genplans))
            return cmd_genplans(g, nodes, edges, mode, count, districts, party, margin);
        if (app.got_subcommand(experiment)) return cmd_experiment(g);
        if (app.got_subcommand(report)) return cmd_report(g, dataset, model_path);
    } catch (const ParseError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 1;
    } catch (const ValidationError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 2;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return 3;
    }
    return 1;
}
