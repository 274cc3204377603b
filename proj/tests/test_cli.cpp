#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "psephos/csv.hpp"
#include "psephos/election.hpp"
#include "psephos/rng.hpp"

namespace fs = std::filesystem;
using namespace psephos;

namespace {

const char* cli = PSEPHOS_CLI_PATH;

struct TempDir {
    fs::path path;
    TempDir() {
        path = fs::temp_directory_path() / ("psephos_cli_" + std::to_string(std::rand()));
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run(const std::string& args) {
    std::string cmd = std::string(cli) + " " + args + " > /dev/null 2>&1";
    int rc = std::system(cmd.c_str());
    return WEXITSTATUS(rc);
}

// Synthetic multiparty dataset exercising the full training pipeline:
// several elections, 2-5 candidates per district, enough parties per
// district-count group to fit splines.
std::string synthetic_dataset(std::uint64_t seed, int elections = 40, int districts = 16) {
    Rng rng(seed);
    std::ostringstream out;
    out << "election_id,district_id,party_id,votes\n";
    for (int e = 1; e <= elections; ++e) {
        int parties = 3 + static_cast<int>(rng.uniform_int(3));
        std::vector<double> strength(static_cast<std::size_t>(parties));
        for (auto& s : strength) s = rng.uniform(0.8, 1.2);
        for (int d = 1; d <= districts; ++d) {
            for (int p = 0; p < parties; ++p) {
                if (rng.uniform() < 0.15 && p >= 2) continue;  // partial contestation
                double w = strength[static_cast<std::size_t>(p)] * rng.uniform(0.5, 1.5);
                long long votes = 50 + static_cast<long long>(900 * w);
                out << "e" << e << ",d" << d << ",p" << (p + 1) << "," << votes << "\n";
            }
        }
    }
    return out.str();
}

}  // namespace

TEST_CASE("ingest: valid data produces a normalized dataset and a summary") {
    TempDir tmp;
    atomic_write_file(tmp.path / "in.csv",
                      "election_id,district_id,party_id,votes\n"
                      "e1,d1,p1,60\ne1,d1,p2,40\ne1,d2,p1,30\ne1,d2,p2,70\n");
    CHECK(run("--out " + (tmp.path / "out").string() + " ingest --input " + (tmp.path / "in.csv").string()) ==
          0);
    CHECK(fs::exists(tmp.path / "out" / "dataset.csv"));
    std::string report = read_file(tmp.path / "out" / "ingest_report.json");
    CHECK(report.find("\"districts\": 2") != std::string::npos);
    CHECK(report.find("effective_candidates") != std::string::npos);
}

TEST_CASE("ingest: malformed and empty inputs fail with nonzero exits") {
    TempDir tmp;
    atomic_write_file(tmp.path / "bad.csv",
                      "election_id,district_id,party_id,votes\n"
                      "e1,d1,p1,notanumber\n");
    CHECK(run("ingest --input " + (tmp.path / "bad.csv").string()) != 0);
    atomic_write_file(tmp.path / "empty.csv", "");
    CHECK(run("ingest --input " + (tmp.path / "empty.csv").string()) != 0);
    CHECK(run("ingest --input " + (tmp.path / "missing.csv").string()) != 0);
}

TEST_CASE("config: unknown keys are rejected") {
    TempDir tmp;
    atomic_write_file(tmp.path / "cfg.json", "{\"sede\": 1}\n");
    atomic_write_file(tmp.path / "in.csv",
                      "election_id,district_id,party_id,votes\n"
                      "e1,d1,p1,60\ne1,d1,p2,40\n");
    CHECK(run("--config " + (tmp.path / "cfg.json").string() + " ingest --input " +
              (tmp.path / "in.csv").string()) != 0);
}

TEST_CASE("train, score and report round trip on a synthetic dataset") {
    TempDir tmp;
    atomic_write_file(tmp.path / "data.csv", synthetic_dataset(42, 150));
    std::string train_dir = (tmp.path / "m1").string();
    REQUIRE(run("--out " + train_dir + " --seed 5 train --dataset " + (tmp.path / "data.csv").string() +
                " --thresholds-out " + (tmp.path / "thresholds.json").string()) == 0);
    REQUIRE(fs::exists(tmp.path / "m1" / "model.json"));
    CHECK(fs::exists(tmp.path / "thresholds.json"));

    SUBCASE("a configured cutoff is honored and echoed in the bundle") {
        atomic_write_file(tmp.path / "k0.json", "{\"cutoff_k0\": 5}\n");
        std::string dir = (tmp.path / "mk").string();
        REQUIRE(run("--config " + (tmp.path / "k0.json").string() + " --out " + dir + " --seed 5 train --dataset " +
                    (tmp.path / "data.csv").string()) == 0);
        std::string bundle = read_file(tmp.path / "mk" / "model.json");
        CHECK(bundle.find("\"cutoff_k0\": 5") != std::string::npos);
        CHECK(bundle.find("\"k0\": 5") != std::string::npos);
    }

    SUBCASE("retraining with the same seed is byte-identical") {
        std::string train_dir2 = (tmp.path / "m2").string();
        REQUIRE(run("--out " + train_dir2 + " --seed 5 train --dataset " + (tmp.path / "data.csv").string()) ==
                0);
        CHECK(read_file(tmp.path / "m1" / "model.json") == read_file(tmp.path / "m2" / "model.json"));
    }

    SUBCASE("scoring the training set emits per-party and per-election tables") {
        std::string score_dir = (tmp.path / "s").string();
        REQUIRE(run("--out " + score_dir + " score --dataset " + (tmp.path / "data.csv").string() +
                    " --model " + (tmp.path / "m1" / "model.json").string()) == 0);
        std::string party = read_file(tmp.path / "s" / "party_scores.csv");
        CHECK(party.rfind("election_id,party_id,v,s,t,c,w,p_value", 0) == 0);
        std::string elections = read_file(tmp.path / "s" / "election_scores.csv");
        CHECK(elections.rfind("election_id,pi,flagged", 0) == 0);
        std::string summary = read_file(tmp.path / "s" / "score_summary.json");
        CHECK(summary.find("mean_pi") != std::string::npos);
        // scoring the training set itself should rarely flag anything
        std::size_t flags = 0, lines = 0;
        std::istringstream in(elections);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            ++lines;
            if (line.size() >= 2 && line[line.size() - 1] == '1' && line[line.size() - 2] == ',') ++flags;
        }
        CHECK(lines == 150);
        // plumbing smoke: in-sample incidence stays bounded on this toy corpus
        CHECK(flags <= 30);
    }

    SUBCASE("report emits plot tables with the expected shape") {
        std::string rep_dir = (tmp.path / "r").string();
        REQUIRE(run("--out " + rep_dir + " report --dataset " + (tmp.path / "data.csv").string() +
                    " --model " + (tmp.path / "m1" / "model.json").string()) == 0);
        std::string curves = read_file(tmp.path / "r" / "seats_votes_curves.tsv");
        CHECK(curves.rfind("t_quantile\tt\tv\texpected_seat_share", 0) == 0);
        // spot-check: the median-threshold curve rises from low to high v
        double lo = -1, hi = -1;
        std::istringstream in(curves);
        std::string line;
        std::getline(in, line);
        while (std::getline(in, line)) {
            auto f = split_fields(line, '\t');
            if (f[0] != "q50") continue;
            double v = std::stod(f[2]), s = std::stod(f[3]);
            if (std::fabs(v - 0.14) < 0.02) lo = s;
            if (std::fabs(v - 0.86) < 0.02) hi = s;
        }
        REQUIRE(lo >= 0);
        REQUIRE(hi >= 0);
        CHECK(hi > lo);
        std::string surfaces = read_file(tmp.path / "r" / "seats_votes_surfaces.tsv");
        CHECK(surfaces.rfind("v\tt\tempirical_seat_share\texpected_seat_share\tdifference", 0) == 0);
    }
}

TEST_CASE("diversity-study emits one tsv per candidate count") {
    TempDir tmp;
    std::string dir = (tmp.path / "div").string();
    REQUIRE(run("--out " + dir + " --seed 9 diversity-study --n-min 3 --n-max 4 --samples 2000") == 0);
    std::string t3 = read_file(tmp.path / "div" / "diversity_n3.tsv");
    CHECK(t3.rfind("variable\talpha\tV1_down\tV1_up\tV_med\tH\tHHI\tGini\tBhatt", 0) == 0);
    CHECK(fs::exists(tmp.path / "div" / "diversity_n4.tsv"));
}

TEST_CASE("genplans: deterministic fair batches on the synthetic grid") {
    TempDir tmp;
    std::string d1 = (tmp.path / "g1").string(), d2 = (tmp.path / "g2").string();
    REQUIRE(run("--out " + d1 + " --seed 7 genplans --mode fair --count 8") == 0);
    REQUIRE(run("--out " + d2 + " --seed 7 genplans --mode fair --count 8") == 0);
    std::string plans = read_file(tmp.path / "g1" / "plans.csv");
    CHECK(plans.rfind("plan_id,precinct_id,district", 0) == 0);
    CHECK(plans == read_file(tmp.path / "g2" / "plans.csv"));
    // 8 plans over 64 precincts plus the header
    std::size_t rows = static_cast<std::size_t>(std::count(plans.begin(), plans.end(), '\n'));
    CHECK(rows == 8 * 64 + 1);
    CHECK(fs::exists(tmp.path / "g1" / "plans_meta.json"));
}

TEST_CASE("experiment subcommand emits the report schema") {
    TempDir tmp;
    // small configuration so the smoke test stays quick
    atomic_write_file(tmp.path / "cfg.json",
                      "{\"experiment\": {\"grid_width\": 5, \"grid_height\": 5, \"districts\": 4,\n"
                      "  \"fair_plans\": 6, \"margins\": [0.0, 0.08],\n"
                      "  \"training_instances\": 12, \"training_plans_per_instance\": 3},\n"
                      " \"mcmc\": {\"burn_in\": 300, \"thinning\": 50}}\n");
    std::string dir = (tmp.path / "exp").string();
    REQUIRE(run("--config " + (tmp.path / "cfg.json").string() + " --out " + dir + " --seed 3 experiment") ==
            0);
    std::string rep = read_file(tmp.path / "exp" / "experiment.json");
    for (const char* key : {"precision", "recall", "auc", "plans", "fair_plans", "unfair_plans", "seed"})
        CHECK(rep.find(key) != std::string::npos);
}
