#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "psephos/bias.hpp"
#include "psephos/model_io.hpp"

using namespace psephos;

namespace {

PartyRow row(double v, double t, double s, int c, double w = 0.5) {
    PartyRow r;
    r.v = v;
    r.t = t;
    r.s = s;
    r.c = c;
    r.w = w;
    return r;
}

// Synthetic party population: seats are Bernoulli in each district with a
// win probability driven smoothly by (v, t).
std::vector<PartyRow> synthetic_parties(std::size_t count, std::uint64_t seed, int c_lo = 10, int c_hi = 40) {
    Rng rng(seed);
    std::vector<PartyRow> rows;
    rows.reserve(count);
    for (std::size_t i = 0; i < count; ++i) {
        double v = rng.uniform(0.25, 0.75);
        double t = rng.uniform(0.42, 0.5);
        int c = c_lo + static_cast<int>(rng.uniform_int(static_cast<std::uint64_t>(c_hi - c_lo + 1)));
        double theta = 1.0 / (1.0 + std::exp(-(v - t) / 0.12));
        int seats = 0;
        for (int k = 0; k < c; ++k)
            if (rng.uniform() < theta) ++seats;
        PartyRow r = row(v, t, static_cast<double>(seats) / c, c);
        r.election_id = "e" + std::to_string(i);
        r.party_id = "p";
        rows.push_back(std::move(r));
    }
    return rows;
}

SeatsVotesOptions fast_options() {
    SeatsVotesOptions opt;
    opt.scheme = BandwidthScheme::GeneralizedNN;
    opt.space.h0_grid = {0.5, 1.0};
    opt.space.k_grid = {32, 64};
    return opt;
}

}  // namespace

TEST_CASE("cutoff derivation is the 80th percentile of district counts, floored at 5") {
    std::vector<PartyRow> rows;
    for (int i = 0; i < 100; ++i) rows.push_back(row(0.5, 0.5, 0.5, i < 80 ? 3 : 12));
    CHECK(derive_cutoff(rows) == 12);
    std::vector<PartyRow> tiny;
    for (int i = 0; i < 100; ++i) tiny.push_back(row(0.5, 0.5, 0.5, 2));
    CHECK(derive_cutoff(tiny) == 5);
}

TEST_CASE("stratification rules") {
    SUBCASE("every party at or above the cutoff gives a single pooled stratum") {
        auto rows = synthetic_parties(120, 1, 8, 12);
        SeatsVotesOptions opt = fast_options();
        opt.k0 = 5;
        SeatsVotesModel m = train_seats_votes(rows, opt);
        REQUIRE(m.strata.size() == 1);
        CHECK(m.strata[0].c == -1);
        CHECK(m.strata[0].rows == 120);
    }
    SUBCASE("cutoff of 1 pools everything") {
        auto rows = synthetic_parties(80, 2, 1, 6);
        SeatsVotesOptions opt = fast_options();
        opt.k0 = 1;
        SeatsVotesModel m = train_seats_votes(rows, opt);
        REQUIRE(m.strata.size() == 1);
        CHECK(m.strata[0].rows == 80);
    }
    SUBCASE("counts 1, 2 and 5 with cutoff 5") {
        std::vector<PartyRow> rows;
        Rng rng(3);
        auto add = [&](int c, int n) {
            for (int i = 0; i < n; ++i) {
                PartyRow r = row(rng.uniform(0.2, 0.8), rng.uniform(0.4, 0.5), rng.uniform(), c);
                rows.push_back(r);
            }
        };
        add(1, 30);
        add(2, 25);
        add(5, 25);
        SeatsVotesOptions opt = fast_options();
        opt.k0 = 5;
        SeatsVotesModel m = train_seats_votes(rows, opt);
        REQUIRE(m.strata.size() == 3);
        CHECK(m.strata[0].c == 1);
        CHECK(m.strata[0].rows == 80);  // trained on everyone with c >= 1
        CHECK(m.strata[1].c == 2);
        CHECK(m.strata[1].rows == 50);  // c >= 2
        CHECK(m.strata[2].c == -1);
        CHECK(m.strata[2].rows == 25);  // pooled c >= 5
        // routing: a count without its own stratum goes to the tightest
        // admissible superset
        CHECK(m.stratum_for(1).c == 1);
        CHECK(m.stratum_for(2).c == 2);
        CHECK(m.stratum_for(3).c == -1);
        CHECK(m.stratum_for(99).c == -1);
    }
    SUBCASE("undersized stratum folds into the pooled model with a warning") {
        // c = 4 sits below the cutoff but only 9 parties contest >= 4
        // districts, and the pooled stratum itself is undersized
        std::vector<PartyRow> rows;
        Rng rng(4);
        for (int i = 0; i < 55; ++i) rows.push_back(row(rng.uniform(), 0.5, rng.uniform(), 1));
        for (int i = 0; i < 3; ++i) rows.push_back(row(rng.uniform(), 0.5, rng.uniform(), 4));
        for (int i = 0; i < 6; ++i) rows.push_back(row(rng.uniform(), 0.5, rng.uniform(), 20));
        SeatsVotesOptions opt = fast_options();
        opt.space.k_grid = {8, 16};
        opt.k0 = 10;
        Warnings w;
        SeatsVotesModel m = train_seats_votes(rows, opt, &w);
        REQUIRE(m.strata.size() == 2);  // c = 1 plus the pooled stratum
        CHECK(m.strata[0].c == 1);
        CHECK(m.strata[1].c == -1);
        CHECK(m.strata[1].rows == 64);  // pooled fell back to every party
        CHECK(!w.empty());
        CHECK(m.stratum_for(4).c == -1);
    }
}

TEST_CASE("party p-value is the smaller tail of the stratum CDF") {
    // all rows share (v, t) so the conditional CDF is just the empirical
    // distribution of the responses
    std::vector<PartyRow> rows;
    for (int i = 0; i < 50; ++i) {
        PartyRow r = row(0.5 + 1e-5 * i, 0.5, (i + 0.5) / 50.0, 10);
        rows.push_back(r);
    }
    SeatsVotesOptions opt = fast_options();
    opt.k0 = 5;
    opt.space.h0_grid = {50.0};  // wide: every row weighs in equally
    opt.space.k_grid = {8};
    SeatsVotesModel m = train_seats_votes(rows, opt);

    PartyRow median = row(0.5, 0.5, 0.505, 10);
    CHECK(party_p_value(m, median) == doctest::Approx(0.5).epsilon(0.05));
    PartyRow low = row(0.5, 0.5, 0.013, 10);
    CHECK(party_p_value(m, low) < 0.05);
    PartyRow high = row(0.5, 0.5, 0.987, 10);
    CHECK(party_p_value(m, high) < 0.05);
    // symmetric tails match
    CHECK(party_p_value(m, low) == doctest::Approx(party_p_value(m, high)).epsilon(0.02));
}

TEST_CASE("p-value rises then falls as the seat share sweeps the support") {
    auto rows = synthetic_parties(400, 5, 10, 30);
    SeatsVotesOptions opt = fast_options();
    opt.k0 = 10;
    SeatsVotesModel m = train_seats_votes(rows, opt);
    PartyRow probe = row(0.5, 0.46, 0.0, 15);
    double prev = -1.0;
    bool falling = false;
    for (int i = 0; i <= 20; ++i) {
        probe.s = i / 20.0;
        double p = party_p_value(m, probe);
        if (falling) {
            CHECK(p <= prev + 1e-9);
        } else if (p < prev - 1e-9) {
            falling = true;
        }
        prev = p;
    }
    CHECK(falling);  // the peak is interior
}

TEST_CASE("election aggregation: weighted geometric mean") {
    std::vector<double> one{0.05}, w1{1.0};
    CHECK(election_p_value(one, w1) == doctest::Approx(0.05).epsilon(1e-12));
    std::vector<double> same{0.2, 0.2, 0.2}, w3{0.3, 0.4, 0.3};
    CHECK(election_p_value(same, w3) == doctest::Approx(0.2).epsilon(1e-12));
    std::vector<double> two{0.04, 0.25}, w2{0.5, 0.5};
    CHECK(election_p_value(two, w2) == doctest::Approx(0.1).epsilon(1e-12));

    // aggregation bounds and scale equivariance
    Rng rng(9);
    for (int rep = 0; rep < 100; ++rep) {
        std::size_t n = 2 + rng.uniform_int(5);
        std::vector<double> p(n), w(n);
        double total = 0;
        for (auto& x : w) total += (x = rng.uniform(0.1, 1.0));
        for (auto& x : w) x /= total;
        for (auto& x : p) x = rng.uniform(0.01, 0.5);
        double pi = election_p_value(p, w);
        CHECK(pi >= *std::min_element(p.begin(), p.end()) - 1e-12);
        CHECK(pi <= *std::max_element(p.begin(), p.end()) + 1e-12);
        double lambda = rng.uniform(0.5, 1.9);
        std::vector<double> scaled = p;
        for (auto& x : scaled) x *= lambda;
        CHECK(election_p_value(scaled, w) == doctest::Approx(lambda * pi).epsilon(1e-9));
    }

    std::vector<double> bad_w{0.5, 0.4};
    CHECK_THROWS_AS(election_p_value(two, bad_w), DomainError);
}

TEST_CASE("null density formula") {
    CHECK(null_density(0.25, 1) == doctest::Approx(2.0).epsilon(1e-12));
    CHECK(null_density(std::exp(-1.0), 2) == doctest::Approx(std::exp(1.0)).epsilon(1e-12));
    CHECK_THROWS_AS(null_density(0.0, 1), DomainError);
    CHECK_THROWS_AS(null_density(1.0, 1), DomainError);
    CHECK_THROWS_AS(null_density(0.5, 0), DomainError);

    // closed-form tail integral for n = 1: int_a^1 f = -log(a)/2,
    // cross-checked by trapezoid quadrature in the test itself
    double a = 0.2;
    double quad = 0.0;
    int steps = 200000;
    for (int i = 0; i < steps; ++i) {
        double x0 = a + (1.0 - a) * i / steps;
        double x1 = a + (1.0 - a) * (i + 1.0) / steps;
        quad += 0.5 * (null_density(std::min(x0, 1.0 - 1e-12), 1) + null_density(std::min(x1, 1.0 - 1e-12), 1)) *
                (x1 - x0);
    }
    CHECK(quad == doctest::Approx(-std::log(a) / 2.0).epsilon(1e-4));
}

TEST_CASE("null monte carlo oracle") {
    SUBCASE("single party: median of Uniform(0, 1/2) is about 1/4") {
        std::vector<double> w{1.0};
        auto cdf = null_mc_oracle(w, 20000, 77);
        CHECK(cdf[cdf.size() / 2] == doctest::Approx(0.25).epsilon(0.04));
        CHECK(std::is_sorted(cdf.begin(), cdf.end()));
    }
    SUBCASE("zero-weight party drops out") {
        std::vector<double> w1{1.0}, w2{1.0, 0.0};
        auto a = null_mc_oracle(w1, 20000, 5);
        auto b = null_mc_oracle(w2, 20000, 6);
        for (double q : {0.1, 0.25, 0.5, 0.75, 0.9}) {
            std::size_t i = static_cast<std::size_t>(q * (a.size() - 1));
            CHECK(a[i] == doctest::Approx(b[i]).epsilon(0.05));
        }
    }
    SUBCASE("two equal weights match a quadrature-derived median") {
        // P(sqrt(XY) <= z) with X, Y ~ U(0, 1/2): w (1 - log w) = 1/2 for
        // w = 4 z^2; solved here by bisection as an independent oracle
        double lo = 0.05, hi = 0.95;
        for (int i = 0; i < 200; ++i) {
            double mid = 0.5 * (lo + hi);
            double val = mid * (1.0 - std::log(mid));
            (val < 0.5 ? lo : hi) = mid;
        }
        double median_expected = 0.5 * std::sqrt(0.5 * (lo + hi));
        std::vector<double> w{0.5, 0.5};
        auto cdf = null_mc_oracle(w, 40000, 13);
        CHECK(cdf[cdf.size() / 2] == doctest::Approx(median_expected).epsilon(0.02));
    }
    SUBCASE("determinism") {
        std::vector<double> w{0.6, 0.4};
        auto a = null_mc_oracle(w, 10000, 3);
        auto b = null_mc_oracle(w, 10000, 3);
        CHECK(a == b);
    }
}

TEST_CASE("scoring a dataset produces ordered, flagged output") {
    // two tiny elections run through the full scoring path with a model
    // trained on synthetic parties
    auto rows = synthetic_parties(300, 21, 2, 6);
    SeatsVotesOptions opt = fast_options();
    opt.k0 = 2;
    SeatsVotesModel model = train_seats_votes(rows, opt);
    ThresholdModel thresholds;

    std::vector<Election> es;
    es.push_back(make_election("e1", {{"d1", "a", 60}, {"d1", "b", 40}, {"d2", "a", 45}, {"d2", "b", 55}}));
    es.push_back(make_election("e2", {{"d1", "a", 70}, {"d1", "b", 30}, {"d2", "a", 65}, {"d2", "b", 35}}));

    auto [scores, summary] = score_dataset(model, thresholds, es, 0.05);
    REQUIRE(scores.size() == 2);
    CHECK(scores[0].election_id == "e1");
    CHECK(summary.defined);
    CHECK(summary.elections == 2);
    for (const auto& es_ : scores) {
        CHECK(es_.pi > 0.0);
        CHECK(es_.pi <= 0.5 + 1e-12);
        for (const auto& ps : es_.parties) {
            CHECK(ps.p_value >= 1e-6);
            CHECK(ps.p_value <= 0.5);
        }
    }

    auto [scores_all, summary_all] = score_dataset(model, thresholds, es, 1.0);
    CHECK(summary_all.frac_flagged == 1.0);
    (void)scores_all;

    std::vector<Election> empty;
    auto [s_empty, sum_empty] = score_dataset(model, thresholds, empty, 0.05);
    CHECK(s_empty.empty());
    CHECK_FALSE(sum_empty.defined);
}

TEST_CASE("seats-votes model survives a JSON round trip") {
    auto rows = synthetic_parties(200, 77, 4, 12);
    SeatsVotesOptions opt = fast_options();
    opt.k0 = 6;
    SeatsVotesModel model = train_seats_votes(rows, opt);
    nlohmann::json j = seats_votes_to_json(model);
    SeatsVotesModel loaded = seats_votes_from_json(nlohmann::json::parse(j.dump()));
    CHECK(loaded.k0 == model.k0);
    REQUIRE(loaded.strata.size() == model.strata.size());
    Rng rng(5);
    for (int rep = 0; rep < 50; ++rep) {
        PartyRow probe = row(rng.uniform(0.2, 0.8), rng.uniform(0.42, 0.5), rng.uniform(), 4 + (int)rng.uniform_int(9));
        CHECK(party_p_value(loaded, probe) == party_p_value(model, probe));  // bitwise
    }
}
