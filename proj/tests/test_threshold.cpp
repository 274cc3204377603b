#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "psephos/bspline.hpp"
#include "psephos/model_io.hpp"
#include "psephos/svm.hpp"
#include "psephos/threshold.hpp"

using namespace psephos;

namespace {

// Districts with a known constant win threshold: candidate wins iff v > t0.
std::vector<TrainingPoint> constant_boundary_points(double t0, std::size_t count, int n, std::uint64_t seed) {
    Rng rng(seed);
    std::vector<TrainingPoint> pts;
    std::vector<double> shares(static_cast<std::size_t>(n));
    while (pts.size() < count) {
        rng.dirichlet(1.0, shares);
        for (int i = 0; i < n && pts.size() < count; ++i) {
            double phi = 1.0 + rng.uniform() * (n - 2.0);
            pts.push_back({shares[i], phi, shares[i] > t0});
        }
    }
    return pts;
}

std::map<int, std::vector<TrainingPoint>> simulate_three_candidate(std::size_t districts, std::uint64_t seed) {
    Rng rng(seed);
    std::map<int, std::vector<TrainingPoint>> by_n;
    std::vector<double> shares(3);
    for (std::size_t d = 0; d < districts; ++d) {
        rng.dirichlet(rng.gamma(2.0) + 0.02, shares);
        double top = std::max({shares[0], shares[1], shares[2]});
        double second = -1;
        for (double s : shares)
            if (s != top && s > second) second = s;
        if (top - second < 1e-9) continue;  // effectively tied, skip
        for (int i = 0; i < 3; ++i) {
            auto p = competitor_profile(shares, static_cast<std::size_t>(i));
            by_n[3].push_back({shares[i], p.phi, shares[i] == top});
        }
    }
    return by_n;
}

}  // namespace

TEST_CASE("bspline basics: partition of unity and interpolation quality") {
    auto knots = CubicBSpline::clamped_knots(0.0, 1.0, 3);
    for (int i = 0; i <= 50; ++i) {
        double x = i / 50.0;
        std::size_t first;
        double b[4];
        CubicBSpline::basis(knots, x, first, b);
        double total = b[0] + b[1] + b[2] + b[3];
        CHECK(total == doctest::Approx(1.0).epsilon(1e-12));
        for (int j = 0; j < 4; ++j) CHECK(b[j] >= -1e-12);
    }

    // least squares reproduces a cubic polynomial exactly
    std::vector<double> xs, ys;
    for (int i = 0; i <= 40; ++i) {
        double x = i / 40.0;
        xs.push_back(x);
        ys.push_back(0.3 + 0.5 * x - 0.7 * x * x + 0.2 * x * x * x);
    }
    CubicBSpline s = fit_bspline(xs, ys, CubicBSpline::clamped_knots(0.0, 1.0, 2));
    for (double x : {0.05, 0.33, 0.71, 0.98})
        CHECK(s(x) == doctest::Approx(0.3 + 0.5 * x - 0.7 * x * x + 0.2 * x * x * x).epsilon(1e-6));
}

TEST_CASE("monotone spline fit is non-increasing and clamped") {
    Rng rng(5);
    std::vector<double> xs, ys;
    for (int i = 0; i <= 60; ++i) {
        double x = 1.0 + 4.0 * i / 60.0;
        xs.push_back(x);
        ys.push_back(0.5 - 0.05 * (x - 1.0) + 0.02 * rng.normal());  // noisy decreasing line
    }
    CubicBSpline s =
        fit_bspline_nonincreasing(xs, ys, CubicBSpline::clamped_knots(1.0, 5.0, 4), 0.2, 0.5);
    double prev = 1e300;
    for (int i = 0; i <= 200; ++i) {
        double x = 1.0 + 4.0 * i / 200.0;
        double v = s(x);
        CHECK(v <= prev + 1e-12);
        CHECK(v >= 0.2 - 1e-12);
        CHECK(v <= 0.5 + 1e-12);
        prev = v;
    }
}

TEST_CASE("svm separates a linearly separable cloud") {
    Rng rng(11);
    std::vector<double> x;
    std::vector<int> y;
    for (int i = 0; i < 400; ++i) {
        double a = rng.uniform(), b = rng.uniform();
        x.push_back(a);
        x.push_back(b);
        y.push_back(a + b > 1.0 ? 1 : -1);
    }
    PolySvm svm;
    svm.train(x, 2, y, {.c = 10.0});
    std::size_t wrong = 0;
    for (int i = 0; i < 400; ++i) {
        double pt[2] = {x[2 * i], x[2 * i + 1]};
        if ((svm.decision(pt) > 0) != (y[i] > 0)) ++wrong;
    }
    CHECK(wrong <= 2);
    CHECK_THROWS_AS([&] {
        std::vector<int> same(400, 1);
        PolySvm s2;
        s2.train(x, 2, same, {});
    }(), ValidationError);
}

TEST_CASE("training point extraction") {
    auto e = make_election("e1", {{"d1", "a", 50}, {"d1", "b", 30}, {"d1", "c", 20}});
    std::vector<Election> es{e};
    auto by_n = extract_training_points(es);
    REQUIRE(by_n.count(3) == 1);
    REQUIRE(by_n[3].size() == 3);
    // winner's competitors are (0.3, 0.2) -> z = (0.6, 0.4), phi = 1/0.52
    const TrainingPoint& w = by_n[3][0];
    CHECK(w.v == doctest::Approx(0.5));
    CHECK(w.phi == doctest::Approx(1.0 / 0.52).epsilon(1e-9));
    CHECK(w.won);
    CHECK_FALSE(by_n[3][1].won);

    auto tied = make_election("e2", {{"d1", "a", 50}, {"d1", "b", 50}});
    std::vector<Election> es2{tied};
    CHECK(extract_training_points(es2).empty());
}

TEST_CASE("constant decision boundary is recovered") {
    auto pts = constant_boundary_points(0.4, 3000, 5, 99);
    BoundaryCurve curve = train_boundary(pts, 5, {});
    for (double phi : {1.2, 2.0, 3.0, 3.8})
        CHECK(curve.spline(phi) == doctest::Approx(0.4).epsilon(0.05));
    CHECK(curve.r_insample <= 0.01);
    CHECK(curve.r_holdout <= 0.02);
}

TEST_CASE("generic pipeline recovers the analytic three-candidate boundary") {
    auto by_n = simulate_three_candidate(3000, 321);
    BoundaryCurve curve = train_boundary(by_n[3], 3, {});
    double worst = 0.0;
    for (int i = 0; i <= 60; ++i) {
        double phi = 1.05 + 0.9 * i / 60.0;
        worst = std::max(worst, std::fabs(curve.spline(phi) - analytic_boundary_n3(phi)));
    }
    CHECK(worst <= 0.025);  // fast smoke; the acceptance suite runs the full-size version
}

TEST_CASE("threshold model dispatch and clamping") {
    ThresholdModel model;
    auto pts = constant_boundary_points(0.4, 2500, 5, 7);
    model.add_curve(std::make_shared<BoundaryCurve>(train_boundary(pts, 5, {})));

    CHECK(model.threshold(2, 1.0) == 0.5);
    CHECK(model.threshold(3, 2.0) == doctest::Approx(1.0 / 3.0));
    CHECK(model.threshold(3, 1.5) == doctest::Approx((4.0 + std::sqrt(3.0)) / 13.0));
    CHECK(model.threshold(5, 2.0) == doctest::Approx(0.4).epsilon(0.08));

    // candidate counts beyond the trained range reuse the widest curve under
    // their own bounds
    double t9 = model.threshold(9, 2.0);
    CHECK(t9 >= 1.0 / 9.0);
    CHECK(t9 <= 0.5);

    Warnings w;
    model.threshold(5, 7.5, &w);  // phi outside [1, 4]
    CHECK(!w.empty());

    // share above the maximal possible threshold always wins
    CHECK(model.classify(0.6, 5, 2.0));
    CHECK_FALSE(model.classify(0.2, 3, 2.0));  // t = 1/3
    CHECK(model.classify(0.45, 3, 1.5));       // t ~ 0.441

    // classification is monotone in v
    for (double phi : {1.1, 1.9, 3.2}) {
        bool reached = false;
        for (int i = 0; i <= 100; ++i) {
            double v = i / 100.0;
            bool c = model.classify(v, 5, phi);
            if (reached) CHECK(c);
            if (c) reached = true;
        }
        CHECK(reached);
    }
}

TEST_CASE("thresholds stay inside [1/n, 1/2] and are non-increasing in phi") {
    auto by_n = simulate_three_candidate(2000, 17);
    BoundaryCurve curve = train_boundary(by_n[3], 3, {});
    double prev = 1.0;
    for (int i = 0; i <= 300; ++i) {
        double phi = 1.0 + i / 300.0;
        double t = clamp(curve.spline(phi), 1.0 / 3.0, 0.5);
        CHECK(t <= prev + 1e-12);
        prev = t;
    }
}

TEST_CASE("undersized groups merge upward") {
    std::map<int, std::vector<TrainingPoint>> by_n;
    by_n[4] = constant_boundary_points(0.42, 60, 4, 1);   // too small alone
    by_n[5] = constant_boundary_points(0.40, 400, 5, 2);  // big enough
    Warnings w;
    ThresholdModel model = train_threshold_model(by_n, {}, &w);
    CHECK(model.curves().count(4) == 1);
    CHECK(model.curves().count(5) == 1);
    CHECK(model.curves().at(4) == model.curves().at(5));  // same merged curve
    CHECK(!w.empty());
}

TEST_CASE("mean effective seat threshold averages district thresholds") {
    ThresholdModel model;  // n = 2, 3 handled in closed form
    // two-candidate district (t = 1/2) and a three-candidate district with
    // equal competitors (t = 1/3): mean = 5/12
    auto e = make_election("e1", {{"d1", "a", 55},
                                  {"d1", "b", 45},
                                  {"d2", "a", 40},
                                  {"d2", "b", 30},
                                  {"d2", "c", 30}});
    const PartyStats* pa = e.find_party("a");
    REQUIRE(pa != nullptr);
    double t = mean_effective_seat_threshold(e, *pa, model);
    CHECK(t == doctest::Approx(5.0 / 12.0).epsilon(1e-9));

    // all districts two-candidate -> exactly 1/2
    auto e2 = make_election("e2", {{"d1", "a", 55}, {"d1", "b", 45}, {"d2", "a", 20}, {"d2", "b", 80}});
    CHECK(mean_effective_seat_threshold(e2, *e2.find_party("a"), model) == doctest::Approx(0.5));
}

TEST_CASE("threshold model survives a JSON round trip") {
    std::map<int, std::vector<TrainingPoint>> by_n;
    by_n[4] = constant_boundary_points(0.42, 400, 4, 3);
    by_n[5] = constant_boundary_points(0.40, 400, 5, 4);
    ThresholdModel model = train_threshold_model(by_n, {});
    nlohmann::json j = threshold_model_to_json(model);
    ThresholdModel loaded = threshold_model_from_json(nlohmann::json::parse(j.dump()));
    for (int n : {4, 5, 9})
        for (int i = 0; i <= 40; ++i) {
            double phi = 1.0 + (n - 2.0) * i / 40.0;
            CHECK(loaded.threshold(n, phi) == model.threshold(n, phi));  // bitwise
        }
}
