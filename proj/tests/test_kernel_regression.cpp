#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include <cmath>

#include "psephos/kernel_regression.hpp"
#include "psephos/rng.hpp"

using namespace psephos;

namespace {

FeatureMatrix matrix_1d(std::vector<double> xs, std::vector<double> ys) {
    FeatureMatrix m;
    m.rows = xs.size();
    m.dims = 1;
    m.x = std::move(xs);
    m.response = std::move(ys);
    return m;
}

// Plain-loop reference: fixed-bandwidth Nadaraya-Watson with leave-one-out,
// kept deliberately independent of KernelModel.
double naive_loo_rmse_fixed(const FeatureMatrix& m, double h) {
    double sse = 0;
    for (std::size_t j = 0; j < m.rows; ++j) {
        double num = 0, den = 0;
        for (std::size_t l = 0; l < m.rows; ++l) {
            if (l == j) continue;
            double q = 0;
            for (std::size_t d = 0; d < m.dims; ++d) {
                double u = (m.at(l, d) - m.at(j, d)) / h;
                q += u * u;
            }
            double w = std::exp(-0.5 * q);
            num += w * m.response[l];
            den += w;
        }
        double pred = den > 0 ? num / den : 0.0;
        double r = m.response[j] - pred;
        sse += r * r;
    }
    return std::sqrt(sse / static_cast<double>(m.rows));
}

}  // namespace

TEST_CASE("gaussian kernel values") {
    std::vector<double> u0{0.0};
    CHECK(gaussian_kernel(u0) == doctest::Approx(0.3989422804014327).epsilon(1e-12));
    std::vector<double> u00{0.0, 0.0};
    CHECK(gaussian_kernel(u00) == doctest::Approx(1.0 / (2.0 * 3.14159265358979323846)).epsilon(1e-12));
    std::vector<double> up{0.7, -1.3}, um{-0.7, 1.3};
    CHECK(gaussian_kernel(up) == gaussian_kernel(um));
}

TEST_CASE("bandwidth for pair across schemes") {
    // 1-D data {0, 1, 2, 4}
    FeatureMatrix m = matrix_1d({0, 1, 2, 4}, {0, 0, 0, 0});

    SUBCASE("fixed broadcasts h0") {
        KernelModel model(m, {BandwidthScheme::Fixed, {0.1}, 1});
        auto h = model.bandwidth_for_pair(std::vector<double>{0.5}, 2);
        REQUIRE(h.size() == 1);
        CHECK(h[0] == doctest::Approx(0.1));
    }
    SUBCASE("generalized-nn uses the query's k-th neighbor") {
        KernelModel model(m, {BandwidthScheme::GeneralizedNN, {1.0}, 2});
        // x0 = 0 coincides with a row; its neighbors are 1, 2, 4 and the
        // 2nd nearest is 2
        auto h = model.bandwidth_for_pair(std::vector<double>{0.0}, 3);
        CHECK(h[0] == doctest::Approx(2.0));
    }
    SUBCASE("multivariate uses the k-th neighbor of the row, per dimension") {
        KernelModel model(m, {BandwidthScheme::MultivariateAdaptiveNN, {1.0}, 1});
        // row with value 4: nearest other value is 2, so h = |x0 - 2| = 2 at x0 = 0
        auto h = model.bandwidth_for_pair(std::vector<double>{0.0}, 3);
        CHECK(h[0] == doctest::Approx(2.0));
    }
    SUBCASE("adaptive-nn measures from the query to the row's neighbor") {
        KernelModel model(m, {BandwidthScheme::AdaptiveNN, {1.0}, 1});
        // 1st neighbor of row 4 is 2; distance from x0 = 0 to it is 2
        auto h = model.bandwidth_for_pair(std::vector<double>{0.0}, 3);
        CHECK(h[0] == doctest::Approx(2.0));
    }
}

TEST_CASE("prediction basics") {
    SUBCASE("single row always returns its response") {
        FeatureMatrix m = matrix_1d({0.3}, {7.5});
        KernelModel model(m, {BandwidthScheme::Fixed, {1.0}, 1});
        CHECK(model.expectation(std::vector<double>{0.3}) == 7.5);
        CHECK(model.expectation(std::vector<double>{-100.0}) == 7.5);
    }
    SUBCASE("constant responses are reproduced exactly") {
        FeatureMatrix m = matrix_1d({0, 1, 2, 3}, {4.2, 4.2, 4.2, 4.2});
        KernelModel model(m, {BandwidthScheme::MultivariateAdaptiveNN, {1.0}, 2});
        CHECK(model.expectation(std::vector<double>{1.7}) == doctest::Approx(4.2).epsilon(1e-15));
    }
    SUBCASE("symmetric rows average") {
        FeatureMatrix m = matrix_1d({-1, 1}, {2.0, 6.0});
        KernelModel model(m, {BandwidthScheme::Fixed, {1.0}, 1});
        CHECK(model.expectation(std::vector<double>{0.0}) == doctest::Approx(4.0).epsilon(1e-12));
    }
}

TEST_CASE("conditional cdf") {
    FeatureMatrix m = matrix_1d({-1, 1}, {0.0, 1.0});
    KernelModel model(m, {BandwidthScheme::Fixed, {1.0}, 1});
    std::vector<double> x0{0.0};
    CHECK(model.conditional_cdf(x0, -0.5) == 0.0);
    CHECK(model.conditional_cdf(x0, 1.5) == 1.0);
    CHECK(model.conditional_cdf(x0, 0.0) == doctest::Approx(0.5).epsilon(1e-12));

    // non-decreasing in s, and equal to the expectation of the indicator
    Rng rng(31);
    FeatureMatrix big;
    big.rows = 200;
    big.dims = 2;
    for (std::size_t i = 0; i < big.rows; ++i) {
        big.x.push_back(rng.uniform());
        big.x.push_back(rng.uniform());
        big.response.push_back(rng.uniform());
    }
    KernelModel km(big, {BandwidthScheme::MultivariateAdaptiveNN, {1.0}, 8});
    for (int rep = 0; rep < 20; ++rep) {
        std::vector<double> q{rng.uniform(), rng.uniform()};
        double prev = -1.0;
        for (int i = 0; i <= 10; ++i) {
            double s = i / 10.0;
            double f = km.conditional_cdf(q, s);
            CHECK(f >= prev - 1e-15);
            CHECK(f >= -1e-15);
            CHECK(f <= 1.0 + 1e-15);
            prev = f;

            FeatureMatrix ind = big;
            for (std::size_t r = 0; r < ind.rows; ++r)
                ind.response[r] = big.response[r] <= s ? 1.0 : 0.0;
            KernelModel ind_model(ind, km.bandwidth_spec());
            CHECK(std::fabs(ind_model.expectation(q) - f) <= 1e-15);
        }
    }
}

TEST_CASE("predictions are convex combinations of responses") {
    Rng rng(77);
    for (auto scheme : {BandwidthScheme::Fixed, BandwidthScheme::GeneralizedNN, BandwidthScheme::AdaptiveNN,
                        BandwidthScheme::MultivariateAdaptiveNN}) {
        FeatureMatrix m;
        m.rows = 60;
        m.dims = 2;
        for (std::size_t i = 0; i < m.rows; ++i) {
            m.x.push_back(rng.uniform(-1, 1));
            m.x.push_back(rng.uniform(-1, 1));
            m.response.push_back(rng.uniform(-5, 5));
        }
        double lo = *std::min_element(m.response.begin(), m.response.end());
        double hi = *std::max_element(m.response.begin(), m.response.end());
        KernelModel model(m, {scheme, {0.5}, 4});
        for (int rep = 0; rep < 50; ++rep) {
            std::vector<double> q{rng.uniform(-2, 2), rng.uniform(-2, 2)};
            double p = model.expectation(q);
            CHECK(p >= lo);
            CHECK(p <= hi);
        }
    }
}

TEST_CASE("huge fixed bandwidth recovers the plain mean") {
    Rng rng(13);
    FeatureMatrix m;
    m.rows = 100;
    m.dims = 1;
    double total = 0;
    for (std::size_t i = 0; i < m.rows; ++i) {
        m.x.push_back(rng.uniform());
        m.response.push_back(rng.uniform(0, 3));
        total += m.response.back();
    }
    double mean_resp = total / static_cast<double>(m.rows);
    KernelModel model(m, {BandwidthScheme::Fixed, {1e6}, 1});
    CHECK(model.expectation(std::vector<double>{0.4}) == doctest::Approx(mean_resp).epsilon(1e-6));
}

TEST_CASE("row order does not change predictions") {
    Rng rng(55);
    FeatureMatrix m;
    m.rows = 64;
    m.dims = 2;
    for (std::size_t i = 0; i < m.rows; ++i) {
        m.x.push_back(rng.uniform());
        m.x.push_back(rng.uniform());
        m.response.push_back(rng.uniform());
    }
    FeatureMatrix shuffled;
    shuffled.rows = m.rows;
    shuffled.dims = m.dims;
    std::vector<std::size_t> order(m.rows);
    std::iota(order.begin(), order.end(), std::size_t{0});
    rng.shuffle(order);
    for (std::size_t i : order) {
        shuffled.x.push_back(m.at(i, 0));
        shuffled.x.push_back(m.at(i, 1));
        shuffled.response.push_back(m.response[i]);
    }
    KernelModel a(m, {BandwidthScheme::MultivariateAdaptiveNN, {0.8}, 5});
    KernelModel b(shuffled, {BandwidthScheme::MultivariateAdaptiveNN, {0.8}, 5});
    for (int rep = 0; rep < 30; ++rep) {
        std::vector<double> q{rng.uniform(), rng.uniform()};
        CHECK(a.expectation(q) == b.expectation(q));  // bitwise
    }
}

TEST_CASE("constant dimension is dropped with a warning") {
    FeatureMatrix m;
    m.rows = 12;
    m.dims = 2;
    for (int i = 0; i < 12; ++i) {
        m.x.push_back(static_cast<double>(i));
        m.x.push_back(3.0);  // constant
        m.response.push_back(static_cast<double>(i % 3));
    }
    Warnings w;
    KernelModel model(m, {BandwidthScheme::MultivariateAdaptiveNN, {1.0}, 2}, &w);
    CHECK(model.active_dims() == 1);
    REQUIRE(!w.empty());
    CHECK(w.messages()[0].find("constant") != std::string::npos);
    CHECK(model.expectation(std::vector<double>{5.0, 3.0}) ==
          doctest::Approx(model.expectation(std::vector<double>{5.0, 99.0})));
}

TEST_CASE("underflowing weights fall back to the nearest row") {
    FeatureMatrix m = matrix_1d({0.0, 1.0, 2.0}, {5.0, 6.0, 7.0});
    KernelModel model(m, {BandwidthScheme::Fixed, {1e-9}, 1});
    // far from every row with a microscopic bandwidth: all weights underflow
    CHECK(model.expectation(std::vector<double>{1.4}) == 6.0);
    CHECK(model.underflow_fallbacks() > 0);
}

TEST_CASE("bandwidth selection against a reference grid search") {
    Rng rng(2024);
    FeatureMatrix m;
    m.rows = 220;
    m.dims = 1;
    for (std::size_t i = 0; i < m.rows; ++i) {
        double x = rng.uniform();
        m.x.push_back(x);
        m.response.push_back(x + 0.01 * rng.normal());
    }
    BandwidthSearchSpace space;
    space.h0_grid = {0.01, 0.02, 0.05, 0.1, 0.2, 0.5, 1.0, 2.0};
    space.k_grid = {2};
    auto sel = select_bandwidth(m, BandwidthScheme::Fixed, space, SelectionCriterion::LooSquaredError);

    // independent oracle: 20-point fixed-h grid evaluated with a naive loop
    double best_rmse = 1e300;
    for (int g = 0; g < 20; ++g) {
        double h = 0.005 * std::pow(1.45, g);
        best_rmse = std::min(best_rmse, naive_loo_rmse_fixed(m, h));
    }
    double chosen_rmse = naive_loo_rmse_fixed(m, sel.spec.h0[0]);
    CHECK(chosen_rmse <= 1.1 * best_rmse);
}

TEST_CASE("selection tie-break picks the smallest candidate") {
    // identical predictor rows: every bandwidth gives the same prediction
    FeatureMatrix m;
    m.rows = 12;
    m.dims = 1;
    for (int i = 0; i < 12; ++i) {
        m.x.push_back(1.0);
        m.response.push_back(i % 2 == 0 ? 0.0 : 1.0);
    }
    BandwidthSearchSpace space;
    space.h0_grid = {0.5, 1.0, 2.0};
    space.k_grid = {2, 4};
    auto sel =
        select_bandwidth(m, BandwidthScheme::MultivariateAdaptiveNN, space, SelectionCriterion::LooSquaredError);
    CHECK(sel.spec.k == 2);
    CHECK(sel.spec.h0[0] == 0.5);
}

TEST_CASE("self-dominated smoother is rejected by the corrected criterion") {
    Rng rng(3);
    FeatureMatrix m;
    m.rows = 30;
    m.dims = 1;
    for (std::size_t i = 0; i < m.rows; ++i) {
        m.x.push_back(rng.uniform());
        m.response.push_back(rng.uniform());
    }
    BandwidthSearchSpace tiny;
    tiny.h0_grid = {1e-12};
    tiny.k_grid = {1};
    CHECK_THROWS_AS(select_bandwidth(m, BandwidthScheme::Fixed, tiny, SelectionCriterion::HurvichAicc),
                    ValidationError);

    // with a sane candidate present, the degenerate one is just rejected
    BandwidthSearchSpace mixed;
    mixed.h0_grid = {1e-12, 0.2};
    mixed.k_grid = {1};
    Warnings w;
    auto sel = select_bandwidth(m, BandwidthScheme::Fixed, mixed, SelectionCriterion::HurvichAicc, &w);
    CHECK(sel.spec.h0[0] == doctest::Approx(0.2));
    CHECK(sel.candidates_rejected >= 1);
}

TEST_CASE("empty search space is an error") {
    FeatureMatrix m = matrix_1d({0, 1, 2, 3, 4, 5, 6, 7, 8, 9}, {0, 1, 2, 3, 4, 5, 6, 7, 8, 9});
    BandwidthSearchSpace space;
    space.h0_grid.clear();
    CHECK_THROWS_AS(select_bandwidth(m, BandwidthScheme::Fixed, space, SelectionCriterion::LooSquaredError),
                    DomainError);
}

TEST_CASE("bernoulli conditional cdf tracks the true curve") {
    // moderate-size version of the flagship accuracy check
    Rng rng(909);
    FeatureMatrix m;
    m.rows = 2000;
    m.dims = 1;
    for (std::size_t i = 0; i < m.rows; ++i) {
        double v = rng.uniform();
        m.x.push_back(v);
        m.response.push_back(rng.uniform() < v ? 1.0 : 0.0);
    }
    KernelModel model(m, {BandwidthScheme::GeneralizedNN, {1.0}, 256});
    double worst = 0;
    for (int i = 0; i <= 40; ++i) {
        double v = 0.1 + 0.8 * i / 40.0;
        double est = model.conditional_cdf(std::vector<double>{v}, 0.5);
        worst = std::max(worst, std::fabs(est - (1.0 - v)));
    }
    CHECK(worst <= 0.08);
}

TEST_CASE("bandwidth selection is identical for any worker count") {
    Rng rng(404);
    FeatureMatrix m;
    m.rows = 160;
    m.dims = 2;
    for (std::size_t i = 0; i < m.rows; ++i) {
        m.x.push_back(rng.uniform());
        m.x.push_back(rng.uniform());
        m.response.push_back(rng.uniform());
    }
    BandwidthSearchSpace space;
    space.h0_grid = {0.5, 1.0, 2.0};
    space.k_grid = {4, 8, 16};
    auto one = select_bandwidth(m, BandwidthScheme::MultivariateAdaptiveNN, space,
                                SelectionCriterion::LooSquaredError, nullptr, 1);
    auto four = select_bandwidth(m, BandwidthScheme::MultivariateAdaptiveNN, space,
                                 SelectionCriterion::LooSquaredError, nullptr, 4);
    CHECK(one.spec.k == four.spec.k);
    CHECK(one.spec.h0[0] == four.spec.h0[0]);
    CHECK(one.criterion_value == four.criterion_value);  // bitwise
}

TEST_CASE("row weights behave like duplicated rows") {
    FeatureMatrix weighted;
    weighted.rows = 3;
    weighted.dims = 1;
    weighted.x = {0.0, 1.0, 2.0};
    weighted.response = {1.0, 5.0, 9.0};
    weighted.weight = {2.0, 1.0, 1.0};

    FeatureMatrix duplicated;
    duplicated.rows = 4;
    duplicated.dims = 1;
    duplicated.x = {0.0, 0.0, 1.0, 2.0};
    duplicated.response = {1.0, 1.0, 5.0, 9.0};

    KernelModel a(weighted, {BandwidthScheme::Fixed, {1.0}, 1});
    KernelModel b(duplicated, {BandwidthScheme::Fixed, {1.0}, 1});
    for (double q : {-0.5, 0.3, 1.1, 2.2})
        CHECK(a.expectation(std::vector<double>{q}) ==
              doctest::Approx(b.expectation(std::vector<double>{q})).epsilon(1e-12));
}
