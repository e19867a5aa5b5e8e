#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cde/scoring.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <random>

using namespace cde;
using namespace cde::testing;

namespace {

// Exhaustive KS oracle: evaluates |F_m - F| on both sides of every sample point
// by direct counting, without relying on the sorted order-statistic formula.
double ks_bruteforce(const std::vector<double>& u) {
    const auto m = static_cast<double>(u.size());
    double best = 0.0;
    for (double t : u) {
        double at_or_below = 0.0;
        double below = 0.0;
        for (double v : u) {
            at_or_below += v <= t ? 1.0 : 0.0;
            below += v < t ? 1.0 : 0.0;
        }
        best = std::max({best, std::abs(at_or_below / m - t), std::abs(below / m - t)});
    }
    return best;
}

}  // namespace

TEST_CASE("cde_loss worked examples") {
    const EvalGrid unit(0.0, 1.0);
    const GridDensity uni{unit, std::vector<double>(200, 1.0)};
    const std::vector<GridDensity> ds(3, uni);
    CHECK(cde_loss(ds, std::vector<double>{0.1, 0.5, 0.9}) == doctest::Approx(-1.0).epsilon(1e-12));

    const EvalGrid two(0.0, 2.0);
    const GridDensity half{two, std::vector<double>(200, 0.5)};
    const std::vector<GridDensity> d2(2, half);
    CHECK(cde_loss(d2, std::vector<double>{0.5, 1.0}) == doctest::Approx(-0.5).epsilon(1e-12));

    CHECK_THROWS_AS(cde_loss(d2, std::vector<double>{0.5}), std::invalid_argument);
    CHECK_THROWS_AS(cde_loss(std::vector<GridDensity>{}, std::vector<double>{}), std::invalid_argument);
}

TEST_CASE("cde_loss of the true standard normal") {
    const auto normal = normal_on_grid(EvalGrid(-5.25, 5.25));
    std::mt19937_64 rng(42);
    std::normal_distribution<double> z;
    const std::size_t m = 20000;
    std::vector<double> y(m);
    for (double& v : y) v = z(rng);
    const std::vector<GridDensity> ds(m, normal);
    const double expected = -1.0 / (2.0 * std::sqrt(std::numbers::pi));
    CHECK(std::abs(cde_loss(ds, y) - expected) < 0.01);

    // Order of test points does not matter.
    std::vector<double> rev(y.rbegin(), y.rend());
    CHECK(cde_loss(ds, rev) == doctest::Approx(cde_loss(ds, y)).epsilon(1e-12));
}

TEST_CASE("log_likelihood") {
    const GridDensity uni{EvalGrid(0.0, 1.0), std::vector<double>(200, 1.0)};
    const std::vector<GridDensity> d1(2, uni);
    auto ll = log_likelihood(d1, std::vector<double>{0.2, 0.7});
    CHECK(ll.mean == doctest::Approx(0.0));
    CHECK(ll.clamp_fraction == 0.0);

    const GridDensity half{EvalGrid(0.0, 2.0), std::vector<double>(200, 0.5)};
    const std::vector<GridDensity> d2(2, half);
    CHECK(log_likelihood(d2, std::vector<double>{0.2, 1.7}).mean == doctest::Approx(std::log(0.5)));

    ll = log_likelihood(d2, std::vector<double>{5.0, 1.0});
    CHECK(ll.mean == doctest::Approx(0.5 * (std::log(kLogLikFloor) + std::log(0.5))));
    CHECK(ll.clamp_fraction == doctest::Approx(0.5));
    CHECK(std::isfinite(ll.mean));
}

TEST_CASE("crps worked examples") {
    const EvalGrid g(-1.0, 1.0);
    CdfCurve step{g, std::vector<double>(200)};
    const double y = g.at(120);
    for (std::size_t i = 0; i < 200; ++i) step.values[i] = g.at(i) >= y ? 1.0 : 0.0;
    CHECK(crps(step, y) == 0.0);
    CHECK(crps(step, g.at(60)) > 0.0);

    const EvalGrid unit(0.0, 1.0);
    const auto uc = density_to_cdf(GridDensity{unit, std::vector<double>(200, 1.0)});
    CHECK(crps(uc, 0.0) == doctest::Approx(1.0 / 3.0).epsilon(1e-4));

    const auto nc = density_to_cdf(normal_on_grid(EvalGrid(-6.0, 6.0)));
    const double closed = 2.0 * normal_pdf(0.0) - 1.0 / std::sqrt(std::numbers::pi);
    CHECK(closed == doctest::Approx(0.2337).epsilon(1e-3));
    CHECK(crps(nc, 0.0) == doctest::Approx(closed).epsilon(1e-3));

    // Monte Carlo cross-check of the closed form: E|X - y| - E|X - X'| / 2.
    std::mt19937_64 rng(5);
    std::normal_distribution<double> z;
    double a = 0.0;
    double b = 0.0;
    const int draws = 400000;
    for (int i = 0; i < draws; ++i) {
        const double x1 = z(rng);
        const double x2 = z(rng);
        a += std::abs(x1);
        b += std::abs(x1 - x2);
    }
    CHECK((a - 0.5 * b) / draws == doctest::Approx(closed).epsilon(0.01));

    CHECK_THROWS_AS(crps(nc, NAN), std::invalid_argument);
}

TEST_CASE("crps is non-negative for random forecasts") {
    std::mt19937_64 rng(9);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const EvalGrid g(-2.0, 2.0);
    for (int trial = 0; trial < 30; ++trial) {
        GridDensity gd{g, std::vector<double>(200)};
        for (double& v : gd.values) v = u(rng);
        const auto cdf = density_to_cdf(normalize_density(gd));
        CHECK(crps(cdf, 4.0 * u(rng) - 2.0) > 0.0);
    }
}

TEST_CASE("quantile records: direct CDF and density detour agree on CRPS") {
    const auto lv = levels_199();
    const EvalGrid grid(-4.5, 6.5);
    for (double sigma : {0.5, 1.0, 1.7}) {
        std::vector<double> vals;
        for (double a : lv) vals.push_back(normal_quantile(a, 1.0, sigma));
        const PredictionRecord rec{QuantileFunction{lv, vals}, std::nullopt};
        const auto detour = density_to_cdf(quantiles_to_density(std::get<QuantileFunction>(rec.payload), grid));
        for (double y : {-1.0, 0.3, 1.0, 2.2}) {
            CHECK(std::abs(crps(rec, y, grid) - crps(detour, y)) < 1e-3);
        }
    }
}

TEST_CASE("pit values") {
    const EvalGrid unit(0.0, 1.0);
    const auto uc = density_to_cdf(GridDensity{unit, std::vector<double>(200, 1.0)});
    const std::vector<CdfCurve> cdfs(3, uc);
    const auto p = pit_values(cdfs, std::vector<double>{0.3, -1.0, 2.0});
    CHECK(p.values[0] == doctest::Approx(0.3).epsilon(1e-3));
    CHECK(p.values[1] == 0.0);
    CHECK(p.values[2] == 1.0);
    CHECK_THROWS_AS(pit_values(cdfs, std::vector<double>{0.1}), std::invalid_argument);
}

TEST_CASE("pit of the true model is uniform") {
    const auto nc = density_to_cdf(normal_on_grid(EvalGrid(-6.0, 6.0)));
    std::mt19937_64 rng(17);
    std::normal_distribution<double> z;
    const std::size_t m = 5000;
    std::vector<double> y(m);
    for (double& v : y) v = z(rng);
    const std::vector<CdfCurve> cdfs(m, nc);
    const double d = ks_uniform(pit_values(cdfs, y));
    CHECK(ks_uniform_pvalue(d, m) > 0.01);
    const double cov = coverage90(cdfs, y);
    CHECK(cov >= 0.88);
    CHECK(cov <= 0.92);
}

TEST_CASE("ks_uniform worked examples") {
    CHECK(ks_uniform({{0.05, 0.25, 0.45, 0.65, 0.85}}) == doctest::Approx(0.15));
    CHECK(ks_uniform({{0.5}}) == doctest::Approx(0.5));
    for (std::size_t m : {1u, 4u, 10u, 100u}) {
        PitSample p;
        for (std::size_t i = 1; i <= m; ++i) p.values.push_back((i - 0.5) / static_cast<double>(m));
        CHECK(ks_uniform(p) == doctest::Approx(0.5 / static_cast<double>(m)));
    }
    CHECK_THROWS_AS(ks_uniform({{}}), std::invalid_argument);
    CHECK_THROWS_AS(ks_uniform({{0.2, 1.2}}), std::invalid_argument);
}

TEST_CASE("ks_uniform matches the exhaustive oracle for small samples") {
    std::mt19937_64 rng(23);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    for (int trial = 0; trial < 300; ++trial) {
        const std::size_t m = 1 + static_cast<std::size_t>(trial % 12);
        PitSample p;
        for (std::size_t i = 0; i < m; ++i) {
            // Round some draws to create ties.
            double v = u(rng);
            if (trial % 3 == 0) v = std::round(v * 4.0) / 4.0;
            p.values.push_back(v);
        }
        CHECK(ks_uniform(p) == doctest::Approx(ks_bruteforce(p.values)).epsilon(1e-12));
    }
}

TEST_CASE("ks p-value helper") {
    CHECK(ks_uniform_pvalue(0.0, 100) == 1.0);
    CHECK(ks_uniform_pvalue(0.5, 1000) < 1e-10);
    // Critical value for alpha = 0.01 is about 1.628 / sqrt(m).
    CHECK(ks_uniform_pvalue(1.628 / std::sqrt(5000.0), 5000) == doctest::Approx(0.01).epsilon(0.05));
}

TEST_CASE("coverage90") {
    const EvalGrid unit(0.0, 1.0);
    const auto uc = density_to_cdf(GridDensity{unit, std::vector<double>(200, 1.0)});
    std::mt19937_64 rng(31);
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const std::size_t m = 20000;
    std::vector<double> y(m);
    for (double& v : y) v = u(rng);
    const std::vector<CdfCurve> cdfs(m, uc);
    CHECK(coverage90(cdfs, y) == doctest::Approx(0.9).epsilon(0.01));

    // A point-mass-like forecast far from every outcome.
    const EvalGrid far(100.0, 101.0);
    const auto spike = density_to_cdf(normal_on_grid(far, 100.5, 0.01));
    const std::vector<CdfCurve> sc(4, spike);
    CHECK(coverage90(sc, std::vector<double>{0.0, 1.0, 2.0, 3.0}) == 0.0);
}

TEST_CASE("score_prediction_file") {
    // y | x ~ N(x, (0.5 + x)^2), x ~ U(0, 1). Oracle CDE loss is
    // E[-1 / (2 sigma(X) sqrt(pi))] = -log(3) / (2 sqrt(pi)).
    const double oracle = -std::log(3.0) / (2.0 * std::sqrt(std::numbers::pi));
    std::mt19937_64 rng(8);
    std::uniform_real_distribution<double> ux(0.0, 1.0);
    std::normal_distribution<double> z;
    const std::size_t m = 4000;
    std::vector<double> xs(m);
    std::vector<double> y(m);
    for (std::size_t i = 0; i < m; ++i) {
        xs[i] = ux(rng);
        y[i] = xs[i] + (0.5 + xs[i]) * z(rng);
    }
    const auto grid = make_eval_grid(std::vector<double>{-6.0, 7.0});
    PredictionFile file;
    file.header = {"Oracle", "toy", 0, 100, 0.5, 0.25};
    for (std::size_t i = 0; i < m; ++i) {
        file.records.push_back({normal_on_grid(grid, xs[i], 0.5 + xs[i]), std::nullopt});
    }
    TempDir dir("score");
    const auto path = dir.path() / "pred.jsonl";
    write_predictions(file, path);

    const auto a = score_prediction_file(path, y, grid);
    const auto b = score_prediction_file(path, y, grid);
    CHECK(a == b);
    CHECK(std::abs(a.cde_loss - oracle) < 0.01);
    CHECK(a.fit_time_s == 0.5);
    CHECK(a.predict_time_s == 0.25);
    CHECK(a.pit_ks >= 0.0);
    CHECK(a.pit_ks <= 1.0);

    std::vector<double> y_short(y.begin(), y.begin() + 5);
    file.records.resize(6);
    write_predictions(file, path);
    try {
        score_prediction_file(path, y_short, grid);
        FAIL("expected count mismatch");
    } catch (const std::invalid_argument& e) {
        const std::string msg = e.what();
        CHECK(msg.find('6') != std::string::npos);
        CHECK(msg.find('5') != std::string::npos);
    }
}
