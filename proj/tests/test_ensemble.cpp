#define DOCTEST_CONFIG_IMPLEMENT_WITH_MAIN
#include <doctest.h>

#include "cde/flexcode.hpp"
#include "cde/scoring.hpp"
#include "test_util.hpp"

#include <algorithm>
#include <random>

using namespace cde;

namespace {

Eigen::MatrixXd uniform_matrix(Eigen::Index n, Eigen::Index d, std::mt19937_64& rng, double lo = -1, double hi = 1) {
    std::uniform_real_distribution<double> u(lo, hi);
    Eigen::MatrixXd X(n, d);
    for (Eigen::Index i = 0; i < n; ++i)
        for (Eigen::Index j = 0; j < d; ++j) X(i, j) = u(rng);
    return X;
}

Dataset make_ds(Eigen::MatrixXd X, Eigen::VectorXd y) {
    Dataset ds;
    ds.features = std::move(X);
    ds.response = std::move(y);
    for (Eigen::Index j = 0; j < ds.features.cols(); ++j) ds.feature_names.push_back("x" + std::to_string(j));
    return ds;
}

struct BruteSplit {
    Eigen::Index feature = -1;
    double threshold = 0.0;
    double sse = 0.0;
};

// Every (feature, midpoint) pair, scored by the weighted within-child SSE.
BruteSplit brute_force_root(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const Eigen::VectorXd& w) {
    BruteSplit best;
    double best_sse = std::numeric_limits<double>::infinity();
    auto child_sse = [&](const std::vector<Eigen::Index>& rows) {
        double W = 0;
        Eigen::RowVectorXd S = Eigen::RowVectorXd::Zero(Y.cols());
        for (auto r : rows) {
            W += w(r);
            S += w(r) * Y.row(r);
        }
        double sse = 0;
        for (auto r : rows) sse += w(r) * (Y.row(r) - S / W).squaredNorm();
        return sse;
    };
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        std::vector<double> vals;
        for (Eigen::Index i = 0; i < X.rows(); ++i) vals.push_back(X(i, j));
        std::sort(vals.begin(), vals.end());
        vals.erase(std::unique(vals.begin(), vals.end()), vals.end());
        for (std::size_t k = 0; k + 1 < vals.size(); ++k) {
            const double thr = 0.5 * (vals[k] + vals[k + 1]);
            std::vector<Eigen::Index> l, r;
            for (Eigen::Index i = 0; i < X.rows(); ++i) (X(i, j) <= thr ? l : r).push_back(i);
            const double sse = child_sse(l) + child_sse(r);
            if (sse < best_sse - 1e-12) {
                best_sse = sse;
                best = {j, thr, sse};
            }
        }
    }
    return best;
}

double pinball_loss(const std::vector<double>& y, double q, double tau) {
    double s = 0;
    for (double v : y) s += v >= q ? tau * (v - q) : (1 - tau) * (q - v);
    return s;
}

}  // namespace

TEST_CASE("tree: constant targets and depth 0 give one leaf") {
    std::mt19937_64 rng(1);
    const auto X = uniform_matrix(50, 3, rng);
    const Eigen::MatrixXd c = Eigen::MatrixXd::Constant(50, 1, 4.25);
    const auto t = fit_regression_tree(X, c, TreeOptions{}, 1);
    CHECK(t.nodes.size() == 1);
    CHECK(t.predict_scalar(X.row(3)) == 4.25);

    Eigen::MatrixXd y = uniform_matrix(50, 1, rng);
    const auto stump = fit_regression_tree(X, y, TreeOptions{0, 1.0, 1.0}, 1);
    CHECK(stump.nodes.size() == 1);
    CHECK(stump.predict_scalar(X.row(0)) == doctest::Approx(y.mean()).epsilon(1e-14));
}

TEST_CASE("tree: step function is found at depth 1") {
    std::mt19937_64 rng(2);
    const auto X = uniform_matrix(200, 3, rng);
    Eigen::MatrixXd y(200, 1);
    double below = -1e9, above = 1e9;
    for (Eigen::Index i = 0; i < 200; ++i) {
        y(i, 0) = X(i, 0) > 0 ? 1.0 : 0.0;
        if (X(i, 0) <= 0) below = std::max(below, X(i, 0));
        else above = std::min(above, X(i, 0));
    }
    const auto t = fit_regression_tree(X, y, TreeOptions{1, 1.0, 1.0}, 3);
    REQUIRE(t.nodes.size() == 3);
    CHECK(t.nodes[0].feature == 0);
    CHECK(t.nodes[0].threshold == doctest::Approx(0.5 * (below + above)));
    CHECK(std::abs(t.nodes[0].threshold) < 0.05);
    CHECK(t.values(t.nodes[0].left, 0) == 0.0);
    CHECK(t.values(t.nodes[0].right, 0) == 1.0);
}

TEST_CASE("tree: root split equals the exhaustive weighted multi-output scan") {
    std::mt19937_64 rng(5);
    std::uniform_int_distribution<int> cnt(1, 3);
    for (int trial = 0; trial < 25; ++trial) {
        const auto X = uniform_matrix(40, 4, rng);
        const auto Y = uniform_matrix(40, 3, rng);
        Eigen::VectorXd w(40);
        for (int i = 0; i < 40; ++i) w(i) = cnt(rng);
        const SortedColumns cols(X);
        TreeFitExtras extras;
        extras.weights = &w;
        const auto t = fit_regression_tree(cols, Y, TreeOptions{1, 1.0, 1.0}, 9, extras);
        const auto oracle = brute_force_root(X, Y, w);
        REQUIRE(t.nodes.size() == 3);
        CHECK(t.nodes[0].feature == oracle.feature);
        CHECK(t.nodes[0].threshold == doctest::Approx(oracle.threshold).epsilon(1e-12));
    }
}

TEST_CASE("tree: ties prefer the lower feature index") {
    std::mt19937_64 rng(6);
    Eigen::MatrixXd X = uniform_matrix(60, 3, rng);
    X.col(2) = X.col(0);
    Eigen::MatrixXd y(60, 1);
    for (int i = 0; i < 60; ++i) y(i, 0) = X(i, 0) > 0.2 ? 3.0 : -1.0;
    const auto t = fit_regression_tree(X, y, TreeOptions{1, 1.0, 1.0}, 1);
    CHECK(t.nodes[0].feature == 0);
}

TEST_CASE("tree: min_leaf and depth limits hold") {
    std::mt19937_64 rng(7);
    const auto X = uniform_matrix(300, 2, rng);
    const auto y = uniform_matrix(300, 1, rng);
    std::vector<int> leaf;
    const SortedColumns cols(X);
    TreeFitExtras extras;
    extras.leaf_of_row = &leaf;
    const auto t = fit_regression_tree(cols, y, TreeOptions{5, 12.0, 1.0}, 1, extras);
    CHECK(t.depth() <= 5);
    std::vector<int> count(t.nodes.size(), 0);
    for (int l : leaf) {
        REQUIRE(l >= 0);
        CHECK(t.nodes[static_cast<std::size_t>(l)].feature == -1);
        ++count[static_cast<std::size_t>(l)];
    }
    for (std::size_t k = 0; k < t.nodes.size(); ++k) {
        if (t.nodes[k].feature < 0) CHECK(count[k] >= 12);
    }
}

TEST_CASE("forest: constant, determinism and beats the variance baseline") {
    std::mt19937_64 rng(8);
    const auto X = uniform_matrix(2000, 5, rng);
    const Eigen::MatrixXd c = Eigen::MatrixXd::Constant(2000, 1, -2.5);
    const auto fc = fit_forest(X, c, 3, ForestOptions{10, 8, 1.0, 1.0 / 3.0});
    CHECK(fc.predict(X.row(7))(0) == -2.5);

    std::normal_distribution<double> z;
    Eigen::MatrixXd y(2000, 1);
    for (int i = 0; i < 2000; ++i) y(i, 0) = X.row(i).dot(Eigen::Vector<double, 5>(1, -2, 0.5, 0, 1)) + 0.3 * z(rng);
    const auto f1 = fit_forest(X, y, 42);
    const auto f2 = fit_forest(X, y, 42);
    const auto Xt = uniform_matrix(500, 5, rng);
    double mse = 0, var = 0, ybar = 0;
    Eigen::VectorXd yt(500);
    for (int i = 0; i < 500; ++i) {
        yt(i) = Xt.row(i).dot(Eigen::Vector<double, 5>(1, -2, 0.5, 0, 1)) + 0.3 * z(rng);
        ybar += yt(i) / 500;
    }
    for (int i = 0; i < 500; ++i) {
        const double p = f1.predict(Xt.row(i))(0);
        CHECK(p == f2.predict(Xt.row(i))(0));
        mse += (p - yt(i)) * (p - yt(i)) / 500;
        var += (yt(i) - ybar) * (yt(i) - ybar) / 500;
    }
    CHECK(f1.trees.size() == 100);
    CHECK(mse < var);
    const auto f3 = fit_forest(X, y, 43);
    CHECK(f3.predict(Xt.row(0))(0) != f1.predict(Xt.row(0))(0));
}

TEST_CASE("gbt: pinball init is the lower empirical quantile") {
    Eigen::MatrixXd X(5, 1);
    X << 1, 2, 3, 4, 5;
    Eigen::VectorXd y(5);
    y << 1, 2, 3, 4, 5;
    GbtOptions o{GbtLoss::pinball, 0.5, 1, 0, 0.1, 1.0};
    CHECK(fit_gbt(X, y, o, 0).init == 3.0);
    o.tau = 0.9;
    CHECK(fit_gbt(X, y, o, 0).init == 5.0);
    o.tau = 1.0;
    CHECK_THROWS_AS(fit_gbt(X, y, o, 0), std::invalid_argument);
    o.tau = 0.0;
    CHECK_THROWS_AS(fit_gbt(X, y, o, 0), std::invalid_argument);
    o.tau = 0.5;
    o.rounds = 0;
    CHECK_THROWS_AS(fit_gbt(X, y, o, 0), std::invalid_argument);
}

TEST_CASE("gbt: depth-0 single-round pinball model equals the breakpoint oracle") {
    std::mt19937_64 rng(10);
    std::uniform_int_distribution<int> size(1, 200);
    std::uniform_real_distribution<double> level(0.01, 0.99);
    for (int trial = 0; trial < 40; ++trial) {
        const int n = size(rng);
        const auto X = uniform_matrix(n, 2, rng);
        const auto Yn = uniform_matrix(n, 1, rng, -3, 3);
        const Eigen::VectorXd y = Yn.col(0);
        const double tau = trial == 0 ? 0.5 : level(rng);
        std::vector<double> ys(y.data(), y.data() + n);
        // The minimizer set of the pinball loss contains a data point; take the smallest minimizing one.
        double best_q = 0, best = std::numeric_limits<double>::infinity();
        std::vector<double> sorted = ys;
        std::sort(sorted.begin(), sorted.end());
        for (double q : sorted) {
            const double l = pinball_loss(ys, q, tau);
            if (best == std::numeric_limits<double>::infinity() || l < best - 1e-12 * std::max(1.0, std::abs(best))) {
                best = l;
                best_q = q;
            }
        }
        const auto m = fit_gbt(X, y, GbtOptions{GbtLoss::pinball, tau, 1, 0, 0.1, 1.0}, 1);
        CHECK(m.init == best_q);
        CHECK(m.predict(X.row(0)) == best_q);
    }
}

TEST_CASE("gbt: squared loss with full depth interpolates in one round") {
    // Greedy splits can be unbalanced, so "deep enough" means depth n rather than log2 n.
    std::mt19937_64 rng(11);
    const auto X = uniform_matrix(64, 2, rng);
    const Eigen::VectorXd y = uniform_matrix(64, 1, rng).col(0);
    const auto m = fit_gbt(X, y, GbtOptions{GbtLoss::squared, 0.5, 1, 64, 1.0, 1.0}, 1);
    CHECK(m.init == doctest::Approx(y.mean()));
    CHECK((m.predict_rows(X) - y).lpNorm<Eigen::Infinity>() < 1e-12);
}

TEST_CASE("gbt: pinball boosting tracks conditional quantiles and is deterministic") {
    std::mt19937_64 rng(12);
    const auto X = uniform_matrix(3000, 1, rng);
    std::normal_distribution<double> z;
    Eigen::VectorXd y(3000);
    for (int i = 0; i < 3000; ++i) y(i) = 2.0 * X(i, 0) + z(rng);
    const GbtOptions o{GbtLoss::pinball, 0.9, 100, 3, 0.1, 5.0};
    const auto a = fit_gbt(X, y, o, 5);
    const auto b = fit_gbt(X, y, o, 5);
    Eigen::RowVectorXd x(1);
    for (double v : {-0.6, 0.0, 0.6}) {
        x(0) = v;
        CHECK(a.predict(x) == b.predict(x));
        CHECK(std::abs(a.predict(x) - (2.0 * v + 1.2816)) < 0.3);
    }
}

TEST_CASE("cosine basis is orthonormal on the 200-point trapezoid rule") {
    const EvalGrid g(0.0, 1.0);
    double worst = 0.0;
    for (int i = 0; i < 30; ++i) {
        for (int j = 0; j <= i; ++j) {
            std::vector<double> v(g.size());
            for (std::size_t k = 0; k < g.size(); ++k) v[k] = CosineBasis::phi(i, g.at(k)) * CosineBasis::phi(j, g.at(k));
            worst = std::max(worst, std::abs(trapezoid(g, v) - (i == j ? 1.0 : 0.0)));
        }
    }
    CHECK(worst < 1e-3);
}

TEST_CASE("flexcode term budget") {
    CHECK(flexcode_max_terms(100) == 15);
    CHECK(flexcode_max_terms(400) == 20);
    CHECK(flexcode_max_terms(5000) == 30);
    CHECK(flexcode_max_terms(20) == 15);
}

TEST_CASE("flexcode density: uniform coefficient vector and sharpening") {
    const CosineBasis basis{2.0, 6.0};
    const EvalGrid grid(1.8, 6.2);
    Eigen::VectorXd c = Eigen::VectorXd::Zero(5);
    c(0) = 1.0;
    const auto gd = flexcode_density(basis, c, 1.0, grid);
    CHECK(gd.integral() == doctest::Approx(1.0).epsilon(1e-9));
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid.at(i);
        if (t < 2.0 || t > 6.0) CHECK(gd.values[i] == 0.0);
        else CHECK(gd.values[i] == doctest::Approx(0.25).epsilon(0.02));
    }

    // Bimodal coefficient vector: project a two-bump density on the basis.
    const EvalGrid zg(0.0, 1.0);
    Eigen::VectorXd b = Eigen::VectorXd::Zero(25);
    for (int k = 0; k < 25; ++k) {
        std::vector<double> v(zg.size());
        for (std::size_t i = 0; i < zg.size(); ++i) {
            const double z = zg.at(i);
            v[i] = (0.5 * testing::normal_pdf(z, 0.3, 0.06) + 0.5 * testing::normal_pdf(z, 0.7, 0.06)) * CosineBasis::phi(k, z);
        }
        b(k) = trapezoid(zg, v);
    }
    const auto f1 = flexcode_density(basis, b, 1.0, grid);
    const auto f2 = flexcode_density(basis, b, 2.0, grid);
    CHECK(f2.integral() == doctest::Approx(1.0).epsilon(1e-9));
    const auto argmax = [](const GridDensity& g) {
        return std::max_element(g.values.begin(), g.values.end()) - g.values.begin();
    };
    CHECK(argmax(f1) == argmax(f2));
    const auto valley = static_cast<std::size_t>(std::lround((4.0 - grid.lo()) / grid.step()));
    const auto mode = static_cast<std::size_t>(argmax(f1));
    CHECK(f2.values[mode] / f2.values[valley] > f1.values[mode] / f1.values[valley]);
    CHECK(f2.values[mode] > f1.values[mode]);
}

TEST_CASE("flexcode: response independent of x gives a near-uniform fit") {
    std::mt19937_64 rng(13);
    const auto X = uniform_matrix(600, 2, rng);
    const Eigen::VectorXd y = uniform_matrix(600, 1, rng, 0, 1).col(0);
    const auto fit = fit_flexcode(make_ds(X, y), FlexBackend::forest, 1);
    CHECK(fit.max_terms == 24);
    CHECK(fit.terms <= 5);
    const auto c = fit.coefficients(X.row(0));
    CHECK(c(0) == doctest::Approx(1.0).epsilon(1e-12));
    for (int k = 1; k < fit.terms; ++k) CHECK(std::abs(c(k)) < 0.3);
    const auto grid = make_eval_grid(std::span<const double>(y.data(), 600));
    for (int i = 0; i < 5; ++i) {
        const auto gd = flexcode_predict(fit, X.row(i), grid);
        CHECK(gd.integral() == doctest::Approx(1.0).epsilon(1e-6));
        CHECK(*std::min_element(gd.values.begin(), gd.values.end()) >= 0.0);
    }
    CHECK_THROWS_AS(flexcode_predict(fit, Eigen::RowVectorXd::Zero(3), grid), std::invalid_argument);
    CHECK_THROWS_AS(fit_flexcode(make_ds(X.topRows(19), y.head(19)), FlexBackend::forest, 1), std::invalid_argument);
}

TEST_CASE("flexzboost: alpha grid and CV never loses to the unsharpened fit") {
    const auto alphas = flexzboost_alphas();
    REQUIRE(alphas.size() == 16);
    CHECK(alphas.front() == 0.5);
    CHECK(alphas.back() == 2.0);

    std::mt19937_64 rng(14);
    std::normal_distribution<double> z;
    const auto X = uniform_matrix(400, 2, rng);
    Eigen::VectorXd y(400);
    for (int i = 0; i < 400; ++i) y(i) = X(i, 0) + 0.3 * z(rng);
    const auto fit = fit_flexzboost(make_ds(X, y), 3, {1.0});
    CHECK(fit.alphas.size() == 17);
    CHECK(fit.alpha >= 0.5);
    CHECK(fit.alpha <= 2.0);
    const double at_one = fit.cv_loss_by_alpha.back();
    CHECK(at_one == doctest::Approx(fit.cv_loss_by_terms[static_cast<std::size_t>(fit.terms - 1)]).epsilon(1e-12));
    CHECK(*std::min_element(fit.cv_loss_by_alpha.begin(), fit.cv_loss_by_alpha.end()) <= at_one);
    const auto grid = make_eval_grid(std::span<const double>(y.data(), 400));
    const auto gd = flexcode_predict(fit, X.row(0), grid);
    CHECK(gd.integral() == doctest::Approx(1.0).epsilon(1e-6));
}

TEST_CASE("quantile tree: levels, permutation invariance, degenerate constant") {
    const auto levels = quantile_tree_levels();
    REQUIRE(levels.size() == 49);
    CHECK(levels.front() == doctest::Approx(0.02).epsilon(1e-15));
    CHECK(levels.back() == doctest::Approx(0.98).epsilon(1e-15));
    for (std::size_t k = 1; k < 49; ++k) CHECK(levels[k] - levels[k - 1] == doctest::Approx(0.02));

    std::mt19937_64 rng(15);
    std::normal_distribution<double> z;
    const auto X = uniform_matrix(300, 1, rng);
    Eigen::VectorXd y(300);
    for (int i = 0; i < 300; ++i) y(i) = 5.0 + z(rng);
    const auto model = fit_quantile_tree(make_ds(X, y), QuantileTreeParams{50, 2, 0.1, 5.0}, 2);
    const auto q = quantile_tree_quantiles(model, X.row(0));
    CHECK(std::is_sorted(q.values.begin(), q.values.end()));
    CHECK(std::abs(q.values[24] - y.mean()) < 0.35);

    auto shuffled = model;
    std::vector<std::size_t> perm(49);
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    for (std::size_t k = 0; k < 49; ++k) shuffled.models[k] = model.models[perm[k]];
    const auto grid = make_eval_grid(std::span<const double>(y.data(), 300));
    const auto a = quantile_tree_predict(model, X.row(1), grid);
    const auto b = quantile_tree_predict(shuffled, X.row(1), grid);
    CHECK(a.values == b.values);

    auto flat = model;
    for (auto& m : flat.models) {
        m.trees.clear();
        m.init = 5.0;
    }
    const auto c = quantile_tree_predict(flat, X.row(0), grid);
    CHECK(c.integral() == doctest::Approx(1.0).epsilon(1e-9));
    double mass_near = 0.0;
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (std::abs(grid.at(i) - 5.0) <= 2 * grid.step()) mass_near += c.values[i] * grid.step();
    }
    CHECK(mass_near > 0.9);
    CHECK_THROWS_AS(fit_quantile_tree(make_ds(X.topRows(49), y.head(49)), {}, 1), std::invalid_argument);
}

TEST_CASE("quantile tree: CRPS on a Gaussian DGP is close to the closed form") {
    std::mt19937_64 rng(16);
    std::normal_distribution<double> z;
    const auto X = uniform_matrix(10000, 1, rng);
    Eigen::VectorXd y(10000);
    for (int i = 0; i < 10000; ++i) y(i) = 2.0 * X(i, 0) + z(rng);
    const auto model = fit_quantile_tree(make_ds(X, y), QuantileTreeParams{100, 3, 0.1, 5.0}, 4);
    const auto grid = make_eval_grid(std::span<const double>(y.data(), 10000));
    const auto Xt = uniform_matrix(100, 1, rng);
    double ours = 0.0, truth = 0.0;
    for (int i = 0; i < 100; ++i) {
        const double mu = 2.0 * Xt(i, 0);
        const double yt = mu + z(rng);
        PredictionRecord rec{quantile_tree_quantiles(model, Xt.row(i)), std::nullopt};
        ours += crps(rec, yt, grid);
        truth += testing::normal_crps(yt, mu, 1.0);
    }
    CHECK(std::abs(ours - truth) / truth < 0.10);
}
