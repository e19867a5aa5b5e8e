#include "cde/flexcode.hpp"

#include "cde/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <random>
#include <stdexcept>
#include <string>

namespace cde {

double CosineBasis::phi(int i, double z) {
    return i == 0 ? 1.0 : std::numbers::sqrt2 * std::cos(i * std::numbers::pi * z);
}

Eigen::VectorXd CosineBasis::eval(double z, int count) {
    Eigen::VectorXd out(count);
    for (int i = 0; i < count; ++i) out(i) = phi(i, z);
    return out;
}

int flexcode_max_terms(Eigen::Index n) {
    const auto root = static_cast<int>(std::floor(std::sqrt(static_cast<double>(n))));
    return std::min(30, std::max(15, root));
}

std::vector<double> flexzboost_alphas() {
    std::vector<double> out(16);
    for (int k = 0; k < 16; ++k) out[static_cast<std::size_t>(k)] = 0.5 + 1.5 * k / 15.0;
    return out;
}

namespace {

Eigen::MatrixXd rows_of(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd out(static_cast<Eigen::Index>(idx.size()), X.cols());
    for (std::size_t i = 0; i < idx.size(); ++i) out.row(static_cast<Eigen::Index>(i)) = X.row(idx[i]);
    return out;
}

// Coefficient regressors for one training set, queried at other rows.
Eigen::MatrixXd fit_and_predict_coefficients(const Eigen::MatrixXd& X_train, const Eigen::MatrixXd& T_train,
                                             const Eigen::MatrixXd& X_query, FlexBackend backend,
                                             const FlexcodeOptions& options, std::uint64_t seed) {
    const auto terms = T_train.cols();
    Eigen::MatrixXd out(X_query.rows(), terms);
    if (backend == FlexBackend::forest) {
        const auto forest = fit_forest(X_train, T_train, seed, options.forest);
        return forest.predict_rows(X_query);
    }
    const SortedColumns cols(X_train);
    out.col(0).setOnes();  // phi_0 = 1 is constant; its regression is the constant 1
    for (Eigen::Index k = 1; k < terms; ++k) {
        const auto gbt = fit_gbt(cols, T_train.col(k), options.gbt, derive_seed(seed, {static_cast<std::uint64_t>(k)}));
        out.col(k) = gbt.predict_rows(X_query);
    }
    return out;
}

// Held-out CDE loss in z units for one row, on a 200-point grid of [0, 1].
class ZLoss {
public:
    explicit ZLoss(int max_terms) : grid_(0.0, 1.0), phi_(static_cast<Eigen::Index>(grid_.size()), max_terms) {
        for (std::size_t g = 0; g < grid_.size(); ++g) {
            for (int k = 0; k < max_terms; ++k) phi_(static_cast<Eigen::Index>(g), k) = CosineBasis::phi(k, grid_.at(g));
        }
    }

    const Eigen::MatrixXd& phi() const { return phi_; }

    double operator()(const Eigen::VectorXd& raw, double z_test, double alpha) const {
        GridDensity gd{grid_, std::vector<double>(grid_.size())};
        bool any = false;
        for (std::size_t g = 0; g < grid_.size(); ++g) {
            double v = std::max(raw(static_cast<Eigen::Index>(g)), 0.0);
            if (alpha != 1.0 && v > 0.0) v = std::pow(v, alpha);
            gd.values[g] = v;
            any = any || v > 0.0;
        }
        if (!any) std::fill(gd.values.begin(), gd.values.end(), 1.0);
        gd = normalize_density(std::move(gd));
        std::vector<double> sq(gd.values.size());
        for (std::size_t g = 0; g < sq.size(); ++g) sq[g] = gd.values[g] * gd.values[g];
        return trapezoid(grid_, sq) - 2.0 * gd.at(z_test);
    }

private:
    EvalGrid grid_;
    Eigen::MatrixXd phi_;
};

}  // namespace

Eigen::VectorXd FlexcodeFit::coefficients(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    if (forest) return forest->predict(x).head(terms);
    Eigen::VectorXd out(terms);
    out(0) = 1.0;
    for (int k = 1; k < terms; ++k) out(k) = boosters[static_cast<std::size_t>(k)].predict(x);
    return out;
}

FlexcodeFit fit_flexcode(const Dataset& ds, FlexBackend backend, std::uint64_t seed, const FlexcodeOptions& options) {
    const auto n = ds.n();
    if (ds.features.rows() != ds.response.size()) throw std::invalid_argument("flexcode: shape mismatch");
    if (n < 20) throw std::invalid_argument("flexcode needs at least 20 observations, got " + std::to_string(n));
    if (options.folds < 2 || options.alphas.empty()) throw std::invalid_argument("flexcode: bad options");
    for (double a : options.alphas) {
        if (!(a > 0.0)) throw std::invalid_argument("flexcode: sharpening exponent must be positive");
    }

    FlexcodeFit fit;
    fit.backend = backend;
    fit.n_features = ds.d();
    fit.basis = {ds.response.minCoeff(), ds.response.maxCoeff()};
    if (!(fit.basis.y_max > fit.basis.y_min)) throw std::invalid_argument("flexcode: constant response");
    fit.max_terms = flexcode_max_terms(n);
    const int I = fit.max_terms;

    Eigen::VectorXd z(n);
    Eigen::MatrixXd T(n, I);
    for (Eigen::Index i = 0; i < n; ++i) {
        z(i) = fit.basis.z(ds.response(i));
        T.row(i) = CosineBasis::eval(z(i), I).transpose();
    }

    // Out-of-fold coefficient predictions at I_max; every candidate I truncates them.
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, {0xf0u}));
    std::shuffle(perm.begin(), perm.end(), rng);
    Eigen::MatrixXd oof(n, I);
    for (int f = 0; f < options.folds; ++f) {
        std::vector<Eigen::Index> train, held;
        for (std::size_t p = 0; p < perm.size(); ++p) {
            (static_cast<int>(p % static_cast<std::size_t>(options.folds)) == f ? held : train).push_back(perm[p]);
        }
        const auto pred = fit_and_predict_coefficients(rows_of(ds.features, train), rows_of(T, train),
                                                       rows_of(ds.features, held), backend, options,
                                                       derive_seed(seed, {0xf1u, static_cast<std::uint64_t>(f)}));
        for (std::size_t i = 0; i < held.size(); ++i) oof.row(held[i]) = pred.row(static_cast<Eigen::Index>(i));
    }

    const ZLoss loss(I);
    fit.cv_loss_by_terms.assign(static_cast<std::size_t>(I), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        Eigen::VectorXd raw = Eigen::VectorXd::Zero(loss.phi().rows());
        for (int k = 0; k < I; ++k) {
            raw += oof(i, k) * loss.phi().col(k);
            fit.cv_loss_by_terms[static_cast<std::size_t>(k)] += loss(raw, z(i), 1.0);
        }
    }
    for (auto& v : fit.cv_loss_by_terms) v /= static_cast<double>(n);
    fit.terms = static_cast<int>(std::min_element(fit.cv_loss_by_terms.begin(), fit.cv_loss_by_terms.end()) -
                                 fit.cv_loss_by_terms.begin()) + 1;

    fit.alphas = options.alphas;
    fit.cv_loss_by_alpha.assign(fit.alphas.size(), 0.0);
    for (Eigen::Index i = 0; i < n; ++i) {
        const Eigen::VectorXd raw = loss.phi().leftCols(fit.terms) * oof.row(i).head(fit.terms).transpose();
        for (std::size_t a = 0; a < fit.alphas.size(); ++a) fit.cv_loss_by_alpha[a] += loss(raw, z(i), fit.alphas[a]);
    }
    for (auto& v : fit.cv_loss_by_alpha) v /= static_cast<double>(n);
    fit.alpha = fit.alphas[static_cast<std::size_t>(
        std::min_element(fit.cv_loss_by_alpha.begin(), fit.cv_loss_by_alpha.end()) - fit.cv_loss_by_alpha.begin())];

    const auto final_seed = derive_seed(seed, {0xf2u});
    if (backend == FlexBackend::forest) {
        fit.forest = fit_forest(ds.features, T, final_seed, options.forest);
    } else {
        const SortedColumns cols(ds.features);
        fit.boosters.resize(static_cast<std::size_t>(fit.terms));
        for (int k = 1; k < fit.terms; ++k) {
            fit.boosters[static_cast<std::size_t>(k)] =
                fit_gbt(cols, T.col(k), options.gbt, derive_seed(final_seed, {static_cast<std::uint64_t>(k)}));
        }
    }
    return fit;
}

FlexcodeFit fit_flexzboost(const Dataset& ds, std::uint64_t seed, const std::vector<double>& extra_alphas) {
    FlexcodeOptions options;
    options.alphas = flexzboost_alphas();
    options.alphas.insert(options.alphas.end(), extra_alphas.begin(), extra_alphas.end());
    return fit_flexcode(ds, FlexBackend::gbt, seed, options);
}

GridDensity flexcode_density(const CosineBasis& basis, const Eigen::VectorXd& coefs, double alpha,
                             const EvalGrid& grid) {
    if (!(alpha > 0.0)) throw std::invalid_argument("flexcode: sharpening exponent must be positive");
    GridDensity gd{grid, std::vector<double>(grid.size(), 0.0)};
    bool inside = false;
    for (std::size_t g = 0; g < grid.size(); ++g) {
        const double z = basis.z(grid.at(g));
        if (z < 0.0 || z > 1.0) continue;
        inside = true;
        double v = 0.0;
        for (Eigen::Index k = 0; k < coefs.size(); ++k) v += coefs(k) * CosineBasis::phi(static_cast<int>(k), z);
        v = std::max(v, 0.0);
        gd.values[g] = alpha == 1.0 || v == 0.0 ? v : std::pow(v, alpha);
    }
    const bool any = std::any_of(gd.values.begin(), gd.values.end(), [](double v) { return v > 0.0; });
    if (!any) {
        // Projection removed everything: fall back to uniform over the training range.
        for (std::size_t g = 0; g < grid.size(); ++g) {
            const double z = basis.z(grid.at(g));
            if (z >= 0.0 && z <= 1.0) gd.values[g] = 1.0;
        }
        if (!inside) {
            const double mid = 0.5 * (basis.y_min + basis.y_max);
            const double pos = std::clamp((mid - grid.lo()) / grid.step(), 0.0, static_cast<double>(grid.size() - 1));
            gd.values[static_cast<std::size_t>(std::lround(pos))] = 1.0;
        }
    }
    return normalize_density(std::move(gd));
}

GridDensity flexcode_predict(const FlexcodeFit& fit, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                             const EvalGrid& grid) {
    if (x.size() != fit.n_features) {
        throw std::invalid_argument("covariate row has " + std::to_string(x.size()) + " entries, model expects " +
                                    std::to_string(fit.n_features));
    }
    if (!x.allFinite()) throw std::invalid_argument("flexcode: non-finite covariate row");
    return flexcode_density(fit.basis, fit.coefficients(x), fit.alpha, grid);
}

std::vector<double> quantile_tree_levels() {
    std::vector<double> out(49);
    for (int k = 1; k <= 49; ++k) out[static_cast<std::size_t>(k - 1)] = k / 50.0;
    return out;
}

QuantileTreeModel fit_quantile_tree(const Dataset& ds, const QuantileTreeParams& params, std::uint64_t seed) {
    if (ds.features.rows() != ds.response.size()) throw std::invalid_argument("quantile tree: shape mismatch");
    if (ds.n() < 50) throw std::invalid_argument("quantile tree needs at least 50 observations, got " + std::to_string(ds.n()));
    QuantileTreeModel model;
    model.levels = quantile_tree_levels();
    model.n_features = ds.d();
    const SortedColumns cols(ds.features);
    for (std::size_t k = 0; k < model.levels.size(); ++k) {
        GbtOptions opt{GbtLoss::pinball, model.levels[k], params.rounds, params.max_depth, params.learning_rate,
                       params.min_leaf};
        model.models.push_back(fit_gbt(cols, ds.response, opt, derive_seed(seed, {static_cast<std::uint64_t>(k)})));
    }
    return model;
}

QuantileFunction quantile_tree_quantiles(const QuantileTreeModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    if (model.models.size() != model.levels.size() || model.models.empty()) {
        throw std::invalid_argument("quantile tree: model/level count mismatch");
    }
    if (x.size() != model.n_features) throw std::invalid_argument("quantile tree: covariate dimension mismatch");
    QuantileFunction q;
    q.levels = model.levels;
    q.values.reserve(model.models.size());
    for (const auto& m : model.models) {
        const double v = m.predict(x);
        if (!std::isfinite(v)) throw std::runtime_error("quantile tree: non-finite model output");
        q.values.push_back(v);
    }
    std::sort(q.values.begin(), q.values.end());
    return q;
}

GridDensity quantile_tree_predict(const QuantileTreeModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                  const EvalGrid& grid) {
    return quantiles_to_density(quantile_tree_quantiles(model, x), grid);
}

}  // namespace cde
