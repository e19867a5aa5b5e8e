#include "cde/parametric.hpp"

#include <ceres/gradient_problem.h>
#include <ceres/gradient_problem_solver.h>

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <stdexcept>
#include <string>

namespace cde {

namespace {

constexpr double kShapeCap = 1e6;

void check_input(const Dataset& ds, bool ridged) {
    if (ds.features.rows() != ds.response.size()) {
        throw std::invalid_argument("feature rows do not match response length");
    }
    if (!ds.features.allFinite() || !ds.response.allFinite()) {
        throw std::invalid_argument("non-finite values in training data");
    }
    const auto n = ds.n();
    if (n < 3) throw std::invalid_argument("need at least 3 observations");
    if (!ridged && n <= ds.d() + 1) {
        throw std::invalid_argument("n = " + std::to_string(n) + " is too small for " +
                                    std::to_string(ds.d() + 1) + " coefficients without ridge");
    }
}

std::span<const double> as_span(const Eigen::VectorXd& v) {
    return {v.data(), static_cast<std::size_t>(v.size())};
}

double value_range(const Eigen::VectorXd& y) { return y.maxCoeff() - y.minCoeff(); }

// Floor for scale parameters, relative to the response spread. A zero range
// falls back to the same substitute width used for degenerate grids.
double scale_floor(const Eigen::VectorXd& y) {
    double r = value_range(y);
    if (!(r > 0.0)) r = std::max(std::abs(y(0)), 1.0) * 0.1;
    return 1e-8 * r;
}

struct MeanRegression {
    Eigen::VectorXd coef_std;  // intercept + active standardized columns
    std::optional<double> lambda;
    Eigen::VectorXd residuals;
};

MeanRegression mean_regression(const Eigen::MatrixXd& Z, const Eigen::VectorXd& y,
                               const std::optional<RidgeConfig>& ridge) {
    MeanRegression out;
    if (ridge) {
        auto sol = ridge_solve_loo(Z, y, *ridge);
        out.coef_std = std::move(sol.coef);
        out.lambda = sol.lambda;
    } else {
        out.coef_std = ridge_solve(Z, y, 0.0);
    }
    out.residuals = y - (Z * out.coef_std.tail(Z.cols())).array().matrix();
    out.residuals.array() -= out.coef_std(0);
    return out;
}

double population_variance(const Eigen::VectorXd& v) {
    return (v.array() - v.mean()).square().mean();
}

// The Ceres cost is J/n so that its absolute gradient tolerance 1e-6 reads as
// 1e-6 * n on the summed objective.
class HeteroCost final : public ceres::FirstOrderFunction {
public:
    HeteroCost(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, double lambda)
        : design_(design), y_(y), lambda_(lambda) {}

    bool Evaluate(const double* params, double* cost, double* gradient) const override {
        const auto q = design_.cols();
        const Eigen::Map<const Eigen::VectorXd> theta(params, 2 * q);
        Eigen::VectorXd g;
        const double j = hetero_negloglik(design_, y_, theta.head(q), theta.tail(q), lambda_,
                                          gradient ? &g : nullptr);
        if (!std::isfinite(j)) return false;
        const auto n = static_cast<double>(y_.size());
        *cost = j / n;
        if (gradient) {
            if (!g.allFinite()) return false;
            Eigen::Map<Eigen::VectorXd>(gradient, 2 * q) = g / n;
        }
        return true;
    }

    int NumParameters() const override { return static_cast<int>(2 * design_.cols()); }

private:
    const Eigen::MatrixXd& design_;
    const Eigen::VectorXd& y_;
    double lambda_;
};

// Joint heteroscedastic fit on standardized features and response; returns
// coefficients on the raw scale.
GaussHeteroFit hetero_fit_impl(const Dataset& ds, const std::optional<RidgeConfig>& ridge) {
    check_input(ds, ridge.has_value());
    const auto st = Standardizer::fit(ds.features);
    const Eigen::MatrixXd Z = st.transform(ds.features);
    const double y_mean = ds.response.mean();
    double y_sd = std::sqrt(population_variance(ds.response));
    if (!(y_sd > 0.0)) y_sd = 1.0;
    const Eigen::VectorXd ys = (ds.response.array() - y_mean) / y_sd;

    const auto mean = mean_regression(Z, ys, ridge);
    const double lambda = mean.lambda.value_or(0.0);

    // Two-step start: log squared residuals regressed on x. 1.2704 = -E[log chi2_1]
    // removes the known bias of the log transform.
    Eigen::VectorXd log_r2 = mean.residuals.array().square().max(1e-12).log() + 1.2704;
    const Eigen::VectorXd gamma0 = ridge_solve(Z, log_r2, std::max(lambda, 1e-8));

    const Eigen::MatrixXd D = with_intercept(Z);
    const auto q = D.cols();
    std::vector<double> theta(static_cast<std::size_t>(2 * q));
    Eigen::Map<Eigen::VectorXd> tv(theta.data(), 2 * q);
    tv.head(q) = mean.coef_std;
    tv.tail(q) = gamma0;

    ceres::GradientProblem problem(new HeteroCost(D, ys, lambda));
    ceres::GradientProblemSolver::Options options;
    options.line_search_direction_type = ceres::LBFGS;
    options.max_lbfgs_rank = 10;
    options.max_num_iterations = 500;
    options.gradient_tolerance = 1e-6;
    options.function_tolerance = 1e-14;
    options.parameter_tolerance = 1e-14;
    options.logging_type = ceres::SILENT;
    ceres::GradientProblemSolver::Summary summary;
    ceres::Solve(options, problem, theta.data(), &summary);

    Eigen::VectorXd grad;
    hetero_negloglik(D, ys, tv.head(q), tv.tail(q), lambda, &grad);

    GaussHeteroFit fit;
    Eigen::VectorXd beta_std = tv.head(q) * y_sd;
    beta_std(0) += y_mean;
    Eigen::VectorXd gamma_std = tv.tail(q);
    gamma_std(0) += 2.0 * std::log(y_sd);
    fit.beta = st.fold_back(beta_std);
    fit.gamma = st.fold_back(gamma_std);
    fit.lambda = mean.lambda;
    fit.iterations = static_cast<int>(summary.iterations.size());
    fit.converged = grad.lpNorm<Eigen::Infinity>() <= 1e-6 * static_cast<double>(ds.n());
    if (!fit.beta.allFinite() || !fit.gamma.allFinite()) {
        throw std::runtime_error("heteroscedastic fit produced non-finite coefficients");
    }
    return fit;
}

Dataset with_response(const Dataset& ds, Eigen::VectorXd y) {
    Dataset out;
    out.features = ds.features;
    out.response = std::move(y);
    out.feature_names = ds.feature_names;
    out.name = ds.name;
    return out;
}

double normal_pdf(double t, double mu, double sd) {
    const double z = (t - mu) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

double student_t_logpdf(double z, double nu) {
    return std::lgamma(0.5 * (nu + 1.0)) - std::lgamma(0.5 * nu) - 0.5 * std::log(nu * std::numbers::pi) -
           0.5 * (nu + 1.0) * std::log1p(z * z / nu);
}

double linear(const Eigen::VectorXd& coef, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    return coef(0) + x.dot(coef.tail(coef.size() - 1));
}

// Normalizes; a density that vanishes on every grid point (scale far below the
// grid spacing) becomes unit mass at the grid point nearest its location.
GridDensity finish(std::vector<double> values, const EvalGrid& grid, double location) {
    const bool any = std::any_of(values.begin(), values.end(), [](double v) { return v > 0.0; });
    if (!any) {
        const double pos = std::clamp((location - grid.lo()) / grid.step(), 0.0,
                                      static_cast<double>(grid.size() - 1));
        values[static_cast<std::size_t>(std::lround(pos))] = 1.0;
    }
    for (double& v : values) {
        if (!std::isfinite(v)) v = 0.0;
    }
    return normalize_density({grid, std::move(values)});
}

template <class F>
std::vector<double> tabulate(const EvalGrid& grid, F&& f) {
    std::vector<double> out(grid.size());
    for (std::size_t i = 0; i < grid.size(); ++i) out[i] = f(grid.at(i));
    return out;
}

}  // namespace

double hetero_negloglik(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                        const Eigen::VectorXd& gamma, double lambda, Eigen::VectorXd* grad) {
    const auto q = design.cols();
    if (beta.size() != q || gamma.size() != q || y.size() != design.rows()) {
        throw std::invalid_argument("hetero_negloglik: dimension mismatch");
    }
    const Eigen::ArrayXd eta = design * gamma;
    const Eigen::ArrayXd w = (-eta).exp();
    const Eigen::ArrayXd r = (y - design * beta).array();
    const Eigen::ArrayXd r2w = r.square() * w;
    double j = 0.5 * (eta + r2w).sum();
    j += lambda * (beta.tail(q - 1).squaredNorm() + gamma.tail(q - 1).squaredNorm());
    if (grad) {
        grad->resize(2 * q);
        grad->head(q) = -design.transpose() * (r * w).matrix();
        grad->tail(q) = 0.5 * design.transpose() * (1.0 - r2w).matrix();
        grad->segment(1, q - 1) += 2.0 * lambda * beta.tail(q - 1);
        grad->segment(q + 1, q - 1) += 2.0 * lambda * gamma.tail(q - 1);
    }
    return j;
}

double positivity_shift(std::span<const double> y) {
    if (y.empty()) throw std::invalid_argument("positivity_shift: empty response");
    const auto [lo, hi] = std::minmax_element(y.begin(), y.end());
    if (*lo > 0.0) return 0.0;
    double range = *hi - *lo;
    if (!(range > 0.0)) range = std::max(std::abs(*lo), 1.0) * 0.1;
    return -*lo + 0.01 * range;
}

GaussHomoFit fit_gauss_homo(const Dataset& ds, const std::optional<RidgeConfig>& ridge) {
    check_input(ds, ridge.has_value());
    const auto st = Standardizer::fit(ds.features);
    const auto mean = mean_regression(st.transform(ds.features), ds.response, ridge);
    const double rss = mean.residuals.squaredNorm();
    const auto n = static_cast<double>(ds.n());
    const double denom = ridge ? n : n - static_cast<double>(ds.d()) - 1.0;
    const double floor = scale_floor(ds.response);

    GaussHomoFit fit;
    fit.beta = st.fold_back(mean.coef_std);
    fit.sigma2 = std::max(rss / denom, floor * floor);
    fit.lambda = mean.lambda;
    return fit;
}

GaussHeteroFit fit_gauss_hetero(const Dataset& ds, const std::optional<RidgeConfig>& ridge) {
    return hetero_fit_impl(ds, ridge);
}

double student_t_profile_loglik(std::span<const double> residuals, double nu) {
    if (!(nu > 2.0)) throw std::invalid_argument("student_t_profile_loglik: nu must exceed 2");
    double ms = 0.0;
    for (double e : residuals) ms += e * e;
    ms /= static_cast<double>(residuals.size());
    const double sigma = std::sqrt(ms * (nu - 2.0) / nu);
    double total = 0.0;
    for (double e : residuals) total += student_t_logpdf(e / sigma, nu) - std::log(sigma);
    return total;
}

double fit_student_t_nu(std::span<const double> residuals) {
    constexpr double lo = 2.01;
    constexpr double hi = 200.0;
    constexpr int grid_points = 60;
    if (residuals.empty()) throw std::invalid_argument("fit_student_t_nu: no residuals");
    double ms = 0.0;
    for (double e : residuals) ms += e * e;
    if (!(ms > 0.0)) return hi;  // no spread at all: Gaussian limit

    auto profile = [&](double log_nu) { return student_t_profile_loglik(residuals, std::exp(log_nu)); };
    const double a = std::log(lo);
    const double b = std::log(hi);
    std::vector<double> nodes(grid_points);
    int best = 0;
    double best_val = -std::numeric_limits<double>::infinity();
    for (int k = 0; k < grid_points; ++k) {
        nodes[static_cast<std::size_t>(k)] = a + (b - a) * k / (grid_points - 1);
        const double v = profile(nodes[static_cast<std::size_t>(k)]);
        if (v > best_val) {
            best_val = v;
            best = k;
        }
    }
    double left = nodes[static_cast<std::size_t>(std::max(best - 1, 0))];
    double right = nodes[static_cast<std::size_t>(std::min(best + 1, grid_points - 1))];
    const double inv_phi = (std::sqrt(5.0) - 1.0) / 2.0;
    double c = right - inv_phi * (right - left);
    double d = left + inv_phi * (right - left);
    double fc = profile(c);
    double fd = profile(d);
    for (int it = 0; it < 80 && right - left > 1e-10; ++it) {
        if (fc > fd) {
            right = d;
            d = c;
            fd = fc;
            c = right - inv_phi * (right - left);
            fc = profile(c);
        } else {
            left = c;
            c = d;
            fc = fd;
            d = left + inv_phi * (right - left);
            fd = profile(d);
        }
    }
    const double refined = 0.5 * (left + right);
    const double log_nu = profile(refined) >= best_val ? refined : nodes[static_cast<std::size_t>(best)];
    return std::clamp(std::exp(log_nu), lo, hi);
}

StudentTFit fit_student_t(const Dataset& ds, const std::optional<RidgeConfig>& ridge) {
    check_input(ds, ridge.has_value());
    const auto st = Standardizer::fit(ds.features);
    const auto mean = mean_regression(st.transform(ds.features), ds.response, ridge);
    StudentTFit fit;
    fit.beta = st.fold_back(mean.coef_std);
    fit.lambda = mean.lambda;
    fit.nu = fit_student_t_nu(as_span(mean.residuals));
    const double ms = mean.residuals.squaredNorm() / static_cast<double>(ds.n());
    fit.sigma = std::max(std::sqrt(ms * (fit.nu - 2.0) / fit.nu), scale_floor(ds.response));
    return fit;
}

LogNormalFit fit_lognormal(const Dataset& ds, bool hetero, const std::optional<RidgeConfig>& ridge) {
    check_input(ds, ridge.has_value());
    LogNormalFit fit;
    fit.shift_c = positivity_shift(as_span(ds.response));
    const Eigen::VectorXd log_y = (ds.response.array() + fit.shift_c).log();
    const Dataset log_ds = with_response(ds, log_y);
    if (hetero) {
        auto h = hetero_fit_impl(log_ds, ridge);
        fit.beta = std::move(h.beta);
        fit.gamma = std::move(h.gamma);
        fit.lambda = h.lambda;
        fit.converged = h.converged;
    } else {
        auto g = fit_gauss_homo(log_ds, ridge);
        fit.beta = std::move(g.beta);
        fit.sigma = std::sqrt(g.sigma2);
        fit.lambda = g.lambda;
    }
    return fit;
}

GammaGlmFit fit_gamma_glm(const Dataset& ds, const std::optional<RidgeConfig>& ridge) {
    check_input(ds, ridge.has_value());
    GammaGlmFit fit;
    fit.shift_c = positivity_shift(as_span(ds.response));
    const Eigen::VectorXd log_y = (ds.response.array() + fit.shift_c).log();
    const auto st = Standardizer::fit(ds.features);
    const auto mean = mean_regression(st.transform(ds.features), log_y, ridge);
    fit.beta = st.fold_back(mean.coef_std);
    fit.lambda = mean.lambda;
    const double var = population_variance(mean.residuals);
    fit.shape_a = var > 1.0 / kShapeCap ? 1.0 / var : kShapeCap;
    return fit;
}

GridDensity predict_parametric(const ParametricFit& fit, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                               const EvalGrid& grid) {
    return std::visit(
        [&](const auto& f) -> GridDensity {
            if (x.size() + 1 != f.beta.size()) {
                throw std::invalid_argument("covariate row has " + std::to_string(x.size()) +
                                            " entries, model expects " + std::to_string(f.beta.size() - 1));
            }
            if (!x.allFinite()) throw std::invalid_argument("non-finite covariate row");
            using T = std::decay_t<decltype(f)>;
            const double mu = linear(f.beta, x);
            if constexpr (std::is_same_v<T, GaussHomoFit>) {
                const double sd = std::sqrt(f.sigma2);
                return finish(tabulate(grid, [&](double t) { return normal_pdf(t, mu, sd); }), grid, mu);
            } else if constexpr (std::is_same_v<T, GaussHeteroFit>) {
                const double sd = std::exp(0.5 * linear(f.gamma, x));
                return finish(tabulate(grid, [&](double t) { return normal_pdf(t, mu, sd); }), grid, mu);
            } else if constexpr (std::is_same_v<T, StudentTFit>) {
                return finish(tabulate(grid,
                                       [&](double t) {
                                           return std::exp(student_t_logpdf((t - mu) / f.sigma, f.nu)) / f.sigma;
                                       }),
                              grid, mu);
            } else if constexpr (std::is_same_v<T, LogNormalFit>) {
                const double sd = f.gamma ? std::exp(0.5 * linear(*f.gamma, x)) : f.sigma;
                return finish(tabulate(grid,
                                       [&](double t) {
                                           const double s = t + f.shift_c;
                                           return s > 0.0 ? normal_pdf(std::log(s), mu, sd) / s : 0.0;
                                       }),
                              grid, std::exp(mu) - f.shift_c);
            } else {
                const double a = f.shape_a;
                const double theta = std::exp(mu) / a;
                return finish(tabulate(grid,
                                       [&](double t) {
                                           const double s = t + f.shift_c;
                                           if (!(s > 0.0)) return 0.0;
                                           return std::exp((a - 1.0) * std::log(s) - s / theta - std::lgamma(a) -
                                                           a * std::log(theta));
                                       }),
                              grid, std::exp(mu) - f.shift_c);
            }
        },
        fit);
}

}  // namespace cde
