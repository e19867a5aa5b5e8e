#pragma once

// Linear distributional-regression baselines. Coefficient vectors are always on
// the raw covariate scale with the intercept first, even though fits run on
// standardized features internally.

#include "cde/core.hpp"
#include "cde/dataset.hpp"
#include "cde/linalg.hpp"

#include <Eigen/Dense>

#include <optional>
#include <span>
#include <variant>

namespace cde {

struct GaussHomoFit {
    Eigen::VectorXd beta;
    double sigma2 = 1.0;
    std::optional<double> lambda;  // set when ridge was used
};

struct GaussHeteroFit {
    Eigen::VectorXd beta;
    Eigen::VectorXd gamma;  // log-variance coefficients
    std::optional<double> lambda;
    bool converged = false;
    int iterations = 0;
};

struct StudentTFit {
    Eigen::VectorXd beta;
    double nu = 30.0;
    double sigma = 1.0;
    std::optional<double> lambda;
};

struct LogNormalFit {
    Eigen::VectorXd beta;  // mean of log(y + c)
    double shift_c = 0.0;
    double sigma = 1.0;                    // used when gamma is empty
    std::optional<Eigen::VectorXd> gamma;  // heteroscedastic log-scale variance
    std::optional<double> lambda;
    bool converged = true;
};

struct GammaGlmFit {
    Eigen::VectorXd beta;  // log of the scale-times-shape location
    double shape_a = 1.0;
    double shift_c = 0.0;
    std::optional<double> lambda;
};

using ParametricFit = std::variant<GaussHomoFit, GaussHeteroFit, StudentTFit, LogNormalFit, GammaGlmFit>;

GaussHomoFit fit_gauss_homo(const Dataset& ds, const std::optional<RidgeConfig>& ridge = std::nullopt);
GaussHeteroFit fit_gauss_hetero(const Dataset& ds, const std::optional<RidgeConfig>& ridge = std::nullopt);
StudentTFit fit_student_t(const Dataset& ds, const std::optional<RidgeConfig>& ridge = std::nullopt);
LogNormalFit fit_lognormal(const Dataset& ds, bool hetero, const std::optional<RidgeConfig>& ridge = std::nullopt);
GammaGlmFit fit_gamma_glm(const Dataset& ds, const std::optional<RidgeConfig>& ridge = std::nullopt);

GridDensity predict_parametric(const ParametricFit& fit, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                               const EvalGrid& grid);

/// Shift c = -min(y) + 0.01 range(y) when min(y) <= 0, else 0.
double positivity_shift(std::span<const double> y);

/// Negative heteroscedastic Gaussian log-likelihood (constants dropped) plus the
/// ridge term lambda (||beta[1:]||^2 + ||gamma[1:]||^2). `design` carries the
/// intercept column. If `grad` is non-null it receives [d/dbeta, d/dgamma].
double hetero_negloglik(const Eigen::MatrixXd& design, const Eigen::VectorXd& y, const Eigen::VectorXd& beta,
                        const Eigen::VectorXd& gamma, double lambda, Eigen::VectorXd* grad = nullptr);

/// Profile log-likelihood of t(nu) residuals with sigma tied to the residual
/// second moment, sigma^2 = mean(e^2) (nu - 2) / nu.
double student_t_profile_loglik(std::span<const double> residuals, double nu);

/// argmax of the profile over [2.01, 200]: 60-point log grid, then golden section.
double fit_student_t_nu(std::span<const double> residuals);

}  // namespace cde
