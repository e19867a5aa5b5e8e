#pragma once

#include <Eigen/Dense>

#include <vector>

namespace cde {

/// Column standardization with train mean/sd. Zero-variance columns are dropped
/// from the transformed design and get a zero coefficient when folded back.
class Standardizer {
public:
    static Standardizer fit(const Eigen::MatrixXd& X);

    Eigen::MatrixXd transform(const Eigen::MatrixXd& X) const;
    Eigen::VectorXd transform_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;

    /// Maps [intercept, active-column coefficients] on the standardized scale to
    /// [intercept, one coefficient per raw column].
    Eigen::VectorXd fold_back(const Eigen::VectorXd& coef_std) const;

    Eigen::Index raw_dim() const { return mean_.size(); }
    Eigen::Index active_dim() const { return static_cast<Eigen::Index>(active_.size()); }

private:
    Eigen::VectorXd mean_;
    Eigen::VectorXd scale_;
    std::vector<Eigen::Index> active_;
};

/// 20 log-spaced penalties in [1e-4, 1e4], chosen by leave-one-out CV.
struct RidgeConfig {
    std::vector<double> lambdas;

    static RidgeConfig standard();
};

struct RidgeSolution {
    Eigen::VectorXd coef;  // intercept first, never penalized
    double lambda = 0.0;
    std::vector<double> loo_mse;  // one per candidate lambda; +inf when h_ii >= 1
};

/// Ridge regression of y on [1, X] with penalty lambda * ||coef[1:]||^2.
/// lambda = 0 is ordinary least squares and throws on a rank-deficient design.
Eigen::VectorXd ridge_solve(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda);

/// Closed-form leave-one-out error mean(((y_i - yhat_i) / (1 - h_ii))^2) per
/// candidate; returns the coefficients at the minimizer (ties go to the smaller lambda).
RidgeSolution ridge_solve_loo(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const RidgeConfig& config);

/// Prepends a column of ones.
Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X);

}  // namespace cde
