#include "cde/linalg.hpp"

#include <cmath>
#include <limits>
#include <stdexcept>

namespace cde {

Standardizer Standardizer::fit(const Eigen::MatrixXd& X) {
    Standardizer s;
    const auto n = static_cast<double>(X.rows());
    s.mean_ = X.colwise().mean().transpose();
    s.scale_ = Eigen::VectorXd::Ones(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double var = (X.col(j).array() - s.mean_(j)).square().sum() / n;
        const double sd = std::sqrt(var);
        if (sd > 1e-12 * std::max(1.0, std::abs(s.mean_(j)))) {
            s.scale_(j) = sd;
            s.active_.push_back(j);
        }
    }
    return s;
}

Eigen::MatrixXd Standardizer::transform(const Eigen::MatrixXd& X) const {
    if (X.cols() != raw_dim()) throw std::invalid_argument("standardizer: column count mismatch");
    Eigen::MatrixXd Z(X.rows(), active_dim());
    for (Eigen::Index k = 0; k < active_dim(); ++k) {
        const auto j = active_[static_cast<std::size_t>(k)];
        Z.col(k) = (X.col(j).array() - mean_(j)) / scale_(j);
    }
    return Z;
}

Eigen::VectorXd Standardizer::transform_row(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    if (x.size() != raw_dim()) throw std::invalid_argument("standardizer: dimension mismatch");
    Eigen::VectorXd z(active_dim());
    for (Eigen::Index k = 0; k < active_dim(); ++k) {
        const auto j = active_[static_cast<std::size_t>(k)];
        z(k) = (x(j) - mean_(j)) / scale_(j);
    }
    return z;
}

Eigen::VectorXd Standardizer::fold_back(const Eigen::VectorXd& coef_std) const {
    if (coef_std.size() != active_dim() + 1) throw std::invalid_argument("fold_back: size mismatch");
    Eigen::VectorXd out = Eigen::VectorXd::Zero(raw_dim() + 1);
    out(0) = coef_std(0);
    for (Eigen::Index k = 0; k < active_dim(); ++k) {
        const auto j = active_[static_cast<std::size_t>(k)];
        out(j + 1) = coef_std(k + 1) / scale_(j);
        out(0) -= coef_std(k + 1) * mean_(j) / scale_(j);
    }
    return out;
}

RidgeConfig RidgeConfig::standard() {
    RidgeConfig c;
    for (int k = 0; k < 20; ++k) c.lambdas.push_back(std::pow(10.0, -4.0 + 8.0 * k / 19.0));
    return c;
}

Eigen::MatrixXd with_intercept(const Eigen::MatrixXd& X) {
    Eigen::MatrixXd D(X.rows(), X.cols() + 1);
    D.col(0).setOnes();
    D.rightCols(X.cols()) = X;
    return D;
}

namespace {

// Centered problem: with an unpenalized intercept the ridge fit on [1, X]
// decouples into the mean of y and a ridge fit on centered columns.
struct CenteredEigen {
    Eigen::VectorXd x_mean;
    double y_mean = 0.0;
    Eigen::VectorXd yc;
    Eigen::VectorXd eigenvalues;
    Eigen::MatrixXd eigenvectors;
    Eigen::MatrixXd projected;  // Xc * V
    Eigen::VectorXd rhs;        // V^T Xc^T yc

    CenteredEigen(const Eigen::MatrixXd& X, const Eigen::VectorXd& y) {
        if (X.rows() != y.size()) throw std::invalid_argument("ridge: rows do not match response");
        if (X.rows() < 2) throw std::invalid_argument("ridge: need at least 2 observations");
        x_mean = X.colwise().mean().transpose();
        y_mean = y.mean();
        const Eigen::MatrixXd Xc = X.rowwise() - x_mean.transpose();
        yc = y.array() - y_mean;
        Eigen::SelfAdjointEigenSolver<Eigen::MatrixXd> es(Xc.transpose() * Xc);
        eigenvalues = es.eigenvalues().cwiseMax(0.0);
        eigenvectors = es.eigenvectors();
        projected = Xc * eigenvectors;
        rhs = projected.transpose() * yc;
    }

    Eigen::VectorXd coefficients(double lambda) const {
        const Eigen::VectorXd w = eigenvectors * (rhs.array() / (eigenvalues.array() + lambda)).matrix();
        Eigen::VectorXd coef(w.size() + 1);
        coef(0) = y_mean - x_mean.dot(w);
        coef.tail(w.size()) = w;
        return coef;
    }
};

}  // namespace

Eigen::VectorXd ridge_solve(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, double lambda) {
    if (!(lambda >= 0.0)) throw std::invalid_argument("ridge: negative penalty");
    if (X.cols() == 0) {
        Eigen::VectorXd coef(1);
        coef(0) = y.mean();
        return coef;
    }
    const CenteredEigen ce(X, y);
    if (lambda == 0.0) {
        const double top = ce.eigenvalues.maxCoeff();
        if (X.rows() <= X.cols() || !(ce.eigenvalues.minCoeff() > 1e-10 * std::max(top, 1e-300))) {
            throw std::invalid_argument("rank-deficient design: least squares needs a ridge penalty");
        }
    }
    return ce.coefficients(lambda);
}

RidgeSolution ridge_solve_loo(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const RidgeConfig& config) {
    if (config.lambdas.empty()) throw std::invalid_argument("ridge: no candidate penalties");
    if (!X.allFinite() || !y.allFinite()) throw std::invalid_argument("ridge: non-finite input");
    RidgeSolution out;
    const auto n = static_cast<double>(X.rows());
    if (X.cols() == 0) {
        out.coef = ridge_solve(X, y, 0.0);
        out.lambda = config.lambdas.front();
        const double loo = (y.array() - y.mean()).square().sum() / n * (n / (n - 1.0)) * (n / (n - 1.0));
        out.loo_mse.assign(config.lambdas.size(), loo);
        return out;
    }
    const CenteredEigen ce(X, y);
    const Eigen::MatrixXd proj_sq = ce.projected.array().square();
    double best = std::numeric_limits<double>::infinity();
    std::size_t best_k = 0;
    for (std::size_t k = 0; k < config.lambdas.size(); ++k) {
        const double lambda = config.lambdas[k];
        const Eigen::VectorXd inv = (ce.eigenvalues.array() + lambda).inverse();
        const Eigen::VectorXd coef = ce.coefficients(lambda);
        const Eigen::VectorXd resid = ce.yc - (X.rowwise() - ce.x_mean.transpose()) * coef.tail(X.cols());
        const Eigen::VectorXd hat = (proj_sq * inv).array() + 1.0 / n;
        double mse = 0.0;
        for (Eigen::Index i = 0; i < X.rows(); ++i) {
            if (hat(i) >= 1.0 - 1e-12) {
                mse = std::numeric_limits<double>::infinity();
                break;
            }
            const double e = resid(i) / (1.0 - hat(i));
            mse += e * e;
        }
        mse /= n;
        out.loo_mse.push_back(mse);
        if (mse < best) {
            best = mse;
            best_k = k;
        }
    }
    out.lambda = config.lambdas[best_k];
    out.coef = ce.coefficients(out.lambda);
    return out;
}

}  // namespace cde
