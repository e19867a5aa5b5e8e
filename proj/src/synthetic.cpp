#include "cde/synthetic.hpp"

#include "cde/random.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <stdexcept>

namespace cde {

namespace {

double logistic(double t) { return 1.0 / (1.0 + std::exp(-t)); }

double gauss_pdf(double y, double mu, double sigma) {
    const double z = (y - mu) / sigma;
    return std::exp(-0.5 * z * z) / (sigma * std::sqrt(2.0 * std::numbers::pi));
}

struct BimodalParams {
    double w_upper, mu_lo, mu_hi, sd_lo, sd_hi;
};

BimodalParams bimodal_params(const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    return {logistic(2.0 * x(0)), -2.0 + x(1), 2.0 + 0.5 * x(0), 0.5 * std::exp(0.25 * x(1)),
            0.5 * std::exp(-0.25 * x(0))};
}

double discrete_p(const Eigen::Ref<const Eigen::RowVectorXd>& x) { return logistic(1.5 * x(0) - x(1)); }

constexpr int kDiscreteTrials = 9;
constexpr double kDiscreteJitter = 0.1;

}  // namespace

std::optional<SyntheticKind> parse_synthetic(std::string_view name) {
    if (name == "hetero_gauss") return SyntheticKind::hetero_gauss;
    if (name == "bimodal") return SyntheticKind::bimodal;
    if (name == "discrete") return SyntheticKind::discrete;
    return std::nullopt;
}

std::string synthetic_name(SyntheticKind kind) {
    switch (kind) {
        case SyntheticKind::hetero_gauss: return "hetero_gauss";
        case SyntheticKind::bimodal: return "bimodal";
        case SyntheticKind::discrete: return "discrete";
    }
    throw std::logic_error("unknown synthetic kind");
}

std::vector<std::string> synthetic_names() { return {"hetero_gauss", "bimodal", "discrete"}; }

int synthetic_dim(SyntheticKind kind) { return kind == SyntheticKind::hetero_gauss ? 3 : 2; }

Eigen::Vector4d hetero_gauss_beta() { return {1.0, 2.0, -1.0, 0.5}; }
Eigen::Vector4d hetero_gauss_gamma() { return {0.0, 0.5, -0.3, 0.2}; }

double hetero_gauss_sigma(const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    const Eigen::Vector4d g = hetero_gauss_gamma();
    return std::exp(0.5 * (g(0) + x.dot(g.tail(3).transpose())));
}

Dataset sample_synthetic(SyntheticKind kind, Eigen::Index n, std::uint64_t seed) {
    if (n < 1) throw std::invalid_argument("synthetic sample size must be positive");
    const int d = synthetic_dim(kind);
    Dataset ds;
    ds.name = synthetic_name(kind);
    ds.features.resize(n, d);
    ds.response.resize(n);
    for (int j = 0; j < d; ++j) ds.feature_names.push_back("x" + std::to_string(j + 1));
    const Eigen::Vector4d beta = hetero_gauss_beta();
    for (Eigen::Index i = 0; i < n; ++i) {
        std::mt19937_64 rng(derive_seed(seed, {static_cast<std::uint64_t>(i)}));
        std::uniform_real_distribution<double> u(-1.0, 1.0);
        std::normal_distribution<double> g;
        for (int j = 0; j < d; ++j) ds.features(i, j) = u(rng);
        const auto x = ds.features.row(i);
        double y = 0.0;
        switch (kind) {
            case SyntheticKind::hetero_gauss:
                y = beta(0) + x.dot(beta.tail(3).transpose()) + hetero_gauss_sigma(x) * g(rng);
                break;
            case SyntheticKind::bimodal: {
                const auto p = bimodal_params(x);
                const bool upper = std::uniform_real_distribution<double>(0.0, 1.0)(rng) < p.w_upper;
                y = upper ? p.mu_hi + p.sd_hi * g(rng) : p.mu_lo + p.sd_lo * g(rng);
                break;
            }
            case SyntheticKind::discrete: {
                const int k = std::binomial_distribution<int>(kDiscreteTrials, discrete_p(x))(rng);
                y = k + kDiscreteJitter * g(rng);
                break;
            }
        }
        ds.response(i) = y;
    }
    return ds;
}

double synthetic_pdf(SyntheticKind kind, double y, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    if (x.size() != synthetic_dim(kind)) throw std::invalid_argument("covariate dimension does not match the DGP");
    switch (kind) {
        case SyntheticKind::hetero_gauss: {
            const Eigen::Vector4d beta = hetero_gauss_beta();
            return gauss_pdf(y, beta(0) + x.dot(beta.tail(3).transpose()), hetero_gauss_sigma(x));
        }
        case SyntheticKind::bimodal: {
            const auto p = bimodal_params(x);
            return p.w_upper * gauss_pdf(y, p.mu_hi, p.sd_hi) + (1.0 - p.w_upper) * gauss_pdf(y, p.mu_lo, p.sd_lo);
        }
        case SyntheticKind::discrete: {
            const double p = discrete_p(x);
            double f = 0.0;
            for (int k = 0; k <= kDiscreteTrials; ++k) {
                const double pk = std::exp(std::lgamma(kDiscreteTrials + 1.0) - std::lgamma(k + 1.0) -
                                           std::lgamma(kDiscreteTrials - k + 1.0)) *
                                  std::pow(p, k) * std::pow(1.0 - p, kDiscreteTrials - k);
                f += pk * gauss_pdf(y, k, kDiscreteJitter);
            }
            return f;
        }
    }
    throw std::logic_error("unknown synthetic kind");
}

GridDensity synthetic_density(SyntheticKind kind, const Eigen::Ref<const Eigen::RowVectorXd>& x, const EvalGrid& grid) {
    GridDensity gd{grid, std::vector<double>(grid.size())};
    for (std::size_t i = 0; i < grid.size(); ++i) gd.values[i] = synthetic_pdf(kind, grid.at(i), x);
    if (!(gd.integral() > 0.0)) throw std::runtime_error("true density has no mass on the evaluation grid");
    return normalize_density(std::move(gd));
}

}  // namespace cde
