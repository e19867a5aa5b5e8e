#pragma once

// Built-in data-generating processes with known conditional densities:
//   hetero_gauss  y = x'b + exp(x'g/2) e, x ~ U(-1,1)^3
//   bimodal       two-component Gaussian mixture whose weights, means and
//                 scales move with x ~ U(-1,1)^2
//   discrete      y = K + 0.1 e with K | x ~ Binomial(9, logistic(1.5 x1 - x2))

#include "cde/core.hpp"
#include "cde/dataset.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

namespace cde {

enum class SyntheticKind { hetero_gauss, bimodal, discrete };

std::optional<SyntheticKind> parse_synthetic(std::string_view name);
std::string synthetic_name(SyntheticKind kind);
std::vector<std::string> synthetic_names();
int synthetic_dim(SyntheticKind kind);

/// Row i depends only on (seed, i), so a larger sample extends a smaller one.
Dataset sample_synthetic(SyntheticKind kind, Eigen::Index n, std::uint64_t seed);

/// True conditional density f(y | x).
double synthetic_pdf(SyntheticKind kind, double y, const Eigen::Ref<const Eigen::RowVectorXd>& x);

/// True density sampled on the grid and renormalized.
GridDensity synthetic_density(SyntheticKind kind, const Eigen::Ref<const Eigen::RowVectorXd>& x, const EvalGrid& grid);

/// Mean and log-variance coefficients of hetero_gauss (intercept first).
Eigen::Vector4d hetero_gauss_beta();
Eigen::Vector4d hetero_gauss_gamma();
double hetero_gauss_sigma(const Eigen::Ref<const Eigen::RowVectorXd>& x);

}  // namespace cde
