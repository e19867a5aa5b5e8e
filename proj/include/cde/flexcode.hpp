#pragma once

// Orthogonal-series CDE: the response is mapped to z in [0,1], expanded in the
// cosine basis, and each coefficient is regressed on the covariates.

#include "cde/core.hpp"
#include "cde/dataset.hpp"
#include "cde/trees.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <optional>
#include <vector>

namespace cde {

struct CosineBasis {
    double y_min = 0.0;
    double y_max = 1.0;

    double z(double y) const { return (y - y_min) / (y_max - y_min); }
    /// phi_0 = 1, phi_i(z) = sqrt(2) cos(i pi z)
    static double phi(int i, double z);
    /// [phi_0(z), ..., phi_{count-1}(z)]
    static Eigen::VectorXd eval(double z, int count);
};

enum class FlexBackend { forest, gbt };

struct FlexcodeOptions {
    int folds = 5;
    std::vector<double> alphas{1.0};  // sharpening candidates, searched after the number of terms
    ForestOptions forest{};
    GbtOptions gbt{GbtLoss::squared, 0.5, 100, 4, 0.1, 1.0};
};

struct FlexcodeFit {
    CosineBasis basis;
    FlexBackend backend = FlexBackend::forest;
    Eigen::Index n_features = 0;
    int max_terms = 1;
    int terms = 1;  // chosen I
    double alpha = 1.0;
    std::optional<RegressionForest> forest;  // multi-output, max_terms columns
    std::vector<GbtModel> boosters;          // one per retained term
    std::vector<double> cv_loss_by_terms;    // index I-1, alpha = 1
    std::vector<double> alphas;
    std::vector<double> cv_loss_by_alpha;  // at the chosen I

    /// Basis coefficients beta_0..beta_{terms-1} at x.
    Eigen::VectorXd coefficients(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

/// I_max = min(30, max(15, floor(sqrt(n))))
int flexcode_max_terms(Eigen::Index n);

/// 16 equally spaced values on [0.5, 2].
std::vector<double> flexzboost_alphas();

FlexcodeFit fit_flexcode(const Dataset& ds, FlexBackend backend, std::uint64_t seed,
                         const FlexcodeOptions& options = {});

/// GBT backend (100 rounds, depth 4, lr 0.1) with sharpening chosen by CV over
/// flexzboost_alphas() plus any `extra_alphas`.
FlexcodeFit fit_flexzboost(const Dataset& ds, std::uint64_t seed, const std::vector<double>& extra_alphas = {});

/// Series density on the grid: zero outside the training response range,
/// clamped at 0, raised to alpha, renormalized in y units.
GridDensity flexcode_density(const CosineBasis& basis, const Eigen::VectorXd& coefs, double alpha,
                             const EvalGrid& grid);

GridDensity flexcode_predict(const FlexcodeFit& fit, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                             const EvalGrid& grid);

struct QuantileTreeParams {
    int rounds = 100;
    int max_depth = 4;
    double learning_rate = 0.1;
    double min_leaf = 5.0;
};

/// 0.02, 0.04, ..., 0.98
std::vector<double> quantile_tree_levels();

struct QuantileTreeModel {
    Eigen::Index n_features = 0;
    std::vector<double> levels;
    std::vector<GbtModel> models;  // one pinball model per level
};

QuantileTreeModel fit_quantile_tree(const Dataset& ds, const QuantileTreeParams& params, std::uint64_t seed);

/// The 49 model outputs at x, sorted, as a quantile function.
QuantileFunction quantile_tree_quantiles(const QuantileTreeModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x);

GridDensity quantile_tree_predict(const QuantileTreeModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                                  const EvalGrid& grid);

}  // namespace cde
