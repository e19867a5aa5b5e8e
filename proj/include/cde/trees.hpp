#pragma once

// CART regression trees (exact greedy splits on presorted columns), bagged
// forests and gradient boosting with squared or pinball loss.

#include <Eigen/Dense>

#include <cstdint>
#include <vector>

namespace cde {

struct TreeOptions {
    int max_depth = 8;
    double min_leaf = 1.0;          // minimum total sample weight per child
    double feature_fraction = 1.0;  // features tried per split: max(1, floor(fraction * d))
};

struct RegressionTree {
    struct Node {
        int feature = -1;  // -1 marks a leaf
        double threshold = 0.0;
        int left = -1;
        int right = -1;
    };

    std::vector<Node> nodes;  // nodes[0] is the root
    Eigen::MatrixXd values;   // one row per node: weighted mean of its targets

    int leaf_index(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    Eigen::VectorXd predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    double predict_scalar(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    int depth() const;
    Eigen::Index outputs() const { return values.cols(); }
};

/// Per-feature row orderings, computed once and shared by many tree fits.
class SortedColumns {
public:
    explicit SortedColumns(const Eigen::MatrixXd& X);
    const Eigen::MatrixXd& data() const { return *X_; }
    const std::vector<int>& order(Eigen::Index feature) const { return order_[static_cast<std::size_t>(feature)]; }

private:
    const Eigen::MatrixXd* X_;
    std::vector<std::vector<int>> order_;
};

struct TreeFitExtras {
    const Eigen::VectorXd* weights = nullptr;  // rows with weight 0 are left out
    std::vector<int>* leaf_of_row = nullptr;   // filled for rows with positive weight, -1 otherwise
};

/// Greedy variance-reduction tree on targets Y (n x k; splits minimize the summed
/// squared error over the k columns). Ties prefer the lower feature index, then
/// the lower threshold; thresholds are midpoints between adjacent distinct values.
RegressionTree fit_regression_tree(const SortedColumns& cols, const Eigen::MatrixXd& Y, const TreeOptions& options,
                                   std::uint64_t seed, TreeFitExtras extras = {});
RegressionTree fit_regression_tree(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const TreeOptions& options,
                                   std::uint64_t seed);

struct ForestOptions {
    int trees = 100;
    int max_depth = 8;
    double min_leaf = 1.0;
    double feature_fraction = 1.0 / 3.0;
};

struct RegressionForest {
    std::vector<RegressionTree> trees;
    Eigen::VectorXd predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    Eigen::MatrixXd predict_rows(const Eigen::MatrixXd& X) const;
};

/// Bootstrap-bagged trees; identical seeds give identical forests.
RegressionForest fit_forest(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, std::uint64_t seed,
                            const ForestOptions& options = {});

enum class GbtLoss { squared, pinball };

struct GbtOptions {
    GbtLoss loss = GbtLoss::squared;
    double tau = 0.5;
    int rounds = 100;
    int max_depth = 4;
    double learning_rate = 0.1;
    double min_leaf = 1.0;
};

struct GbtModel {
    GbtOptions options;
    double init = 0.0;
    std::vector<RegressionTree> trees;

    double predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
    Eigen::VectorXd predict_rows(const Eigen::MatrixXd& X) const;
};

/// Lower empirical tau-quantile: the ceil(tau * n)-th order statistic.
double empirical_quantile(std::vector<double> values, double tau);

GbtModel fit_gbt(const SortedColumns& cols, const Eigen::VectorXd& y, const GbtOptions& options, std::uint64_t seed);
GbtModel fit_gbt(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GbtOptions& options, std::uint64_t seed);

}  // namespace cde
