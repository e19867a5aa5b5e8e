#pragma once

// Small ReLU networks trained with hand-written backpropagation and Adam:
// a mixture density network and a categorical (binned) MLP.

#include "cde/core.hpp"
#include "cde/dataset.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <random>
#include <vector>

namespace cde {

/// Layer l maps a column of size W[l].cols() to W[l].rows(); ReLU between layers,
/// linear output.
struct MlpParams {
    std::vector<Eigen::MatrixXd> W;
    std::vector<Eigen::VectorXd> b;

    std::size_t layers() const { return W.size(); }
    Eigen::Index size() const;
    Eigen::VectorXd flatten() const;
    void assign(const Eigen::VectorXd& flat);
    MlpParams zeros_like() const;
};

/// Glorot-uniform weights, zero biases.
MlpParams init_mlp(const std::vector<int>& sizes, std::mt19937_64& rng);

/// Network outputs for the columns of X; `pre` (if given) receives the hidden pre-activations.
Eigen::MatrixXd mlp_forward(const MlpParams& p, const Eigen::MatrixXd& X, std::vector<Eigen::MatrixXd>* pre = nullptr);

/// log sigma floor on the standardized response scale (sigma >= 1e-3 sd(y)).
inline constexpr double kMdnLogSigmaFloor = -6.907755278982137;

/// Mean negative log-likelihood of a K-component Gaussian mixture whose
/// parameters are the 3K network outputs [logits, means, log sigmas].
/// X holds one sample per column. `grad` (if given) receives d loss / d params.
double mdn_batch_loss(const MlpParams& p, int K, const Eigen::MatrixXd& X, const Eigen::VectorXd& y,
                      MlpParams* grad = nullptr);

/// Mean softmax cross-entropy against bin labels.
double catmlp_batch_loss(const MlpParams& p, const Eigen::MatrixXd& X, const std::vector<int>& labels,
                         MlpParams* grad = nullptr);

struct TrainConfig {
    double learning_rate = 0.01;
    int epochs = 500;  // upper bound; early stopping may end sooner
    int hidden = 32;
    int batch_size = 0;  // 0: full batch when n <= 1024, else 256
    double validation_fraction = 0.10;
    int patience = 30;
    std::uint64_t seed = 0;
};

struct FeatureScaler {
    Eigen::VectorXd mean;
    Eigen::VectorXd scale;  // 1 for constant columns

    static FeatureScaler fit(const Eigen::MatrixXd& X);
    /// Rows of X as standardized columns (d x n).
    Eigen::MatrixXd columns(const Eigen::MatrixXd& X) const;
    Eigen::VectorXd column(const Eigen::Ref<const Eigen::RowVectorXd>& x) const;
};

struct TrainTrace {
    double first_val_loss = 0.0;
    double best_val_loss = 0.0;
    int best_epoch = 0;
    int epochs_run = 0;
};

struct MdnHead {
    int K = 1;
    double y_mean = 0.0;
    double y_sd = 1.0;
};

struct MdnModel {
    MlpParams params;
    MdnHead head;
    FeatureScaler scaler;
    TrainTrace trace;
};

struct Mixture {
    Eigen::VectorXd weights;
    Eigen::VectorXd means;   // response units
    Eigen::VectorXd sigmas;  // response units
};

MdnModel mdn_fit(const Dataset& ds, const TrainConfig& config, int K);
Mixture mdn_mixture(const MdnModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x);
GridDensity mixture_density(const Mixture& m, const EvalGrid& grid);
GridDensity mdn_density(const MdnModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x, const EvalGrid& grid);

struct CatMlpHead {
    int n_bins = 2;
    double y_min = 0.0;
    double y_max = 1.0;

    double width() const { return (y_max - y_min) / n_bins; }
    /// Equal-width bins over [y_min, y_max]; the last bin is right-inclusive.
    int bin_of(double y) const;
    double center(int b) const { return y_min + (b + 0.5) * width(); }
};

struct CatMlpModel {
    MlpParams params;
    CatMlpHead head;
    FeatureScaler scaler;
    TrainTrace trace;
};

CatMlpModel catmlp_fit(const Dataset& ds, const TrainConfig& config, int n_bins);
Eigen::VectorXd catmlp_probabilities(const CatMlpModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x);

/// Bin probability / width at the bin centres, linearly interpolated onto the
/// grid, held flat from the outer centres to the outer bin edges, zero beyond,
/// then renormalized.
GridDensity catmlp_bins_to_density(const CatMlpHead& head, const Eigen::VectorXd& probs, const EvalGrid& grid);
GridDensity catmlp_density(const CatMlpModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                           const EvalGrid& grid);

}  // namespace cde
