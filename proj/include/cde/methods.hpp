#pragma once

// Method registry used by the benchmark runner, plus random-search tuning.

#include "cde/core.hpp"
#include "cde/dataset.hpp"
#include "cde/synthetic.hpp"

#include <Eigen/Dense>

#include <cstdint>
#include <functional>
#include <map>
#include <optional>
#include <string>
#include <string_view>
#include <utility>
#include <vector>

namespace cde {

/// Sorted by name so that serialization order is stable.
using Hyperparams = std::map<std::string, double>;

struct SearchSpace {
    std::vector<std::pair<std::string, std::vector<double>>> dims;
    bool empty() const { return dims.empty(); }
};

/// What a method may know about the data beyond the training sample.
struct FitContext {
    std::optional<SyntheticKind> dgp;  // set for built-in synthetic datasets
};

using Predictor = std::function<PredictionRecord(const Eigen::Ref<const Eigen::RowVectorXd>&, const EvalGrid&)>;

struct MethodSpec {
    std::string name;
    SearchSpace space;  // empty: not tuned by random search
    Hyperparams defaults;
    std::function<Predictor(const Dataset&, const Hyperparams&, std::uint64_t, const FitContext&)> fit;
};

/// Throws std::invalid_argument for unknown names.
const MethodSpec& find_method(std::string_view name);
std::vector<std::string> method_names();

/// `draws` configurations sampled uniformly (with replacement) from the grid.
std::vector<Hyperparams> draw_configurations(const SearchSpace& space, int draws, std::uint64_t seed);

struct TuneResult {
    Hyperparams chosen;
    std::vector<Hyperparams> draws;
    std::vector<double> cv_loss;  // +inf where a fold failed
    bool fell_back = false;      // every draw failed; the first draw is used
};

/// Random search scored by mean k-fold CDE loss; ties keep the earlier draw.
/// Methods without a search space return their defaults.
TuneResult tune(const MethodSpec& method, const Dataset& train, std::uint64_t seed, const FitContext& context = {},
                int draws = 8, int folds = 3);

/// Mean CDE loss over k folds for one configuration.
double cross_validated_cde_loss(const MethodSpec& method, const Dataset& train, const Hyperparams& hp,
                                std::uint64_t seed, const FitContext& context, int folds);

}  // namespace cde
