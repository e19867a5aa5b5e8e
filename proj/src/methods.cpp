#include "cde/methods.hpp"

#include "cde/flexcode.hpp"
#include "cde/neural.hpp"
#include "cde/parametric.hpp"
#include "cde/random.hpp"
#include "cde/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <memory>
#include <numeric>
#include <random>
#include <stdexcept>

namespace cde {

namespace {

using Row = Eigen::Ref<const Eigen::RowVectorXd>;

template <class Fit>
MethodSpec parametric(std::string name, Fit fit) {
    MethodSpec m;
    m.name = std::move(name);
    m.fit = [fit](const Dataset& ds, const Hyperparams&, std::uint64_t, const FitContext&) -> Predictor {
        auto model = std::make_shared<ParametricFit>(fit(ds));
        return [model](const Row& x, const EvalGrid& grid) { return PredictionRecord{predict_parametric(*model, x, grid), {}}; };
    };
    return m;
}

std::vector<MethodSpec> parametric_family() {
    std::vector<MethodSpec> out;
    for (bool ridge : {false, true}) {
        const std::string suffix = ridge ? "-Ridge" : "";
        const auto cfg = ridge ? std::optional<RidgeConfig>(RidgeConfig::standard()) : std::nullopt;
        out.push_back(parametric("LinearGauss-Homo" + suffix, [cfg](const Dataset& ds) { return ParametricFit(fit_gauss_homo(ds, cfg)); }));
        out.push_back(parametric("LinearGauss-Hetero" + suffix, [cfg](const Dataset& ds) { return ParametricFit(fit_gauss_hetero(ds, cfg)); }));
        out.push_back(parametric("Student-t" + suffix, [cfg](const Dataset& ds) { return ParametricFit(fit_student_t(ds, cfg)); }));
        out.push_back(parametric("LogNormal-Homo" + suffix, [cfg](const Dataset& ds) { return ParametricFit(fit_lognormal(ds, false, cfg)); }));
        out.push_back(parametric("LogNormal-Hetero" + suffix, [cfg](const Dataset& ds) { return ParametricFit(fit_lognormal(ds, true, cfg)); }));
        out.push_back(parametric("Gamma-GLM" + suffix, [cfg](const Dataset& ds) { return ParametricFit(fit_gamma_glm(ds, cfg)); }));
    }
    return out;
}

int as_int(const Hyperparams& hp, const std::string& key) {
    const auto it = hp.find(key);
    if (it == hp.end()) throw std::invalid_argument("missing hyperparameter '" + key + "'");
    return static_cast<int>(std::lround(it->second));
}

double as_double(const Hyperparams& hp, const std::string& key) {
    const auto it = hp.find(key);
    if (it == hp.end()) throw std::invalid_argument("missing hyperparameter '" + key + "'");
    return it->second;
}

TrainConfig train_config(const Hyperparams& hp, std::uint64_t seed) {
    TrainConfig c;
    c.hidden = as_int(hp, "hidden");
    c.learning_rate = as_double(hp, "lr");
    c.epochs = as_int(hp, "epochs");
    c.seed = seed;
    return c;
}

std::vector<MethodSpec> build_registry() {
    std::vector<MethodSpec> reg = parametric_family();

    MethodSpec rf;
    rf.name = "FlexCode-RF";
    rf.fit = [](const Dataset& ds, const Hyperparams&, std::uint64_t seed, const FitContext&) -> Predictor {
        auto model = std::make_shared<FlexcodeFit>(fit_flexcode(ds, FlexBackend::forest, seed));
        return [model](const Row& x, const EvalGrid& grid) { return PredictionRecord{flexcode_predict(*model, x, grid), {}}; };
    };
    reg.push_back(rf);

    MethodSpec zb;
    zb.name = "FlexZBoost";
    zb.fit = [](const Dataset& ds, const Hyperparams&, std::uint64_t seed, const FitContext&) -> Predictor {
        auto model = std::make_shared<FlexcodeFit>(fit_flexzboost(ds, seed));
        return [model](const Row& x, const EvalGrid& grid) { return PredictionRecord{flexcode_predict(*model, x, grid), {}}; };
    };
    reg.push_back(zb);

    MethodSpec qt;
    qt.name = "Quantile-Tree";
    qt.space.dims = {{"rounds", {50, 100, 200}}, {"depth", {3, 4, 6}}, {"lr", {0.05, 0.1, 0.2}}};
    qt.defaults = {{"rounds", 100}, {"depth", 4}, {"lr", 0.1}};
    qt.fit = [](const Dataset& ds, const Hyperparams& hp, std::uint64_t seed, const FitContext&) -> Predictor {
        QuantileTreeParams p;
        p.rounds = as_int(hp, "rounds");
        p.max_depth = as_int(hp, "depth");
        p.learning_rate = as_double(hp, "lr");
        auto model = std::make_shared<QuantileTreeModel>(fit_quantile_tree(ds, p, seed));
        return [model](const Row& x, const EvalGrid&) { return PredictionRecord{quantile_tree_quantiles(*model, x), {}}; };
    };
    reg.push_back(qt);

    const std::vector<double> lrs{0.005, 0.01, 0.02};
    const std::vector<double> epochs{300, 500, 800};

    MethodSpec mdn;
    mdn.name = "MDN";
    mdn.space.dims = {{"components", {2, 3, 5}}, {"hidden", {16, 32, 64}}, {"lr", lrs}, {"epochs", epochs}};
    mdn.defaults = {{"components", 3}, {"hidden", 32}, {"lr", 0.01}, {"epochs", 500}};
    mdn.fit = [](const Dataset& ds, const Hyperparams& hp, std::uint64_t seed, const FitContext&) -> Predictor {
        auto model = std::make_shared<MdnModel>(mdn_fit(ds, train_config(hp, seed), as_int(hp, "components")));
        return [model](const Row& x, const EvalGrid& grid) { return PredictionRecord{mdn_density(*model, x, grid), {}}; };
    };
    reg.push_back(mdn);

    MethodSpec cat;
    cat.name = "CatMLP";
    cat.space.dims = {{"bins", {30, 50, 100}}, {"hidden", {32, 64, 128}}, {"lr", lrs}, {"epochs", epochs}};
    cat.defaults = {{"bins", 50}, {"hidden", 64}, {"lr", 0.01}, {"epochs", 500}};
    cat.fit = [](const Dataset& ds, const Hyperparams& hp, std::uint64_t seed, const FitContext&) -> Predictor {
        auto model = std::make_shared<CatMlpModel>(catmlp_fit(ds, train_config(hp, seed), as_int(hp, "bins")));
        return [model](const Row& x, const EvalGrid& grid) { return PredictionRecord{catmlp_density(*model, x, grid), {}}; };
    };
    reg.push_back(cat);

    MethodSpec oracle;
    oracle.name = "Oracle";
    oracle.fit = [](const Dataset&, const Hyperparams&, std::uint64_t, const FitContext& ctx) -> Predictor {
        if (!ctx.dgp) throw std::runtime_error("Oracle needs a built-in synthetic dataset");
        const SyntheticKind kind = *ctx.dgp;
        return [kind](const Row& x, const EvalGrid& grid) { return PredictionRecord{synthetic_density(kind, x, grid), {}}; };
    };
    reg.push_back(oracle);

    // Always throws; exercises failure isolation in the runner.
    MethodSpec fail;
    fail.name = "Fail";
    fail.fit = [](const Dataset&, const Hyperparams&, std::uint64_t, const FitContext&) -> Predictor {
        throw std::runtime_error("deliberate failure");
    };
    reg.push_back(fail);
    return reg;
}

const std::vector<MethodSpec>& registry() {
    static const std::vector<MethodSpec> reg = build_registry();
    return reg;
}

}  // namespace

const MethodSpec& find_method(std::string_view name) {
    for (const auto& m : registry())
        if (m.name == name) return m;
    throw std::invalid_argument("unknown method '" + std::string(name) + "'");
}

std::vector<std::string> method_names() {
    std::vector<std::string> out;
    for (const auto& m : registry()) out.push_back(m.name);
    return out;
}

std::vector<Hyperparams> draw_configurations(const SearchSpace& space, int draws, std::uint64_t seed) {
    if (draws < 1) throw std::invalid_argument("need at least one draw");
    std::mt19937_64 rng(seed);
    std::vector<Hyperparams> out;
    for (int k = 0; k < draws; ++k) {
        Hyperparams hp;
        for (const auto& [name, values] : space.dims) {
            if (values.empty()) throw std::invalid_argument("search dimension '" + name + "' has no values");
            std::uniform_int_distribution<std::size_t> pick(0, values.size() - 1);
            hp[name] = values[pick(rng)];
        }
        out.push_back(std::move(hp));
    }
    return out;
}

double cross_validated_cde_loss(const MethodSpec& method, const Dataset& train, const Hyperparams& hp,
                                std::uint64_t seed, const FitContext& context, int folds) {
    const auto n = static_cast<std::size_t>(train.n());
    if (folds < 2 || n < static_cast<std::size_t>(folds)) throw std::invalid_argument("too few rows for cross-validation");
    std::vector<std::size_t> perm(n);
    std::iota(perm.begin(), perm.end(), 0);
    std::mt19937_64 rng(derive_seed(seed, {0xf01du}));
    std::shuffle(perm.begin(), perm.end(), rng);
    double total = 0.0;
    for (int f = 0; f < folds; ++f) {
        std::vector<std::size_t> fit_rows, hold_rows;
        for (std::size_t i = 0; i < n; ++i) (static_cast<int>(i % static_cast<std::size_t>(folds)) == f ? hold_rows : fit_rows).push_back(perm[i]);
        std::sort(fit_rows.begin(), fit_rows.end());
        std::sort(hold_rows.begin(), hold_rows.end());
        const Dataset fit_ds = train.subset(fit_rows);
        const Dataset hold_ds = train.subset(hold_rows);
        const auto grid = make_eval_grid(std::span<const double>(fit_ds.response.data(), fit_rows.size()));
        const Predictor predict = method.fit(fit_ds, hp, derive_seed(seed, {static_cast<std::uint64_t>(f)}), context);
        std::vector<GridDensity> dens;
        dens.reserve(hold_rows.size());
        for (Eigen::Index i = 0; i < hold_ds.n(); ++i) dens.push_back(to_density(predict(hold_ds.features.row(i), grid), grid));
        total += cde_loss(dens, std::span<const double>(hold_ds.response.data(), hold_rows.size()));
    }
    return total / folds;
}

TuneResult tune(const MethodSpec& method, const Dataset& train, std::uint64_t seed, const FitContext& context,
                int draws, int folds) {
    TuneResult r;
    if (method.space.empty()) {
        r.chosen = method.defaults;
        return r;
    }
    r.draws = draw_configurations(method.space, draws, derive_seed(seed, {0xd4a3u}));
    std::size_t best = 0;
    double best_loss = std::numeric_limits<double>::infinity();
    for (std::size_t k = 0; k < r.draws.size(); ++k) {
        double loss;
        try {
            loss = cross_validated_cde_loss(method, train, r.draws[k], derive_seed(seed, {0xc5u, k}), context, folds);
            if (!std::isfinite(loss)) loss = std::numeric_limits<double>::infinity();
        } catch (const std::exception&) {
            loss = std::numeric_limits<double>::infinity();
        }
        r.cv_loss.push_back(loss);
        if (loss < best_loss) {
            best_loss = loss;
            best = k;
        }
    }
    r.fell_back = !std::isfinite(best_loss);
    r.chosen = r.draws[best];
    return r;
}

}  // namespace cde
