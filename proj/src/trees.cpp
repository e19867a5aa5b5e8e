#include "cde/trees.hpp"

#include "cde/random.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <random>
#include <stdexcept>

namespace cde {

using RowMatrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

int RegressionTree::leaf_index(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    int k = 0;
    while (nodes[static_cast<std::size_t>(k)].feature >= 0) {
        const auto& nd = nodes[static_cast<std::size_t>(k)];
        k = x(nd.feature) <= nd.threshold ? nd.left : nd.right;
    }
    return k;
}

Eigen::VectorXd RegressionTree::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return values.row(leaf_index(x)).transpose();
}

double RegressionTree::predict_scalar(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    return values(leaf_index(x), 0);
}

int RegressionTree::depth() const {
    std::vector<int> d(nodes.size(), 0);
    int best = 0;
    for (std::size_t k = 0; k < nodes.size(); ++k) {
        const auto& nd = nodes[k];
        if (nd.feature < 0) continue;
        d[static_cast<std::size_t>(nd.left)] = d[k] + 1;
        d[static_cast<std::size_t>(nd.right)] = d[k] + 1;
        best = std::max(best, d[k] + 1);
    }
    return best;
}

SortedColumns::SortedColumns(const Eigen::MatrixXd& X) : X_(&X) {
    order_.resize(static_cast<std::size_t>(X.cols()));
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        auto& o = order_[static_cast<std::size_t>(j)];
        o.resize(static_cast<std::size_t>(X.rows()));
        std::iota(o.begin(), o.end(), 0);
        std::stable_sort(o.begin(), o.end(), [&](int a, int b) { return X(a, j) < X(b, j); });
    }
}

namespace {

class TreeBuilder {
public:
    TreeBuilder(const SortedColumns& cols, const Eigen::MatrixXd& Y, const TreeOptions& opt, std::uint64_t seed,
                TreeFitExtras extras)
        : X_(cols.data()), Y_(Y), opt_(opt), rng_(seed), extras_(extras) {
        const auto n = X_.rows();
        const auto d = X_.cols();
        w_.assign(static_cast<std::size_t>(n), 1.0);
        if (extras.weights) {
            if (extras.weights->size() != n) throw std::invalid_argument("tree: weight length mismatch");
            for (Eigen::Index i = 0; i < n; ++i) w_[static_cast<std::size_t>(i)] = (*extras.weights)(i);
        }
        order_.resize(static_cast<std::size_t>(d));
        for (Eigen::Index j = 0; j < d; ++j) {
            auto& o = order_[static_cast<std::size_t>(j)];
            o.reserve(static_cast<std::size_t>(n));
            for (int r : cols.order(j)) {
                if (w_[static_cast<std::size_t>(r)] > 0.0) o.push_back(r);
            }
        }
        if (order_.empty() || order_[0].empty()) throw std::invalid_argument("tree: no training rows");
        goes_left_.assign(static_cast<std::size_t>(n), 0);
        scratch_.resize(order_[0].size());
        sum_l_.resize(Y.cols());
        m_features_ = std::max<Eigen::Index>(1, static_cast<Eigen::Index>(std::floor(opt.feature_fraction * d + 1e-9)));
        m_features_ = std::min(m_features_, d);
        if (extras.leaf_of_row) extras.leaf_of_row->assign(static_cast<std::size_t>(n), -1);
    }

    RegressionTree run() {
        tree_.values.resize(0, Y_.cols());
        rows_.clear();
        build(0, order_[0].size(), 0);
        tree_.values.resize(static_cast<Eigen::Index>(rows_.size()), Y_.cols());
        for (std::size_t k = 0; k < rows_.size(); ++k) tree_.values.row(static_cast<Eigen::Index>(k)) = rows_[k];
        return std::move(tree_);
    }

private:
    struct Split {
        Eigen::Index feature = -1;
        double threshold = 0.0;
        double gain = 0.0;
    };

    int build(std::size_t b, std::size_t e, int depth) {
        const int id = static_cast<int>(tree_.nodes.size());
        tree_.nodes.emplace_back();
        const auto k = Y_.cols();
        Eigen::RowVectorXd sum = Eigen::RowVectorXd::Zero(k);
        double wsum = 0.0;
        const auto& rows = order_[0];
        for (std::size_t i = b; i < e; ++i) {
            const int r = rows[i];
            const double w = w_[static_cast<std::size_t>(r)];
            wsum += w;
            sum += w * Y_.row(r);
        }
        const Eigen::RowVectorXd mean = sum / wsum;
        rows_.push_back(mean);

        double sse = 0.0;
        double ss = 0.0;
        for (std::size_t i = b; i < e; ++i) {
            const int r = rows[i];
            const double w = w_[static_cast<std::size_t>(r)];
            sse += w * (Y_.row(r) - mean).squaredNorm();
            ss += w * Y_.row(r).squaredNorm();
        }
        const bool pure = sse <= 1e-18 * ss;
        Split best;
        if (depth < opt_.max_depth && e - b >= 2 && wsum >= 2.0 * opt_.min_leaf && !pure) {
            best = find_split(b, e, sum, wsum, sse);
        }
        if (best.feature < 0) {
            if (extras_.leaf_of_row) {
                for (std::size_t i = b; i < e; ++i) (*extras_.leaf_of_row)[static_cast<std::size_t>(rows[i])] = id;
            }
            return id;
        }

        for (std::size_t i = b; i < e; ++i) {
            const int r = rows[i];
            goes_left_[static_cast<std::size_t>(r)] = X_(r, best.feature) <= best.threshold ? 1 : 0;
        }
        std::size_t n_left = 0;
        for (auto& o : order_) {
            std::size_t l = b;
            std::size_t rcount = 0;
            for (std::size_t i = b; i < e; ++i) {
                const int r = o[i];
                if (goes_left_[static_cast<std::size_t>(r)]) {
                    o[l++] = r;
                } else {
                    scratch_[rcount++] = r;
                }
            }
            std::copy(scratch_.begin(), scratch_.begin() + static_cast<std::ptrdiff_t>(rcount),
                      o.begin() + static_cast<std::ptrdiff_t>(l));
            n_left = l - b;
        }
        tree_.nodes[static_cast<std::size_t>(id)].feature = static_cast<int>(best.feature);
        tree_.nodes[static_cast<std::size_t>(id)].threshold = best.threshold;
        const int left = build(b, b + n_left, depth + 1);
        const int right = build(b + n_left, e, depth + 1);
        tree_.nodes[static_cast<std::size_t>(id)].left = left;
        tree_.nodes[static_cast<std::size_t>(id)].right = right;
        return id;
    }

    Split find_split(std::size_t b, std::size_t e, const Eigen::RowVectorXd& sum, double wsum, double sse) {
        const auto d = X_.cols();
        std::vector<Eigen::Index> feats(static_cast<std::size_t>(d));
        std::iota(feats.begin(), feats.end(), 0);
        if (m_features_ < d) {
            // Partial Fisher-Yates: the first m entries are the sampled features.
            for (Eigen::Index i = 0; i < m_features_; ++i) {
                std::uniform_int_distribution<Eigen::Index> pick(i, d - 1);
                std::swap(feats[static_cast<std::size_t>(i)], feats[static_cast<std::size_t>(pick(rng_))]);
            }
        }
        const auto m = static_cast<std::size_t>(m_features_);
        std::sort(feats.begin(), feats.begin() + static_cast<std::ptrdiff_t>(m));
        std::sort(feats.begin() + static_cast<std::ptrdiff_t>(m), feats.end());

        const double base = sum.squaredNorm() / wsum;
        const double min_gain = 1e-12 * sse;
        Split best;
        best.gain = min_gain;
        for (std::size_t fi = 0; fi < feats.size(); ++fi) {
            // Features beyond the sample are only tried when the sample had no valid split.
            if (fi == m && best.feature >= 0) break;
            scan_feature(feats[fi], b, e, sum, wsum, base, best);
        }
        return best;
    }

    void scan_feature(Eigen::Index j, std::size_t b, std::size_t e, const Eigen::RowVectorXd& sum, double wsum,
                      double base, Split& best) {
        const auto& o = order_[static_cast<std::size_t>(j)];
        sum_l_.setZero();
        double wl = 0.0;
        for (std::size_t i = b; i + 1 < e; ++i) {
            const int r = o[i];
            const double w = w_[static_cast<std::size_t>(r)];
            wl += w;
            sum_l_ += w * Y_.row(r);
            const double x0 = X_(r, j);
            const double x1 = X_(o[i + 1], j);
            if (!(x0 < x1)) continue;
            const double wr = wsum - wl;
            if (wl < opt_.min_leaf || wr < opt_.min_leaf) continue;
            const double gain = sum_l_.squaredNorm() / wl + (sum - sum_l_).squaredNorm() / wr - base;
            if (gain > best.gain) {
                double thr = 0.5 * (x0 + x1);
                if (!(thr < x1)) thr = x0;
                best = {j, thr, gain};
            }
        }
    }

    const Eigen::MatrixXd& X_;
    RowMatrix Y_;
    TreeOptions opt_;
    std::mt19937_64 rng_;
    TreeFitExtras extras_;
    std::vector<double> w_;
    std::vector<std::vector<int>> order_;
    std::vector<char> goes_left_;
    std::vector<int> scratch_;
    Eigen::RowVectorXd sum_l_;
    Eigen::Index m_features_ = 1;
    RegressionTree tree_;
    std::vector<Eigen::RowVectorXd> rows_;
};

}  // namespace

RegressionTree fit_regression_tree(const SortedColumns& cols, const Eigen::MatrixXd& Y, const TreeOptions& options,
                                   std::uint64_t seed, TreeFitExtras extras) {
    if (cols.data().rows() != Y.rows()) throw std::invalid_argument("tree: X and Y row counts differ");
    if (Y.rows() == 0 || Y.cols() == 0) throw std::invalid_argument("tree: empty data");
    if (options.max_depth < 0 || !(options.min_leaf > 0.0)) throw std::invalid_argument("tree: bad options");
    return TreeBuilder(cols, Y, options, seed, extras).run();
}

RegressionTree fit_regression_tree(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, const TreeOptions& options,
                                   std::uint64_t seed) {
    if (X.rows() == 0) throw std::invalid_argument("tree: empty data");
    const SortedColumns cols(X);
    return fit_regression_tree(cols, Y, options, seed);
}

Eigen::VectorXd RegressionForest::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    Eigen::VectorXd out = Eigen::VectorXd::Zero(trees.front().outputs());
    for (const auto& t : trees) out += t.values.row(t.leaf_index(x)).transpose();
    return out / static_cast<double>(trees.size());
}

Eigen::MatrixXd RegressionForest::predict_rows(const Eigen::MatrixXd& X) const {
    Eigen::MatrixXd out(X.rows(), trees.front().outputs());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out.row(i) = predict(X.row(i)).transpose();
    return out;
}

RegressionForest fit_forest(const Eigen::MatrixXd& X, const Eigen::MatrixXd& Y, std::uint64_t seed,
                            const ForestOptions& options) {
    if (X.rows() == 0) throw std::invalid_argument("forest: empty data");
    if (options.trees < 1) throw std::invalid_argument("forest: need at least one tree");
    const SortedColumns cols(X);
    const TreeOptions topt{options.max_depth, options.min_leaf, options.feature_fraction};
    const auto n = X.rows();
    RegressionForest forest;
    forest.trees.reserve(static_cast<std::size_t>(options.trees));
    Eigen::VectorXd counts(n);
    for (int t = 0; t < options.trees; ++t) {
        std::mt19937_64 rng(derive_seed(seed, {0x62u, static_cast<std::uint64_t>(t)}));
        std::uniform_int_distribution<Eigen::Index> pick(0, n - 1);
        counts.setZero();
        for (Eigen::Index i = 0; i < n; ++i) counts(pick(rng)) += 1.0;
        TreeFitExtras extras;
        extras.weights = &counts;
        forest.trees.push_back(
            fit_regression_tree(cols, Y, topt, derive_seed(seed, {0x74u, static_cast<std::uint64_t>(t)}), extras));
    }
    return forest;
}

double empirical_quantile(std::vector<double> values, double tau) {
    if (values.empty()) throw std::invalid_argument("empirical_quantile: empty sample");
    if (!(tau > 0.0 && tau < 1.0)) throw std::invalid_argument("quantile level must lie in (0,1)");
    const auto n = values.size();
    auto k = static_cast<std::size_t>(std::ceil(tau * static_cast<double>(n) - 1e-9));
    k = std::clamp<std::size_t>(k, 1, n);
    std::nth_element(values.begin(), values.begin() + static_cast<std::ptrdiff_t>(k - 1), values.end());
    return values[k - 1];
}

double GbtModel::predict(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    double f = init;
    for (const auto& t : trees) f += options.learning_rate * t.predict_scalar(x);
    return f;
}

Eigen::VectorXd GbtModel::predict_rows(const Eigen::MatrixXd& X) const {
    Eigen::VectorXd out(X.rows());
    for (Eigen::Index i = 0; i < X.rows(); ++i) out(i) = predict(X.row(i));
    return out;
}

GbtModel fit_gbt(const SortedColumns& cols, const Eigen::VectorXd& y, const GbtOptions& options, std::uint64_t seed) {
    const auto n = y.size();
    if (n == 0 || cols.data().rows() != n) throw std::invalid_argument("gbt: empty or mismatched data");
    if (options.rounds < 1) throw std::invalid_argument("gbt: rounds must be >= 1");
    if (options.loss == GbtLoss::pinball && !(options.tau > 0.0 && options.tau < 1.0)) {
        throw std::invalid_argument("gbt: pinball level tau must lie in (0,1)");
    }
    GbtModel model;
    model.options = options;
    const bool pinball = options.loss == GbtLoss::pinball;
    const std::vector<double> yv(y.data(), y.data() + n);
    model.init = pinball ? empirical_quantile(yv, options.tau) : y.mean();

    const TreeOptions topt{options.max_depth, options.min_leaf, 1.0};
    Eigen::VectorXd F = Eigen::VectorXd::Constant(n, model.init);
    Eigen::MatrixXd target(n, 1);
    std::vector<int> leaf_of_row;
    std::vector<std::vector<double>> leaf_resid;
    for (int m = 0; m < options.rounds; ++m) {
        if (pinball) {
            for (Eigen::Index i = 0; i < n; ++i) target(i, 0) = options.tau - (y(i) < F(i) ? 1.0 : 0.0);
        } else {
            target.col(0) = y - F;
        }
        TreeFitExtras extras;
        extras.leaf_of_row = &leaf_of_row;
        auto tree = fit_regression_tree(cols, target, topt, derive_seed(seed, {static_cast<std::uint64_t>(m)}), extras);
        if (pinball) {
            // Leaf values become the tau-quantile of the current residuals in that leaf.
            leaf_resid.assign(tree.nodes.size(), {});
            for (Eigen::Index i = 0; i < n; ++i) {
                leaf_resid[static_cast<std::size_t>(leaf_of_row[static_cast<std::size_t>(i)])].push_back(y(i) - F(i));
            }
            for (std::size_t k = 0; k < tree.nodes.size(); ++k) {
                if (!leaf_resid[k].empty()) tree.values(static_cast<Eigen::Index>(k), 0) = empirical_quantile(leaf_resid[k], options.tau);
            }
        }
        for (Eigen::Index i = 0; i < n; ++i) {
            F(i) += options.learning_rate * tree.values(leaf_of_row[static_cast<std::size_t>(i)], 0);
        }
        model.trees.push_back(std::move(tree));
    }
    return model;
}

GbtModel fit_gbt(const Eigen::MatrixXd& X, const Eigen::VectorXd& y, const GbtOptions& options, std::uint64_t seed) {
    if (X.rows() == 0) throw std::invalid_argument("gbt: empty data");
    const SortedColumns cols(X);
    return fit_gbt(cols, y, options, seed);
}

}  // namespace cde
