#include "cde/neural.hpp"

#include "cde/random.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numbers>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cde {

Eigen::Index MlpParams::size() const {
    Eigen::Index s = 0;
    for (std::size_t l = 0; l < W.size(); ++l) s += W[l].size() + b[l].size();
    return s;
}

Eigen::VectorXd MlpParams::flatten() const {
    Eigen::VectorXd out(size());
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < W.size(); ++l) {
        out.segment(k, W[l].size()) = W[l].reshaped();
        k += W[l].size();
        out.segment(k, b[l].size()) = b[l];
        k += b[l].size();
    }
    return out;
}

void MlpParams::assign(const Eigen::VectorXd& flat) {
    if (flat.size() != size()) throw std::invalid_argument("MlpParams::assign: size mismatch");
    Eigen::Index k = 0;
    for (std::size_t l = 0; l < W.size(); ++l) {
        W[l].reshaped() = flat.segment(k, W[l].size());
        k += W[l].size();
        b[l] = flat.segment(k, b[l].size());
        k += b[l].size();
    }
}

MlpParams MlpParams::zeros_like() const {
    MlpParams z;
    for (std::size_t l = 0; l < W.size(); ++l) {
        z.W.push_back(Eigen::MatrixXd::Zero(W[l].rows(), W[l].cols()));
        z.b.push_back(Eigen::VectorXd::Zero(b[l].size()));
    }
    return z;
}

MlpParams init_mlp(const std::vector<int>& sizes, std::mt19937_64& rng) {
    if (sizes.size() < 2) throw std::invalid_argument("init_mlp: need input and output sizes");
    MlpParams p;
    for (std::size_t l = 0; l + 1 < sizes.size(); ++l) {
        const int fan_in = sizes[l];
        const int fan_out = sizes[l + 1];
        if (fan_in < 1 || fan_out < 1) throw std::invalid_argument("init_mlp: layer sizes must be positive");
        const double limit = std::sqrt(6.0 / (fan_in + fan_out));
        std::uniform_real_distribution<double> u(-limit, limit);
        Eigen::MatrixXd W(fan_out, fan_in);
        for (Eigen::Index j = 0; j < W.cols(); ++j)
            for (Eigen::Index i = 0; i < W.rows(); ++i) W(i, j) = u(rng);
        p.W.push_back(std::move(W));
        p.b.push_back(Eigen::VectorXd::Zero(fan_out));
    }
    return p;
}

namespace {

struct Activations {
    std::vector<Eigen::MatrixXd> inputs;  // input of each layer
    std::vector<Eigen::MatrixXd> pre;     // hidden pre-activations
    Eigen::MatrixXd out;
};

Activations forward(const MlpParams& p, const Eigen::MatrixXd& X) {
    Activations a;
    Eigen::MatrixXd h = X;
    const std::size_t L = p.layers();
    for (std::size_t l = 0; l < L; ++l) {
        Eigen::MatrixXd z = p.W[l] * h;
        z.colwise() += p.b[l];
        a.inputs.push_back(std::move(h));
        if (l + 1 == L) {
            a.out = std::move(z);
        } else {
            h = z.cwiseMax(0.0);
            a.pre.push_back(std::move(z));
        }
    }
    return a;
}

void backward(const MlpParams& p, const Activations& a, Eigen::MatrixXd G, MlpParams& grad) {
    grad = p.zeros_like();
    for (std::size_t l = p.layers(); l-- > 0;) {
        grad.W[l] = G * a.inputs[l].transpose();
        grad.b[l] = G.rowwise().sum();
        if (l > 0) {
            G = (p.W[l].transpose() * G).cwiseProduct((a.pre[l - 1].array() > 0.0).cast<double>().matrix());
        }
    }
}

double log_sum_exp(const Eigen::VectorXd& v) {
    const double m = v.maxCoeff();
    return m + std::log((v.array() - m).exp().sum());
}

}  // namespace

Eigen::MatrixXd mlp_forward(const MlpParams& p, const Eigen::MatrixXd& X, std::vector<Eigen::MatrixXd>* pre) {
    auto a = forward(p, X);
    if (pre) *pre = std::move(a.pre);
    return a.out;
}

double mdn_batch_loss(const MlpParams& p, int K, const Eigen::MatrixXd& X, const Eigen::VectorXd& y, MlpParams* grad) {
    if (K < 1) throw std::invalid_argument("mixture needs at least one component");
    if (p.W.back().rows() != 3 * K) throw std::invalid_argument("network output is not 3K wide");
    if (X.cols() != y.size() || y.size() == 0) throw std::invalid_argument("mdn: batch shape mismatch");
    const auto a = forward(p, X);
    const auto B = X.cols();
    const double half_log_2pi = 0.5 * std::log(2.0 * std::numbers::pi);
    Eigen::MatrixXd G(3 * K, B);
    double total = 0.0;
    Eigen::VectorXd logits(K), joint(K);
    for (Eigen::Index j = 0; j < B; ++j) {
        const auto o = a.out.col(j);
        logits = o.head(K);
        const double lse_logits = log_sum_exp(logits);
        for (int k = 0; k < K; ++k) {
            const double log_sigma = std::max(o(2 * K + k), kMdnLogSigmaFloor);
            const double zk = (y(j) - o(K + k)) * std::exp(-log_sigma);
            joint(k) = logits(k) - lse_logits - 0.5 * zk * zk - log_sigma - half_log_2pi;
        }
        const double ll = log_sum_exp(joint);
        total -= ll;
        if (grad) {
            for (int k = 0; k < K; ++k) {
                const double resp = std::exp(joint(k) - ll);
                const double prior = std::exp(logits(k) - lse_logits);
                const bool clamped = o(2 * K + k) < kMdnLogSigmaFloor;
                const double log_sigma = std::max(o(2 * K + k), kMdnLogSigmaFloor);
                const double inv_var = std::exp(-2.0 * log_sigma);
                const double diff = y(j) - o(K + k);
                G(k, j) = prior - resp;
                G(K + k, j) = -resp * diff * inv_var;
                G(2 * K + k, j) = clamped ? 0.0 : resp * (1.0 - diff * diff * inv_var);
            }
        }
    }
    const double n = static_cast<double>(B);
    if (grad) backward(p, a, G / n, *grad);
    return total / n;
}

double catmlp_batch_loss(const MlpParams& p, const Eigen::MatrixXd& X, const std::vector<int>& labels, MlpParams* grad) {
    if (X.cols() != static_cast<Eigen::Index>(labels.size()) || labels.empty()) {
        throw std::invalid_argument("catmlp: batch shape mismatch");
    }
    const auto a = forward(p, X);
    const auto bins = a.out.rows();
    const auto B = X.cols();
    Eigen::MatrixXd G(bins, B);
    double total = 0.0;
    for (Eigen::Index j = 0; j < B; ++j) {
        const int c = labels[static_cast<std::size_t>(j)];
        if (c < 0 || c >= bins) throw std::invalid_argument("catmlp: label outside the bin range");
        const Eigen::VectorXd o = a.out.col(j);
        const double lse = log_sum_exp(o);
        total -= o(c) - lse;
        if (grad) {
            G.col(j) = (o.array() - lse).exp().matrix();
            G(c, j) -= 1.0;
        }
    }
    const double n = static_cast<double>(B);
    if (grad) backward(p, a, G / n, *grad);
    return total / n;
}

FeatureScaler FeatureScaler::fit(const Eigen::MatrixXd& X) {
    FeatureScaler s;
    s.mean = X.colwise().mean().transpose();
    s.scale = Eigen::VectorXd::Ones(X.cols());
    for (Eigen::Index j = 0; j < X.cols(); ++j) {
        const double sd = std::sqrt((X.col(j).array() - s.mean(j)).square().mean());
        if (sd > 1e-12 * std::max(1.0, std::abs(s.mean(j)))) s.scale(j) = sd;
    }
    return s;
}

Eigen::MatrixXd FeatureScaler::columns(const Eigen::MatrixXd& X) const {
    if (X.cols() != mean.size()) throw std::invalid_argument("feature dimension mismatch");
    return ((X.rowwise() - mean.transpose()).array().rowwise() / scale.transpose().array()).matrix().transpose();
}

Eigen::VectorXd FeatureScaler::column(const Eigen::Ref<const Eigen::RowVectorXd>& x) const {
    if (x.size() != mean.size()) {
        throw std::invalid_argument("covariate row has " + std::to_string(x.size()) + " entries, model expects " +
                                    std::to_string(mean.size()));
    }
    return ((x.transpose() - mean).array() / scale.array()).matrix();
}

namespace {

struct Adam {
    double lr = 0.01;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    long t = 0;
    Eigen::VectorXd m, v;

    void step(MlpParams& p, const MlpParams& g) {
        Eigen::VectorXd theta = p.flatten();
        const Eigen::VectorXd grad = g.flatten();
        if (m.size() == 0) {
            m = Eigen::VectorXd::Zero(theta.size());
            v = Eigen::VectorXd::Zero(theta.size());
        }
        ++t;
        m = beta1 * m + (1.0 - beta1) * grad;
        v = beta2 * v + (1.0 - beta2) * grad.cwiseProduct(grad);
        const double c1 = 1.0 - std::pow(beta1, static_cast<double>(t));
        const double c2 = 1.0 - std::pow(beta2, static_cast<double>(t));
        theta.array() -= lr * (m.array() / c1) / ((v.array() / c2).sqrt() + eps);
        p.assign(theta);
    }
};

Eigen::MatrixXd gather_columns(const Eigen::MatrixXd& X, const std::vector<Eigen::Index>& idx) {
    Eigen::MatrixXd out(X.rows(), static_cast<Eigen::Index>(idx.size()));
    for (std::size_t i = 0; i < idx.size(); ++i) out.col(static_cast<Eigen::Index>(i)) = X.col(idx[i]);
    return out;
}

void check_config(const TrainConfig& c, Eigen::Index n) {
    if (n < 20) throw std::invalid_argument("neural fits need at least 20 observations, got " + std::to_string(n));
    if (!(c.learning_rate > 0.0) || c.epochs < 1 || c.hidden < 1 || c.patience < 1 || c.batch_size < 0) {
        throw std::invalid_argument("invalid training configuration");
    }
    if (!(c.validation_fraction > 0.0 && c.validation_fraction < 1.0)) {
        throw std::invalid_argument("validation fraction must lie in (0,1)");
    }
}

// Mini-batch Adam with early stopping on a held-out slice; restores the best
// validation weights. `loss(params, columns, grad)` evaluates a batch of sample indices.
template <class Loss>
TrainTrace train(MlpParams& params, Eigen::Index n, const TrainConfig& config, Loss&& loss) {
    std::mt19937_64 rng(derive_seed(config.seed, {0x5eu}));
    std::vector<Eigen::Index> perm(static_cast<std::size_t>(n));
    std::iota(perm.begin(), perm.end(), 0);
    std::shuffle(perm.begin(), perm.end(), rng);
    const auto n_val = std::clamp<std::size_t>(
        static_cast<std::size_t>(std::lround(config.validation_fraction * static_cast<double>(n))), 1,
        static_cast<std::size_t>(n) - 1);
    const std::vector<Eigen::Index> val(perm.begin(), perm.begin() + static_cast<std::ptrdiff_t>(n_val));
    std::vector<Eigen::Index> tr(perm.begin() + static_cast<std::ptrdiff_t>(n_val), perm.end());
    const std::size_t batch = config.batch_size > 0 ? static_cast<std::size_t>(config.batch_size)
                              : tr.size() <= 1024 ? tr.size()
                                                  : 256;

    Adam adam;
    adam.lr = config.learning_rate;
    MlpParams grad;
    MlpParams best = params;
    TrainTrace trace;
    trace.best_val_loss = std::numeric_limits<double>::infinity();
    int wait = 0;
    for (int epoch = 1; epoch <= config.epochs; ++epoch) {
        std::shuffle(tr.begin(), tr.end(), rng);
        for (std::size_t s = 0; s < tr.size(); s += batch) {
            const std::vector<Eigen::Index> idx(tr.begin() + static_cast<std::ptrdiff_t>(s),
                                                tr.begin() + static_cast<std::ptrdiff_t>(std::min(s + batch, tr.size())));
            const double l = loss(params, idx, &grad);
            if (!std::isfinite(l)) {
                throw std::runtime_error("training diverged: non-finite loss at epoch " + std::to_string(epoch));
            }
            adam.step(params, grad);
        }
        const double v = loss(params, val, nullptr);
        if (!std::isfinite(v)) {
            throw std::runtime_error("training diverged: non-finite validation loss at epoch " + std::to_string(epoch));
        }
        if (epoch == 1) trace.first_val_loss = v;
        trace.epochs_run = epoch;
        if (v < trace.best_val_loss) {
            trace.best_val_loss = v;
            trace.best_epoch = epoch;
            best = params;
            wait = 0;
        } else if (++wait >= config.patience) {
            break;
        }
    }
    params = std::move(best);
    return trace;
}

}  // namespace

MdnModel mdn_fit(const Dataset& ds, const TrainConfig& config, int K) {
    if (K < 1) throw std::invalid_argument("mixture needs at least one component");
    if (ds.features.rows() != ds.response.size()) throw std::invalid_argument("mdn: shape mismatch");
    check_config(config, ds.n());
    MdnModel model;
    model.head.K = K;
    model.head.y_mean = ds.response.mean();
    model.head.y_sd = std::sqrt((ds.response.array() - model.head.y_mean).square().mean());
    if (!(model.head.y_sd > 0.0)) throw std::invalid_argument("mdn: constant response");
    model.scaler = FeatureScaler::fit(ds.features);
    const Eigen::MatrixXd X = model.scaler.columns(ds.features);
    const Eigen::VectorXd y = (ds.response.array() - model.head.y_mean) / model.head.y_sd;

    std::mt19937_64 rng(derive_seed(config.seed, {0x1au}));
    model.params = init_mlp({static_cast<int>(X.rows()), config.hidden, 3 * K}, rng);
    model.trace = train(model.params, ds.n(), config, [&](const MlpParams& p, const std::vector<Eigen::Index>& idx, MlpParams* g) {
        Eigen::VectorXd yb(static_cast<Eigen::Index>(idx.size()));
        for (std::size_t i = 0; i < idx.size(); ++i) yb(static_cast<Eigen::Index>(i)) = y(idx[i]);
        return mdn_batch_loss(p, K, gather_columns(X, idx), yb, g);
    });
    return model;
}

Mixture mdn_mixture(const MdnModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    const int K = model.head.K;
    const Eigen::VectorXd o = mlp_forward(model.params, model.scaler.column(x)).col(0);
    Mixture m;
    const Eigen::VectorXd logits = o.head(K);
    m.weights = (logits.array() - log_sum_exp(logits)).exp().matrix();
    m.means = (o.segment(K, K).array() * model.head.y_sd + model.head.y_mean).matrix();
    m.sigmas = (o.tail(K).array().max(kMdnLogSigmaFloor).exp() * model.head.y_sd).matrix();
    return m;
}

GridDensity mixture_density(const Mixture& m, const EvalGrid& grid) {
    GridDensity gd{grid, std::vector<double>(grid.size(), 0.0)};
    const double inv_sqrt_2pi = 1.0 / std::sqrt(2.0 * std::numbers::pi);
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid.at(i);
        double f = 0.0;
        for (Eigen::Index k = 0; k < m.weights.size(); ++k) {
            const double z = (t - m.means(k)) / m.sigmas(k);
            f += m.weights(k) * std::exp(-0.5 * z * z) * inv_sqrt_2pi / m.sigmas(k);
        }
        gd.values[i] = f;
    }
    if (std::all_of(gd.values.begin(), gd.values.end(), [](double v) { return !(v > 0.0); })) {
        const double centre = m.weights.dot(m.means);
        const double pos = std::clamp((centre - grid.lo()) / grid.step(), 0.0, static_cast<double>(grid.size() - 1));
        gd.values[static_cast<std::size_t>(std::lround(pos))] = 1.0;
    }
    return normalize_density(std::move(gd));
}

GridDensity mdn_density(const MdnModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x, const EvalGrid& grid) {
    return mixture_density(mdn_mixture(model, x), grid);
}

int CatMlpHead::bin_of(double y) const {
    if (y < y_min || y > y_max) return -1;
    const auto b = static_cast<int>(std::floor((y - y_min) / width()));
    return std::min(b, n_bins - 1);
}

CatMlpModel catmlp_fit(const Dataset& ds, const TrainConfig& config, int n_bins) {
    if (n_bins < 2) throw std::invalid_argument("catmlp needs at least 2 bins");
    if (ds.features.rows() != ds.response.size()) throw std::invalid_argument("catmlp: shape mismatch");
    check_config(config, ds.n());
    CatMlpModel model;
    model.head = {n_bins, ds.response.minCoeff(), ds.response.maxCoeff()};
    if (!(model.head.y_max > model.head.y_min)) {
        throw std::invalid_argument("catmlp: all responses fall in one bin (constant response)");
    }
    std::vector<int> labels(static_cast<std::size_t>(ds.n()));
    for (Eigen::Index i = 0; i < ds.n(); ++i) labels[static_cast<std::size_t>(i)] = model.head.bin_of(ds.response(i));
    if (std::all_of(labels.begin(), labels.end(), [&](int l) { return l == labels.front(); })) {
        throw std::invalid_argument("catmlp: all responses fall in one bin");
    }
    model.scaler = FeatureScaler::fit(ds.features);
    const Eigen::MatrixXd X = model.scaler.columns(ds.features);
    std::mt19937_64 rng(derive_seed(config.seed, {0x1bu}));
    model.params = init_mlp({static_cast<int>(X.rows()), config.hidden, config.hidden, n_bins}, rng);
    model.trace = train(model.params, ds.n(), config, [&](const MlpParams& p, const std::vector<Eigen::Index>& idx, MlpParams* g) {
        std::vector<int> lb(idx.size());
        for (std::size_t i = 0; i < idx.size(); ++i) lb[i] = labels[static_cast<std::size_t>(idx[i])];
        return catmlp_batch_loss(p, gather_columns(X, idx), lb, g);
    });
    return model;
}

Eigen::VectorXd catmlp_probabilities(const CatMlpModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x) {
    const Eigen::VectorXd o = mlp_forward(model.params, model.scaler.column(x)).col(0);
    return (o.array() - log_sum_exp(o)).exp().matrix();
}

GridDensity catmlp_bins_to_density(const CatMlpHead& head, const Eigen::VectorXd& probs, const EvalGrid& grid) {
    if (probs.size() != head.n_bins) throw std::invalid_argument("catmlp: probability vector has wrong length");
    const double w = head.width();
    const int B = head.n_bins;
    GridDensity gd{grid, std::vector<double>(grid.size(), 0.0)};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid.at(i);
        if (t < head.y_min || t > head.y_max) continue;
        const double pos = (t - head.y_min) / w - 0.5;  // fractional centre index
        double h;
        if (pos <= 0.0) {
            h = probs(0);
        } else if (pos >= B - 1) {
            h = probs(B - 1);
        } else {
            const auto k = static_cast<Eigen::Index>(std::floor(pos));
            const double frac = pos - static_cast<double>(k);
            h = probs(k) + frac * (probs(k + 1) - probs(k));
        }
        gd.values[i] = std::max(h, 0.0) / w;
    }
    if (std::all_of(gd.values.begin(), gd.values.end(), [](double v) { return !(v > 0.0); })) {
        Eigen::Index top;
        probs.maxCoeff(&top);
        const double pos = std::clamp((head.center(static_cast<int>(top)) - grid.lo()) / grid.step(), 0.0,
                                      static_cast<double>(grid.size() - 1));
        gd.values[static_cast<std::size_t>(std::lround(pos))] = 1.0;
    }
    return normalize_density(std::move(gd));
}

GridDensity catmlp_density(const CatMlpModel& model, const Eigen::Ref<const Eigen::RowVectorXd>& x,
                           const EvalGrid& grid) {
    return catmlp_bins_to_density(model.head, catmlp_probabilities(model, x), grid);
}

}  // namespace cde
