#include "cde/significance.hpp"

#include <boost/math/distributions/students_t.hpp>

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace cde {

std::optional<Metric> parse_metric(std::string_view name) {
    for (Metric m : all_metrics())
        if (metric_name(m) == name) return m;
    return std::nullopt;
}

std::string metric_name(Metric m) {
    switch (m) {
        case Metric::cde_loss: return "cde_loss";
        case Metric::log_lik: return "log_lik";
        case Metric::crps: return "crps";
        case Metric::pit_ks: return "pit_ks";
        case Metric::coverage90: return "coverage90";
        case Metric::fit_time: return "fit_time";
    }
    throw std::logic_error("unknown metric");
}

std::vector<Metric> all_metrics() {
    return {Metric::cde_loss, Metric::log_lik, Metric::crps, Metric::pit_ks, Metric::coverage90, Metric::fit_time};
}

double metric_value(const MetricBundle& b, Metric m) {
    switch (m) {
        case Metric::cde_loss: return b.cde_loss;
        case Metric::log_lik: return b.log_lik;
        case Metric::crps: return b.crps;
        case Metric::pit_ks: return b.pit_ks;
        case Metric::coverage90: return b.coverage90;
        case Metric::fit_time: return b.fit_time_s + b.predict_time_s;
    }
    throw std::logic_error("unknown metric");
}

double rank_key(Metric m, double value) {
    if (m == Metric::log_lik) return -value;
    if (m == Metric::coverage90) return std::abs(value - 0.9);
    return value;
}

Direction metric_direction(Metric m) {
    return m == Metric::log_lik ? Direction::higher_better : Direction::lower_better;
}

WelchResult welch_one_sided(double mean_f, double se_f, int n_f, double mean_c, double se_c, int n_c,
                            Direction direction) {
    if (!(se_f >= 0.0) || !(se_c >= 0.0)) throw std::invalid_argument("standard errors must be non-negative");
    if (se_f == 0.0 && se_c == 0.0) throw std::invalid_argument("both standard errors are zero");
    if (n_f < 2 || n_c < 2) throw std::invalid_argument("Welch test needs at least two repetitions per method");
    const double vf = se_f * se_f;
    const double vc = se_c * se_c;
    WelchResult r;
    const double gap = direction == Direction::lower_better ? mean_c - mean_f : mean_f - mean_c;
    r.t = gap / std::sqrt(vf + vc);
    r.df = (vf + vc) * (vf + vc) / (vf * vf / (n_f - 1) + vc * vc / (n_c - 1));
    r.p = boost::math::cdf(boost::math::complement(boost::math::students_t_distribution<>(r.df), r.t));
    return r;
}

std::vector<bool> holm_bonferroni(std::span<const double> pvalues, double alpha) {
    for (double p : pvalues)
        if (!(p >= 0.0 && p <= 1.0)) throw std::invalid_argument("p-values must lie in [0, 1]");
    const std::size_t m = pvalues.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return pvalues[a] < pvalues[b]; });
    std::vector<bool> reject(m, false);
    for (std::size_t i = 0; i < m; ++i) {
        if (pvalues[order[i]] > alpha / static_cast<double>(m - i)) break;
        reject[order[i]] = true;
    }
    return reject;
}

std::vector<double> average_ranks(std::span<const double> keys) {
    const std::size_t m = keys.size();
    std::vector<std::size_t> order(m);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](auto a, auto b) { return keys[a] < keys[b]; });
    std::vector<double> ranks(m);
    for (std::size_t i = 0; i < m;) {
        std::size_t j = i;
        while (j + 1 < m && keys[order[j + 1]] == keys[order[i]]) ++j;
        const double r = 0.5 * static_cast<double>(i + j) + 1.0;
        for (std::size_t k = i; k <= j; ++k) ranks[order[k]] = r;
        i = j + 1;
    }
    return ranks;
}

}  // namespace cde
