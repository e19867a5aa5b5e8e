#pragma once

// One-sided Welch comparisons, Holm step-down correction and rank tables.

#include "cde/scoring.hpp"

#include <optional>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace cde {

enum class Metric { cde_loss, log_lik, crps, pit_ks, coverage90, fit_time };

std::optional<Metric> parse_metric(std::string_view name);
std::string metric_name(Metric m);
std::vector<Metric> all_metrics();

/// fit_time is fit + predict wall-clock seconds.
double metric_value(const MetricBundle& b, Metric m);

/// Smaller is better: the metric itself, minus log-likelihood, or |coverage - 0.9|.
double rank_key(Metric m, double value);

enum class Direction { lower_better, higher_better };
Direction metric_direction(Metric m);

struct WelchResult {
    double t = 0.0;
    double df = 0.0;
    double p = 0.0;  // one-sided: H1 says the foundation method is better
};

/// t = (mean_C - mean_F) / sqrt(se_F^2 + se_C^2) for lower-is-better metrics
/// (sign flipped otherwise); Welch-Satterthwaite df from the (se, n) pairs.
WelchResult welch_one_sided(double mean_f, double se_f, int n_f, double mean_c, double se_c, int n_c,
                            Direction direction);

/// Holm step-down rejections at level alpha, in input order.
std::vector<bool> holm_bonferroni(std::span<const double> pvalues, double alpha = 0.1);

/// 1-based ranks of `keys` (smaller is better) with ties sharing the average rank.
std::vector<double> average_ranks(std::span<const double> keys);

}  // namespace cde
