#pragma once

#include "cde/core.hpp"
#include "cde/interchange.hpp"

#include <filesystem>
#include <span>
#include <vector>

namespace cde {

struct MetricBundle {
    double cde_loss = 0.0;
    double log_lik = 0.0;  // mean per point
    double crps = 0.0;     // mean, response units
    double pit_ks = 0.0;
    double coverage90 = 0.0;
    double fit_time_s = 0.0;
    double predict_time_s = 0.0;
    double log_lik_clamp_fraction = 0.0;

    friend bool operator==(const MetricBundle&, const MetricBundle&) = default;
};

struct PitSample {
    std::vector<double> values;
};

struct LogLikelihood {
    double mean = 0.0;
    double clamp_fraction = 0.0;
};

/// Floor applied to f(y|x) before taking logs.
inline constexpr double kLogLikFloor = 1e-20;

/// Empirical CDE loss: mean of int f^2 minus twice the mean of f(y_i|x_i).
double cde_loss(std::span<const GridDensity> densities, std::span<const double> y_test);

LogLikelihood log_likelihood(std::span<const GridDensity> densities, std::span<const double> y_test);

/// Trapezoid integral over the grid of (F(t) - 1{t >= y})^2.
double crps(const CdfCurve& cdf, double y);
double crps(const PredictionRecord& record, double y, const EvalGrid& grid);

PitSample pit_values(std::span<const CdfCurve> cdfs, std::span<const double> y_test);

/// One-sample Kolmogorov-Smirnov distance to Uniform(0,1).
double ks_uniform(const PitSample& p);

/// Asymptotic Kolmogorov tail probability P(D_m > d) with Stephens' small-sample correction.
double ks_uniform_pvalue(double d, std::size_t m);

/// Fraction of outcomes inside the central [q05, q95] interval.
double coverage90(std::span<const CdfCurve> cdfs, std::span<const double> y_test);

struct Timings {
    double fit_time_s = 0.0;
    double predict_time_s = 0.0;
};

/// All metrics for a set of records; bar/quantile records are converted onto `grid`.
MetricBundle score_records(std::span<const PredictionRecord> records, std::span<const double> y_test,
                           const EvalGrid& grid, Timings timings);

/// Scores an interchange file. Timings come from the file header.
MetricBundle score_prediction_file(const std::filesystem::path& pred_path,
                                   std::span<const double> y_test, const EvalGrid& grid);

}  // namespace cde
