#include "cde/scoring.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace cde {

namespace {

void check_lengths(std::size_t a, std::size_t b) {
    if (a != b) {
        throw std::invalid_argument("length mismatch: " + std::to_string(a) + " predictions vs " +
                                    std::to_string(b) + " outcomes");
    }
}

double squared_integral(const GridDensity& gd) {
    std::vector<double> sq(gd.values.size());
    std::transform(gd.values.begin(), gd.values.end(), sq.begin(), [](double v) { return v * v; });
    return trapezoid(gd.grid, sq);
}

}  // namespace

double cde_loss(std::span<const GridDensity> densities, std::span<const double> y_test) {
    check_lengths(densities.size(), y_test.size());
    if (y_test.empty()) throw std::invalid_argument("cde_loss: empty test set");
    double sq = 0.0;
    double at_y = 0.0;
    for (std::size_t i = 0; i < densities.size(); ++i) {
        sq += squared_integral(densities[i]);
        at_y += densities[i].at(y_test[i]);
    }
    const auto m = static_cast<double>(y_test.size());
    return sq / m - 2.0 * at_y / m;
}

LogLikelihood log_likelihood(std::span<const GridDensity> densities, std::span<const double> y_test) {
    check_lengths(densities.size(), y_test.size());
    if (y_test.empty()) throw std::invalid_argument("log_likelihood: empty test set");
    double total = 0.0;
    std::size_t clamped = 0;
    for (std::size_t i = 0; i < densities.size(); ++i) {
        const double f = densities[i].at(y_test[i]);
        if (f < kLogLikFloor) ++clamped;
        total += std::log(std::max(f, kLogLikFloor));
    }
    const auto m = static_cast<double>(y_test.size());
    return {total / m, static_cast<double>(clamped) / m};
}

double crps(const CdfCurve& cdf, double y) {
    if (!std::isfinite(y)) throw std::invalid_argument("crps: non-finite outcome");
    const auto& grid = cdf.grid;
    const auto& f = cdf.values;
    double total = 0.0;
    for (std::size_t i = 0; i + 1 < f.size(); ++i) {
        const double t0 = grid.at(i);
        const double t1 = grid.at(i + 1);
        const double h0 = t0 >= y ? 1.0 : 0.0;
        const double h1 = t1 >= y ? 1.0 : 0.0;
        if (!(y > t0 && y < t1)) {
            total += 0.5 * (t1 - t0) * ((f[i] - h0) * (f[i] - h0) + (f[i + 1] - h1) * (f[i + 1] - h1));
            continue;
        }
        // The outcome falls strictly inside this cell: add it as a quadrature node
        // with the interpolated CDF value on both sides of the jump.
        const double fy = f[i] + (y - t0) / (t1 - t0) * (f[i + 1] - f[i]);
        total += 0.5 * (y - t0) * (f[i] * f[i] + fy * fy);
        total += 0.5 * (t1 - y) * ((1.0 - fy) * (1.0 - fy) + (1.0 - f[i + 1]) * (1.0 - f[i + 1]));
    }
    return total;
}

double crps(const PredictionRecord& record, double y, const EvalGrid& grid) {
    return crps(to_cdf(record, grid), y);
}

PitSample pit_values(std::span<const CdfCurve> cdfs, std::span<const double> y_test) {
    check_lengths(cdfs.size(), y_test.size());
    PitSample out;
    out.values.reserve(cdfs.size());
    for (std::size_t i = 0; i < cdfs.size(); ++i) out.values.push_back(cdfs[i].at(y_test[i]));
    return out;
}

double ks_uniform(const PitSample& p) {
    if (p.values.empty()) throw std::invalid_argument("ks_uniform: empty sample");
    std::vector<double> u = p.values;
    for (double v : u) {
        if (!(v >= 0.0 && v <= 1.0)) throw std::invalid_argument("ks_uniform: value outside [0,1]");
    }
    std::sort(u.begin(), u.end());
    const auto m = static_cast<double>(u.size());
    double d = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) {
        const double upper = static_cast<double>(i + 1) / m - u[i];
        const double lower = u[i] - static_cast<double>(i) / m;
        d = std::max({d, upper, lower});
    }
    return d;
}

double ks_uniform_pvalue(double d, std::size_t m) {
    const double sm = std::sqrt(static_cast<double>(m));
    const double lambda = (sm + 0.12 + 0.11 / sm) * d;
    if (lambda < 1e-3) return 1.0;
    double sum = 0.0;
    double sign = 1.0;
    for (int k = 1; k <= 200; ++k) {
        const double term = sign * std::exp(-2.0 * k * k * lambda * lambda);
        sum += term;
        if (std::abs(term) < 1e-16) break;
        sign = -sign;
    }
    return std::clamp(2.0 * sum, 0.0, 1.0);
}

double coverage90(std::span<const CdfCurve> cdfs, std::span<const double> y_test) {
    check_lengths(cdfs.size(), y_test.size());
    if (y_test.empty()) throw std::invalid_argument("coverage90: empty test set");
    std::size_t inside = 0;
    for (std::size_t i = 0; i < cdfs.size(); ++i) {
        const double lo = cdf_quantile(cdfs[i], 0.05);
        const double hi = cdf_quantile(cdfs[i], 0.95);
        if (lo <= y_test[i] && y_test[i] <= hi) ++inside;
    }
    return static_cast<double>(inside) / static_cast<double>(y_test.size());
}

MetricBundle score_records(std::span<const PredictionRecord> records, std::span<const double> y_test,
                           const EvalGrid& grid, Timings timings) {
    if (records.size() != y_test.size()) {
        throw std::invalid_argument("record count " + std::to_string(records.size()) +
                                    " does not match outcome count " + std::to_string(y_test.size()));
    }
    if (records.empty()) throw std::invalid_argument("no records to score");
    std::vector<GridDensity> densities;
    std::vector<CdfCurve> cdfs;
    densities.reserve(records.size());
    cdfs.reserve(records.size());
    for (std::size_t i = 0; i < records.size(); ++i) {
        try {
            densities.push_back(to_density(records[i], grid));
            cdfs.push_back(to_cdf(records[i], grid));
        } catch (const std::exception& e) {
            throw std::invalid_argument("record " + std::to_string(i) + ": " + e.what());
        }
    }

    MetricBundle out;
    out.cde_loss = cde_loss(densities, y_test);
    const auto ll = log_likelihood(densities, y_test);
    out.log_lik = ll.mean;
    out.log_lik_clamp_fraction = ll.clamp_fraction;
    double crps_sum = 0.0;
    for (std::size_t i = 0; i < cdfs.size(); ++i) crps_sum += crps(cdfs[i], y_test[i]);
    out.crps = crps_sum / static_cast<double>(cdfs.size());
    out.pit_ks = ks_uniform(pit_values(cdfs, y_test));
    out.coverage90 = coverage90(cdfs, y_test);
    out.fit_time_s = timings.fit_time_s;
    out.predict_time_s = timings.predict_time_s;
    return out;
}

MetricBundle score_prediction_file(const std::filesystem::path& pred_path,
                                   std::span<const double> y_test, const EvalGrid& grid) {
    const auto file = read_predictions(pred_path);
    if (file.records.size() != y_test.size()) {
        throw std::invalid_argument("prediction file has " + std::to_string(file.records.size()) +
                                    " records but there are " + std::to_string(y_test.size()) +
                                    " test outcomes");
    }
    return score_records(file.records, y_test, grid,
                         {file.header.fit_time_s, file.header.predict_time_s});
}

}  // namespace cde
