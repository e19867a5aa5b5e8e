#pragma once

// Predictive-distribution representations on a shared evaluation grid and the
// conversions between them. Every density handed to scoring lives on an
// EvalGrid of 200 uniformly spaced points.

#include <cstddef>
#include <optional>
#include <span>
#include <variant>
#include <vector>

namespace cde {

/// Uniform evaluation grid over [lo, hi] with kSize points.
class EvalGrid {
public:
    static constexpr std::size_t kSize = 200;

    EvalGrid() = default;
    EvalGrid(double lo, double hi);

    double lo() const { return lo_; }
    double hi() const { return hi_; }
    double step() const { return (hi_ - lo_) / static_cast<double>(kSize - 1); }
    std::size_t size() const { return kSize; }

    /// i-th grid point; the last point is exactly hi.
    double at(std::size_t i) const;
    std::vector<double> points() const;

    /// Rebuilds a grid from explicit points, checking count and uniform spacing.
    static EvalGrid from_points(std::span<const double> points);

    friend bool operator==(const EvalGrid&, const EvalGrid&) = default;

private:
    double lo_ = 0.0;
    double hi_ = 1.0;
};

struct GridDensity {
    EvalGrid grid;
    std::vector<double> values;

    double integral() const;
    /// Linear interpolation; zero outside [lo, hi].
    double at(double y) const;
};

struct BarDistribution {
    std::vector<double> edges;
    std::vector<double> masses;

    std::size_t bins() const { return masses.size(); }
    /// Throws std::invalid_argument when the edges/masses invariants fail.
    void validate() const;

    friend bool operator==(const BarDistribution&, const BarDistribution&) = default;
};

struct QuantileFunction {
    std::vector<double> levels;
    std::vector<double> values;

    void validate() const;

    friend bool operator==(const QuantileFunction&, const QuantileFunction&) = default;
};

struct CdfCurve {
    EvalGrid grid;
    std::vector<double> values;

    /// Linear interpolation clamped to [0, 1]; 0 below the grid, 1 above.
    double at(double y) const;
};

enum class Encoding { grid, bar, quantiles };

struct PredictionRecord {
    std::variant<GridDensity, BarDistribution, QuantileFunction> payload;
    std::optional<std::size_t> index;

    Encoding encoding() const { return static_cast<Encoding>(payload.index()); }
};

/// Evaluation grid spanning the training responses plus a 5% margin on each side.
EvalGrid make_eval_grid(std::span<const double> y_train);

/// Trapezoid integral of grid-sampled values.
double trapezoid(const EvalGrid& grid, std::span<const double> values);

GridDensity normalize_density(GridDensity gd);

GridDensity bar_to_density(const BarDistribution& bar, const EvalGrid& grid);

/// CDF of a quantile function sampled on the grid: values are sorted, the
/// (value, level) pairs are interpolated and the curve is 0 below the lowest
/// and 1 above the highest quantile.
CdfCurve quantiles_to_cdf(const QuantileFunction& q, const EvalGrid& grid);

GridDensity quantiles_to_density(const QuantileFunction& q, const EvalGrid& grid);

CdfCurve density_to_cdf(const GridDensity& gd);

double cdf_quantile(const CdfCurve& c, double level);

/// Normalized grid density for any record. Grid records keep their own grid;
/// bar and quantile records are converted onto `grid`.
GridDensity to_density(const PredictionRecord& record, const EvalGrid& grid);

/// CDF for any record. Quantile records build the CDF directly from the
/// quantile function.
CdfCurve to_cdf(const PredictionRecord& record, const EvalGrid& grid);

}  // namespace cde
