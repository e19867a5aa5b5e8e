#include "cde/core.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>
#include <string>

namespace cde {

EvalGrid::EvalGrid(double lo, double hi) : lo_(lo), hi_(hi) {
    if (!std::isfinite(lo) || !std::isfinite(hi) || !(lo < hi)) {
        throw std::invalid_argument("EvalGrid: need finite lo < hi");
    }
}

double EvalGrid::at(std::size_t i) const {
    if (i + 1 >= kSize) return hi_;
    return lo_ + static_cast<double>(i) * step();
}

std::vector<double> EvalGrid::points() const {
    std::vector<double> out(kSize);
    for (std::size_t i = 0; i < kSize; ++i) out[i] = at(i);
    return out;
}

EvalGrid EvalGrid::from_points(std::span<const double> points) {
    if (points.size() != kSize) {
        throw std::invalid_argument("grid must have exactly " + std::to_string(kSize) +
                                    " points, got " + std::to_string(points.size()));
    }
    EvalGrid grid(points.front(), points.back());
    const double tol = 1e-9 * (grid.hi() - grid.lo());
    for (std::size_t i = 0; i < kSize; ++i) {
        if (!std::isfinite(points[i]) || std::abs(points[i] - grid.at(i)) > tol) {
            throw std::invalid_argument("grid points are not uniformly spaced at index " +
                                        std::to_string(i));
        }
    }
    return grid;
}

double trapezoid(const EvalGrid& grid, std::span<const double> values) {
    if (values.size() != grid.size()) {
        throw std::invalid_argument("trapezoid: value count does not match grid");
    }
    double inner = 0.0;
    for (std::size_t i = 1; i + 1 < values.size(); ++i) inner += values[i];
    return grid.step() * (inner + 0.5 * (values.front() + values.back()));
}

double GridDensity::integral() const { return trapezoid(grid, values); }

namespace {

double interp_on_grid(const EvalGrid& grid, std::span<const double> values, double y) {
    if (!(y >= grid.lo()) || !(y <= grid.hi())) return 0.0;
    const double pos = (y - grid.lo()) / grid.step();
    auto k = static_cast<std::size_t>(pos);
    if (k >= grid.size() - 1) return values.back();
    const double frac = pos - static_cast<double>(k);
    return values[k] + frac * (values[k + 1] - values[k]);
}

}  // namespace

double GridDensity::at(double y) const { return interp_on_grid(grid, values, y); }

double CdfCurve::at(double y) const {
    if (y < grid.lo()) return 0.0;
    if (y > grid.hi()) return 1.0;
    return std::clamp(interp_on_grid(grid, values, y), 0.0, 1.0);
}

void BarDistribution::validate() const {
    if (masses.empty()) throw std::invalid_argument("bar distribution has no bins");
    if (edges.size() != masses.size() + 1) {
        throw std::invalid_argument("bar distribution needs bins+1 edges");
    }
    for (std::size_t i = 0; i < edges.size(); ++i) {
        if (!std::isfinite(edges[i])) throw std::invalid_argument("non-finite bar edge");
        if (i > 0 && !(edges[i] > edges[i - 1])) {
            throw std::invalid_argument("bar edges not strictly increasing (degenerate bin " +
                                        std::to_string(i - 1) + ")");
        }
    }
    double total = 0.0;
    for (double m : masses) {
        if (!std::isfinite(m) || m < 0.0) throw std::invalid_argument("bar mass negative or non-finite");
        total += m;
    }
    if (std::abs(total - 1.0) > 1e-6) {
        throw std::invalid_argument("bar masses sum to " + std::to_string(total) + ", expected 1");
    }
}

void QuantileFunction::validate() const {
    if (levels.size() != values.size()) {
        throw std::invalid_argument("quantile levels and values differ in length");
    }
    if (levels.size() < 3) throw std::invalid_argument("need at least 3 quantile levels");
    for (std::size_t i = 0; i < levels.size(); ++i) {
        if (!(levels[i] > 0.0 && levels[i] < 1.0)) {
            throw std::invalid_argument("quantile level outside (0,1)");
        }
        if (i > 0 && !(levels[i] > levels[i - 1])) {
            throw std::invalid_argument("quantile levels not strictly increasing");
        }
        if (!std::isfinite(values[i])) throw std::invalid_argument("non-finite quantile value");
    }
}

EvalGrid make_eval_grid(std::span<const double> y_train) {
    if (y_train.empty()) throw std::invalid_argument("make_eval_grid: empty response vector");
    double lo = y_train[0];
    double hi = y_train[0];
    for (double y : y_train) {
        if (!std::isfinite(y)) throw std::invalid_argument("make_eval_grid: non-finite response");
        lo = std::min(lo, y);
        hi = std::max(hi, y);
    }
    const double range = hi - lo;
    if (range <= 0.0) {
        // All responses equal: the grid is centered on the value with width max(|y|, 1) / 10.
        const double width = std::max(std::abs(lo), 1.0) * 0.1;
        return {lo - 0.5 * width, hi + 0.5 * width};
    }
    return {lo - 0.05 * range, hi + 0.05 * range};
}

GridDensity normalize_density(GridDensity gd) {
    if (gd.values.size() != gd.grid.size()) {
        throw std::invalid_argument("density value count does not match grid");
    }
    bool positive = false;
    for (double& v : gd.values) {
        if (!std::isfinite(v)) throw std::invalid_argument("non-finite density value");
        v = std::max(v, 0.0);
        positive = positive || v > 0.0;
    }
    if (!positive) throw std::invalid_argument("density is zero everywhere on the grid");
    const double mass = gd.integral();
    if (!(mass > 0.0)) throw std::invalid_argument("density has zero integral on the grid");
    for (double& v : gd.values) v /= mass;
    return gd;
}

GridDensity bar_to_density(const BarDistribution& bar, const EvalGrid& grid) {
    bar.validate();
    // Zero-mass bins at either end do not move the outermost represented centers.
    std::size_t first = 0;
    std::size_t last = bar.bins();
    while (first < last && bar.masses[first] == 0.0) ++first;
    while (last > first && bar.masses[last - 1] == 0.0) --last;

    std::vector<double> centers;
    std::vector<double> heights;
    for (std::size_t b = first; b < last; ++b) {
        const double width = bar.edges[b + 1] - bar.edges[b];
        centers.push_back(0.5 * (bar.edges[b] + bar.edges[b + 1]));
        heights.push_back(bar.masses[b] / width);
    }

    GridDensity out{grid, std::vector<double>(grid.size(), 0.0)};
    if (centers.size() >= 2) {
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double t = grid.at(i);
            if (t < centers.front() || t > centers.back()) continue;
            auto it = std::upper_bound(centers.begin(), centers.end(), t);
            if (it == centers.end()) {
                out.values[i] = heights.back();
                continue;
            }
            const auto k = static_cast<std::size_t>(it - centers.begin());
            const double frac = (t - centers[k - 1]) / (centers[k] - centers[k - 1]);
            out.values[i] = heights[k - 1] + frac * (heights[k] - heights[k - 1]);
        }
    }

    auto all_zero = [&] {
        return std::all_of(out.values.begin(), out.values.end(), [](double v) { return v <= 0.0; });
    };
    if (all_zero()) {
        // A single bin, or bins too narrow to straddle a grid point: use the step density.
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double t = grid.at(i);
            for (std::size_t b = first; b < last; ++b) {
                if (t >= bar.edges[b] && t <= bar.edges[b + 1]) {
                    out.values[i] = bar.masses[b] / (bar.edges[b + 1] - bar.edges[b]);
                    break;
                }
            }
        }
    }
    if (all_zero()) {
        for (std::size_t j = 0; j < centers.size(); ++j) {
            if (centers[j] < grid.lo() || centers[j] > grid.hi()) continue;
            const auto k = static_cast<std::size_t>(std::lround((centers[j] - grid.lo()) / grid.step()));
            out.values[std::min(k, grid.size() - 1)] += heights[j];
        }
    }
    if (all_zero()) throw std::invalid_argument("bar distribution has no mass inside the grid");
    return normalize_density(std::move(out));
}

CdfCurve quantiles_to_cdf(const QuantileFunction& q, const EvalGrid& grid) {
    q.validate();
    std::vector<double> values = q.values;
    std::sort(values.begin(), values.end());
    const auto& levels = q.levels;

    CdfCurve out{grid, std::vector<double>(grid.size(), 0.0)};
    for (std::size_t i = 0; i < grid.size(); ++i) {
        const double t = grid.at(i);
        double f;
        if (t < values.front()) {
            f = 0.0;
        } else if (t > values.back()) {
            f = 1.0;
        } else {
            auto it = std::upper_bound(values.begin(), values.end(), t);
            if (it == values.end()) {
                f = levels.back();
            } else {
                const auto k = static_cast<std::size_t>(it - values.begin());
                const double frac = (t - values[k - 1]) / (values[k] - values[k - 1]);
                f = levels[k - 1] + frac * (levels[k] - levels[k - 1]);
            }
        }
        out.values[i] = f;
    }
    return out;
}

GridDensity quantiles_to_density(const QuantileFunction& q, const EvalGrid& grid) {
    const CdfCurve cdf = quantiles_to_cdf(q, grid);
    const auto& f = cdf.values;
    const std::size_t n = grid.size();
    const double h = grid.step();
    GridDensity out{grid, std::vector<double>(n)};
    out.values[0] = (f[1] - f[0]) / h;
    out.values[n - 1] = (f[n - 1] - f[n - 2]) / h;
    for (std::size_t i = 1; i + 1 < n; ++i) out.values[i] = (f[i + 1] - f[i - 1]) / (2.0 * h);
    return normalize_density(std::move(out));
}

CdfCurve density_to_cdf(const GridDensity& gd) {
    if (gd.values.size() != gd.grid.size()) {
        throw std::invalid_argument("density value count does not match grid");
    }
    for (double v : gd.values) {
        if (!std::isfinite(v) || v < 0.0) throw std::invalid_argument("density negative or non-finite");
    }
    const double mass = gd.integral();
    if (mass < 0.999 || mass > 1.001) {
        throw std::invalid_argument("density_to_cdf: density integrates to " + std::to_string(mass));
    }
    const double h = gd.grid.step();
    CdfCurve out{gd.grid, std::vector<double>(gd.values.size(), 0.0)};
    double acc = 0.0;
    for (std::size_t i = 1; i < gd.values.size(); ++i) {
        acc += 0.5 * h * (gd.values[i - 1] + gd.values[i]);
        out.values[i] = std::min(acc, 1.0);
    }
    return out;
}

double cdf_quantile(const CdfCurve& c, double level) {
    if (!(level > 0.0 && level < 1.0)) throw std::invalid_argument("cdf_quantile: level outside (0,1)");
    const auto& f = c.values;
    auto it = std::lower_bound(f.begin(), f.end(), level);
    if (it == f.end()) return c.grid.hi();
    const auto k = static_cast<std::size_t>(it - f.begin());
    if (k == 0) return c.grid.lo();
    const double f0 = f[k - 1];
    const double f1 = f[k];
    const double t0 = c.grid.at(k - 1);
    return t0 + (level - f0) / (f1 - f0) * (c.grid.at(k) - t0);
}

GridDensity to_density(const PredictionRecord& record, const EvalGrid& grid) {
    return std::visit(
        [&](const auto& p) -> GridDensity {
            using T = std::decay_t<decltype(p)>;
            if constexpr (std::is_same_v<T, GridDensity>) {
                return normalize_density(p);
            } else if constexpr (std::is_same_v<T, BarDistribution>) {
                return bar_to_density(p, grid);
            } else {
                return quantiles_to_density(p, grid);
            }
        },
        record.payload);
}

CdfCurve to_cdf(const PredictionRecord& record, const EvalGrid& grid) {
    if (const auto* q = std::get_if<QuantileFunction>(&record.payload)) {
        return quantiles_to_cdf(*q, grid);
    }
    return density_to_cdf(to_density(record, grid));
}

}  // namespace cde
