/*
   Copyright 2026 The nemlab Authors

   Licensed under the Apache License, Version 2.0 (the "License");
   you may not use this file except in compliance with the License.
   You may obtain a copy of the License at

       http://www.apache.org/licenses/LICENSE-2.0

   Unless required by applicable law or agreed to in writing, software
   distributed under the License is distributed on an "AS IS" BASIS,
   WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
   See the License for the specific language governing permissions and
   limitations under the License.
*/

// Uniform 1D grids, grid densities, time grids, density flows and the
// unit-ball localized norms ||f||_{~L^k} and ||f||_{~L^p_q}.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <limits>
#include <numbers>
#include <span>
#include <string>
#include <vector>

#include "nemlab/error.hpp"

namespace nemlab {

inline constexpr double kInf = std::numeric_limits<double>::infinity();

/// Cell-centred uniform grid on [x_min, x_max].
class Grid1D {
public:
    static constexpr std::size_t kMinCells = 8;

    Grid1D(double x_min, double x_max, std::size_t n_cells)
        : x_min_(x_min), x_max_(x_max), n_cells_(n_cells) {
        require(std::isfinite(x_min) && std::isfinite(x_max) && x_min < x_max,
                ErrorKind::invalid_parameter, "grid requires finite x_min < x_max");
        require(n_cells >= kMinCells, ErrorKind::invalid_parameter,
                "grid requires n_cells >= 8, got " + std::to_string(n_cells));
        dx_ = (x_max_ - x_min_) / static_cast<double>(n_cells_);
    }

    double x_min() const noexcept { return x_min_; }
    double x_max() const noexcept { return x_max_; }
    std::size_t size() const noexcept { return n_cells_; }
    double dx() const noexcept { return dx_; }
    double width() const noexcept { return x_max_ - x_min_; }
    double center(std::size_t j) const noexcept {
        return x_min_ + (static_cast<double>(j) + 0.5) * dx_;
    }

    std::vector<double> centers() const {
        std::vector<double> xs(n_cells_);
        for (std::size_t j = 0; j < n_cells_; ++j) xs[j] = center(j);
        return xs;
    }

    /// Number of neighbouring cells on each side inside a radius-r ball
    /// around a cell centre.
    std::size_t cells_within(double radius) const noexcept {
        return static_cast<std::size_t>(std::floor(radius / dx_ * (1.0 + 1e-12)));
    }

    friend bool operator==(const Grid1D& a, const Grid1D& b) noexcept {
        return a.n_cells_ == b.n_cells_ && a.x_min_ == b.x_min_ && a.x_max_ == b.x_max_;
    }

private:
    double x_min_;
    double x_max_;
    std::size_t n_cells_;
    double dx_ = 0.0;
};

inline void require_same_grid(const Grid1D& a, const Grid1D& b) {
    require(a == b, ErrorKind::grid_mismatch, "operands live on different grids");
}

/// Piecewise-constant density on a Grid1D.
struct GridDensity {
    Grid1D grid;
    std::vector<double> values;

    GridDensity(Grid1D g, std::vector<double> v) : grid(g), values(std::move(v)) {
        require(values.size() == grid.size(), ErrorKind::invalid_parameter,
                "density has " + std::to_string(values.size()) + " values for " +
                    std::to_string(grid.size()) + " cells");
    }
    explicit GridDensity(Grid1D g) : grid(g), values(g.size(), 0.0) {}

    double mass() const noexcept {
        double m = 0.0;
        for (double v : values) m += v;
        return m * grid.dx();
    }

    /// Linear interpolation between cell centres, zero outside the domain.
    double value_at(double x) const noexcept {
        if (!(x >= grid.x_min() && x <= grid.x_max())) return 0.0;
        const double s = (x - grid.x_min()) / grid.dx() - 0.5;
        if (s <= 0.0) return values.front();
        const auto last = static_cast<double>(values.size() - 1);
        if (s >= last) return values.back();
        const auto j = static_cast<std::size_t>(s);
        const double w = s - static_cast<double>(j);
        return (1.0 - w) * values[j] + w * values[j + 1];
    }

    double mean() const noexcept {
        double m = 0.0;
        double z = 0.0;
        for (std::size_t j = 0; j < values.size(); ++j) {
            m += grid.center(j) * values[j];
            z += values[j];
        }
        return z > 0.0 ? m / z : 0.0;
    }

    double variance() const noexcept {
        const double mu = mean();
        double v = 0.0;
        double z = 0.0;
        for (std::size_t j = 0; j < values.size(); ++j) {
            const double d = grid.center(j) - mu;
            v += d * d * values[j];
            z += values[j];
        }
        return z > 0.0 ? v / z : 0.0;
    }
};

/// Evaluates a profile at cell centres. Does not normalize.
template <class F>
GridDensity sample_density(const Grid1D& grid, F&& profile) {
    GridDensity d(grid);
    for (std::size_t j = 0; j < grid.size(); ++j) d.values[j] = profile(grid.center(j));
    return d;
}

inline double gaussian_pdf(double x, double mean, double sd) {
    const double z = (x - mean) / sd;
    return std::exp(-0.5 * z * z) / (sd * std::sqrt(2.0 * std::numbers::pi));
}

struct NormalizeDiagnostics {
    double clipped_mass = 0.0;  ///< mass of the negative part removed before scaling
    double input_mass = 0.0;
};

/// Clip negatives to zero and rescale to unit mass.
inline GridDensity normalize(const GridDensity& d, NormalizeDiagnostics* diag = nullptr) {
    GridDensity out = d;
    double clipped = 0.0;
    double total = 0.0;
    for (double& v : out.values) {
        require(std::isfinite(v), ErrorKind::degenerate_density, "density has a non-finite value");
        if (v < 0.0) {
            clipped -= v;
            v = 0.0;
        }
        total += v;
    }
    const double dx = d.grid.dx();
    require(total * dx > 0.0, ErrorKind::degenerate_density, "density has zero mass");
    const double scale = 1.0 / (total * dx);
    for (double& v : out.values) v *= scale;
    if (diag != nullptr) {
        diag->clipped_mass = clipped * dx;
        diag->input_mass = d.mass();
    }
    return out;
}

inline GridDensity gaussian_density(const Grid1D& grid, double mean, double sd) {
    require(sd > 0.0, ErrorKind::invalid_parameter, "gaussian sd must be positive");
    return normalize(sample_density(grid, [&](double x) { return gaussian_pdf(x, mean, sd); }));
}

inline GridDensity uniform_density(const Grid1D& grid, double a, double b) {
    require(a < b, ErrorKind::invalid_parameter, "uniform density needs a < b");
    // Exact cell averages so that the support edges carry fractional mass.
    GridDensity d(grid);
    const double h = grid.dx();
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double lo = grid.center(j) - 0.5 * h;
        const double hi = grid.center(j) + 0.5 * h;
        const double overlap = std::max(0.0, std::min(hi, b) - std::max(lo, a));
        d.values[j] = overlap / h / (b - a);
    }
    return normalize(d);
}

// ---------------------------------------------------------------------------
// Time grids and flows

enum class Refinement { uniform, geometric, explicit_nodes };

class TimeGrid {
public:
    static TimeGrid uniform(double T, std::size_t steps) {
        require(T > 0.0 && steps >= 1, ErrorKind::invalid_parameter, "uniform time grid needs T > 0 and steps >= 1");
        std::vector<double> nodes(steps + 1);
        for (std::size_t i = 0; i <= steps; ++i) nodes[i] = T * static_cast<double>(i) / static_cast<double>(steps);
        nodes.back() = T;
        return TimeGrid(std::move(nodes), Refinement::uniform, 0.0, 1.0);
    }

    /// 0, t_min, t_min*r, t_min*r^2, ..., T with r = 10^(1/nodes_per_decade).
    static TimeGrid geometric(double T, double t_min, double nodes_per_decade) {
        require(T > 0.0 && t_min > 0.0 && t_min < T, ErrorKind::invalid_parameter,
                "geometric time grid needs 0 < t_min < T");
        require(nodes_per_decade > 0.0, ErrorKind::invalid_parameter, "nodes_per_decade must be positive");
        const double ratio = std::pow(10.0, 1.0 / nodes_per_decade);
        std::vector<double> nodes{0.0};
        for (double t = t_min; t < T * (1.0 - 1e-9); t *= ratio) nodes.push_back(t);
        // Avoid a sliver last interval.
        if (nodes.size() > 2 && T / nodes.back() < std::sqrt(ratio)) nodes.pop_back();
        nodes.push_back(T);
        return TimeGrid(std::move(nodes), Refinement::geometric, t_min, ratio);
    }

    /// Default refinement: t_min = 1e-4 T, 40 nodes per decade.
    static TimeGrid standard(double T) { return geometric(T, 1e-4 * T, 40.0); }

    static TimeGrid from_nodes(std::vector<double> nodes) {
        return TimeGrid(std::move(nodes), Refinement::explicit_nodes, 0.0, 1.0);
    }

    const std::vector<double>& nodes() const noexcept { return nodes_; }
    std::size_t size() const noexcept { return nodes_.size(); }
    double operator[](std::size_t i) const noexcept { return nodes_[i]; }
    double T() const noexcept { return nodes_.back(); }
    Refinement refinement() const noexcept { return refinement_; }
    double t_min() const noexcept { return t_min_; }
    double ratio() const noexcept { return ratio_; }

    /// Index of the node closest to t.
    std::size_t nearest(double t) const noexcept {
        auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t);
        if (it == nodes_.end()) return nodes_.size() - 1;
        auto i = static_cast<std::size_t>(it - nodes_.begin());
        if (i > 0 && t - nodes_[i - 1] < nodes_[i] - t) --i;
        return i;
    }

    friend bool operator==(const TimeGrid& a, const TimeGrid& b) noexcept { return a.nodes_ == b.nodes_; }

private:
    TimeGrid(std::vector<double> nodes, Refinement r, double t_min, double ratio)
        : nodes_(std::move(nodes)), refinement_(r), t_min_(t_min), ratio_(ratio) {
        require(nodes_.size() >= 2, ErrorKind::invalid_parameter, "time grid needs at least two nodes");
        require(nodes_.front() == 0.0, ErrorKind::invalid_parameter, "time grid must start at 0");
        for (std::size_t i = 1; i < nodes_.size(); ++i)
            require(nodes_[i] > nodes_[i - 1], ErrorKind::invalid_parameter, "time grid must be strictly increasing");
    }

    std::vector<double> nodes_;
    Refinement refinement_;
    double t_min_;
    double ratio_;
};

struct DensityFlow {
    TimeGrid time_grid;
    std::vector<GridDensity> snapshots;
    bool singular_t0 = false;

    const Grid1D& grid() const { return snapshots.front().grid; }
    const GridDensity& at(std::size_t i) const { return snapshots[i]; }
    const GridDensity& back() const { return snapshots.back(); }

    void check() const {
        require(snapshots.size() == time_grid.size(), ErrorKind::invalid_parameter,
                "flow has " + std::to_string(snapshots.size()) + " snapshots for " +
                    std::to_string(time_grid.size()) + " nodes");
    }
};

/// Signed grid functions over a time grid, e.g. the difference of two flows.
struct FieldFlow {
    TimeGrid time_grid;
    Grid1D grid;
    std::vector<std::vector<double>> values;
    bool singular_t0 = false;
};

inline FieldFlow as_field(const DensityFlow& f) {
    FieldFlow out{f.time_grid, f.grid(), {}, f.singular_t0};
    out.values.reserve(f.snapshots.size());
    for (const auto& s : f.snapshots) out.values.push_back(s.values);
    return out;
}

inline FieldFlow difference(const DensityFlow& a, const DensityFlow& b) {
    require(a.time_grid == b.time_grid, ErrorKind::grid_mismatch, "flows have different time grids");
    require_same_grid(a.grid(), b.grid());
    FieldFlow out{a.time_grid, a.grid(), {}, a.singular_t0 || b.singular_t0};
    out.values.resize(a.snapshots.size());
    for (std::size_t i = 0; i < a.snapshots.size(); ++i) {
        out.values[i].resize(a.grid().size());
        for (std::size_t j = 0; j < a.grid().size(); ++j)
            out.values[i][j] = a.snapshots[i].values[j] - b.snapshots[i].values[j];
    }
    return out;
}

// ---------------------------------------------------------------------------
// Localized norms. Balls are B(z,1) = [z-1, z+1] with z on cell centres.

namespace detail {

inline void check_window(const Grid1D& grid) {
    require(grid.width() >= 2.0, ErrorKind::domain_too_small,
            "unit-ball window needs a domain of width >= 2");
}

/// For every window centre j, the sum of |f|^k dx over the ball. Prefix sums
/// are accumulated in long double so the sliding result matches a direct
/// window sum to ~1e-15 relative.
inline std::vector<double> window_power_sums(std::span<const double> f, const Grid1D& grid, double k) {
    const std::size_t n = grid.size();
    const std::size_t w = grid.cells_within(1.0);
    std::vector<long double> prefix(n + 1, 0.0L);
    for (std::size_t j = 0; j < n; ++j) {
        const double a = std::abs(f[j]);
        const long double term = k == 1.0 ? a : (k == 2.0 ? static_cast<long double>(a) * a : std::pow(static_cast<long double>(a), static_cast<long double>(k)));
        prefix[j + 1] = prefix[j] + term;
    }
    std::vector<double> out(n);
    const long double dx = grid.dx();
    for (std::size_t c = 0; c < n; ++c) {
        const std::size_t lo = c >= w ? c - w : 0;
        const std::size_t hi = std::min(n, c + w + 1);
        const long double s = prefix[hi] - prefix[lo];
        out[c] = static_cast<double>(std::max(0.0L, s) * dx);
    }
    return out;
}

} // namespace detail

/// ||f||_{~L^k} = sup_z ||1_{B(z,1)} f||_k, k in [1, inf].
inline double tilde_norm(std::span<const double> f, const Grid1D& grid, double k) {
    require(k >= 1.0, ErrorKind::invalid_parameter, "tilde_norm needs k >= 1");
    require(f.size() == grid.size(), ErrorKind::grid_mismatch, "function and grid sizes differ");
    detail::check_window(grid);
    if (std::isinf(k)) {
        double m = 0.0;
        for (double v : f) m = std::max(m, std::abs(v));
        return m;
    }
    const auto sums = detail::window_power_sums(f, grid, k);
    const double best = *std::max_element(sums.begin(), sums.end());
    return k == 1.0 ? best : std::pow(best, 1.0 / k);
}

inline double tilde_norm(const GridDensity& d, double k) { return tilde_norm(d.values, d.grid, k); }

/// Direct O(n * window) evaluation, kept as the reference for the sliding form.
inline double tilde_norm_brute_force(std::span<const double> f, const Grid1D& grid, double k) {
    require(k >= 1.0, ErrorKind::invalid_parameter, "tilde_norm needs k >= 1");
    detail::check_window(grid);
    if (std::isinf(k)) {
        double m = 0.0;
        for (double v : f) m = std::max(m, std::abs(v));
        return m;
    }
    double best = 0.0;
    for (std::size_t c = 0; c < grid.size(); ++c) {
        const double z = grid.center(c);
        long double s = 0.0L;
        for (std::size_t j = 0; j < grid.size(); ++j) {
            if (std::abs(grid.center(j) - z) <= 1.0 + 1e-12 * grid.dx())
                s += std::pow(static_cast<long double>(std::abs(f[j])), static_cast<long double>(k));
        }
        best = std::max(best, static_cast<double>(s * grid.dx()));
    }
    return std::pow(best, 1.0 / k);
}

/// ||f||_{~L^p_q(s,t)} = sup_z (int_s^t ||f_r 1_{B(z,1)}||_p^q dr)^{1/q}.
/// One z for the whole time integral. Trapezoid rule over the time-grid nodes
/// in [s,t]; an interval touching a singular t=0 snapshot is dropped.
inline double tilde_spacetime_norm(const FieldFlow& flow, double p, double q, double s, double t) {
    require(p >= 1.0 && q >= 1.0, ErrorKind::invalid_parameter, "spacetime norm needs p, q >= 1");
    require(s >= 0.0 && s < t, ErrorKind::invalid_parameter, "spacetime norm needs 0 <= s < t");
    detail::check_window(flow.grid);
    const auto& nodes = flow.time_grid.nodes();
    const double eps = 1e-12 * flow.time_grid.T();
    std::vector<std::size_t> idx;
    for (std::size_t i = 0; i < nodes.size(); ++i)
        if (nodes[i] >= s - eps && nodes[i] <= t + eps) idx.push_back(i);
    require(idx.size() >= 2, ErrorKind::invalid_parameter, "time window [s,t] holds fewer than two grid nodes");

    const std::size_t n = flow.grid.size();
    // Per node, per centre: ||f_r 1_B||_p^q.
    std::vector<std::vector<double>> local(idx.size());
    for (std::size_t a = 0; a < idx.size(); ++a) {
        const auto& f = flow.values[idx[a]];
        std::vector<double> w;
        if (std::isinf(p)) {
            const std::size_t half = flow.grid.cells_within(1.0);
            w.assign(n, 0.0);
            for (std::size_t c = 0; c < n; ++c) {
                const std::size_t lo = c >= half ? c - half : 0;
                const std::size_t hi = std::min(n, c + half + 1);
                double m = 0.0;
                for (std::size_t j = lo; j < hi; ++j) m = std::max(m, std::abs(f[j]));
                w[c] = m;
            }
        } else {
            w = detail::window_power_sums(f, flow.grid, p);
            for (double& v : w) v = std::pow(v, 1.0 / p);
        }
        for (double& v : w) v = std::pow(v, q);
        local[a] = std::move(w);
    }
    double best = 0.0;
    for (std::size_t c = 0; c < n; ++c) {
        double integral = 0.0;
        for (std::size_t a = 0; a + 1 < idx.size(); ++a) {
            if (flow.singular_t0 && idx[a] == 0) continue;
            const double h = nodes[idx[a + 1]] - nodes[idx[a]];
            integral += 0.5 * h * (local[a][c] + local[a + 1][c]);
        }
        best = std::max(best, integral);
    }
    return std::pow(best, 1.0 / q);
}

/// ||mu - nu||_{~L^1} for absolutely continuous measures: the inner sup over
/// |f| <= 1 is attained at f = sign(rho_mu - rho_nu).
inline double tilde_measure_distance_L1(const GridDensity& mu, const GridDensity& nu) {
    require_same_grid(mu.grid, nu.grid);
    std::vector<double> diff(mu.values.size());
    for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = mu.values[j] - nu.values[j];
    return tilde_norm(diff, mu.grid, 1.0);
}

inline double l1_distance(const GridDensity& a, const GridDensity& b) {
    require_same_grid(a.grid, b.grid);
    double s = 0.0;
    for (std::size_t j = 0; j < a.values.size(); ++j) s += std::abs(a.values[j] - b.values[j]);
    return s * a.grid.dx();
}

/// sup over time-grid nodes of the L^1 gap between two flows.
inline double sup_l1_gap(const DensityFlow& a, const DensityFlow& b) {
    require(a.time_grid == b.time_grid, ErrorKind::grid_mismatch, "flows have different time grids");
    double m = 0.0;
    for (std::size_t i = 0; i < a.snapshots.size(); ++i) m = std::max(m, l1_distance(a.snapshots[i], b.snapshots[i]));
    return m;
}

// ---------------------------------------------------------------------------
// Kernel density estimation

struct KdeDiagnostics {
    double lost_mass = 0.0;  ///< kernel mass falling outside the grid, before normalization
};

inline double silverman_bandwidth(std::span<const double> xs) {
    require(!xs.empty(), ErrorKind::invalid_parameter, "bandwidth rule needs at least one sample");
    double m = 0.0;
    for (double x : xs) m += x;
    m /= static_cast<double>(xs.size());
    double v = 0.0;
    for (double x : xs) v += (x - m) * (x - m);
    const double sd = xs.size() > 1 ? std::sqrt(v / static_cast<double>(xs.size() - 1)) : 0.0;
    const double h = 1.06 * sd * std::pow(static_cast<double>(xs.size()), -0.2);
    return h > 0.0 ? h : 1e-3;
}

/// Gaussian KDE evaluated at cell centres (exact sum, kernel cut at 8h), then normalized.
inline GridDensity kde(std::span<const double> positions, double bandwidth, const Grid1D& grid,
                       KdeDiagnostics* diag = nullptr) {
    require(bandwidth > 0.0, ErrorKind::invalid_parameter, "kde bandwidth must be positive");
    require(!positions.empty(), ErrorKind::invalid_parameter, "kde needs at least one particle");
    std::vector<double> xs(positions.begin(), positions.end());
    std::sort(xs.begin(), xs.end());
    require(xs.back() >= grid.x_min() && xs.front() <= grid.x_max(), ErrorKind::degenerate_density,
            "all particles lie outside the grid");
    const double cut = 8.0 * bandwidth;
    const double norm = 1.0 / (bandwidth * std::sqrt(2.0 * std::numbers::pi) * static_cast<double>(xs.size()));
    GridDensity d(grid);
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double x = grid.center(j);
        auto lo = std::lower_bound(xs.begin(), xs.end(), x - cut);
        auto hi = std::upper_bound(lo, xs.end(), x + cut);
        double s = 0.0;
        for (auto it = lo; it != hi; ++it) {
            const double z = (x - *it) / bandwidth;
            s += std::exp(-0.5 * z * z);
        }
        d.values[j] = s * norm;
    }
    if (diag != nullptr) diag->lost_mass = std::max(0.0, 1.0 - d.mass());
    return normalize(d);
}

/// Linear-binning KDE: particles are split between the two nearest cell
/// centres, then the histogram is convolved with a sampled Gaussian.
/// O(N + n * h/dx); used inside particle time loops.
inline GridDensity kde_binned(std::span<const double> positions, double bandwidth, const Grid1D& grid,
                              KdeDiagnostics* diag = nullptr) {
    require(bandwidth > 0.0, ErrorKind::invalid_parameter, "kde bandwidth must be positive");
    require(!positions.empty(), ErrorKind::invalid_parameter, "kde needs at least one particle");
    const double dx = grid.dx();
    if (bandwidth < 2.0 * dx) return kde(positions, bandwidth, grid, diag);
    const std::size_t n = grid.size();
    std::vector<double> hist(n, 0.0);
    double inside = 0.0;
    const double w = 1.0 / static_cast<double>(positions.size());
    for (double x : positions) {
        const double s = (x - grid.x_min()) / dx - 0.5;
        if (!(s > -1.0 && s < static_cast<double>(n))) continue;
        const double fl = std::floor(s);
        const double frac = s - fl;
        const auto j = static_cast<long long>(fl);
        if (j >= 0) hist[static_cast<std::size_t>(j)] += (1.0 - frac) * w;
        if (j + 1 < static_cast<long long>(n)) hist[static_cast<std::size_t>(j + 1)] += frac * w;
        inside += w;
    }
    require(inside > 0.0, ErrorKind::degenerate_density, "all particles lie outside the grid");
    const auto half = static_cast<std::size_t>(std::ceil(6.0 * bandwidth / dx));
    std::vector<double> kernel(2 * half + 1);
    for (std::size_t m = 0; m < kernel.size(); ++m) {
        const double z = (static_cast<double>(m) - static_cast<double>(half)) * dx / bandwidth;
        kernel[m] = std::exp(-0.5 * z * z) / (bandwidth * std::sqrt(2.0 * std::numbers::pi));
    }
    GridDensity d(grid);
    for (std::size_t j = 0; j < n; ++j) {
        if (hist[j] == 0.0) continue;
        const std::size_t lo = j >= half ? j - half : 0;
        const std::size_t hi = std::min(n, j + half + 1);
        for (std::size_t i = lo; i < hi; ++i) d.values[i] += hist[j] * kernel[i + half - j];
    }
    if (diag != nullptr) diag->lost_mass = std::max(0.0, 1.0 - d.mass());
    return normalize(d);
}

} // namespace nemlab
