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

// Drift and diffusion specifications, the frozen-density Fokker-Planck
// solver and the Picard iteration for density-dependent SDEs
//
//   dX_t = b_t(X_t, rho_t(X_t), rho_t) dt + sigma_t(X_t) dW_t,  rho_t = law density of X_t,
//
// in one space dimension with a = sigma^2.

#pragma once

#include <algorithm>
#include <cmath>
#include <functional>
#include <map>
#include <optional>
#include <random>
#include <span>
#include <string>
#include <vector>

#include "nemlab/density.hpp"
#include "nemlab/error.hpp"
#include "nemlab/metrics.hpp"

namespace nemlab {

using SpaceTimeFn = std::function<double(double t, double x)>;

struct DiffusionSpec {
    SpaceTimeFn a;
    double K_a = 1.0;     ///< >= sup a
    double K_inv = 1.0;   ///< >= sup 1/a
    double holder_eps = 0.5;

    static DiffusionSpec constant(double value) {
        require(value > 0.0, ErrorKind::invalid_parameter, "diffusion coefficient must be positive");
        return {[value](double, double) { return value; }, value, 1.0 / value, 0.5};
    }

    /// Probes a on a 200 x 200 (t, x) lattice.
    void validate(double T, double x_min, double x_max) const {
        require(static_cast<bool>(a), ErrorKind::invalid_parameter, "diffusion coefficient is not set");
        require(holder_eps > 0.0 && holder_eps < 1.0, ErrorKind::invalid_parameter, "holder exponent must lie in (0,1)");
        constexpr int n = 200;
        for (int i = 0; i < n; ++i) {
            const double t = T * i / (n - 1);
            for (int j = 0; j < n; ++j) {
                const double x = x_min + (x_max - x_min) * j / (n - 1);
                const double v = a(t, x);
                require(std::isfinite(v) && v <= K_a * (1 + 1e-12) && v * K_inv >= 1 - 1e-12,
                        ErrorKind::invalid_parameter, "a(t,x) leaves [1/K_inv, K_a] at t=" + std::to_string(t) +
                            ", x=" + std::to_string(x));
            }
        }
    }
};

/// Singular drift component b^(i) together with its dominating profile
/// f^(i) >= |b^(i)| in ~L^{p_i}_{q_i}.
struct SingularPart {
    SpaceTimeFn drift;
    SpaceTimeFn f_bound;
    double p = kInf;
    double q = kInf;
    /// Grid representative on the cell [lo, hi]: the signed p-mean of the
    /// drift over the cell, so the cellwise L^p mass is preserved.
    std::function<double(double t, double lo, double hi)> cell_value;
    /// p-mean of f_bound over the cell: the nonnegative representative used
    /// for norms (the signed drift cancels on a cell straddling x0).
    std::function<double(double t, double lo, double hi)> cell_bound;
    /// Magnitude cap at resolution h, of the form c h^{-gamma}.
    std::function<double(double h)> cap;
};

/// Convolution kernel whose feature (eta * rho)(x) is fed to the
/// density-dependent part of the drift.
struct FeatureKernel {
    std::function<double(double)> profile;
    double radius = 1.0;  ///< profile vanishes for |y| > radius
};

using NemytskiiFn = std::function<double(double t, double x, double r, std::span<const double> features)>;

struct DriftSpec {
    std::string name;
    SpaceTimeFn b1;
    std::vector<SingularPart> singular_parts;
    NemytskiiFn nemytskii;                ///< empty when the drift ignores the density
    std::vector<FeatureKernel> kernels;
    double K = 1.0;
    double tau = 0.0;
    double k_lip = 2.0;

    bool density_dependent() const noexcept { return static_cast<bool>(nemytskii); }

    /// Drift without singular and density-dependent parts (the reference SDE).
    DriftSpec regular_part() const {
        DriftSpec d;
        d.name = name + ":b1";
        d.b1 = b1;
        d.K = K;
        d.tau = tau;
        d.k_lip = k_lip;
        return d;
    }
};

/// (p, q) in the class K for d = 1: p, q > 2 and 1/p + 2/q < 1.
inline bool in_class_K(double p, double q, int d = 1) {
    const double ip = std::isinf(p) ? 0.0 : 1.0 / p;
    const double iq = std::isinf(q) ? 0.0 : 1.0 / q;
    return p > 2.0 && q > 2.0 && d * ip + 2.0 * iq < 1.0;
}

/// Probe-based checks of the structural assumptions on a drift: class-K
/// exponents, Lipschitz b1 and the t^tau-weighted Lipschitz bound in r.
inline void validate_drift(const DriftSpec& drift, double T, double x_min, double x_max) {
    require(static_cast<bool>(drift.b1), ErrorKind::invalid_drift, "b1 is not set");
    require(drift.K > 0.0, ErrorKind::invalid_drift, "K > 0 violated");
    require(drift.tau >= 0.0, ErrorKind::invalid_drift, "tau >= 0 violated");
    require(drift.k_lip > 1.0, ErrorKind::invalid_drift, "k > d violated (k = " + std::to_string(drift.k_lip) + ")");
    for (const auto& part : drift.singular_parts) {
        require(in_class_K(part.p, part.q), ErrorKind::invalid_drift,
                "(p,q) in K violated: d/p + 2/q < 1 with p,q > 2 fails for (" + std::to_string(part.p) + "," +
                    std::to_string(part.q) + ")");
    }
    std::mt19937_64 gen(0x5eedULL);
    std::uniform_real_distribution<double> ut(0.0, T);
    std::uniform_real_distribution<double> ux(x_min, x_max);
    std::uniform_real_distribution<double> ur(0.0, 20.0);
    for (int probe = 0; probe < 2000; ++probe) {
        const double t = ut(gen);
        const double x = ux(gen);
        const double y = ux(gen);
        const double lhs = std::abs(drift.b1(t, x) - drift.b1(t, y));
        require(lhs <= drift.K * std::abs(x - y) * (1 + 1e-9) + 1e-12, ErrorKind::invalid_drift,
                "|b1(t,x) - b1(t,y)| <= K|x-y| violated at t=" + std::to_string(t));
    }
    if (drift.density_dependent()) {
        std::vector<double> feats(drift.kernels.size());
        std::uniform_real_distribution<double> uf(0.0, 5.0);
        for (int probe = 0; probe < 2000; ++probe) {
            const double t = ut(gen);
            const double x = ux(gen);
            const double r = ur(gen);
            const double r2 = ur(gen);
            for (double& f : feats) f = uf(gen);
            const double lhs = std::abs(drift.nemytskii(t, x, r, feats) - drift.nemytskii(t, x, r2, feats));
            const double rhs = drift.K * std::pow(t, drift.tau) * std::abs(r - r2);
            require(lhs <= rhs * (1 + 1e-9) + 1e-12, ErrorKind::invalid_drift,
                    "|b(t,x,r,.) - b(t,x,r',.)| <= K t^tau |r - r'| violated at t=" + std::to_string(t));
        }
    }
}

using DriftParams = std::map<std::string, double>;

namespace detail {

inline double param(const DriftParams& p, const std::string& key, double fallback) {
    auto it = p.find(key);
    return it == p.end() ? fallback : it->second;
}

/// int_lo^hi |x - x0|^{-s} dx for s < 1.
inline double power_integral(double lo, double hi, double x0, double s) {
    auto prim = [s](double u) {  // int_0^u |v|^{-s} dv, signed
        const double m = std::pow(std::abs(u), 1.0 - s) / (1.0 - s);
        return u < 0.0 ? -m : m;
    };
    return prim(hi - x0) - prim(lo - x0);
}

inline double bump(double y) {
    return std::abs(y) < 1.0 ? std::exp(-1.0 / (1.0 - y * y)) : 0.0;
}

/// int_{-1}^{1} exp(-1/(1-y^2)) dy.
inline double bump_mass() {
    static const double mass = [] {
        const int n = 20000;
        double s = 0.0;
        for (int i = 0; i < n; ++i) s += bump(-1.0 + (i + 0.5) * 2.0 / n);
        return s * 2.0 / n;
    }();
    return mass;
}

} // namespace detail

/// Built-in drifts:
///   linear_ou             b = -theta x
///   capped_density        b = -theta x + t^tau kappa min(r, M)
///   smoothed_interaction  b = -theta x + t^tau kappa (eta_h * rho)(x)
///   singular_well         b = -theta x - c sign(x - x0)|x - x0|^{-gamma} 1_{|x - x0| <= 1}
inline DriftSpec builtin_drift(const std::string& name, const DriftParams& params = {}) {
    const double theta = detail::param(params, "theta", 1.0);
    const double kappa = detail::param(params, "kappa", 0.1);
    const double tau = detail::param(params, "tau", 0.6);
    DriftSpec d;
    d.name = name;
    d.b1 = [theta](double, double x) { return -theta * x; };
    d.tau = tau;
    d.k_lip = detail::param(params, "k", 2.0);
    double K = std::abs(theta);

    if (name == "linear_ou") {
    } else if (name == "capped_density") {
        const double M = detail::param(params, "M", 5.0);
        require(M > 0.0, ErrorKind::invalid_parameter, "capped_density needs M > 0");
        if (kappa != 0.0)
            d.nemytskii = [tau, kappa, M](double t, double, double r, std::span<const double>) {
                return std::pow(t, tau) * kappa * std::min(r, M);
            };
        K = std::max(K, std::abs(kappa));
    } else if (name == "smoothed_interaction") {
        const double h = detail::param(params, "h", 0.25);
        require(h > 0.0, ErrorKind::invalid_parameter, "smoothed_interaction needs h > 0");
        const double norm = 1.0 / (h * detail::bump_mass());
        d.kernels.push_back({[h, norm](double y) { return norm * detail::bump(y / h); }, h});
        if (kappa != 0.0)
            d.nemytskii = [tau, kappa](double t, double, double, std::span<const double> f) {
                return std::pow(t, tau) * kappa * f[0];
            };
        // Lipschitz in rho through ||eta_h||_{k'} ||rho - rho'||_{~L^k}.
        K = std::max(K, std::abs(kappa) * norm);
    } else if (name == "singular_well") {
        const double c = detail::param(params, "c", 0.5);
        const double gamma = detail::param(params, "gamma", 0.3);
        const double x0 = detail::param(params, "x0", 0.0);
        const double p2 = detail::param(params, "p2", 3.0);
        const double q2 = detail::param(params, "q2", 4.0);
        require(c >= 0.0, ErrorKind::invalid_parameter, "singular_well needs c >= 0");
        require(gamma >= 0.0, ErrorKind::invalid_parameter, "singular_well needs gamma >= 0");
        require(gamma * p2 < 1.0, ErrorKind::invalid_drift,
                "gamma * p2 < 1 violated: |x|^{-gamma} is not locally L^p2 (gamma=" + std::to_string(gamma) +
                    ", p2=" + std::to_string(p2) + ")");
        SingularPart part;
        part.p = p2;
        part.q = q2;
        part.drift = [c, gamma, x0](double, double x) {
            const double u = x - x0;
            if (std::abs(u) > 1.0) return 0.0;
            if (u == 0.0) return 0.0;
            return -c * (u > 0 ? 1.0 : -1.0) * std::pow(std::abs(u), -gamma);
        };
        part.f_bound = [c, gamma, x0](double, double x) {
            const double u = std::abs(x - x0);
            return u <= 1.0 ? (u == 0.0 ? kInf : c * std::pow(u, -gamma)) : 0.0;
        };
        part.cell_value = [c, gamma, x0, p2](double, double lo, double hi) {
            const double a = std::max(lo, x0 - 1.0);
            const double b = std::min(hi, x0 + 1.0);
            if (a >= b || c == 0.0) return 0.0;
            // Signed p-mean over the cell; the two sides of x0 push in
            // opposite directions.
            const double left = a < x0 ? detail::power_integral(a, std::min(b, x0), x0, gamma * p2) : 0.0;
            const double right = b > x0 ? detail::power_integral(std::max(a, x0), b, x0, gamma * p2) : 0.0;
            const double mag = std::pow((left + right) / (hi - lo), 1.0 / p2) * c;
            const double sign = right > left ? -1.0 : (left > right ? 1.0 : 0.0);
            return sign * mag;
        };
        part.cell_bound = [c, gamma, x0, p2](double, double lo, double hi) {
            const double a = std::max(lo, x0 - 1.0);
            const double b = std::min(hi, x0 + 1.0);
            if (a >= b || c == 0.0) return 0.0;
            return c * std::pow(detail::power_integral(a, b, x0, gamma * p2) / (hi - lo), 1.0 / p2);
        };
        // Largest cell p-mean, reached on the cell centred at x0, so the cap
        // never cuts a cell representative.
        part.cap = [c, gamma, p2](double h) {
            return c * std::pow(1.0 - gamma * p2, -1.0 / p2) * std::pow(0.5 * h, -gamma);
        };
        d.singular_parts.push_back(std::move(part));
    } else {
        throw Error(ErrorKind::invalid_parameter, "unknown drift '" + name + "'");
    }
    d.K = detail::param(params, "K", K);
    return d;
}

// ---------------------------------------------------------------------------
// Fokker-Planck solver

namespace detail {

/// Discrete convolution (eta * rho)(x_j) = sum_i eta(x_j - x_i) rho_i dx.
inline std::vector<double> convolve(const GridDensity& rho, const FeatureKernel& kernel) {
    const auto& g = rho.grid;
    const std::size_t n = g.size();
    const std::size_t half = g.cells_within(kernel.radius) + 1;
    std::vector<double> w(2 * half + 1);
    for (std::size_t m = 0; m < w.size(); ++m)
        w[m] = kernel.profile((static_cast<double>(m) - static_cast<double>(half)) * g.dx()) * g.dx();
    std::vector<double> out(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const std::size_t lo = j >= half ? j - half : 0;
        const std::size_t hi = std::min(n, j + half + 1);
        double s = 0.0;
        for (std::size_t i = lo; i < hi; ++i) s += w[j + half - i] * rho.values[i];
        out[j] = s;
    }
    return out;
}

} // namespace detail

/// Density slots of the drift evaluated on a grid: r_j = rho(x_j) and
/// per-kernel features (eta * rho)(x_j).
struct DensitySlots {
    std::vector<double> r;
    std::vector<std::vector<double>> features;  ///< [kernel][cell]

    static DensitySlots from(const GridDensity& rho, const DriftSpec& drift) {
        DensitySlots s;
        s.r = rho.values;
        for (const auto& k : drift.kernels) s.features.push_back(detail::convolve(rho, k));
        return s;
    }

    /// Slots at an arbitrary point by linear interpolation between centres.
    void at(const Grid1D& grid, double x, double& r_out, std::vector<double>& f_out) const {
        const double s = std::clamp((x - grid.x_min()) / grid.dx() - 0.5, 0.0, static_cast<double>(grid.size() - 1));
        const auto j = std::min(static_cast<std::size_t>(s), grid.size() - 2);
        const double w = s - static_cast<double>(j);
        const bool inside = x >= grid.x_min() && x <= grid.x_max();
        r_out = inside ? (1 - w) * r[j] + w * r[j + 1] : 0.0;
        f_out.resize(features.size());
        for (std::size_t k = 0; k < features.size(); ++k)
            f_out[k] = inside ? (1 - w) * features[k][j] + w * features[k][j + 1] : 0.0;
    }
};

/// Grid representation of the singular parts at time t (p-mean cell values).
inline std::vector<double> singular_field(const DriftSpec& drift, const Grid1D& grid, double t) {
    std::vector<double> out(grid.size(), 0.0);
    for (const auto& part : drift.singular_parts) {
        const double cap = part.cap ? part.cap(grid.dx()) : kInf;
        for (std::size_t j = 0; j < grid.size(); ++j) {
            const double lo = grid.center(j) - 0.5 * grid.dx();
            const double hi = lo + grid.dx();
            const double v = part.cell_value ? part.cell_value(t, lo, hi) : part.drift(t, grid.center(j));
            out[j] += std::clamp(v, -cap, cap);
        }
    }
    return out;
}

/// Grid representative of sum_i f^(i) at time t, for the ~L^p_q norms.
inline std::vector<double> singular_bound_field(const DriftSpec& drift, const Grid1D& grid, double t) {
    std::vector<double> out(grid.size(), 0.0);
    for (const auto& part : drift.singular_parts) {
        const double cap = part.cap ? part.cap(grid.dx()) : kInf;
        for (std::size_t j = 0; j < grid.size(); ++j) {
            const double lo = grid.center(j) - 0.5 * grid.dx();
            const double v = part.cell_bound ? part.cell_bound(t, lo, lo + grid.dx()) : part.f_bound(t, grid.center(j));
            out[j] += std::min(std::abs(v), cap);
        }
    }
    return out;
}

/// Drift values at the cell centres at time t.
inline std::vector<double> drift_field(const DriftSpec& drift, const Grid1D& grid, double t, const DensitySlots* slots,
                                       std::span<const double> singular = {}) {
    std::vector<double> b(grid.size());
    std::vector<double> feats;
    for (std::size_t j = 0; j < grid.size(); ++j) {
        const double x = grid.center(j);
        double v = drift.b1(t, x);
        if (!singular.empty()) v += singular[j];
        if (drift.density_dependent() && slots != nullptr) {
            feats.resize(slots->features.size());
            for (std::size_t k = 0; k < feats.size(); ++k) feats[k] = slots->features[k][j];
            v += drift.nemytskii(t, x, slots->r[j], feats);
        }
        b[j] = v;
    }
    return b;
}

/// One finite-volume step of d_t rho = (1/2) d_xx(a rho) - d_x(b rho) with
/// no-flux boundaries: explicit upwind advection, then implicit diffusion
/// (tridiagonal). Requires dt * max|b| <= dx.
inline GridDensity fokker_planck_step(const GridDensity& rho, std::span<const double> b, std::span<const double> a,
                                      double dt) {
    const auto& g = rho.grid;
    const std::size_t n = g.size();
    require(dt > 0.0, ErrorKind::invalid_parameter, "time step must be positive");
    require(b.size() == n && a.size() == n, ErrorKind::grid_mismatch, "drift/diffusion fields do not match the grid");
    const double dx = g.dx();
    double bmax = 0.0;
    for (std::size_t j = 0; j < n; ++j) {
        require(std::isfinite(b[j]) && std::isfinite(a[j]) && a[j] > 0.0, ErrorKind::invalid_parameter,
                "non-finite drift or non-positive diffusion in cell " + std::to_string(j));
        bmax = std::max(bmax, std::abs(b[j]));
    }
    require(dt * bmax <= dx * (1 + 1e-12), ErrorKind::invalid_parameter, "advective CFL condition dt*max|b| <= dx violated");

    // Upwind advection.
    std::vector<double> rhs(rho.values);
    const double c = dt / dx;
    for (std::size_t j = 0; j + 1 < n; ++j) {
        const double v = 0.5 * (b[j] + b[j + 1]);
        const double flux = v > 0.0 ? v * rho.values[j] : v * rho.values[j + 1];
        rhs[j] -= c * flux;
        rhs[j + 1] += c * flux;
    }

    // (I - dt L) rho' = rhs with L rho_j = (1/2)[(a rho)_{j+1} - 2 (a rho)_j + (a rho)_{j-1}] / dx^2,
    // one-sided at the walls.
    const double r = dt / (2.0 * dx * dx);
    std::vector<double> lower(n, 0.0), diag(n, 0.0), upper(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        const double neighbours = (j > 0 ? 1.0 : 0.0) + (j + 1 < n ? 1.0 : 0.0);
        diag[j] = 1.0 + r * a[j] * neighbours;
        if (j > 0) lower[j] = -r * a[j - 1];
        if (j + 1 < n) upper[j] = -r * a[j + 1];
    }
    // Thomas algorithm.
    std::vector<double> cp(n), dp(n);
    cp[0] = upper[0] / diag[0];
    dp[0] = rhs[0] / diag[0];
    for (std::size_t j = 1; j < n; ++j) {
        const double m = diag[j] - lower[j] * cp[j - 1];
        require(std::abs(m) > 1e-300, ErrorKind::solver_failure, "tridiagonal system is singular");
        cp[j] = upper[j] / m;
        dp[j] = (rhs[j] - lower[j] * dp[j - 1]) / m;
    }
    GridDensity out(g);
    out.values[n - 1] = dp[n - 1];
    for (std::size_t j = n - 1; j-- > 0;) out.values[j] = dp[j] - cp[j] * out.values[j + 1];
    return out;
}

struct SolverOptions {
    double dt_max = 1e-4;
    double cfl = 0.5;                       ///< dt * max|b| <= cfl * dx
    std::size_t max_substeps = 2'000'000;  ///< total budget per flow
};

namespace detail {

inline std::vector<double> diffusion_field(const DiffusionSpec& diff, const Grid1D& grid, double t) {
    std::vector<double> a(grid.size());
    for (std::size_t j = 0; j < grid.size(); ++j) a[j] = diff.a(t, grid.center(j));
    return a;
}

/// Marches rho from t0 to t1; slots stay fixed over the interval.
inline GridDensity march(GridDensity rho, const DriftSpec& drift, const DiffusionSpec& diff, double t0, double t1,
                         const DensitySlots* slots, std::span<const double> singular, const SolverOptions& opt,
                         std::size_t& budget, double t_final) {
    const auto& g = rho.grid;
    const std::size_t steps = static_cast<std::size_t>(std::ceil((t1 - t0) / opt.dt_max * (1 - 1e-12)));
    const std::size_t nsteps = std::max<std::size_t>(1, steps);
    const double dt = (t1 - t0) / static_cast<double>(nsteps);
    for (std::size_t s = 0; s < nsteps; ++s) {
        const double t = t0 + (static_cast<double>(s) + 1.0) * dt;
        const auto b = drift_field(drift, g, t, slots, singular);
        const auto a = diffusion_field(diff, g, t);
        double bmax = 0.0;
        for (double v : b) bmax = std::max(bmax, std::abs(v));
        // Split further when the advective CFL bound is tighter than dt.
        const std::size_t sub = bmax > 0.0
            ? std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(dt * bmax / (opt.cfl * g.dx()))))
            : 1;
        // Projected cost of the rest of the flow at the current speed; fails
        // fast instead of grinding through the whole budget.
        const double projected = bmax * (t_final - t + dt) / (opt.cfl * g.dx());
        require(budget >= sub && static_cast<double>(budget) >= projected, ErrorKind::solver_failure, "substep budget exhausted by the CFL restriction (max|b| = " +
                                                              std::to_string(bmax) + ")");
        budget -= sub;
        for (std::size_t k = 0; k < sub; ++k) rho = fokker_planck_step(rho, b, a, dt / static_cast<double>(sub));
    }
    return rho;
}

inline void check_finite(const GridDensity& rho, std::size_t node) {
    for (double v : rho.values)
        require(std::isfinite(v), ErrorKind::solver_failure, "NaN/inf in density at time node " + std::to_string(node));
}

} // namespace detail

/// Phi^mu(gamma): law flow of the SDE whose density slots are frozen at
/// gamma. On the interval (t_i, t_{i+1}] the slots are read from gamma(t_{i+1}).
inline DensityFlow frozen_semigroup(const GridDensity& mu, const DensityFlow& gamma, const DriftSpec& drift,
                                    const DiffusionSpec& diff, const TimeGrid& tg, const SolverOptions& opt = {}) {
    require(!drift.density_dependent() || gamma.time_grid == tg, ErrorKind::grid_mismatch,
            "frozen flow is not defined on the requested time grid");
    DensityFlow out{tg, {}, false};
    out.snapshots.reserve(tg.size());
    out.snapshots.push_back(mu);
    std::size_t budget = opt.max_substeps;
    GridDensity rho = mu;
    for (std::size_t i = 0; i + 1 < tg.size(); ++i) {
        std::vector<double> singular;
        if (!drift.singular_parts.empty()) singular = singular_field(drift, mu.grid, tg[i + 1]);
        if (drift.density_dependent()) {
            const auto slots = DensitySlots::from(gamma.snapshots[i + 1], drift);
            rho = detail::march(std::move(rho), drift, diff, tg[i], tg[i + 1], &slots, singular, opt, budget, tg.T());
        } else {
            rho = detail::march(std::move(rho), drift, diff, tg[i], tg[i + 1], nullptr, singular, opt, budget, tg.T());
        }
        detail::check_finite(rho, i + 1);
        out.snapshots.push_back(rho);
    }
    return out;
}

/// Law flow of a density-independent drift.
inline DensityFlow linear_flow(const GridDensity& mu, const DriftSpec& drift, const DiffusionSpec& diff,
                               const TimeGrid& tg, const SolverOptions& opt = {}) {
    require(!drift.density_dependent(), ErrorKind::invalid_parameter, "linear_flow needs a density-independent drift");
    const DensityFlow none{tg, {mu}, false};
    return frozen_semigroup(mu, none, drift, diff, tg, opt);
}

/// Direct nonlinear march: the density slots on (t_i, t_{i+1}] are taken
/// from the solution itself at t_i.
inline DensityFlow solve_nonlinear(const GridDensity& mu, const DriftSpec& drift, const DiffusionSpec& diff,
                                   const TimeGrid& tg, const SolverOptions& opt = {}) {
    DensityFlow out{tg, {}, false};
    out.snapshots.reserve(tg.size());
    out.snapshots.push_back(mu);
    std::size_t budget = opt.max_substeps;
    GridDensity rho = mu;
    for (std::size_t i = 0; i + 1 < tg.size(); ++i) {
        std::vector<double> singular;
        if (!drift.singular_parts.empty()) singular = singular_field(drift, mu.grid, tg[i + 1]);
        const auto slots = DensitySlots::from(rho, drift);
        rho = detail::march(std::move(rho), drift, diff, tg[i], tg[i + 1], drift.density_dependent() ? &slots : nullptr,
                            singular, opt, budget, tg.T());
        detail::check_finite(rho, i + 1);
        out.snapshots.push_back(rho);
    }
    return out;
}

struct PicardResult {
    DensityFlow flow;
    std::size_t iterations = 0;
    std::vector<double> contraction_factors;  ///< d_lambda ratios of successive gaps
    std::vector<double> residuals;            ///< sup-t L^1 gaps
    double lambda_used = 0.0;
    double final_residual = kInf;
    std::size_t restarts = 0;
    bool converged = false;
};

struct PicardOptions {
    SolverOptions solver{};
    double ratio_limit = 0.9;
    std::size_t max_lambda_doublings = 6;
    double noise_floor = 1e-12;  ///< ratios are ignored once d_lambda drops below this
};

/// Picard iteration gamma^{(n+1)} = Phi^mu gamma^{(n)} from the b1-only flow.
/// lambda is doubled and the iteration restarted whenever an observed
/// d_lambda ratio exceeds ratio_limit.
inline PicardResult picard_fixed_point(const GridDensity& mu, const DriftSpec& drift, const DiffusionSpec& diff,
                                       const TimeGrid& tg, FlowMetricSpec spec, double tol, std::size_t max_iter,
                                       const PicardOptions& opt = {}) {
    require(tol > 0.0, ErrorKind::invalid_parameter, "picard tolerance must be positive");
    require(max_iter >= 2, ErrorKind::invalid_parameter, "picard needs max_iter >= 2");
    spec.validate();
    const DensityFlow reference = linear_flow(mu, drift.regular_part(), diff, tg, opt.solver);

    PicardResult result{reference, 0, {}, {}, spec.lambda, kInf, 0, false};
    for (std::size_t attempt = 0; attempt <= opt.max_lambda_doublings; ++attempt) {
        result.lambda_used = spec.lambda;
        result.restarts = attempt;
        result.contraction_factors.clear();
        result.residuals.clear();
        DensityFlow current = reference;
        double prev_d = -1.0;
        bool diverged = false;
        for (std::size_t it = 1; it <= max_iter; ++it) {
            std::optional<DensityFlow> attempt_flow;
            try {
                attempt_flow = frozen_semigroup(mu, current, drift, diff, tg, opt.solver);
            } catch (const Error& e) {
                if (e.kind() != ErrorKind::solver_failure) throw;
                std::string seq;
                for (double r : result.contraction_factors) seq += " " + std::to_string(r);
                throw Error(ErrorKind::solver_failure, e.message() + " in picard iteration " +
                                                           std::to_string(it) + " (lambda " +
                                                           std::to_string(spec.lambda) + "); ratios so far:" +
                                                           (seq.empty() ? std::string(" none") : seq));
            }
            DensityFlow next = std::move(*attempt_flow);
            const double residual = sup_l1_gap(next, current);
            const double d = d_lambda(next, current, spec);
            result.residuals.push_back(residual);
            if (prev_d > opt.noise_floor) {
                const double ratio = d / prev_d;
                result.contraction_factors.push_back(ratio);
                if (ratio > opt.ratio_limit && residual >= tol) diverged = true;
            }
            prev_d = d;
            current = std::move(next);
            result.iterations = it;
            result.final_residual = residual;
            if (residual < tol) {
                result.flow = std::move(current);
                result.converged = true;
                return result;
            }
            if (diverged) break;
        }
        if (!diverged) {
            result.flow = std::move(current);
            return result;  // max_iter reached without a contraction failure
        }
        spec.lambda *= 2.0;
    }
    std::string seq;
    for (double r : result.contraction_factors) seq += " " + std::to_string(r);
    throw Error(ErrorKind::no_convergence, "d_lambda ratios stay above " + std::to_string(opt.ratio_limit) +
                                               " after lambda escalation to " + std::to_string(result.lambda_used) +
                                               "; ratios:" + seq);
}

} // namespace nemlab
