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

// Interacting-particle Euler-Maruyama simulation with KDE feedback,
// Girsanov path weights and Monte Carlo exponential moments.

#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "nemlab/density.hpp"
#include "nemlab/dynamics.hpp"
#include "nemlab/error.hpp"
#include "nemlab/parallel.hpp"
#include "nemlab/rng.hpp"

namespace nemlab {

/// Law of X_0.
struct InitialLaw {
    enum class Kind { gaussian, point, density };
    Kind kind = Kind::gaussian;
    double mean = 0.0;
    double sd = 1.0;
    std::optional<GridDensity> density;

    static InitialLaw gaussian(double mean, double sd) {
        require(sd > 0.0, ErrorKind::invalid_parameter, "initial sd must be positive");
        return {Kind::gaussian, mean, sd, std::nullopt};
    }
    static InitialLaw point(double x0) { return {Kind::point, x0, 0.0, std::nullopt}; }
    static InitialLaw from_density(GridDensity d) { return {Kind::density, 0.0, 0.0, normalize(d)}; }

    double sample(const ParticleStream& stream) const {
        switch (kind) {
        case Kind::point:
            return mean;
        case Kind::gaussian:
            return mean + sd * stream.normal(0, Stream::initial);
        case Kind::density: {
            // Inverse of the piecewise-linear CDF.
            const auto& d = *density;
            const double u = stream.uniform(0, Stream::initial);
            const double dx = d.grid.dx();
            double acc = 0.0;
            for (std::size_t j = 0; j < d.values.size(); ++j) {
                const double m = d.values[j] * dx;
                if (acc + m >= u && m > 0.0) return d.grid.x_min() + (static_cast<double>(j) + (u - acc) / m) * dx;
                acc += m;
            }
            return d.grid.x_max();
        }
        }
        return mean;
    }
};

/// Pointwise drift b(t, x) with the density slots supplied either by a
/// frozen flow (one slot set per time node) or set directly (particle KDE).
class DriftEvaluator {
public:
    DriftEvaluator(const DriftSpec& drift, const Grid1D& grid) : drift_(drift), grid_(grid) {
        for (const auto& part : drift_.singular_parts) caps_.push_back(part.cap ? part.cap(grid_.dx()) : kInf);
    }

    /// Density slots on (t_i, t_{i+1}] come from flow(t_{i+1}), matching frozen_semigroup.
    DriftEvaluator& freeze(const DensityFlow& flow) {
        require_same_grid(flow.grid(), grid_);
        nodes_ = flow.time_grid.nodes();
        frozen_.clear();
        for (const auto& s : flow.snapshots) frozen_.push_back(DensitySlots::from(s, drift_));
        return *this;
    }

    void set_slots(DensitySlots slots) { live_ = std::move(slots); }

    const DriftSpec& spec() const noexcept { return drift_; }
    const Grid1D& grid() const noexcept { return grid_; }

    double operator()(double t, double x, std::vector<double>& scratch) const {
        double v = drift_.b1(t, x);
        for (std::size_t i = 0; i < caps_.size(); ++i)
            v += std::clamp(drift_.singular_parts[i].drift(t, x), -caps_[i], caps_[i]);
        if (drift_.density_dependent()) {
            const DensitySlots* slots = nullptr;
            if (!frozen_.empty()) {
                auto it = std::lower_bound(nodes_.begin(), nodes_.end(), t - 1e-12 * nodes_.back());
                auto idx = static_cast<std::size_t>(it - nodes_.begin());
                idx = std::clamp<std::size_t>(idx, 1, frozen_.size() - 1);
                slots = &frozen_[idx];
            } else if (live_) {
                slots = &*live_;
            }
            require(slots != nullptr, ErrorKind::invalid_parameter,
                    "density-dependent drift '" + drift_.name + "' evaluated without a density");
            double r = 0.0;
            slots->at(grid_, x, r, scratch);
            v += drift_.nemytskii(t, x, r, scratch);
        }
        return v;
    }

private:
    DriftSpec drift_;
    Grid1D grid_;
    std::vector<double> caps_;
    std::vector<double> nodes_;
    std::vector<DensitySlots> frozen_;
    std::optional<DensitySlots> live_;
};

inline double reflect(double x, double lo, double hi) noexcept {
    const double w = hi - lo;
    for (int guard = 0; guard < 8 && (x < lo || x > hi); ++guard) {
        if (x > hi) x = 2.0 * hi - x;
        if (x < lo) x = 2.0 * lo - x;
    }
    return std::clamp(x, lo, lo + w);
}

struct ParticleEnsemble {
    std::vector<double> positions;
    double time = 0.0;
    std::uint64_t master_seed = 0;
    std::vector<std::uint64_t> stream_offsets;  ///< draws consumed per particle
    std::optional<std::vector<double>> log_weights;
};

struct ParticleConfig {
    std::size_t N = 100'000;
    double dt = 1e-3;
    double T = 1.0;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
    double bandwidth = 0.0;  ///< 0 selects Silverman's rule at every use
};

struct MkvResult {
    ParticleEnsemble ensemble;
    DensityFlow marginals;  ///< KDE marginals on the output time grid
    std::size_t steps = 0;
};

/// Euler-Maruyama for the particle system: X_i += b(t, X_i, rho_hat(X_i), rho_hat) dt + sqrt(a dt) xi_i,
/// with rho_hat the KDE of the ensemble, reflected at the grid walls.
inline MkvResult euler_maruyama_mkv(const InitialLaw& init, const DriftSpec& drift, const DiffusionSpec& diff,
                                    const Grid1D& grid, const ParticleConfig& cfg, const TimeGrid& output) {
    require(cfg.N >= 1, ErrorKind::invalid_parameter, "particle count must be positive");
    require(cfg.dt > 0.0 && cfg.T > 0.0, ErrorKind::invalid_parameter, "dt and T must be positive");
    require(cfg.bandwidth >= 0.0, ErrorKind::invalid_parameter, "bandwidth must be positive (or 0 for Silverman)");
    require(std::abs(output.T() - cfg.T) <= 1e-12 * cfg.T, ErrorKind::invalid_parameter, "output grid must end at T");

    const auto steps = static_cast<std::size_t>(std::llround(cfg.T / cfg.dt));
    require(steps >= 1, ErrorKind::invalid_parameter, "T/dt must be at least one step");
    const double dt = cfg.T / static_cast<double>(steps);
    const double sqdt = std::sqrt(dt);

    ParticleEnsemble ens;
    ens.master_seed = cfg.seed;
    ens.positions.resize(cfg.N);
    ens.stream_offsets.assign(cfg.N, 0);
    parallel_for(cfg.N, cfg.threads, [&](std::size_t b, std::size_t e) {
        for (std::size_t i = b; i < e; ++i)
            ens.positions[i] = reflect(init.sample(ParticleStream(cfg.seed, i)), grid.x_min(), grid.x_max());
    });

    auto estimate = [&](std::span<const double> xs) {
        // The rule collapses for coincident particles (point initial law); floor it at one cell.
        const double h = cfg.bandwidth > 0.0 ? cfg.bandwidth : std::max(silverman_bandwidth(xs), grid.dx());
        return kde_binned(xs, h, grid);
    };

    // Output node i is recorded after step round(t_i / dt).
    std::vector<std::size_t> record_at(output.size());
    for (std::size_t i = 0; i < output.size(); ++i)
        record_at[i] = static_cast<std::size_t>(std::llround(output[i] / dt));

    DensityFlow marginals{output, {}, false};
    marginals.snapshots.reserve(output.size());
    std::size_t next_record = 0;
    auto record = [&](std::size_t step) {
        while (next_record < record_at.size() && record_at[next_record] == step) {
            marginals.snapshots.push_back(estimate(ens.positions));
            ++next_record;
        }
    };
    record(0);

    DriftEvaluator eval(drift, grid);
    for (std::size_t n = 0; n < steps; ++n) {
        const double t = static_cast<double>(n) * dt;
        if (drift.density_dependent()) eval.set_slots(DensitySlots::from(estimate(ens.positions), drift));
        parallel_for(cfg.N, cfg.threads, [&](std::size_t b, std::size_t e) {
            std::vector<double> scratch;
            for (std::size_t i = b; i < e; ++i) {
                const double x = ens.positions[i];
                const double xi = ParticleStream(cfg.seed, i).normal(n + 1);
                const double a = diff.a(t, x);
                const double next = x + eval(t, x, scratch) * dt + std::sqrt(a) * sqdt * xi;
                ens.positions[i] = reflect(next, grid.x_min(), grid.x_max());
            }
        });
        for (std::size_t i = 0; i < cfg.N; ++i)
            require(std::isfinite(ens.positions[i]), ErrorKind::solver_failure,
                    "NaN particle position at step " + std::to_string(n + 1));
        record(n + 1);
    }
    for (auto& c : ens.stream_offsets) c = steps;
    ens.time = cfg.T;
    require(marginals.snapshots.size() == output.size(), ErrorKind::invalid_parameter,
            "output time grid is not resolved by the particle step");
    return {std::move(ens), std::move(marginals), steps};
}

// ---------------------------------------------------------------------------
// Paths and Girsanov weights

/// One path with its Brownian increments: x[n] at t0 + n dt, dW[n] drives x[n] -> x[n+1].
struct StoredPath {
    double t0 = 0.0;
    double dt = 0.0;
    std::vector<double> x;
    std::vector<double> dW;
};

struct PathConfig {
    double t0 = 0.0;
    double t1 = 1.0;
    double dt = 1e-3;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
};

namespace detail {

inline std::size_t path_steps(const PathConfig& cfg) {
    require(cfg.t1 > cfg.t0 && cfg.dt > 0.0, ErrorKind::invalid_parameter, "path needs t1 > t0 and dt > 0");
    return std::max<std::size_t>(1, static_cast<std::size_t>(std::llround((cfg.t1 - cfg.t0) / cfg.dt)));
}

} // namespace detail

/// Simulates path `index` of the SDE driven by `drift`, reflected at the grid walls.
inline void simulate_path(const InitialLaw& init, const DriftEvaluator& drift, const DiffusionSpec& diff,
                          const PathConfig& cfg, std::uint64_t index, StoredPath& path, std::vector<double>& scratch) {
    const std::size_t steps = detail::path_steps(cfg);
    const double dt = (cfg.t1 - cfg.t0) / static_cast<double>(steps);
    const double sqdt = std::sqrt(dt);
    const ParticleStream stream(cfg.seed, index);
    const auto& g = drift.grid();
    path.t0 = cfg.t0;
    path.dt = dt;
    path.x.resize(steps + 1);
    path.dW.resize(steps);
    path.x[0] = reflect(init.sample(stream), g.x_min(), g.x_max());
    for (std::size_t n = 0; n < steps; ++n) {
        const double t = cfg.t0 + static_cast<double>(n) * dt;
        const double x = path.x[n];
        const double dW = sqdt * stream.normal(n + 1);
        path.dW[n] = dW;
        path.x[n + 1] = reflect(x + drift(t, x, scratch) * dt + std::sqrt(diff.a(t, x)) * dW, g.x_min(), g.x_max());
    }
}

/// log R = sum xi dW - (1/2) sum xi^2 dt with xi = (b_alt - b_ref) / sqrt(a)
/// along a path simulated under b_ref.
inline double girsanov_log_weight(const StoredPath& path, const DriftEvaluator& drift_ref,
                                  const DriftEvaluator& drift_alt, const DiffusionSpec& diff) {
    std::vector<double> scratch;
    double stoch = 0.0;
    double quad = 0.0;
    for (std::size_t n = 0; n < path.dW.size(); ++n) {
        const double t = path.t0 + static_cast<double>(n) * path.dt;
        const double x = path.x[n];
        const double xi = (drift_alt(t, x, scratch) - drift_ref(t, x, scratch)) / std::sqrt(diff.a(t, x));
        require(std::isfinite(xi), ErrorKind::weight_overflow, "non-finite Girsanov integrand at step " + std::to_string(n));
        stoch += xi * path.dW[n];
        quad += xi * xi;
    }
    return stoch - 0.5 * quad * path.dt;
}

struct McEstimate {
    double mean = 0.0;
    double std_error = 0.0;
    std::size_t samples = 0;
};

namespace detail {

inline McEstimate summarize(std::span<const double> v) {
    McEstimate e;
    e.samples = v.size();
    long double s = 0.0L;
    for (double x : v) s += x;
    e.mean = static_cast<double>(s / static_cast<long double>(v.size()));
    long double ss = 0.0L;
    for (double x : v) ss += (x - e.mean) * (x - e.mean);
    const double var = v.size() > 1 ? static_cast<double>(ss / static_cast<long double>(v.size() - 1)) : 0.0;
    e.std_error = std::sqrt(var / static_cast<double>(v.size()));
    return e;
}

} // namespace detail

struct GirsanovSummary {
    McEstimate weight;      ///< E[R], should be 1
    McEstimate log_weight;  ///< E[log R]
    ParticleEnsemble ensemble;
};

/// Simulates N paths under drift_ref and averages R and log R for drift_alt.
inline GirsanovSummary girsanov_mc(const InitialLaw& init, const DriftEvaluator& drift_ref,
                                   const DriftEvaluator& drift_alt, const DiffusionSpec& diff, const PathConfig& cfg,
                                   std::size_t N) {
    require(N >= 2, ErrorKind::invalid_parameter, "Monte Carlo needs at least two paths");
    std::vector<double> logw(N);
    std::vector<double> finals(N);
    parallel_for(N, cfg.threads, [&](std::size_t b, std::size_t e) {
        StoredPath path;
        std::vector<double> scratch;
        for (std::size_t i = b; i < e; ++i) {
            simulate_path(init, drift_ref, diff, cfg, i, path, scratch);
            logw[i] = girsanov_log_weight(path, drift_ref, drift_alt, diff);
            finals[i] = path.x.back();
        }
    });
    for (double lw : logw)
        require(lw <= 700.0, ErrorKind::weight_overflow, "Girsanov log-weight exceeds 700");
    std::vector<double> w(N);
    for (std::size_t i = 0; i < N; ++i) w[i] = std::exp(logw[i]);
    GirsanovSummary out;
    out.weight = detail::summarize(w);
    out.log_weight = detail::summarize(logw);
    out.ensemble.positions = std::move(finals);
    out.ensemble.time = cfg.t1;
    out.ensemble.master_seed = cfg.seed;
    out.ensemble.stream_offsets.assign(N, detail::path_steps(cfg));
    out.ensemble.log_weights = std::move(logw);
    return out;
}

/// (1/2) E int_0^t |xi_s|^2 ds along drift_a-driven paths: the Girsanov bound
/// on the path-space relative entropy of the two laws.
inline McEstimate path_relative_entropy_mc(const DriftEvaluator& drift_a, const DriftEvaluator& drift_b,
                                           const DiffusionSpec& diff, const InitialLaw& init, const PathConfig& cfg,
                                           std::size_t N) {
    require(N >= 10'000, ErrorKind::invalid_parameter, "path relative entropy needs N >= 1e4");
    std::vector<double> vals(N);
    parallel_for(N, cfg.threads, [&](std::size_t b, std::size_t e) {
        StoredPath path;
        std::vector<double> scratch;
        for (std::size_t i = b; i < e; ++i) {
            simulate_path(init, drift_a, diff, cfg, i, path, scratch);
            double quad = 0.0;
            for (std::size_t n = 0; n < path.dW.size(); ++n) {
                const double t = path.t0 + static_cast<double>(n) * path.dt;
                const double x = path.x[n];
                const double xi = (drift_a(t, x, scratch) - drift_b(t, x, scratch)) / std::sqrt(diff.a(t, x));
                require(std::isfinite(xi), ErrorKind::weight_overflow, "non-finite Girsanov integrand");
                quad += xi * xi;
            }
            vals[i] = 0.5 * quad * path.dt;
        }
    });
    return detail::summarize(vals);
}

// ---------------------------------------------------------------------------
// Exponential moments of int_s^t f_r(X_r)^2 dr

/// Space-time function f with the integrability exponents (p, q) declared
/// for it. Singular profiles carry a p-mean cell representative and a
/// grid-scale cap, exactly like singular drift parts.
struct KhasminskiiFunction {
    SpaceTimeFn f;
    double p = 4.0;
    double q = 4.0;
    std::function<double(double t, double lo, double hi)> cell_value;
    std::function<double(double h)> cap;

    static KhasminskiiFunction constant(double c0, double p = 4.0, double q = 4.0) {
        return {[c0](double, double) { return c0; }, p, q, nullptr, nullptr};
    }

    /// f(x) = c |x - x0|^{-gamma} 1_{|x - x0| <= 1}.
    static KhasminskiiFunction power_well(double c, double gamma, double x0, double p, double q) {
        require(gamma >= 0.0 && gamma < 1.0, ErrorKind::invalid_parameter, "power well needs 0 <= gamma < 1");
        KhasminskiiFunction k;
        k.p = p;
        k.q = q;
        k.f = [c, gamma, x0](double, double x) {
            const double u = std::abs(x - x0);
            return u <= 1.0 ? (u == 0.0 ? kInf : c * std::pow(u, -gamma)) : 0.0;
        };
        // p-mean over the cell. For gamma p >= 1 the continuum mean diverges
        // on the cell holding x0; the cap then decides.
        k.cell_value = [c, gamma, x0, p](double, double lo, double hi) {
            const double a = std::max(lo, x0 - 1.0);
            const double b = std::min(hi, x0 + 1.0);
            if (a >= b) return 0.0;
            const double s = gamma * p;
            if (s >= 1.0 && a <= x0 && x0 <= b) return kInf;
            const double integral = detail::power_integral(a, b, x0, s);
            return c * std::pow(integral / (hi - lo), 1.0 / p);
        };
        k.cap = [c, gamma, p](double h) {
            const double s = gamma * p;
            const double factor = s < 1.0 ? std::pow(1.0 - s, -1.0 / p) : 1.0;
            return c * factor * std::pow(0.5 * h, -gamma);
        };
        return k;
    }

    double capped(double t, double x, double cap_value) const { return std::min(f(t, x), cap_value); }
};

struct KhasminskiiConfig {
    double s = 0.0;
    double t = 1.0;
    std::vector<double> lambdas;
    std::size_t N = 100'000;
    double dt = 1e-3;
    std::uint64_t seed = 1;
    std::size_t threads = 1;
};

struct KhasminskiiReport {
    std::vector<double> lambda_values;
    std::vector<double> mc_estimates;
    std::vector<double> mc_stderr;
    double bound_quadratic = 0.0;    ///< c in exp(c lambda^2 ||f||^2_{~L^p_q})
    double bound_superlinear = 0.0;  ///< c in exp(c lambda^q int ||f_r||^q_{~L^p} dr)
    double regime_split = 0.0;       ///< lambda with ||lambda f||_{~L^p_q(s,t)} = 1
    std::vector<double> log_estimates;
    std::vector<double> effective_sample_size;
    std::vector<bool> unreliable;
    double f_norm = 0.0;             ///< ||f||_{~L^p_q(s,t)} on the grid
    double f_time_integral = 0.0;    ///< int_s^t ||f_r||^q_{~L^p} dr
    bool bounds_hold = false;
};

/// ||f||_{~L^p_q(s,t)} and int_s^t ||f_r||^q_{~L^p} dr of the grid representative.
inline std::pair<double, double> khasminskii_norms(const KhasminskiiFunction& fn, const Grid1D& grid, double s,
                                                   double t) {
    std::vector<double> nodes{0.0};
    if (s > 0.0) nodes.push_back(s);
    for (int i = 1; i <= 32; ++i) nodes.push_back(s + (t - s) * i / 32.0);
    FieldFlow flow{TimeGrid::from_nodes(nodes), grid, {}, false};
    const double cap = fn.cap ? fn.cap(grid.dx()) : kInf;
    for (double r : nodes) {
        std::vector<double> v(grid.size());
        for (std::size_t j = 0; j < grid.size(); ++j) {
            const double lo = grid.center(j) - 0.5 * grid.dx();
            const double val = fn.cell_value ? fn.cell_value(r, lo, lo + grid.dx()) : fn.f(r, grid.center(j));
            v[j] = std::min(std::abs(val), cap);
        }
        flow.values.push_back(std::move(v));
    }
    const double norm = tilde_spacetime_norm(flow, fn.p, fn.q, s, t);
    double integral = 0.0;
    for (std::size_t i = 0; i + 1 < nodes.size(); ++i) {
        if (nodes[i] < s - 1e-15) continue;
        const double a = std::pow(tilde_norm(flow.values[i], grid, fn.p), fn.q);
        const double b = std::pow(tilde_norm(flow.values[i + 1], grid, fn.p), fn.q);
        integral += 0.5 * (nodes[i + 1] - nodes[i]) * (a + b);
    }
    return {norm, integral};
}

/// Samples A_i = int_s^t f_r(X_r)^2 dr (trapezoid) along N paths.
inline std::vector<double> khasminskii_samples(const KhasminskiiFunction& fn, const DriftEvaluator& drift,
                                               const DiffusionSpec& diff, const InitialLaw& init,
                                               const KhasminskiiConfig& cfg) {
    const PathConfig pc{cfg.s, cfg.t, cfg.dt, cfg.seed, cfg.threads};
    const double cap = fn.cap ? fn.cap(drift.grid().dx()) : kInf;
    std::vector<double> A(cfg.N);
    parallel_for(cfg.N, cfg.threads, [&](std::size_t b, std::size_t e) {
        StoredPath path;
        std::vector<double> scratch;
        for (std::size_t i = b; i < e; ++i) {
            simulate_path(init, drift, diff, pc, i, path, scratch);
            double acc = 0.0;
            double prev = 0.0;
            for (std::size_t n = 0; n < path.x.size(); ++n) {
                const double t = path.t0 + static_cast<double>(n) * path.dt;
                const double v = fn.capped(t, path.x[n], cap);
                const double cur = v * v;
                if (n > 0) acc += 0.5 * path.dt * (prev + cur);
                prev = cur;
            }
            A[i] = acc;
        }
    });
    return A;
}

/// Monte Carlo E exp(lambda^2 int_s^t f_r(X_r)^2 dr) over a lambda grid, with
/// the two-regime constants fitted on that grid. The same paths serve every
/// lambda.
inline KhasminskiiReport khasminskii_mc(const KhasminskiiFunction& fn, const DriftEvaluator& drift,
                                        const DiffusionSpec& diff, const InitialLaw& init,
                                        const KhasminskiiConfig& cfg) {
    require(cfg.s >= 0.0 && cfg.s < cfg.t, ErrorKind::invalid_parameter, "khasminskii needs 0 <= s < t");
    require(!cfg.lambdas.empty(), ErrorKind::invalid_parameter, "lambda grid is empty");
    require(cfg.N >= 2, ErrorKind::invalid_parameter, "Monte Carlo needs at least two paths");
    const auto [norm, integral] = khasminskii_norms(fn, drift.grid(), cfg.s, cfg.t);
    require(std::isfinite(norm) && norm > 0.0, ErrorKind::invalid_parameter, "||f||_{~L^p_q} must be finite and positive");

    const auto A = khasminskii_samples(fn, drift, diff, init, cfg);
    double amax = 0.0;
    for (double a : A) amax = std::max(amax, a);

    KhasminskiiReport rep;
    rep.lambda_values = cfg.lambdas;
    rep.f_norm = norm;
    rep.f_time_integral = integral;
    rep.regime_split = 1.0 / norm;
    const double n = static_cast<double>(A.size());
    for (double lam : cfg.lambdas) {
        require(lam > 0.0, ErrorKind::invalid_parameter, "lambda values must be positive");
        const double l2 = lam * lam;
        const double shift = l2 * amax;
        long double s1 = 0.0L, s2 = 0.0L;
        for (double a : A) {
            const long double w = std::exp(static_cast<long double>(l2 * a - shift));
            s1 += w;
            s2 += w * w;
        }
        const double log_mean = shift + static_cast<double>(std::log(s1 / n));
        const double ess = static_cast<double>(s1 * s1 / s2);
        const long double mean_w = s1 / n;
        const long double var_w = std::max(0.0L, (s2 / n - mean_w * mean_w) * n / (n - 1));
        const double rel_se = static_cast<double>(std::sqrt(var_w / n) / mean_w);
        const double est = std::exp(log_mean);
        rep.log_estimates.push_back(log_mean);
        rep.mc_estimates.push_back(est);
        rep.mc_stderr.push_back(est * rel_se);
        rep.effective_sample_size.push_back(ess);
        rep.unreliable.push_back(ess < 100.0 || !std::isfinite(est));
    }

    // Smallest constants making each regime's bound hold on the grid.
    for (std::size_t i = 0; i < cfg.lambdas.size(); ++i) {
        const double lam = cfg.lambdas[i];
        if (lam * norm <= 1.0) {
            rep.bound_quadratic = std::max(rep.bound_quadratic, rep.log_estimates[i] / (lam * lam * norm * norm));
        } else {
            rep.bound_superlinear =
                std::max(rep.bound_superlinear, rep.log_estimates[i] / (std::pow(lam, fn.q) * integral));
        }
    }
    rep.bounds_hold = true;
    for (std::size_t i = 0; i < cfg.lambdas.size(); ++i) {
        const double lam = cfg.lambdas[i];
        const double log_bound = lam * norm <= 1.0 ? rep.bound_quadratic * lam * lam * norm * norm
                                                   : rep.bound_superlinear * std::pow(lam, fn.q) * integral;
        const double lower = rep.mc_estimates[i] - 3.0 * rep.mc_stderr[i];
        if (lower > 0.0 && std::log(lower) > log_bound * (1 + 1e-12) + 1e-12) rep.bounds_hold = false;
    }
    return rep;
}

} // namespace nemlab
