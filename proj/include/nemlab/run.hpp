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

// Subcommand bodies shared by the command-line tool and the tests.
// Exit statuses: 0 pass, 1 assertion failure, 2 configuration error,
// 3 numerical failure.

#pragma once

#include <filesystem>
#include <optional>
#include <ostream>
#include <string>
#include <vector>

#include "nemlab/config.hpp"
#include "nemlab/density.hpp"
#include "nemlab/dynamics.hpp"
#include "nemlab/error.hpp"
#include "nemlab/experiments.hpp"
#include "nemlab/io.hpp"
#include "nemlab/metrics.hpp"
#include "nemlab/particles.hpp"

namespace nemlab {

enum ExitStatus : int { exit_pass = 0, exit_assertion = 1, exit_config = 2, exit_numerical = 3 };

inline int exit_code_for(const Error& e) { return e.is_numerical() ? exit_numerical : exit_config; }

// ---------------------------------------------------------------------------
// RunConfig -> module inputs

inline const std::vector<std::string>& drift_param_keys() {
    static const std::vector<std::string> keys = {"theta", "kappa", "tau", "M",  "h", "c",
                                                  "gamma", "x0",    "p2",  "q2", "k", "K"};
    return keys;
}

/// All drift.* values; K only when set.
inline DriftParams drift_params_from(const RunConfig& cfg) {
    DriftParams p;
    for (const auto& k : drift_param_keys()) {
        const std::string key = "drift." + k;
        if (cfg.has_value(key)) p[k] = cfg.real(key);
    }
    return p;
}

inline DriftSpec drift_from(const RunConfig& cfg) { return builtin_drift(cfg.string("drift.name"), drift_params_from(cfg)); }

inline Grid1D grid_from(const RunConfig& cfg) {
    return Grid1D(cfg.real("grid.x_min"), cfg.real("grid.x_max"), static_cast<std::size_t>(cfg.integer("grid.cells")));
}

inline TimeGrid time_grid_from(const RunConfig& cfg) {
    const double T = cfg.real("time.T");
    if (cfg.string("time.refine") == "uniform")
        return TimeGrid::uniform(T, static_cast<std::size_t>(cfg.integer("time.steps")));
    return TimeGrid::geometric(T, cfg.real("time.t_min_fraction") * T, cfg.real("time.nodes_per_decade"));
}

/// Initial density on the configured grid, or the grid of the CSV when one is given.
inline GridDensity initial_density_from(const RunConfig& cfg) {
    const auto kind = cfg.string("init.kind");
    if (kind == "file") {
        auto d = io::read_density_csv(cfg.string("init.file"));
        require(!cfg.is_set("grid.cells") || d.grid.size() == static_cast<std::size_t>(cfg.integer("grid.cells")),
                ErrorKind::config_error, "config key 'grid.cells' disagrees with the grid of init.file");
        return normalize(d);
    }
    const auto grid = grid_from(cfg);
    if (kind == "point") {
        // A point mass is represented by its cell.
        std::vector<double> v(grid.size(), 0.0);
        const double x = cfg.real("init.mean");
        require(x >= grid.x_min() && x <= grid.x_max(), ErrorKind::config_error, "config key 'init.mean' is off the grid");
        auto j = static_cast<std::size_t>((x - grid.x_min()) / grid.dx());
        j = std::min(j, grid.size() - 1);
        v[j] = 1.0 / grid.dx();
        return GridDensity(grid, std::move(v));
    }
    return gaussian_density(grid, cfg.real("init.mean"), cfg.real("init.sd"));
}

inline InitialLaw initial_law_from(const RunConfig& cfg) {
    const auto kind = cfg.string("init.kind");
    if (kind == "point") return InitialLaw::point(cfg.real("init.mean"));
    if (kind == "file") return InitialLaw::from_density(initial_density_from(cfg));
    return InitialLaw::gaussian(cfg.real("init.mean"), cfg.real("init.sd"));
}

inline SolverOptions solver_options_from(const RunConfig& cfg) {
    SolverOptions o;
    o.dt_max = cfg.real("time.dt_max");
    return o;
}

/// Per-experiment defaults, overridden by every explicitly set key.
inline ExperimentConfig experiment_config_from(const RunConfig& cfg, ExperimentKind kind) {
    auto c = default_experiment_config(kind);
    auto set_real = [&](const std::string& key, double& field) {
        if (cfg.is_set(key)) field = cfg.real(key);
    };
    auto set_size = [&](const std::string& key, std::size_t& field) {
        if (cfg.is_set(key)) field = static_cast<std::size_t>(cfg.integer(key));
    };
    if (cfg.is_set("drift.name")) {
        c.drift = cfg.string("drift.name");
        c.drift_params.clear();
    }
    for (const auto& k : drift_param_keys())
        if (cfg.is_set("drift." + k)) c.drift_params[k] = cfg.real("drift." + k);
    set_real("diffusion.a", c.a);
    set_real("grid.x_min", c.x_min);
    set_real("grid.x_max", c.x_max);
    set_size("grid.cells", c.cells);
    set_real("init.mean", c.mean);
    set_real("time.T", c.T);
    set_real("time.nodes_per_decade", c.nodes_per_decade);
    set_real("time.dt_max", c.dt_max);
    set_size("picard.max_iter", c.picard_max_iter);
    set_real("picard.lambda0", c.lambda0);
    set_real("experiment.picard_tol", c.picard_tol);
    set_real("init.sd", c.s);
    set_real("experiment.s", c.s);
    set_real("experiment.delta", c.delta);
    set_real("experiment.t_lo", c.t_lo);
    set_real("experiment.t_hi", c.t_hi);
    set_size("experiment.samples_per_decade", c.samples_per_decade);
    set_real("experiment.fit_lo", c.fit_lo);
    set_real("experiment.fit_hi", c.fit_hi);
    set_real("experiment.k", c.k);
    set_real("experiment.headroom", c.headroom);
    set_real("experiment.slope_tolerance", c.slope_tolerance);
    if (cfg.is_set("experiment.calibrate")) c.calibrate_last = cfg.string("experiment.calibrate") == "last";
    if (cfg.is_set("experiment.alphas")) c.alphas = cfg.real_list("experiment.alphas");
    set_real("experiment.alpha_limit", c.alpha_limit);
    if (cfg.is_set("khasminskii.f")) c.f_kind = cfg.string("khasminskii.f");
    set_real("khasminskii.c", c.f_c);
    set_real("khasminskii.gamma", c.f_gamma);
    set_real("khasminskii.x0", c.f_x0);
    set_real("khasminskii.p", c.f_p);
    set_real("khasminskii.q", c.f_q);
    set_real("khasminskii.const", c.f_const);
    set_real("khasminskii.s", c.ks);
    set_real("khasminskii.t", c.kt);
    if (cfg.is_set("khasminskii.small_lambdas")) c.small_lambdas = cfg.real_list("khasminskii.small_lambdas");
    if (cfg.is_set("khasminskii.large_lambdas")) c.large_lambdas = cfg.real_list("khasminskii.large_lambdas");
    set_size("khasminskii.N", c.N);
    set_real("khasminskii.dt", c.dt);
    c.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
    c.threads = static_cast<std::size_t>(cfg.integer("threads"));
    return c;
}

inline KhasminskiiFunction khasminskii_function_from(const RunConfig& cfg) {
    if (cfg.string("khasminskii.f") == "constant")
        return KhasminskiiFunction::constant(cfg.real("khasminskii.c"), cfg.real("khasminskii.p"),
                                             cfg.real("khasminskii.q"));
    return KhasminskiiFunction::power_well(cfg.real("khasminskii.c"), cfg.real("khasminskii.gamma"),
                                           cfg.real("khasminskii.x0"), cfg.real("khasminskii.p"),
                                           cfg.real("khasminskii.q"));
}

/// "--f" spec: "power_well", "constant:0.5" or "name:key=value,key=value"
/// with keys from the khasminskii section.
inline void apply_f_spec(RunConfig& cfg, const std::string& spec) {
    const auto colon = spec.find(':');
    cfg.set("khasminskii.f", spec.substr(0, colon), "--f");
    if (colon == std::string::npos) return;
    std::stringstream ss(spec.substr(colon + 1));
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto eq = item.find('=');
        if (eq == std::string::npos) cfg.set("khasminskii.c", item, "--f");
        else cfg.set("khasminskii." + detail::trim(item.substr(0, eq)), item.substr(eq + 1), "--f");
    }
}

// ---------------------------------------------------------------------------
// Subcommands

namespace detail {

inline void write_resolved(const std::filesystem::path& out, const RunConfig& cfg) {
    io::atomic_write(out / "resolved_config", cfg.dump());
}

} // namespace detail

/// solve (direct nonlinear march) or picard (fixed point). Writes the flow
/// in the DensityFlow layout plus report.json.
inline int cmd_solve(const RunConfig& cfg, const std::filesystem::path& out, bool picard, std::ostream& log) {
    const auto drift = drift_from(cfg);
    const auto diff = DiffusionSpec::constant(cfg.real("diffusion.a"));
    const auto mu = initial_density_from(cfg);
    const auto tg = time_grid_from(cfg);
    validate_drift(drift, tg.T(), mu.grid.x_min(), mu.grid.x_max());
    detail::write_resolved(out, cfg);
    auto report = io::Json::object();
    report.set("drift", drift.name);
    report.set("cells", mu.grid.size());
    report.set("time_nodes", tg.size());
    if (!drift.singular_parts.empty()) {
        // Grid-scale truncation of the singular parts and what survives of ||f||_{~L^p_q}.
        auto parts = io::Json::array();
        for (std::size_t i = 0; i < drift.singular_parts.size(); ++i) {
            const auto& part = drift.singular_parts[i];
            DriftSpec one;
            one.singular_parts = {part};
            FieldFlow f{tg, mu.grid, {}, false};
            for (double t : tg.nodes()) f.values.push_back(singular_bound_field(one, mu.grid, t));
            auto j = io::Json::object();
            j.set("p", part.p);
            j.set("q", part.q);
            j.set("cap", part.cap ? part.cap(mu.grid.dx()) : kInf);
            j.set("grid_norm", tilde_spacetime_norm(f, part.p, part.q, 0.0, tg.T()));
            parts.push(std::move(j));
        }
        report.set("singular_parts", std::move(parts));
    }
    int status = exit_pass;
    if (!picard) {
        const auto flow = solve_nonlinear(mu, drift, diff, tg, solver_options_from(cfg));
        io::write_flow_dir(out, flow);
        report.set("method", "direct");
        report.set("final_mass", flow.back().mass());
    } else {
        FlowMetricSpec spec;
        spec.lambda = cfg.real("picard.lambda0");
        spec.p = cfg.real("picard.p");
        spec.k = cfg.real("picard.k");
        PicardOptions opt;
        opt.solver = solver_options_from(cfg);
        opt.ratio_limit = cfg.real("picard.ratio_limit");
        opt.max_lambda_doublings = static_cast<std::size_t>(cfg.integer("picard.max_lambda_doublings"));
        const double tol = cfg.real("picard.tol");
        const auto res = picard_fixed_point(mu, drift, diff, tg, spec, tol,
                                            static_cast<std::size_t>(cfg.integer("picard.max_iter")), opt);
        io::write_flow_dir(out, res.flow);
        report.set("method", "picard");
        report.set("iterations", res.iterations);
        report.set("contraction_factors", io::Json::array_of(res.contraction_factors));
        report.set("residuals", io::Json::array_of(res.residuals));
        report.set("lambda_used", res.lambda_used);
        report.set("restarts", res.restarts);
        report.set("final_residual", res.final_residual);
        report.set("converged", res.converged);
        if (!res.converged) {
            log << "picard: no convergence to tol " << io::format_double(tol) << " within max_iter (residual "
                << io::format_double(res.final_residual) << ")\n";
            status = exit_assertion;
        }
    }
    io::atomic_write(out / "report.json", report.dump());
    return status;
}

/// Particle system with KDE feedback. Writes the KDE marginal flow and ensemble_final.csv.
inline int cmd_particles(const RunConfig& cfg, const std::filesystem::path& out) {
    const auto drift = drift_from(cfg);
    const auto diff = DiffusionSpec::constant(cfg.real("diffusion.a"));
    const auto grid = cfg.string("init.kind") == "file" ? initial_density_from(cfg).grid : grid_from(cfg);
    const auto init = initial_law_from(cfg);
    ParticleConfig pc;
    pc.N = static_cast<std::size_t>(cfg.integer("particles.N"));
    pc.dt = cfg.real("particles.dt");
    pc.T = cfg.real("time.T");
    pc.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
    pc.threads = static_cast<std::size_t>(cfg.integer("threads"));
    pc.bandwidth = cfg.real("particles.bandwidth");
    const auto tg = TimeGrid::uniform(pc.T, static_cast<std::size_t>(cfg.integer("particles.output_steps")));
    detail::write_resolved(out, cfg);
    const auto res = euler_maruyama_mkv(init, drift, diff, grid, pc, tg);
    io::write_flow_dir(out, res.marginals);
    io::write_positions_csv(out / "ensemble_final.csv", res.ensemble.positions);
    return exit_pass;
}

inline io::Json khasminskii_json(const KhasminskiiReport& r) {
    auto j = io::Json::object();
    j.set("lambda_values", io::Json::array_of(r.lambda_values));
    j.set("mc_estimates", io::Json::array_of(r.mc_estimates));
    j.set("mc_stderr", io::Json::array_of(r.mc_stderr));
    j.set("bound_quadratic", r.bound_quadratic);
    j.set("bound_superlinear", r.bound_superlinear);
    j.set("regime_split", r.regime_split);
    return j;
}

/// Khasminskii Monte Carlo; the report holds exactly the KhasminskiiReport fields.
inline int cmd_khasminskii(const RunConfig& cfg, const std::filesystem::path& report_path, std::ostream& log) {
    const auto drift = drift_from(cfg);
    require(!drift.density_dependent(), ErrorKind::config_error,
            "config key 'drift.name': khasminskii needs a density-independent drift");
    const auto grid = grid_from(cfg);
    const auto diff = DiffusionSpec::constant(cfg.real("diffusion.a"));
    const auto fn = khasminskii_function_from(cfg);
    KhasminskiiConfig kc;
    kc.s = cfg.real("khasminskii.s");
    kc.t = cfg.real("khasminskii.t");
    kc.lambdas = cfg.real_list("khasminskii.lambdas");
    kc.N = static_cast<std::size_t>(cfg.integer("khasminskii.N"));
    kc.dt = cfg.real("khasminskii.dt");
    kc.seed = static_cast<std::uint64_t>(cfg.integer("seed"));
    kc.threads = static_cast<std::size_t>(cfg.integer("threads"));
    if (report_path.has_parent_path()) detail::write_resolved(report_path.parent_path(), cfg);
    const auto rep = khasminskii_mc(fn, DriftEvaluator(drift, grid), diff, initial_law_from(cfg), kc);
    io::atomic_write(report_path, khasminskii_json(rep).dump());
    for (std::size_t i = 0; i < rep.unreliable.size(); ++i)
        if (rep.unreliable[i])
            log << "khasminskii: unreliable estimate at lambda = " << io::format_double(rep.lambda_values[i])
                << " (effective sample size " << io::format_double(rep.effective_sample_size[i]) << ")\n";
    return rep.bounds_hold ? exit_pass : exit_assertion;
}

/// One number: w1 | w2 | wq:<q> | tv | ent | renyi:<alpha> | expw:<c> | tilde:<k>.
inline double evaluate_metric(const GridDensity& a, const GridDensity& b, const std::string& metric) {
    const auto colon = metric.find(':');
    const std::string name = metric.substr(0, colon);
    double arg = 0.0;
    const bool has_arg = colon != std::string::npos;
    if (has_arg)
        require(detail::parse_real(metric.substr(colon + 1), arg), ErrorKind::config_error,
                "--metric: cannot parse the argument of '" + metric + "'");
    auto need_arg = [&](bool want) {
        require(has_arg == want, ErrorKind::config_error,
                "--metric '" + metric + "': " + (want ? "needs an argument" : "takes no argument"));
    };
    if (name == "w1") return need_arg(false), wasserstein_1d(a, b, 1.0);
    if (name == "w2") return need_arg(false), wasserstein_1d(a, b, 2.0);
    if (name == "wq") return need_arg(true), wasserstein_1d(a, b, arg);
    if (name == "tv") return need_arg(false), l1_distance(a, b);
    if (name == "ent") return need_arg(false), relative_entropy(a, b);
    if (name == "renyi") return need_arg(true), renyi_entropy(a, b, arg);
    if (name == "expw") return need_arg(true), exp_wasserstein(a, b, arg);
    if (name == "tilde") {
        need_arg(true);
        require(arg >= 1.0, ErrorKind::config_error, "--metric tilde:<k> needs k >= 1");
        require_same_grid(a.grid, b.grid);
        std::vector<double> d(a.values.size());
        for (std::size_t j = 0; j < d.size(); ++j) d[j] = a.values[j] - b.values[j];
        return tilde_norm(d, a.grid, arg);
    }
    throw Error(ErrorKind::config_error, "unknown metric '" + metric + "'");
}

inline int cmd_metrics(const std::filesystem::path& a, const std::filesystem::path& b, const std::string& metric,
                       std::ostream& out) {
    const auto da = io::read_density_csv(a);
    const auto db = io::read_density_csv(b);
    out << io::format_double(evaluate_metric(da, db, metric)) << "\n";
    return exit_pass;
}

/// Writes report.json, curve.csv, timing.json and resolved_config.
inline int cmd_experiment(const RunConfig& cfg, ExperimentKind kind, const std::filesystem::path& out,
                          std::ostream& log) {
    const auto ec = experiment_config_from(cfg, kind);
    validate(ec);
    detail::write_resolved(out, cfg);
    const auto rep = run_experiment(ec);
    io::atomic_write(out / "report.json", report_json(rep).dump());
    io::atomic_write(out / "curve.csv", curve_csv(rep));
    auto timing = io::Json::object();
    timing.set("runtime_seconds", rep.runtime_seconds);
    io::atomic_write(out / "timing.json", timing.dump());
    for (const auto& c : rep.checks)
        log << (c.pass ? "  ok   " : "  FAIL ") << c.name << " = " << io::format_double(c.value)
            << " (threshold " << io::format_double(c.threshold) << ")\n";
    log << "experiment " << to_string(kind) << ": " << (rep.pass ? "pass" : "FAIL") << "\n";
    return rep.pass ? exit_pass : exit_assertion;
}

} // namespace nemlab
