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

#include <cstdint>
#include <filesystem>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "nemlab/run.hpp"

namespace {

using nemlab::RunConfig;

/// --mu: a density CSV, or "gaussian:<mean>,<sd>" / "point:<x>".
void apply_mu(RunConfig& cfg, const std::string& mu) {
    const auto colon = mu.find(':');
    const auto head = mu.substr(0, colon);
    if (colon != std::string::npos && (head == "gaussian" || head == "point")) {
        const auto rest = mu.substr(colon + 1);
        cfg.set("init.kind", head, "--mu");
        const auto comma = rest.find(',');
        cfg.set("init.mean", rest.substr(0, comma), "--mu");
        if (head == "gaussian") {
            if (comma == std::string::npos) throw nemlab::Error(nemlab::ErrorKind::config_error, "--mu gaussian:<mean>,<sd>");
            cfg.set("init.sd", rest.substr(comma + 1), "--mu");
        }
        return;
    }
    cfg.set("init.kind", "file", "--mu");
    cfg.set("init.file", mu, "--mu");
}

} // namespace

int main(int argc, char** argv) {
    CLI::App app{"nemlab: density-dependent SDEs, their Fokker-Planck flows and scaling experiments"};
    app.require_subcommand(1);
    app.fallthrough();

    std::optional<std::uint64_t> seed;
    std::optional<std::size_t> threads;
    std::string out = ".";
    std::string config_path;
    std::vector<std::string> sets;
    app.add_option("--seed", seed, "master seed");
    app.add_option("--threads", threads, "worker threads");
    app.add_option("--out", out, "output directory (khasminskii: report path)");
    app.add_option("--config", config_path, "run configuration file");
    app.add_option("--set", sets, "override a config key, key=value (repeatable)");

    // Flags that map onto config keys.
    std::optional<std::string> drift, params, mu, f_spec, lambda_grid;
    std::optional<std::string> T, cells, tol, max_iter, lambda0, N, dt;

    auto* solve = app.add_subcommand("solve", "direct nonlinear Fokker-Planck march");
    auto* picard = app.add_subcommand("picard", "Picard fixed point of the frozen-density map");
    for (auto* sub : {solve, picard}) {
        sub->add_option("--drift", drift, "built-in drift name");
        sub->add_option("--params", params, "config file with drift parameters");
        sub->add_option("--mu", mu, "initial density CSV, gaussian:<mean>,<sd> or point:<x>");
        sub->add_option("--T", T, "horizon");
        sub->add_option("--cells", cells, "grid cells");
    }
    picard->add_option("--tol", tol, "sup-t L1 tolerance");
    picard->add_option("--max-iter", max_iter, "iteration cap");
    picard->add_option("--lambda0", lambda0, "initial lambda");

    auto* particles = app.add_subcommand("particles", "Euler-Maruyama particle system with KDE feedback");
    particles->add_option("--drift", drift, "built-in drift name");
    particles->add_option("--params", params, "config file with drift parameters");
    particles->add_option("--mu", mu, "initial law: CSV, gaussian:<mean>,<sd> or point:<x>");
    particles->add_option("--N", N, "particles");
    particles->add_option("--dt", dt, "time step");
    particles->add_option("--T", T, "horizon");

    auto* khas = app.add_subcommand("khasminskii", "Monte Carlo exponential moments of int f(X)^2");
    khas->add_option("--f", f_spec, "power_well[:key=value,...] or constant:<c>");
    khas->add_option("--lambda-grid", lambda_grid, "comma-separated lambdas");
    khas->add_option("--N", N, "paths");
    khas->add_option("--drift", drift, "built-in drift name");

    std::string metric_a, metric_b, metric;
    auto* metrics = app.add_subcommand("metrics", "distance or divergence between two density CSVs");
    metrics->add_option("--a", metric_a, "first density CSV")->required();
    metrics->add_option("--b", metric_b, "second density CSV")->required();
    metrics->add_option("--metric", metric, "w1|w2|wq:<q>|tv|ent|renyi:<alpha>|expw:<c>|tilde:<k>")->required();

    std::string experiment_name;
    auto* experiment = app.add_subcommand("experiment", "scaling experiment with pass/fail report");
    experiment->add_option("name", experiment_name, "smoothing|supercontinuity|entropy-cost|renyi|khasminskii")
        ->required();

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : nemlab::exit_config;
    }

    try {
        RunConfig cfg;
        if (!config_path.empty()) cfg.merge_file(config_path);
        if (params) cfg.merge_file(*params);
        if (drift) cfg.set("drift.name", *drift, "--drift");
        if (mu) apply_mu(cfg, *mu);
        if (T) cfg.set("time.T", *T, "--T");
        if (cells) cfg.set("grid.cells", *cells, "--cells");
        if (tol) cfg.set("picard.tol", *tol, "--tol");
        if (max_iter) cfg.set("picard.max_iter", *max_iter, "--max-iter");
        if (lambda0) cfg.set("picard.lambda0", *lambda0, "--lambda0");
        if (N) cfg.set(khas->parsed() ? "khasminskii.N" : "particles.N", *N, "--N");
        if (dt) cfg.set("particles.dt", *dt, "--dt");
        if (f_spec) nemlab::apply_f_spec(cfg, *f_spec);
        if (lambda_grid) cfg.set("khasminskii.lambdas", *lambda_grid, "--lambda-grid");
        if (seed) cfg.set("seed", std::to_string(*seed), "--seed");
        if (threads) cfg.set("threads", std::to_string(*threads), "--threads");
        for (const auto& s : sets) cfg.set_override(s);
        cfg.validate();

        const std::filesystem::path outp(out);
        if (solve->parsed()) return nemlab::cmd_solve(cfg, outp, false, std::cerr);
        if (picard->parsed()) return nemlab::cmd_solve(cfg, outp, true, std::cerr);
        if (particles->parsed()) return nemlab::cmd_particles(cfg, outp);
        if (khas->parsed()) {
            const auto path = outp.extension() == ".json" ? outp : outp / "report.json";
            return nemlab::cmd_khasminskii(cfg, path, std::cerr);
        }
        if (metrics->parsed()) return nemlab::cmd_metrics(metric_a, metric_b, metric, std::cout);
        if (experiment->parsed()) {
            const auto kind = nemlab::parse_experiment_kind(experiment_name);
            return nemlab::cmd_experiment(cfg, kind, outp, std::cerr);
        }
    } catch (const nemlab::Error& e) {
        std::cerr << "error: " << e.what() << "\n";
        return nemlab::exit_code_for(e);
    } catch (const std::filesystem::filesystem_error& e) {
        std::cerr << "error [io-error]: " << e.what() << "\n";
        return nemlab::exit_config;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return nemlab::exit_numerical;
    }
    return nemlab::exit_config;
}
