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

#include <cmath>
#include <vector>

#include <gtest/gtest.h>

#include "nemlab/metrics.hpp"
#include "nemlab/particles.hpp"

namespace nemlab {
namespace {

// --- RNG ---------------------------------------------------------------------------

TEST(Philox, KnownAnswers) {
    // Random123 philox4x32_10 test vectors.
    using C = Philox4x32::Counter;
    using K = Philox4x32::Key;
    EXPECT_EQ(Philox4x32::apply(C{0, 0, 0, 0}, K{0, 0}), (C{0x6627e8d5, 0xe169c58d, 0xbc57ac4c, 0x9b00dbd8}));
    EXPECT_EQ(Philox4x32::apply(C{0xffffffff, 0xffffffff, 0xffffffff, 0xffffffff}, K{0xffffffff, 0xffffffff}),
              (C{0x408f276d, 0x41c83b0e, 0xa20bc7c6, 0x6d5451fd}));
    EXPECT_EQ(Philox4x32::apply(C{0x243f6a88, 0x85a308d3, 0x13198a2e, 0x03707344}, K{0xa4093822, 0x299f31d0}),
              (C{0xd16cfe09, 0x94fdcceb, 0x5001e420, 0x24126ea1}));
}

TEST(Philox, StreamsAreStatelessAndDistinct) {
    const ParticleStream a(42, 7), b(42, 7), c(42, 8), d(43, 7);
    EXPECT_EQ(a.normal(5), b.normal(5));
    EXPECT_NE(a.normal(5), c.normal(5));
    EXPECT_NE(a.normal(5), d.normal(5));
    EXPECT_NE(a.normal(5, Stream::brownian), a.normal(5, Stream::initial));
    // Uniforms stay in (0, 1].
    for (std::uint64_t s = 0; s < 10000; ++s) {
        const auto u = a.uniform_pair(s, Stream::auxiliary);
        EXPECT_GT(u[0], 0.0);
        EXPECT_LE(u[1], 1.0);
    }
}

TEST(Philox, NormalMoments) {
    const std::size_t n = 200'000;
    double m = 0.0, v = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        const double z = ParticleStream(1, i).normal(3);
        m += z;
        v += z * z;
    }
    m /= n;
    v = v / n - m * m;
    EXPECT_NEAR(m, 0.0, 3.0 / std::sqrt(static_cast<double>(n)));
    EXPECT_NEAR(v, 1.0, 3.0 * std::sqrt(2.0 / n));
}

TEST(Parallel, ExceptionsPropagate) {
    EXPECT_THROW(parallel_for(100, 4,
                              [](std::size_t b, std::size_t) {
                                  if (b > 0) throw Error(ErrorKind::solver_failure, "boom");
                              }),
                 Error);
}

// --- particle system ---------------------------------------------------------------

TEST(Particles, HeatVariance) {
    const Grid1D g(-8.0, 8.0, 800);
    const double s = 0.5, T = 0.5;
    ParticleConfig cfg;
    cfg.N = 100'000;
    cfg.dt = 1e-3;
    cfg.T = T;
    cfg.seed = 11;
    const auto r = euler_maruyama_mkv(InitialLaw::gaussian(0.0, s), builtin_drift("linear_ou", {{"theta", 0.0}}),
                                      DiffusionSpec::constant(2.0), g, cfg, TimeGrid::uniform(T, 5));
    const auto& x = r.ensemble.positions;
    double m = 0.0, v = 0.0;
    for (double xi : x) m += xi;
    m /= x.size();
    for (double xi : x) v += (xi - m) * (xi - m);
    v /= (x.size() - 1);
    const double exact = s * s + 2.0 * T;
    const double se = exact * std::sqrt(2.0 / (x.size() - 1));
    EXPECT_NEAR(v, exact, 3.0 * se);
    EXPECT_EQ(r.steps, 500u);
    EXPECT_EQ(r.marginals.snapshots.size(), 6u);
}

TEST(Particles, ZeroCouplingIsBitwiseLinear) {
    const Grid1D g(-6.0, 6.0, 400);
    ParticleConfig cfg;
    cfg.N = 5000;
    cfg.T = 0.3;
    const auto diff = DiffusionSpec::constant(2.0);
    const auto tg = TimeGrid::uniform(0.3, 3);
    const auto init = InitialLaw::gaussian(0.0, 0.4);
    const auto a = euler_maruyama_mkv(init, builtin_drift("linear_ou"), diff, g, cfg, tg);
    const auto b = euler_maruyama_mkv(init, builtin_drift("capped_density", {{"kappa", 0.0}}), diff, g, cfg, tg);
    EXPECT_EQ(a.ensemble.positions, b.ensemble.positions);
}

TEST(Particles, ThreadCountDoesNotChangeResults) {
    const Grid1D g(-6.0, 6.0, 400);
    ParticleConfig cfg;
    cfg.N = 20'000;
    cfg.T = 0.2;
    cfg.seed = 99;
    const auto drift = builtin_drift("smoothed_interaction", {{"kappa", 0.5}});
    const auto diff = DiffusionSpec::constant(2.0);
    const auto tg = TimeGrid::uniform(0.2, 4);
    const auto init = InitialLaw::gaussian(0.2, 0.4);
    cfg.threads = 1;
    const auto a = euler_maruyama_mkv(init, drift, diff, g, cfg, tg);
    for (std::size_t threads : {2u, 3u, 8u}) {
        cfg.threads = threads;
        const auto b = euler_maruyama_mkv(init, drift, diff, g, cfg, tg);
        EXPECT_EQ(a.ensemble.positions, b.ensemble.positions) << threads;
        for (std::size_t i = 0; i < tg.size(); ++i) EXPECT_EQ(a.marginals.at(i).values, b.marginals.at(i).values);
    }
}

TEST(Particles, MatchesPicardFlow) {
    const Grid1D g(-6.0, 6.0, 600);
    const double T = 0.5;
    const auto drift = builtin_drift("capped_density", {{"theta", 1.0}, {"kappa", 0.5}, {"tau", 0.6}, {"M", 5.0}});
    const auto diff = DiffusionSpec::constant(2.0);
    const auto tg = TimeGrid::uniform(T, 50);
    const auto pde = picard_fixed_point(gaussian_density(g, 0.0, 0.5), drift, diff, tg, {}, 1e-8, 50);
    ASSERT_TRUE(pde.converged);
    ParticleConfig cfg;
    cfg.N = 100'000;
    cfg.dt = 1e-3;
    cfg.T = T;
    cfg.seed = 5;
    const auto mc = euler_maruyama_mkv(InitialLaw::gaussian(0.0, 0.5), drift, diff, g, cfg, TimeGrid::uniform(T, 5));
    EXPECT_LE(wasserstein_1d(mc.marginals.back(), pde.flow.back(), 1.0), 0.05);
}

TEST(Particles, RejectsBadConfig) {
    const Grid1D g(-6.0, 6.0, 100);
    const auto drift = builtin_drift("linear_ou");
    const auto diff = DiffusionSpec::constant(2.0);
    ParticleConfig cfg;
    cfg.N = 10;
    cfg.T = 0.1;
    cfg.bandwidth = -1.0;
    try {
        euler_maruyama_mkv(InitialLaw::point(0.0), drift, diff, g, cfg, TimeGrid::uniform(0.1, 2));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_parameter);
    }
    cfg.bandwidth = 0.0;
    cfg.N = 0;
    EXPECT_THROW(euler_maruyama_mkv(InitialLaw::point(0.0), drift, diff, g, cfg, TimeGrid::uniform(0.1, 2)), Error);
}

TEST(Particles, NanPositionAborts) {
    const Grid1D g(-6.0, 6.0, 100);
    DriftSpec bad;
    bad.name = "nan";
    bad.b1 = [](double, double) { return std::nan(""); };
    ParticleConfig cfg;
    cfg.N = 10;
    cfg.T = 0.01;
    try {
        euler_maruyama_mkv(InitialLaw::point(0.0), bad, DiffusionSpec::constant(1.0), g, cfg, TimeGrid::uniform(0.01, 1));
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::solver_failure);
        EXPECT_NE(std::string(e.what()).find("step 1"), std::string::npos);
    }
}

TEST(Particles, ReflectStaysInside) {
    EXPECT_DOUBLE_EQ(reflect(1.2, -1.0, 1.0), 0.8);
    EXPECT_DOUBLE_EQ(reflect(-1.5, -1.0, 1.0), -0.5);
    EXPECT_DOUBLE_EQ(reflect(0.3, -1.0, 1.0), 0.3);
    const double r = reflect(57.0, -1.0, 1.0);
    EXPECT_GE(r, -1.0);
    EXPECT_LE(r, 1.0);
}

// --- Girsanov ----------------------------------------------------------------------

struct GirsanovSetup {
    Grid1D g{-6.0, 6.0, 400};
    DiffusionSpec diff = DiffusionSpec::constant(1.0);
    TimeGrid tg = TimeGrid::uniform(0.5, 25);
    GridDensity mu = gaussian_density(g, 0.0, 0.5);
    PathConfig pc{0.0, 0.5, 2e-3, 3, 1};

    DriftEvaluator frozen(const DriftSpec& d) const {
        DriftEvaluator e(d, g);
        if (d.density_dependent()) e.freeze(linear_flow(mu, d.regular_part(), diff, tg));
        return e;
    }
};

TEST(Girsanov, IdenticalDriftsGiveZero) {
    GirsanovSetup s;
    const auto ref = s.frozen(builtin_drift("capped_density"));
    StoredPath path;
    std::vector<double> scratch;
    simulate_path(InitialLaw::gaussian(0.0, 0.5), ref, s.diff, s.pc, 0, path, scratch);
    EXPECT_EQ(girsanov_log_weight(path, ref, ref, s.diff), 0.0);
}

TEST(Girsanov, ConstantShiftClosedForm) {
    GirsanovSetup s;
    const double v = 0.7;
    DriftSpec shift;
    shift.name = "shift";
    shift.b1 = [v](double, double) { return v; };
    const auto ref = s.frozen(builtin_drift("linear_ou", {{"theta", 0.0}}));
    const auto alt = s.frozen(shift);
    // Path by path: log R = v W_t - v^2 t / 2.
    StoredPath path;
    std::vector<double> scratch;
    for (std::uint64_t i = 0; i < 50; ++i) {
        simulate_path(InitialLaw::point(0.0), ref, s.diff, s.pc, i, path, scratch);
        double W = 0.0;
        for (double dw : path.dW) W += dw;
        EXPECT_NEAR(girsanov_log_weight(path, ref, alt, s.diff), v * W - 0.5 * v * v * 0.5, 1e-12);
    }
    const auto sum = girsanov_mc(InitialLaw::point(0.0), ref, alt, s.diff, s.pc, 100'000);
    EXPECT_NEAR(sum.log_weight.mean, -0.5 * v * v * 0.5, 3.0 * sum.log_weight.std_error);
    EXPECT_NEAR(sum.weight.mean, 1.0, 3.0 * sum.weight.std_error);
    ASSERT_TRUE(sum.ensemble.log_weights.has_value());
    EXPECT_EQ(sum.ensemble.log_weights->size(), 100'000u);
}

TEST(Girsanov, MartingaleOnBuiltinPairs) {
    GirsanovSetup s;
    const auto ref = s.frozen(builtin_drift("linear_ou"));
    for (const char* name : {"capped_density", "smoothed_interaction", "singular_well"}) {
        const auto alt = s.frozen(builtin_drift(name, {{"kappa", 0.5}}));
        const auto sum = girsanov_mc(InitialLaw::gaussian(0.0, 0.5), ref, alt, s.diff, s.pc, 100'000);
        EXPECT_NEAR(sum.weight.mean, 1.0, 3.0 * sum.weight.std_error) << name;
        EXPECT_GT(sum.weight.std_error, 0.0) << name;
    }
}

TEST(Girsanov, NonFiniteIntegrandReported) {
    GirsanovSetup s;
    DriftSpec bad;
    bad.name = "inf";
    bad.b1 = [](double, double) { return kInf; };
    const auto ref = s.frozen(builtin_drift("linear_ou"));
    const auto alt = s.frozen(bad);
    StoredPath path;
    std::vector<double> scratch;
    simulate_path(InitialLaw::point(0.0), ref, s.diff, s.pc, 0, path, scratch);
    try {
        girsanov_log_weight(path, ref, alt, s.diff);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::weight_overflow);
    }
}

TEST(PathEntropy, IdenticalIsZero) {
    GirsanovSetup s;
    const auto a = s.frozen(builtin_drift("capped_density"));
    const auto e = path_relative_entropy_mc(a, a, s.diff, InitialLaw::gaussian(0.0, 0.5), s.pc, 10'000);
    EXPECT_EQ(e.mean, 0.0);
}

TEST(PathEntropy, ConstantShift) {
    GirsanovSetup s;
    const double v = 0.9;
    DriftSpec shift;
    shift.name = "shift";
    shift.b1 = [v](double, double) { return v; };
    const auto e = path_relative_entropy_mc(s.frozen(shift), s.frozen(builtin_drift("linear_ou", {{"theta", 0.0}})),
                                            s.diff, InitialLaw::point(0.0), s.pc, 10'000);
    EXPECT_NEAR(e.mean, 0.5 * v * v * 0.5, std::max(3.0 * e.std_error, 1e-12));
}

TEST(PathEntropy, DataProcessingOnCappedDensity) {
    GirsanovSetup s;
    const auto drift = builtin_drift("capped_density", {{"kappa", 0.5}});
    const auto pde = picard_fixed_point(s.mu, drift, s.diff, s.tg, {}, 1e-9, 50);
    ASSERT_TRUE(pde.converged);
    DriftEvaluator a(drift, s.g);
    a.freeze(pde.flow);
    const auto b = s.frozen(builtin_drift("linear_ou"));
    const auto lin = linear_flow(s.mu, builtin_drift("linear_ou"), s.diff, s.tg);
    const auto est = path_relative_entropy_mc(a, b, s.diff, InitialLaw::from_density(s.mu), s.pc, 20'000);
    const double marginal = relative_entropy(pde.flow.back(), lin.back());
    EXPECT_GT(marginal, 0.0);
    EXPECT_LE(marginal, est.mean + 3.0 * est.std_error);
}

TEST(PathEntropy, NeedsEnoughPaths) {
    GirsanovSetup s;
    const auto a = s.frozen(builtin_drift("linear_ou"));
    EXPECT_THROW(path_relative_entropy_mc(a, a, s.diff, InitialLaw::point(0.0), s.pc, 100), Error);
}

// --- Khasminskii -------------------------------------------------------------------

TEST(Khasminskii, ConstantFunctionIsExact) {
    const Grid1D g(-6.0, 6.0, 600);
    const DriftEvaluator drift(builtin_drift("linear_ou", {{"theta", 0.0}}), g);
    KhasminskiiConfig cfg;
    cfg.s = 0.2;
    cfg.t = 0.9;
    cfg.lambdas = {0.1, 0.5, 1.0, 2.0};
    cfg.N = 1000;
    const double c0 = 0.5;
    const auto rep = khasminskii_mc(KhasminskiiFunction::constant(c0), drift, DiffusionSpec::constant(1.0),
                                    InitialLaw::point(0.0), cfg);
    for (std::size_t i = 0; i < cfg.lambdas.size(); ++i) {
        const double lam = cfg.lambdas[i];
        const double exact = std::exp(lam * lam * c0 * c0 * (cfg.t - cfg.s));
        EXPECT_NEAR(rep.mc_estimates[i], exact, std::max(3.0 * rep.mc_stderr[i], 1e-12 * exact));
    }
    EXPECT_TRUE(rep.bounds_hold);
}

TEST(Khasminskii, PowerWellEstimatesAreConvexIncreasing) {
    const Grid1D g(-6.0, 6.0, 1200);
    const DriftEvaluator drift(builtin_drift("linear_ou", {{"theta", 0.0}}), g);
    KhasminskiiConfig cfg;
    cfg.lambdas = {0.1, 0.2, 0.3, 0.4, 0.5, 0.75, 1.0, 1.5, 2.0};
    cfg.N = 20'000;
    cfg.dt = 2e-3;
    const auto rep = khasminskii_mc(KhasminskiiFunction::power_well(1.0, 0.3, 0.0, 4.0, 4.0), drift,
                                    DiffusionSpec::constant(1.0), InitialLaw::point(0.0), cfg);
    for (std::size_t i = 0; i < cfg.lambdas.size(); ++i) {
        EXPECT_TRUE(std::isfinite(rep.mc_estimates[i]));
        EXPECT_GE(rep.mc_estimates[i], 1.0);
        // Heavy weights at large lambda are flagged, not hidden.
        EXPECT_EQ(rep.unreliable[i], rep.effective_sample_size[i] < 100.0) << "lambda=" << cfg.lambdas[i];
        if (cfg.lambdas[i] <= 1.0) {
            EXPECT_FALSE(rep.unreliable[i]) << "lambda=" << cfg.lambdas[i];
        }
    }
    for (std::size_t i = 1; i < cfg.lambdas.size(); ++i) EXPECT_GT(rep.log_estimates[i], rep.log_estimates[i - 1]);
    // Discrete convexity of lambda -> log E on the (non-uniform) grid, with 3 s.e. slack.
    for (std::size_t i = 1; i + 1 < cfg.lambdas.size(); ++i) {
        const double l0 = cfg.lambdas[i - 1], l1 = cfg.lambdas[i], l2 = cfg.lambdas[i + 1];
        const double w = (l1 - l0) / (l2 - l0);
        const double chord = (1 - w) * rep.log_estimates[i - 1] + w * rep.log_estimates[i + 1];
        const double slack = 3.0 * rep.mc_stderr[i] / rep.mc_estimates[i];
        EXPECT_LE(rep.log_estimates[i], chord + slack) << "lambda=" << l1;
    }
    EXPECT_NEAR(rep.regime_split * rep.f_norm, 1.0, 1e-12);
    EXPECT_GT(rep.bound_quadratic, 0.0);
    EXPECT_GT(rep.bound_superlinear, 0.0);
    EXPECT_TRUE(rep.bounds_hold);
}

TEST(Khasminskii, RejectsBadInput) {
    const Grid1D g(-6.0, 6.0, 100);
    const DriftEvaluator drift(builtin_drift("linear_ou"), g);
    KhasminskiiConfig cfg;
    cfg.lambdas = {};
    EXPECT_THROW(khasminskii_mc(KhasminskiiFunction::constant(1.0), drift, DiffusionSpec::constant(1.0),
                                InitialLaw::point(0.0), cfg),
                 Error);
    cfg.lambdas = {0.5};
    cfg.s = 1.0;
    cfg.t = 0.5;
    EXPECT_THROW(khasminskii_mc(KhasminskiiFunction::constant(1.0), drift, DiffusionSpec::constant(1.0),
                                InitialLaw::point(0.0), cfg),
                 Error);
    EXPECT_THROW(KhasminskiiFunction::power_well(1.0, 1.2, 0.0, 4.0, 4.0), Error);
}

} // namespace
} // namespace nemlab
