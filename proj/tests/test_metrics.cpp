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
#include <random>
#include <vector>

#include <gtest/gtest.h>

#include "nemlab/density.hpp"
#include "nemlab/metrics.hpp"

namespace nemlab {
namespace {

/// Smooth strictly positive random density: a few Gaussian bumps plus a floor.
GridDensity random_density(const Grid1D& g, std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    const int bumps = 1 + static_cast<int>(u(gen) * 4);
    std::vector<double> m(bumps), s(bumps), w(bumps);
    for (int b = 0; b < bumps; ++b) {
        m[b] = -3.0 + 6.0 * u(gen);
        s[b] = 0.2 + u(gen);
        w[b] = 0.1 + u(gen);
    }
    return normalize(sample_density(g, [&](double x) {
        double v = 1e-6;
        for (int b = 0; b < bumps; ++b) v += w[b] * gaussian_pdf(x, m[b], s[b]);
        return v;
    }));
}

DiscreteMeasure random_atoms(std::size_t n, std::mt19937_64& gen) {
    std::uniform_real_distribution<double> u(0.0, 1.0);
    DiscreteMeasure m;
    double total = 0.0;
    for (std::size_t i = 0; i < n; ++i) {
        m.atoms.push_back(-2.0 + 4.0 * u(gen));
        m.weights.push_back(0.05 + u(gen));
        total += m.weights.back();
    }
    for (auto& w : m.weights) w /= total;
    return m;
}

// --- Wasserstein ---------------------------------------------------------------

TEST(Wasserstein, IdenticalIsZero) {
    const Grid1D g(-6.0, 6.0, 600);
    const auto a = gaussian_density(g, 0.2, 0.8);
    for (double q : {1.0, 2.0, 3.0}) EXPECT_NEAR(wasserstein_1d(a, a, q), 0.0, 1e-12);
}

TEST(Wasserstein, TranslatedUniform) {
    const Grid1D g(-2.0, 4.0, 600);
    const auto a = uniform_density(g, 0.0, 1.0);
    for (double c : {0.25, 0.5, 1.37}) {
        const auto b = uniform_density(g, c, 1.0 + c);
        for (double q : {1.0, 1.5, 2.0, 4.0}) EXPECT_NEAR(wasserstein_1d(a, b, q), c, 1e-6) << "c=" << c << " q=" << q;
    }
}

TEST(Wasserstein, GaussianW2ClosedForm) {
    const Grid1D g(-8.0, 10.0, 3600);
    const auto a = gaussian_density(g, 0.0, 1.0);
    for (double m : {0.1, 0.7, 2.0}) {
        const auto b = gaussian_density(g, m, 1.0);
        EXPECT_NEAR(wasserstein_1d(a, b, 2.0), m, 1e-4);
    }
    // Different widths: W2^2 = dm^2 + ds^2.
    const auto c = gaussian_density(g, 0.5, 1.5);
    EXPECT_NEAR(wasserstein_1d(a, c, 2.0), std::sqrt(0.25 + 0.25), 1e-4);
}

TEST(Wasserstein, RejectsUnnormalized) {
    const Grid1D g(-2.0, 2.0, 40);
    const GridDensity bad(g, std::vector<double>(40, 1.0));  // mass 4
    const auto good = uniform_density(g, -1.0, 1.0);
    try {
        wasserstein_1d(bad, good, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::not_a_probability);
    }
}

TEST(Wasserstein, TriangleInequality) {
    std::mt19937_64 gen(101);
    const Grid1D g(-6.0, 6.0, 400);
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = random_density(g, gen);
        const auto b = random_density(g, gen);
        const auto c = random_density(g, gen);
        for (double q : {1.0, 2.0}) {
            const double slack = wasserstein_1d(a, b, q) + wasserstein_1d(b, c, q) - wasserstein_1d(a, c, q);
            EXPECT_GE(slack, -1e-8);
        }
    }
}

// --- LP oracle ------------------------------------------------------------------

TEST(LpOracle, IdenticalMeasures) {
    const DiscreteMeasure m{{-1.0, 0.3, 2.0}, {0.2, 0.5, 0.3}};
    EXPECT_NEAR(wasserstein_lp_oracle(m, m, 1.0), 0.0, 1e-14);
    EXPECT_NEAR(wasserstein_lp_oracle(m, m, 2.0), 0.0, 1e-14);
}

TEST(LpOracle, OneUnitMoves) {
    const DiscreteMeasure a{{0.0, 1.0}, {0.5, 0.5}};
    const DiscreteMeasure b{{0.0, 2.0}, {0.5, 0.5}};
    EXPECT_NEAR(wasserstein_lp_oracle(a, b, 1.0), 0.5, 1e-14);
}

TEST(LpOracle, RejectsBadWeights) {
    const DiscreteMeasure a{{0.0, 1.0}, {0.5, 0.6}};
    const DiscreteMeasure b{{0.0}, {1.0}};
    try {
        wasserstein_lp_oracle(a, b, 1.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::not_a_probability);
    }
}

TEST(LpOracle, MatchesQuantileCouplingOnRandomAtoms) {
    std::mt19937_64 gen(7);
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = random_atoms(10, gen);
        const auto b = random_atoms(10, gen);
        for (double q : {1.0, 2.0, 3.0})
            EXPECT_NEAR(wasserstein_lp_oracle(a, b, q), wasserstein_1d_discrete(a, b, q), 1e-6);
    }
}

TEST(LpOracle, MatchesGridWassersteinOnNarrowBumps) {
    // Each atom becomes one fine cell; the gap is O(dx).
    std::mt19937_64 gen(19);
    const Grid1D g(-3.0, 3.0, 60'000);
    for (int trial = 0; trial < 10; ++trial) {
        auto a = random_atoms(5, gen);
        auto b = random_atoms(5, gen);
        auto to_grid = [&](DiscreteMeasure& m) {
            GridDensity d(g);
            for (std::size_t i = 0; i < m.atoms.size(); ++i) {
                const auto j = static_cast<std::size_t>((m.atoms[i] - g.x_min()) / g.dx());
                m.atoms[i] = g.center(j);
                d.values[j] += m.weights[i] / g.dx();
            }
            return normalize(d);
        };
        const auto da = to_grid(a);
        const auto db = to_grid(b);
        EXPECT_NEAR(wasserstein_1d(da, db, 1.0), wasserstein_lp_oracle(a, b, 1.0), 1e-4);
        EXPECT_NEAR(wasserstein_1d(da, db, 2.0), wasserstein_lp_oracle(a, b, 2.0), 1e-4);
    }
}

// --- relative entropy ---------------------------------------------------------

TEST(RelativeEntropy, IdenticalIsZero) {
    const Grid1D g(-6.0, 6.0, 600);
    const auto a = gaussian_density(g, 0.0, 1.0);
    EXPECT_NEAR(relative_entropy(a, a), 0.0, 1e-14);
}

TEST(RelativeEntropy, GaussianClosedForm) {
    // Wide enough for the tails, narrow enough that no cell of mu sits
    // above the density floor where nu is below it.
    const Grid1D g(-7.0, 7.0, 2800);
    const double s = 0.8;
    for (double dm : {0.1, 0.5, 1.2}) {
        const auto a = gaussian_density(g, 0.0, s);
        const auto b = gaussian_density(g, dm, s);
        EXPECT_NEAR(relative_entropy(a, b), dm * dm / (2 * s * s), 1e-4);
    }
}

TEST(RelativeEntropy, DisjointIsInfinite) {
    const Grid1D g(-1.0, 4.0, 500);
    EXPECT_EQ(relative_entropy(uniform_density(g, 0.0, 1.0), uniform_density(g, 2.0, 3.0)), kInf);
}

TEST(RelativeEntropy, Gibbs) {
    std::mt19937_64 gen(23);
    const Grid1D g(-6.0, 6.0, 300);
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = random_density(g, gen);
        const auto b = random_density(g, gen);
        EXPECT_GE(relative_entropy(a, b), -1e-10);
        EXPECT_NEAR(relative_entropy(a, a), 0.0, 1e-10);
    }
}

TEST(RelativeEntropy, GridMismatch) {
    EXPECT_THROW(relative_entropy(uniform_density(Grid1D(-2, 2, 40), 0, 1), uniform_density(Grid1D(-2, 2, 80), 0, 1)),
                 Error);
}

// --- Renyi ---------------------------------------------------------------------

TEST(Renyi, IdenticalIsZero) {
    const Grid1D g(-6.0, 6.0, 600);
    const auto a = gaussian_density(g, 0.0, 1.0);
    for (double alpha : {0.1, 1.0, 3.0}) EXPECT_NEAR(renyi_entropy(a, a, alpha), 0.0, 1e-12);
}

TEST(Renyi, GaussianOrderOneAgainstQuadrature) {
    // Independent oracle: Simpson's rule on the analytic densities, 200k points.
    const double m = 0.6;
    const std::size_t n = 200'000;
    const double lo = -12.0, hi = 12.0, h = (hi - lo) / n;
    double acc = 0.0;
    for (std::size_t i = 0; i <= n; ++i) {
        const double x = lo + i * h;
        const double p = gaussian_pdf(x, 0.0, 1.0);
        const double q = gaussian_pdf(x, m, 1.0);
        const double w = (i == 0 || i == n) ? 1.0 : (i % 2 ? 4.0 : 2.0);
        acc += w * p * p / q;
    }
    const double oracle = std::log(acc * h / 3.0);
    EXPECT_NEAR(oracle, m * m, 1e-8);  // closed form exp(m^2)

    const Grid1D g(-9.0, 9.0, 3600);
    const double got = renyi_entropy(gaussian_density(g, 0.0, 1.0), gaussian_density(g, m, 1.0), 1.0);
    EXPECT_NEAR(got, oracle, 1e-4);
}

TEST(Renyi, SmallOrderLimitIsRelativeEntropy) {
    const Grid1D g(-10.0, 10.0, 2000);
    const auto a = gaussian_density(g, 0.0, 0.7);
    const auto b = gaussian_density(g, 0.4, 1.1);
    EXPECT_NEAR(renyi_entropy(a, b, 1e-3), relative_entropy(a, b), 1e-3);
}

TEST(Renyi, RejectsNonPositiveOrder) {
    const Grid1D g(-2.0, 2.0, 40);
    const auto a = uniform_density(g, -1.0, 1.0);
    try {
        renyi_entropy(a, a, 0.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::invalid_parameter);
    }
}

TEST(Renyi, DisjointIsInfinite) {
    const Grid1D g(-1.0, 4.0, 500);
    EXPECT_EQ(renyi_entropy(uniform_density(g, 0.0, 1.0), uniform_density(g, 2.0, 3.0), 0.5), kInf);
}

TEST(Renyi, IncreasingInOrder) {
    std::mt19937_64 gen(29);
    const Grid1D g(-6.0, 6.0, 300);
    const double alphas[] = {0.1, 0.5, 1.0, 2.0, 4.0};
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = random_density(g, gen);
        const auto b = random_density(g, gen);
        double prev = relative_entropy(a, b);
        for (double alpha : alphas) {
            const double v = renyi_entropy(a, b, alpha);
            EXPECT_LE(prev, v + 1e-10) << "alpha=" << alpha;
            prev = v;
        }
    }
}

// --- exponential Wasserstein ------------------------------------------------------

TEST(ExpWasserstein, IdenticalIsZero) {
    const Grid1D g(-6.0, 6.0, 600);
    const auto a = gaussian_density(g, 0.0, 1.0);
    EXPECT_NEAR(exp_wasserstein(a, a, 0.7), 0.0, 1e-12);
}

TEST(ExpWasserstein, TranslateGivesCHSquared) {
    const Grid1D g(-2.0, 4.0, 600);
    const auto a = uniform_density(g, 0.0, 1.0);
    for (double h : {0.1, 0.5, 1.3}) {
        const auto b = uniform_density(g, h, 1.0 + h);
        for (double c : {0.2, 1.0, 5.0}) EXPECT_NEAR(exp_wasserstein(a, b, c), c * h * h, 1e-6);
    }
}

TEST(ExpWasserstein, OverflowReported) {
    const Grid1D g(-1.0, 11.0, 1200);
    const auto a = uniform_density(g, 0.0, 1.0);
    const auto b = uniform_density(g, 9.0, 10.0);
    try {
        exp_wasserstein(a, b, 10.0);
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::numeric_overflow);
    }
}

TEST(ExpWasserstein, MatchesLpOracleOnFiveAtoms) {
    // Grid densities concentrated on single fine cells against the LP on
    // the cell centres.
    std::mt19937_64 gen(31);
    const Grid1D g(-3.0, 3.0, 600'000);
    for (int trial = 0; trial < 5; ++trial) {
        auto a = random_atoms(5, gen);
        auto b = random_atoms(5, gen);
        auto to_grid = [&](DiscreteMeasure& m) {
            GridDensity d(g);
            for (std::size_t i = 0; i < m.atoms.size(); ++i) {
                const auto j = static_cast<std::size_t>((m.atoms[i] - g.x_min()) / g.dx());
                m.atoms[i] = g.center(j);
                d.values[j] += m.weights[i] / g.dx();
            }
            return normalize(d);
        };
        const auto da = to_grid(a);
        const auto db = to_grid(b);
        const double c = 0.5;
        EXPECT_NEAR(exp_wasserstein(da, db, c), exp_wasserstein_lp_oracle(a, b, c), 1e-5);
    }
}

TEST(ExpWasserstein, LpOracleAgreesWithMonotoneCouplingOnAtoms) {
    // Pure discrete check: the LP optimum for exp(c r^2) equals the sorted
    // (quantile) coupling.
    std::mt19937_64 gen(37);
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = random_atoms(5, gen);
        const auto b = random_atoms(5, gen);
        const double c = 0.3;
        // Quantile coupling cost, computed by merging the step CDFs.
        std::vector<std::size_t> ia(5), ib(5);
        for (std::size_t i = 0; i < 5; ++i) ia[i] = ib[i] = i;
        std::sort(ia.begin(), ia.end(), [&](auto x, auto y) { return a.atoms[x] < a.atoms[y]; });
        std::sort(ib.begin(), ib.end(), [&](auto x, auto y) { return b.atoms[x] < b.atoms[y]; });
        std::size_t i = 0, j = 0;
        double ca = a.weights[ia[0]], cb = b.weights[ib[0]], u = 0.0, acc = 0.0;
        while (i < 5 && j < 5) {
            const double next = std::min(ca, cb);
            const double r = a.atoms[ia[i]] - b.atoms[ib[j]];
            acc += (next - u) * std::exp(c * r * r);
            u = next;
            if (ca <= next && ++i < 5) ca += a.weights[ia[i]];
            if (cb <= next && ++j < 5) cb += b.weights[ib[j]];
        }
        EXPECT_NEAR(exp_wasserstein_lp_oracle(a, b, c), std::log(acc), 1e-6);
    }
}

TEST(ExpWasserstein, JensenLowerBound) {
    std::mt19937_64 gen(41);
    const Grid1D g(-6.0, 6.0, 400);
    for (int trial = 0; trial < 100; ++trial) {
        const auto a = random_density(g, gen);
        const auto b = random_density(g, gen);
        const double c = 0.2;
        const double w2 = wasserstein_1d(a, b, 2.0);
        EXPECT_GE(exp_wasserstein(a, b, c), c * w2 * w2 - 1e-8);
    }
}

// --- d_lambda ------------------------------------------------------------------

DensityFlow random_flow(const TimeGrid& tg, const Grid1D& g, std::mt19937_64& gen) {
    DensityFlow f{tg, {}, false};
    for (std::size_t i = 0; i < tg.size(); ++i) f.snapshots.push_back(random_density(g, gen));
    return f;
}

TEST(DLambda, IdenticalIsZero) {
    std::mt19937_64 gen(43);
    const Grid1D g(-6.0, 6.0, 120);
    const auto f = random_flow(TimeGrid::uniform(1.0, 10), g, gen);
    EXPECT_EQ(d_lambda(f, f, {}), 0.0);
}

TEST(DLambda, ConstantDifferenceAtZeroLambda) {
    const Grid1D g(-6.0, 6.0, 240);
    const auto tg = TimeGrid::uniform(2.0, 20);
    const auto a = gaussian_density(g, 0.0, 1.0);
    const auto b = gaussian_density(g, 0.5, 1.0);
    DensityFlow fa{tg, std::vector<GridDensity>(tg.size(), a), false};
    DensityFlow fb{tg, std::vector<GridDensity>(tg.size(), b), false};
    std::vector<double> diff(g.size());
    for (std::size_t j = 0; j < g.size(); ++j) diff[j] = a.values[j] - b.values[j];
    for (double k : {2.0, 4.0, kInf}) {
        FlowMetricSpec spec{0.0, 2.0, k, 1};
        EXPECT_NEAR(d_lambda(fa, fb, spec), std::pow(2.0, spec.exponent()) * tilde_norm(diff, g, k), 1e-12);
    }
}

TEST(DLambda, NonincreasingInLambdaAndBounded) {
    std::mt19937_64 gen(47);
    const Grid1D g(-6.0, 6.0, 120);
    const auto tg = TimeGrid::geometric(1.5, 1e-3, 5.0);
    for (int trial = 0; trial < 50; ++trial) {
        const auto a = random_flow(tg, g, gen);
        const auto b = random_flow(tg, g, gen);
        double prev = kInf;
        for (double lambda : {0.0, 0.5, 1.0, 4.0, 16.0}) {
            FlowMetricSpec spec{lambda, 2.0, kInf, 1};
            const double d = d_lambda(a, b, spec);
            EXPECT_LE(d, prev);
            prev = d;
        }
        double sup = 0.0;
        std::vector<double> diff(g.size());
        for (std::size_t i = 0; i < tg.size(); ++i) {
            for (std::size_t j = 0; j < g.size(); ++j) diff[j] = a.at(i).values[j] - b.at(i).values[j];
            sup = std::max(sup, tilde_norm(diff, g, kInf));
        }
        FlowMetricSpec spec{0.0, 2.0, kInf, 1};
        EXPECT_LE(d_lambda(a, b, spec), std::pow(tg.T(), spec.exponent()) * sup * (1 + 1e-12));
    }
}

TEST(DLambda, TimeGridMismatch) {
    std::mt19937_64 gen(53);
    const Grid1D g(-6.0, 6.0, 60);
    const auto a = random_flow(TimeGrid::uniform(1.0, 4), g, gen);
    const auto b = random_flow(TimeGrid::uniform(1.0, 5), g, gen);
    try {
        d_lambda(a, b, {});
        FAIL();
    } catch (const Error& e) {
        EXPECT_EQ(e.kind(), ErrorKind::grid_mismatch);
    }
}

TEST(DLambda, ExponentFormula) {
    EXPECT_DOUBLE_EQ((FlowMetricSpec{1.0, 2.0, 4.0, 1}.exponent()), 2.0 / 16.0);
    EXPECT_DOUBLE_EQ((FlowMetricSpec{1.0, 2.0, kInf, 1}.exponent()), 0.25);
    EXPECT_DOUBLE_EQ((FlowMetricSpec{1.0, 3.0, 3.0, 1}.exponent()), 0.0);
}

} // namespace
} // namespace nemlab
