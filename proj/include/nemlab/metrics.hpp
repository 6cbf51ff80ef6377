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

#pragma once

#include <algorithm>
#include <array>
#include <cmath>
#include <functional>
#include <limits>
#include <span>
#include <vector>

#include "nemlab/density.hpp"
#include "nemlab/error.hpp"

namespace nemlab {

/// Densities below this are treated as zero in entropy quotients.
inline constexpr double kDensityFloor = 1e-30;

/// Weighting of the flow distance d_lambda. The singularity exponent is
/// d (k - p) / (2 p k).
struct FlowMetricSpec {
    double lambda = 1.0;
    double p = 2.0;
    double k = kInf;
    int d_dim = 1;

    double exponent() const {
        if (std::isinf(k)) return static_cast<double>(d_dim) / (2.0 * p);
        return static_cast<double>(d_dim) * (k - p) / (2.0 * p * k);
    }

    void validate() const {
        require(lambda >= 0.0, ErrorKind::invalid_parameter, "d_lambda needs lambda >= 0");
        require(p >= 1.0 && p <= k, ErrorKind::invalid_parameter, "d_lambda needs 1 <= p <= k");
        require(d_dim >= 1, ErrorKind::invalid_parameter, "d_lambda needs d >= 1");
    }
};

namespace detail {

inline void require_probability(const GridDensity& d, const char* name) {
    const double m = d.mass();
    require(std::abs(m - 1.0) <= 1e-8, ErrorKind::not_a_probability,
            std::string(name) + " has mass " + std::to_string(m));
    for (double v : d.values)
        require(v >= 0.0, ErrorKind::not_a_probability, std::string(name) + " has a negative value");
}

/// Cumulative masses at the cell edges: F[0] = 0, F[n] = 1.
inline std::vector<double> edge_cdf(const GridDensity& d) {
    std::vector<double> F(d.values.size() + 1, 0.0);
    long double acc = 0.0L;
    for (std::size_t j = 0; j < d.values.size(); ++j) {
        acc += static_cast<long double>(d.values[j]) * d.grid.dx();
        F[j + 1] = static_cast<double>(acc);
    }
    // Remove the rounding residue so both CDFs end exactly at 1.
    const double total = F.back();
    for (double& v : F) v /= total;
    F.back() = 1.0;
    return F;
}

/// A u-interval on which both quantile functions are affine. The gap
/// F_mu^{-1}(u) - F_nu^{-1}(u) runs linearly from gap0 to gap1.
struct QuantileSegment {
    double du;
    double gap0;
    double gap1;
};

/// Merges the CDF breakpoints of the piecewise-linear CDFs so that the gap
/// between the quantile functions is affine on every segment.
inline std::vector<QuantileSegment> quantile_segments(const GridDensity& mu, const GridDensity& nu) {
    const auto Fm = edge_cdf(mu);
    const auto Fn = edge_cdf(nu);
    const double x0m = mu.grid.x_min();
    const double x0n = nu.grid.x_min();
    const double hm = mu.grid.dx();
    const double hn = nu.grid.dx();
    const std::size_t nm = mu.values.size();
    const std::size_t nn = nu.values.size();

    // Quantile inside cell j of a CDF F at level u.
    auto quantile = [](const std::vector<double>& F, double x0, double h, std::size_t j, double u) {
        const double dF = F[j + 1] - F[j];
        const double frac = dF > 0.0 ? std::clamp((u - F[j]) / dF, 0.0, 1.0) : 0.0;
        return x0 + (static_cast<double>(j) + frac) * h;
    };

    std::vector<QuantileSegment> segs;
    segs.reserve(nm + nn);
    std::size_t i = 0;
    std::size_t j = 0;
    double u = 0.0;
    while (i < nm && j < nn) {
        // Skip empty cells.
        if (Fm[i + 1] <= u) { ++i; continue; }
        if (Fn[j + 1] <= u) { ++j; continue; }
        const double u_next = std::min(Fm[i + 1], Fn[j + 1]);
        const double a0 = quantile(Fm, x0m, hm, i, u);
        const double a1 = quantile(Fm, x0m, hm, i, u_next);
        const double b0 = quantile(Fn, x0n, hn, j, u);
        const double b1 = quantile(Fn, x0n, hn, j, u_next);
        if (u_next > u) segs.push_back({u_next - u, a0 - b0, a1 - b1});
        u = u_next;
        if (u >= 1.0) break;
    }
    return segs;
}

inline constexpr std::array<double, 5> kGaussNodes = {
    -0.9061798459386640, -0.5384693101056831, 0.0, 0.5384693101056831, 0.9061798459386640};
inline constexpr std::array<double, 5> kGaussWeights = {
    0.2369268850561891, 0.4786286704993665, 0.5688888888888889, 0.4786286704993665, 0.2369268850561891};

/// Integrates g(gap(u)) over a segment; splits at a sign change of the gap so
/// that |gap|^q integrands are smooth on each piece.
template <class G>
double integrate_segment(const QuantileSegment& s, G&& g) {
    auto gauss = [&](double len, double y0, double y1) {
        double acc = 0.0;
        for (std::size_t m = 0; m < kGaussNodes.size(); ++m) {
            const double w = 0.5 * (kGaussNodes[m] + 1.0);
            acc += kGaussWeights[m] * g(y0 + w * (y1 - y0));
        }
        return 0.5 * len * acc;
    };
    if ((s.gap0 < 0.0 && s.gap1 > 0.0) || (s.gap0 > 0.0 && s.gap1 < 0.0)) {
        const double theta = s.gap0 / (s.gap0 - s.gap1);
        return gauss(theta * s.du, s.gap0, 0.0) + gauss((1.0 - theta) * s.du, 0.0, s.gap1);
    }
    return gauss(s.du, s.gap0, s.gap1);
}

} // namespace detail

/// W_q between two grid densities via the monotone (quantile) coupling of
/// their piecewise-linear CDFs. Gauss-Legendre on each merged u-segment.
inline double wasserstein_1d(const GridDensity& mu, const GridDensity& nu, double q) {
    require(q >= 1.0, ErrorKind::invalid_parameter, "wasserstein needs q >= 1");
    detail::require_probability(mu, "mu");
    detail::require_probability(nu, "nu");
    double acc = 0.0;
    for (const auto& s : detail::quantile_segments(mu, nu)) {
        if (q == 1.0) {
            acc += detail::integrate_segment(s, [](double y) { return std::abs(y); });
        } else if (q == 2.0) {
            acc += detail::integrate_segment(s, [](double y) { return y * y; });
        } else {
            acc += detail::integrate_segment(s, [q](double y) { return std::pow(std::abs(y), q); });
        }
    }
    return std::pow(std::max(acc, 0.0), 1.0 / q);
}

/// log int_0^1 exp(c |F_mu^{-1}(u) - F_nu^{-1}(u)|^2) du. The monotone
/// coupling is optimal in 1D because exp(c r^2) is convex increasing in r.
inline double exp_wasserstein(const GridDensity& mu, const GridDensity& nu, double c) {
    require(c > 0.0, ErrorKind::invalid_parameter, "exp_wasserstein needs c > 0");
    detail::require_probability(mu, "mu");
    detail::require_probability(nu, "nu");
    const auto segs = detail::quantile_segments(mu, nu);
    double max_gap = 0.0;
    for (const auto& s : segs) max_gap = std::max({max_gap, std::abs(s.gap0), std::abs(s.gap1)});
    require(c * max_gap * max_gap <= 700.0, ErrorKind::numeric_overflow,
            "exp_wasserstein integrand overflows (c * maxgap^2 = " + std::to_string(c * max_gap * max_gap) + ")");
    // Factor out the largest exponent so the sum stays in range.
    const double shift = c * max_gap * max_gap;
    double acc = 0.0;
    for (const auto& s : segs)
        acc += detail::integrate_segment(s, [c, shift](double y) { return std::exp(c * y * y - shift); });
    return std::max(0.0, std::log(acc) + shift);
}

/// Discrete measure sum_i w_i delta_{x_i}.
struct DiscreteMeasure {
    std::vector<double> atoms;
    std::vector<double> weights;
};

namespace detail {

inline void require_discrete_probability(const DiscreteMeasure& m, const char* name) {
    require(m.atoms.size() == m.weights.size() && !m.atoms.empty(), ErrorKind::not_a_probability,
            std::string(name) + " needs matching nonempty atoms and weights");
    double s = 0.0;
    for (double w : m.weights) {
        require(w >= 0.0, ErrorKind::not_a_probability, std::string(name) + " has a negative weight");
        s += w;
    }
    require(std::abs(s - 1.0) <= 1e-9, ErrorKind::not_a_probability,
            std::string(name) + " weights sum to " + std::to_string(s));
}

} // namespace detail

/// Exact optimal transport cost min_pi sum pi_ij cost(x_i, y_j): min-cost
/// flow from a super source through the supplies and demands to a super
/// sink, by successive shortest paths (Bellman-Ford on the residual graph).
/// Every augmentation saturates an arc, so the number of rounds is small.
inline double optimal_coupling_cost(const DiscreteMeasure& mu, const DiscreteMeasure& nu,
                                    const std::function<double(double, double)>& cost) {
    detail::require_discrete_probability(mu, "mu");
    detail::require_discrete_probability(nu, "nu");
    const std::size_t m = mu.atoms.size();
    const std::size_t n = nu.atoms.size();
    require(m <= 200 && n <= 200, ErrorKind::invalid_parameter, "coupling oracle is meant for small supports");

    struct Arc {
        std::size_t to;
        double cap;
        double cost;
    };
    // Nodes: 0 source, 1..m supplies, m+1..m+n demands, m+n+1 sink.
    const std::size_t V = m + n + 2;
    const std::size_t src = 0, sink = m + n + 1;
    std::vector<Arc> arcs;  // arc e and e^1 are a residual pair
    std::vector<std::vector<std::size_t>> out(V);
    auto add = [&](std::size_t u, std::size_t v, double cap, double c) {
        out[u].push_back(arcs.size());
        arcs.push_back({v, cap, c});
        out[v].push_back(arcs.size());
        arcs.push_back({u, 0.0, -c});
    };
    for (std::size_t i = 0; i < m; ++i) add(src, 1 + i, mu.weights[i], 0.0);
    for (std::size_t j = 0; j < n; ++j) add(1 + m + j, sink, nu.weights[j], 0.0);
    std::vector<std::size_t> pair_arc(m * n);
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) {
            pair_arc[i * n + j] = arcs.size();
            add(1 + i, 1 + m + j, 2.0, cost(mu.atoms[i], nu.atoms[j]));
        }

    constexpr double eps = 1e-15;
    double sent = 0.0;
    for (std::size_t round = 0; round < 4 * (m + 1) * (n + 1) && sent < 1.0 - 1e-13; ++round) {
        std::vector<double> dist(V, kInf);
        std::vector<std::size_t> via(V, arcs.size());
        dist[src] = 0.0;
        for (std::size_t it = 0; it + 1 < V; ++it) {
            bool changed = false;
            for (std::size_t u = 0; u < V; ++u) {
                if (!std::isfinite(dist[u])) continue;
                for (std::size_t e : out[u]) {
                    const Arc& a = arcs[e];
                    const double cand = dist[u] + a.cost;
                    if (a.cap > eps && (!std::isfinite(dist[a.to]) || cand < dist[a.to] - 1e-14 * (1.0 + std::abs(cand)))) {
                        dist[a.to] = cand;
                        via[a.to] = e;
                        changed = true;
                    }
                }
            }
            if (!changed) break;
        }
        if (!std::isfinite(dist[sink])) break;
        double push = kInf;
        for (std::size_t v = sink; v != src; v = arcs[via[v] ^ 1].to) push = std::min(push, arcs[via[v]].cap);
        for (std::size_t v = sink; v != src; v = arcs[via[v] ^ 1].to) {
            arcs[via[v]].cap -= push;
            arcs[via[v] ^ 1].cap += push;
        }
        sent += push;
    }

    // The returned plan must be a coupling.
    std::vector<double> plan(m * n);
    for (std::size_t e = 0; e < m * n; ++e) plan[e] = std::max(0.0, arcs[pair_arc[e] ^ 1].cap);
    for (std::size_t i = 0; i < m; ++i) {
        double row = 0.0;
        for (std::size_t j = 0; j < n; ++j) row += plan[i * n + j];
        require(std::abs(row - mu.weights[i]) <= 1e-9, ErrorKind::solver_failure, "coupling oracle lost supply");
    }
    for (std::size_t j = 0; j < n; ++j) {
        double col = 0.0;
        for (std::size_t i = 0; i < m; ++i) col += plan[i * n + j];
        require(std::abs(col - nu.weights[j]) <= 1e-9, ErrorKind::solver_failure, "coupling oracle lost demand");
    }
    double total = 0.0;
    for (std::size_t i = 0; i < m; ++i)
        for (std::size_t j = 0; j < n; ++j) total += plan[i * n + j] * arcs[pair_arc[i * n + j]].cost;
    return total;
}

/// Independent reference for W_q on small discrete supports.
inline double wasserstein_lp_oracle(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double q) {
    require(q >= 1.0, ErrorKind::invalid_parameter, "wasserstein needs q >= 1");
    require(mu.atoms.size() <= 50 && nu.atoms.size() <= 50, ErrorKind::invalid_parameter,
            "LP oracle supports at most 50 atoms per measure");
    const double c = optimal_coupling_cost(mu, nu, [q](double x, double y) { return std::pow(std::abs(x - y), q); });
    return std::pow(std::max(c, 0.0), 1.0 / q);
}

/// Reference for exp_wasserstein on small discrete supports.
inline double exp_wasserstein_lp_oracle(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double c) {
    require(c > 0.0, ErrorKind::invalid_parameter, "exp_wasserstein needs c > 0");
    const double v = optimal_coupling_cost(mu, nu, [c](double x, double y) { return std::exp(c * (x - y) * (x - y)); });
    return std::log(v);
}

/// W_q between discrete measures through the step-CDF quantile coupling.
inline double wasserstein_1d_discrete(const DiscreteMeasure& mu, const DiscreteMeasure& nu, double q) {
    detail::require_discrete_probability(mu, "mu");
    detail::require_discrete_probability(nu, "nu");
    auto sorted = [](const DiscreteMeasure& m) {
        std::vector<std::size_t> order(m.atoms.size());
        for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
        std::sort(order.begin(), order.end(), [&](auto a, auto b) { return m.atoms[a] < m.atoms[b]; });
        DiscreteMeasure s;
        for (auto i : order) {
            s.atoms.push_back(m.atoms[i]);
            s.weights.push_back(m.weights[i]);
        }
        return s;
    };
    const auto a = sorted(mu);
    const auto b = sorted(nu);
    std::size_t i = 0;
    std::size_t j = 0;
    double ca = a.weights[0];
    double cb = b.weights[0];
    double u = 0.0;
    double acc = 0.0;
    while (i < a.atoms.size() && j < b.atoms.size()) {
        const double next = std::min(ca, cb);
        acc += (next - u) * std::pow(std::abs(a.atoms[i] - b.atoms[j]), q);
        u = next;
        if (ca <= next) { if (++i < a.atoms.size()) ca += a.weights[i]; }
        if (cb <= next) { if (++j < b.atoms.size()) cb += b.weights[j]; }
    }
    return std::pow(std::max(acc, 0.0), 1.0 / q);
}

/// Ent(mu|nu) = sum rho_mu log(rho_mu / rho_nu) dx. Cells where rho_mu is at
/// or below the floor contribute nothing; rho_mu above the floor against
/// rho_nu at or below it gives +inf.
inline double relative_entropy(const GridDensity& mu, const GridDensity& nu) {
    require_same_grid(mu.grid, nu.grid);
    long double acc = 0.0L;
    for (std::size_t j = 0; j < mu.values.size(); ++j) {
        const double a = mu.values[j];
        if (a <= kDensityFloor) continue;
        const double b = nu.values[j];
        if (b <= kDensityFloor) return kInf;
        acc += static_cast<long double>(a) * std::log(a / b);
    }
    return static_cast<double>(acc * mu.grid.dx());
}

/// Ent_alpha(mu|nu) = (1/alpha) log sum (rho_mu/rho_nu)^alpha rho_mu dx.
/// This is the non-standard normalization (prefactor 1/alpha, integration
/// against mu) under which Ent_alpha increases in alpha and tends to the
/// relative entropy as alpha -> 0.
inline double renyi_entropy(const GridDensity& mu, const GridDensity& nu, double alpha) {
    require(alpha > 0.0, ErrorKind::invalid_parameter, "renyi entropy needs alpha > 0");
    require_same_grid(mu.grid, nu.grid);
    // (1/alpha) log of the mu-average of (a/b)^alpha, shifted by the largest exponent.
    // Cells of mu under the floor are dropped and the average is taken over the
    // retained mass, so mu = nu gives exactly 0.
    std::vector<double> terms, weights;
    terms.reserve(mu.values.size());
    weights.reserve(mu.values.size());
    for (std::size_t j = 0; j < mu.values.size(); ++j) {
        const double a = mu.values[j];
        if (a <= kDensityFloor) continue;
        const double b = nu.values[j];
        if (b <= kDensityFloor) return kInf;
        terms.push_back(alpha * std::log(a / b));
        weights.push_back(a);
    }
    if (terms.empty()) return 0.0;
    const double top = *std::max_element(terms.begin(), terms.end());
    long double s = 0.0L, mass = 0.0L;
    for (std::size_t j = 0; j < terms.size(); ++j) {
        s += weights[j] * std::exp(static_cast<long double>(terms[j] - top));
        mass += weights[j];
    }
    return (top + static_cast<double>(std::log(s / mass))) / alpha;
}

/// d_lambda(gamma, eta) = max over nodes t > 0 of e^{-lambda t} t^e ||gamma(t) - eta(t)||_{~L^k}.
inline double d_lambda(const DensityFlow& gamma, const DensityFlow& eta, const FlowMetricSpec& spec) {
    spec.validate();
    require(gamma.time_grid == eta.time_grid, ErrorKind::grid_mismatch, "flows have different time grids");
    require_same_grid(gamma.grid(), eta.grid());
    const double e = spec.exponent();
    std::vector<double> diff(gamma.grid().size());
    double best = 0.0;
    for (std::size_t i = 1; i < gamma.time_grid.size(); ++i) {
        const double t = gamma.time_grid[i];
        const auto& a = gamma.snapshots[i].values;
        const auto& b = eta.snapshots[i].values;
        for (std::size_t j = 0; j < diff.size(); ++j) diff[j] = a[j] - b[j];
        const double w = std::exp(-spec.lambda * t) * std::pow(t, e);
        best = std::max(best, w * tilde_norm(diff, gamma.grid(), spec.k));
    }
    return best;
}

} // namespace nemlab
