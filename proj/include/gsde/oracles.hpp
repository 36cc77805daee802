#pragma once

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <string>
#include <vector>

#include "gsde/coefficients.hpp"
#include "gsde/ensemble.hpp"
#include "gsde/error.hpp"
#include "gsde/time_grid.hpp"
#include "gsde/uncertainty.hpp"

namespace gsde::oracle {

/// Classical McKean-Vlasov particle scheme under a single Wiener measure
/// with constant volatility sigma. Shares no integrator or random stream
/// with the Picard engine: plain Euler stepping, std::mt19937_64 noise,
/// law arguments from the empirical particle distribution.
inline Ensemble classical_mkv_solve(const Ensemble& xi, const CoefficientSet& c, const Matrix& sigma,
                                    const TimeGrid& grid, std::size_t paths, std::uint64_t seed) {
    require(xi.kind() == EnsembleKind::RandomVariable && xi.scenarios() == 1 && xi.paths() == paths,
            "classical_mkv_solve: xi must be a single-scenario random variable with one sample per particle");
    require(xi.dim() == c.d, "classical_mkv_solve: state dimension mismatch");
    require(static_cast<std::size_t>(sigma.rows()) == c.n && sigma.rows() == sigma.cols(),
            "classical_mkv_solve: sigma must be n x n");
    const std::size_t d = c.d;
    const std::size_t n = c.n;
    const double dt = grid.dt();
    const Matrix cov_rate = sigma * sigma.transpose();

    std::mt19937_64 engine(seed);
    std::normal_distribution<double> gauss(0.0, 1.0);

    Ensemble X = Ensemble::process(1, paths, grid, d);
    for (std::size_t p = 0; p < paths; ++p)
        for (std::size_t q = 0; q < d; ++q) X.at(0, p, 0, q) = xi.at(0, p, 0, q);

    std::vector<double> bv(c.b_size()), hv(c.h_size()), gv(c.g_size()), z(n), dB(n);
    for (std::size_t k = 0; k < grid.steps(); ++k) {
        const LawView law(X.slice(k));
        const double t = grid.node(k);
        for (std::size_t p = 0; p < paths; ++p) {
            const ScenarioContext ctx{0, p, k};
            const auto x = X.state(0, p, k);
            auto eval = [&](const CoefficientFn& f, std::vector<double>& out) {
                std::fill(out.begin(), out.end(), 0.0);
                if (f) f(t, x, law, ctx, out);
            };
            eval(c.b, bv);
            eval(c.h, hv);
            eval(c.g, gv);
            for (auto& v : z) v = gauss(engine);
            for (std::size_t i = 0; i < n; ++i) {
                dB[i] = 0.0;
                for (std::size_t j = 0; j < n; ++j) dB[i] += sigma(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * z[j];
                dB[i] *= std::sqrt(dt);
            }
            for (std::size_t q = 0; q < d; ++q) {
                double drift = bv[q];
                for (std::size_t i = 0; i < n; ++i)
                    for (std::size_t j = 0; j < n; ++j)
                        drift += hv[(q * n + i) * n + j] * cov_rate(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                double noise = 0.0;
                for (std::size_t i = 0; i < n; ++i) noise += gv[q * n + i] * dB[i];
                const double next = x[q] + drift * dt + noise;
                if (!std::isfinite(next))
                    throw NonFiniteError("classical_mkv_solve: non-finite state at node " + std::to_string(k + 1));
                X.at(0, p, k + 1, q) = next;
            }
        }
    }
    return X;
}

struct GHeatConfig {
    double sigma_low = 0.0;
    double sigma_high = 1.0;
    double horizon = 1.0;
    /// 0 selects 8 sigma_high sqrt(T).
    double space_halfwidth = 0.0;
    std::size_t space_steps = 2000;
    /// 0 selects the smallest count satisfying the CFL bound.
    std::size_t time_steps = 0;
    std::function<double(double)> payoff;
};

struct GHeatResult {
    double value = 0.0;
    std::size_t time_steps = 0;
    double cfl = 0.0;  // dt / dx^2
};

/// Explicit finite differences for u_t + G(u_xx) = 0 backward from u(T, x) = phi(x),
/// G(a) = (sigma_high^2 a^+ - sigma_low^2 a^-) / 2. Returns u(0, 0) = E[phi(B_T)]
/// over all adapted volatility controls in [sigma_low, sigma_high].
inline GHeatResult gheat_expectation(const GHeatConfig& cfg) {
    if (!(cfg.sigma_low >= 0.0 && cfg.sigma_low <= cfg.sigma_high))
        throw ConfigError("gheat: requires 0 <= sigma_low <= sigma_high");
    if (!(cfg.horizon > 0.0)) throw ConfigError("gheat: horizon must be positive");
    if (cfg.space_steps < 2) throw ConfigError("gheat: space_steps must be at least 2");
    if (!cfg.payoff) throw ConfigError("gheat: payoff missing");
    const double L = cfg.space_halfwidth > 0.0 ? cfg.space_halfwidth
                                               : 8.0 * std::max(cfg.sigma_high, 1e-3) * std::sqrt(cfg.horizon);
    const std::size_t M = cfg.space_steps;
    const double dx = 2.0 * L / static_cast<double>(M);
    const double sh2 = cfg.sigma_high * cfg.sigma_high;
    const double sl2 = cfg.sigma_low * cfg.sigma_low;

    std::size_t N = cfg.time_steps;
    if (N == 0) N = std::max<std::size_t>(1, static_cast<std::size_t>(std::ceil(cfg.horizon * sh2 / (dx * dx))));
    const double dt = cfg.horizon / static_cast<double>(N);
    const double lambda = dt / (dx * dx);
    if (lambda * sh2 > 1.0 + 1e-12)
        throw ConfigError("gheat: CFL violated, dt/dx^2 = " + std::to_string(lambda) + " exceeds 1/sigma_high^2");

    std::vector<double> u(M + 1), next(M + 1);
    for (std::size_t i = 0; i <= M; ++i) u[i] = cfg.payoff(-L + dx * static_cast<double>(i));
    for (std::size_t step = 0; step < N; ++step) {
        next.front() = u.front();
        next.back() = u.back();
        for (std::size_t i = 1; i < M; ++i) {
            const double lap = u[i + 1] - 2.0 * u[i] + u[i - 1];
            const double g = lap > 0.0 ? 0.5 * sh2 * lap : 0.5 * sl2 * lap;
            next[i] = u[i] + lambda * g;
        }
        u.swap(next);
    }
    const double pos = L / dx;
    const auto i0 = static_cast<std::size_t>(std::floor(pos));
    const double w = pos - static_cast<double>(i0);
    const double value = i0 >= M ? u[M] : (1.0 - w) * u[i0] + w * u[i0 + 1];
    return {value, N, lambda};
}

}  // namespace gsde::oracle
