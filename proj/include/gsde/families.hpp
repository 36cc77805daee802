#pragma once

#include <algorithm>
#include <cmath>
#include <numbers>
#include <string>
#include <vector>

#include "gsde/coefficients.hpp"

// Built-in scalar-state (d = 1) coefficient families with Osgood data that
// satisfies both the continuity and the growth inequality.

namespace gsde::families {

/// b = mean_coeff E[xi] + state_coeff x, g_i = diffusion, h_ii = qv_coeff.
inline CoefficientSet linear_meanfield(std::size_t n, double mean_coeff = 1.0, double state_coeff = 0.0,
                                       double diffusion = 0.0, double qv_coeff = 0.0) {
    CoefficientSet c;
    c.name = "linear-meanfield";
    c.d = 1;
    c.n = n;
    c.b = [=](double, std::span<const double> x, const LawView& law, const ScenarioContext&, std::span<double> out) {
        out[0] = mean_coeff * law.upper_mean(0) + state_coeff * x[0];
    };
    if (diffusion != 0.0) {
        c.g = [=](double, std::span<const double>, const LawView&, const ScenarioContext&, std::span<double> out) {
            std::fill(out.begin(), out.end(), diffusion);
        };
    }
    if (qv_coeff != 0.0) {
        c.h = [=](double, std::span<const double>, const LawView&, const ScenarioContext&, std::span<double> out) {
            for (std::size_t i = 0; i < n; ++i) out[i * n + i] = qv_coeff;
        };
    }
    // |b(x,xi) - b(y,eta)|^2 <= 2 c_x^2 |x-y|^2 + 2 c_m^2 ||xi-eta||^2 since |E xi - E eta| <= ||xi-eta||_{L2}.
    c.osgood.kappa = OsgoodData::constant(2.0 * state_coeff * state_coeff);
    c.osgood.K = std::max({2.0 * mean_coeff * mean_coeff, diffusion * diffusion, qv_coeff * qv_coeff});
    c.osgood.rho1 = Rho::linear(1.0);
    c.osgood.rho2 = Rho::linear(1.0);
    return c;
}

/// b = mu x, g_i = nu x.
inline CoefficientSet geometric(std::size_t n, double mu = 0.0, double nu = 1.0) {
    CoefficientSet c;
    c.name = "geometric";
    c.d = 1;
    c.n = n;
    if (mu != 0.0) {
        c.b = [=](double, std::span<const double> x, const LawView&, const ScenarioContext&, std::span<double> out) {
            out[0] = mu * x[0];
        };
    }
    c.g = [=](double, std::span<const double> x, const LawView&, const ScenarioContext&, std::span<double> out) {
        std::fill(out.begin(), out.end(), nu * x[0]);
    };
    c.osgood.kappa = OsgoodData::constant(std::max(mu * mu, nu * nu));
    c.osgood.K = 0.0;
    c.osgood.rho1 = Rho::linear(1.0);
    c.osgood.rho2 = Rho::linear(0.0);
    return c;
}

/// psi(x) = x sqrt(2 ln(1/|x|)) for |x| <= e^{-1/2}, held at +-e^{-1/2} beyond.
/// psi(x)^2 = phi(x^2) with phi(r) = r ln(1/r) capped at 1/e; t -> sqrt(phi(t^2)) is
/// concave on [0, e^{-1/2}], which gives |psi(x) - psi(y)|^2 <= 4 phi(|x - y|^2).
inline double log_modulus(double x) {
    const double a = std::abs(x);
    if (a == 0.0) return 0.0;
    const double r = a * a;
    const double phi = r < 1.0 / std::numbers::e ? r * std::log(1.0 / r) : 1.0 / std::numbers::e;
    return std::copysign(std::sqrt(phi), x);
}

/// Non-Lipschitz drift b = scale psi(x) plus constant diffusion g_i = diffusion.
inline CoefficientSet osgood_log(std::size_t n, double scale = 1.0, double diffusion = 0.0) {
    CoefficientSet c;
    c.name = "osgood-log";
    c.d = 1;
    c.n = n;
    c.b = [=](double, std::span<const double> x, const LawView&, const ScenarioContext&, std::span<double> out) {
        out[0] = scale * log_modulus(x[0]);
    };
    if (diffusion != 0.0) {
        c.g = [=](double, std::span<const double>, const LawView&, const ScenarioContext&, std::span<double> out) {
            std::fill(out.begin(), out.end(), diffusion);
        };
    }
    c.osgood.kappa = OsgoodData::constant(1.0);
    c.osgood.K = std::max(scale * scale / std::numbers::e, diffusion * diffusion);
    c.osgood.rho1 = Rho::log_osgood(4.0 * scale * scale);
    c.osgood.rho2 = Rho::linear(0.0);
    return c;
}

/// Distribution-dependent drift b~(s, x, F) = -theta (x - F(id)) and g~ = nu,
/// lifted to b(s, x, xi) = b~(s, x, F_xi). Lipschitz with constant theta in
/// (x, d1), hence Osgood with rho1 = rho2 = Linear(2 theta^2).
inline CoefficientSet sun_lifted(std::size_t n, double theta = 0.5, double nu = 0.0) {
    CoefficientSet c;
    c.name = "sun-lifted";
    c.d = 1;
    c.n = n;
    c.b = lift_distribution_coefficient(
        {[=](double, std::span<const double> x, const DistributionView& F) { return -theta * (x[0] - F.mean(0)); }});
    if (nu != 0.0) {
        std::vector<DistributionFn> comps(n, [=](double, std::span<const double>, const DistributionView&) { return nu; });
        c.g = lift_distribution_coefficient(std::move(comps));
    }
    const double two_t2 = 2.0 * theta * theta;
    c.osgood.kappa = OsgoodData::constant(std::max(1.0, two_t2));
    c.osgood.K = std::max({1.0, two_t2, nu * nu});
    c.osgood.rho1 = Rho::linear(two_t2);
    c.osgood.rho2 = Rho::linear(two_t2);
    return c;
}

/// Piecewise-linear interpolation of (xs, ys), constant beyond the ends.
class Table1D {
public:
    Table1D(std::vector<double> xs, std::vector<double> ys) : xs_(std::move(xs)), ys_(std::move(ys)) {
        require(xs_.size() >= 2 && xs_.size() == ys_.size(), "custom-table: need at least two (x, y) pairs");
        for (std::size_t i = 1; i < xs_.size(); ++i) require(xs_[i] > xs_[i - 1], "custom-table: x must increase");
        for (double y : ys_) require(std::isfinite(y), "custom-table: values must be finite");
    }

    double operator()(double x) const {
        if (x <= xs_.front()) return ys_.front();
        if (x >= xs_.back()) return ys_.back();
        const auto it = std::upper_bound(xs_.begin(), xs_.end(), x);
        const std::size_t i = static_cast<std::size_t>(it - xs_.begin());
        const double w = (x - xs_[i - 1]) / (xs_[i] - xs_[i - 1]);
        return ys_[i - 1] + w * (ys_[i] - ys_[i - 1]);
    }

    double lipschitz() const {
        double L = 0.0;
        for (std::size_t i = 1; i < xs_.size(); ++i)
            L = std::max(L, std::abs((ys_[i] - ys_[i - 1]) / (xs_[i] - xs_[i - 1])));
        return L;
    }

    double at_zero() const { return (*this)(0.0); }

private:
    std::vector<double> xs_;
    std::vector<double> ys_;
};

/// b(x) and g_i(x) read from piecewise-linear tables on a shared abscissa.
inline CoefficientSet custom_table(std::size_t n, const std::vector<double>& xs, const std::vector<double>& bs,
                                   const std::vector<double>& gs) {
    CoefficientSet c;
    c.name = "custom-table";
    c.d = 1;
    c.n = n;
    double L = 0.0;
    double f0 = 0.0;
    if (!bs.empty()) {
        Table1D tb(xs, bs);
        L = std::max(L, tb.lipschitz());
        f0 = std::max(f0, std::abs(tb.at_zero()));
        c.b = [tb](double, std::span<const double> x, const LawView&, const ScenarioContext&, std::span<double> out) {
            out[0] = tb(x[0]);
        };
    }
    if (!gs.empty()) {
        Table1D tg(xs, gs);
        L = std::max(L, tg.lipschitz());
        f0 = std::max(f0, std::abs(tg.at_zero()));
        c.g = [tg](double, std::span<const double> x, const LawView&, const ScenarioContext&, std::span<double> out) {
            std::fill(out.begin(), out.end(), tg(x[0]));
        };
    }
    // |f(x)|^2 <= 2 f(0)^2 + 2 L^2 |x|^2 and |f(x) - f(y)|^2 <= L^2 |x - y|^2.
    c.osgood.kappa = OsgoodData::constant(2.0 * L * L);
    c.osgood.K = 2.0 * f0 * f0;
    c.osgood.rho1 = Rho::linear(1.0);
    c.osgood.rho2 = Rho::linear(0.0);
    return c;
}

/// Constant zero coefficients.
inline CoefficientSet zero(std::size_t n, std::size_t d = 1) {
    CoefficientSet c;
    c.name = "zero";
    c.d = d;
    c.n = n;
    return c;
}

}  // namespace gsde::families
