#pragma once

#include <Eigen/Dense>

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <cstdint>
#include <limits>
#include <span>
#include <string>
#include <variant>
#include <vector>

#include "gsde/error.hpp"
#include "gsde/random.hpp"
#include "gsde/time_grid.hpp"

namespace gsde {

using Matrix = Eigen::MatrixXd;
using Vector = Eigen::VectorXd;

namespace set_kind {
struct Singleton {};
struct Interval1D {
    double low;
    double high;
};
struct DiagonalBox {
    std::vector<double> lows;
    std::vector<double> highs;
};
struct FiniteSet {};
}  // namespace set_kind

using SetKind = std::variant<set_kind::Singleton, set_kind::Interval1D, set_kind::DiagonalBox,
                             set_kind::FiniteSet>;

/// Finite discretization of a convex set of symmetric PSD volatility
/// matrices. Generators are stored symmetrized.
class UncertaintySet {
public:
    static UncertaintySet singleton(const Matrix& sigma) {
        return UncertaintySet(set_kind::Singleton{}, {sigma});
    }

    static UncertaintySet scalar(double sigma) {
        return singleton(Matrix::Constant(1, 1, sigma));
    }

    /// [low, high] in one dimension. Two generators (the endpoints) by default;
    /// generator_count > 2 inserts evenly spaced interior points.
    static UncertaintySet interval(double low, double high, std::size_t generator_count = 2) {
        require(std::isfinite(low) && std::isfinite(high), "Interval1D: bounds must be finite");
        require(low >= 0.0, "Interval1D: low must be nonnegative");
        require(low <= high, "Interval1D: requires low <= high");
        require(generator_count >= 1, "Interval1D: at least one generator");
        std::vector<Matrix> gens;
        if (low == high) {
            gens.push_back(Matrix::Constant(1, 1, high));
        } else {
            const std::size_t count = std::max<std::size_t>(2, generator_count);
            for (std::size_t i = 0; i < count; ++i) {
                const double w = static_cast<double>(i) / static_cast<double>(count - 1);
                gens.push_back(Matrix::Constant(1, 1, i + 1 == count ? high : low + w * (high - low)));
            }
        }
        return UncertaintySet(set_kind::Interval1D{low, high}, std::move(gens));
    }

    /// Diagonal volatility box; generators are the 2^n corners.
    static UncertaintySet diagonal_box(std::vector<double> lows, std::vector<double> highs) {
        require(!lows.empty() && lows.size() == highs.size(), "DiagonalBox: bound vectors must match");
        require(lows.size() < 20, "DiagonalBox: dimension too large for corner enumeration");
        const std::size_t n = lows.size();
        for (std::size_t i = 0; i < n; ++i) {
            require(lows[i] >= 0.0 && lows[i] <= highs[i], "DiagonalBox: requires 0 <= lows <= highs");
        }
        std::vector<Matrix> gens;
        for (std::size_t mask = 0; mask < (std::size_t{1} << n); ++mask) {
            Matrix m = Matrix::Zero(n, n);
            bool duplicate = false;
            for (std::size_t i = 0; i < n; ++i) {
                const bool take_high = (mask >> i) & 1u;
                if (take_high && lows[i] == highs[i]) duplicate = true;
                m(i, i) = take_high ? highs[i] : lows[i];
            }
            if (!duplicate) gens.push_back(m);
        }
        return UncertaintySet(set_kind::DiagonalBox{std::move(lows), std::move(highs)}, std::move(gens));
    }

    static UncertaintySet finite(std::vector<Matrix> generators) {
        return UncertaintySet(set_kind::FiniteSet{}, std::move(generators));
    }

    std::size_t dimension() const noexcept { return n_; }
    std::size_t size() const noexcept { return generators_.size(); }
    const Matrix& generator(std::size_t i) const { return generators_.at(i); }
    const std::vector<Matrix>& generators() const noexcept { return generators_; }
    const SetKind& kind() const noexcept { return kind_; }

    /// Same kind with extra generators appended.
    UncertaintySet enlarged(std::vector<Matrix> extra) const {
        std::vector<Matrix> gens = generators_;
        for (auto& m : extra) gens.push_back(std::move(m));
        return UncertaintySet(set_kind::FiniteSet{}, std::move(gens));
    }

private:
    UncertaintySet(SetKind kind, std::vector<Matrix> generators)
        : kind_(std::move(kind)), generators_(std::move(generators)) {
        require(!generators_.empty(), "UncertaintySet: generator list must be non-empty");
        n_ = static_cast<std::size_t>(generators_.front().rows());
        require(n_ > 0, "UncertaintySet: dimension must be positive");
        for (auto& g : generators_) {
            require(static_cast<std::size_t>(g.rows()) == n_ && static_cast<std::size_t>(g.cols()) == n_,
                    "UncertaintySet: generators must be square with a common dimension");
            require(g.allFinite(), "UncertaintySet: generator entries must be finite");
            g = 0.5 * (g + g.transpose()).eval();
            Eigen::SelfAdjointEigenSolver<Matrix> eig(g, Eigen::EigenvaluesOnly);
            require(eig.eigenvalues().minCoeff() >= -1e-12,
                    "UncertaintySet: generator is not positive semi-definite");
        }
    }

    SetKind kind_;
    std::vector<Matrix> generators_;
    std::size_t n_ = 0;
};

namespace detail {
inline Vector to_vector(std::span<const double> v) {
    return Eigen::Map<const Vector>(v.data(), static_cast<Eigen::Index>(v.size()));
}
}  // namespace detail

/// a^T sigma sigma b for one generator.
inline double covariation_rate(const Matrix& sigma, std::span<const double> a, std::span<const double> b) {
    const Vector va = detail::to_vector(a);
    const Vector vb = detail::to_vector(b);
    return va.dot(sigma * (sigma * vb));
}

/// max over generators of sqrt(|a^T sigma sigma b|).
inline double sigma_bar(const UncertaintySet& set, std::span<const double> a, std::span<const double> b) {
    require(a.size() == set.dimension() && b.size() == set.dimension(),
            "sigma_bar: vector length must equal the set dimension");
    double best = 0.0;
    for (const auto& g : set.generators()) best = std::max(best, std::sqrt(std::abs(covariation_rate(g, a, b))));
    return best;
}

/// min over generators of sqrt(a^T sigma sigma a).
inline double sigma_under(const UncertaintySet& set, std::span<const double> a) {
    require(a.size() == set.dimension(), "sigma_under: vector length must equal the set dimension");
    double best = std::numeric_limits<double>::infinity();
    for (const auto& g : set.generators())
        best = std::min(best, std::sqrt(std::max(0.0, covariation_rate(g, a, a))));
    return best;
}

inline std::vector<double> basis_vector(std::size_t n, std::size_t i) {
    std::vector<double> e(n, 0.0);
    e.at(i) = 1.0;
    return e;
}

namespace strategy {
struct ConstantVertices {};
struct RandomSwitching {
    std::uint64_t seed = 0;
    std::size_t switch_count = 1;
};
struct Exhaustive {
    std::size_t max_scenarios = 0;
};
}  // namespace strategy

using ControlStrategy = std::variant<strategy::ConstantVertices, strategy::RandomSwitching, strategy::Exhaustive>;

/// Piecewise-constant open-loop controls: scenario s uses generator
/// controls[s][k] on grid interval k.
struct ControlLattice {
    TimeGrid grid;
    UncertaintySet set;
    std::vector<std::vector<std::uint32_t>> controls;
    ControlStrategy strategy;

    std::size_t scenarios() const noexcept { return controls.size(); }
    const Matrix& sigma(std::size_t scenario, std::size_t interval) const {
        return set.generator(controls[scenario][interval]);
    }
};

class LatticeTooLarge : public ContractViolation {
public:
    explicit LatticeTooLarge(const std::string& what) : ContractViolation(what) {}
};

inline ControlLattice build_controls(const UncertaintySet& set, const TimeGrid& grid,
                                     const ControlStrategy& strat, std::size_t budget) {
    require(budget > 0, "build_controls: budget must be positive");
    const std::size_t g = set.size();
    const std::size_t m = grid.steps();
    std::vector<std::vector<std::uint32_t>> controls;

    if (std::holds_alternative<strategy::ConstantVertices>(strat)) {
        require(budget >= g, "build_controls: ConstantVertices needs budget >= generator count");
        for (std::size_t i = 0; i < g; ++i) controls.emplace_back(m, static_cast<std::uint32_t>(i));
    } else if (const auto* rs = std::get_if<strategy::RandomSwitching>(&strat)) {
        require(rs->switch_count < m, "build_controls: switch_count must be below the step count");
        for (std::size_t s = 0; s < budget; ++s) {
            CounterStream stream(rs->seed, static_cast<std::uint32_t>(s), 0x5157u, 0u);
            std::vector<std::size_t> nodes(m - 1);
            for (std::size_t k = 0; k + 1 < m; ++k) nodes[k] = k + 1;
            // partial Fisher-Yates: first switch_count entries are a uniform draw
            for (std::size_t i = 0; i < rs->switch_count; ++i) {
                const std::size_t j = i + stream.next_u64() % (nodes.size() - i);
                std::swap(nodes[i], nodes[j]);
            }
            std::vector<std::size_t> switches(nodes.begin(), nodes.begin() + static_cast<std::ptrdiff_t>(rs->switch_count));
            std::sort(switches.begin(), switches.end());
            std::vector<std::uint32_t> seq(m);
            auto current = static_cast<std::uint32_t>(stream.next_u64() % g);
            std::size_t next = 0;
            for (std::size_t k = 0; k < m; ++k) {
                if (next < switches.size() && switches[next] == k) {
                    ++next;
                    if (g > 1) {
                        const auto shift = static_cast<std::uint32_t>(1 + stream.next_u64() % (g - 1));
                        current = static_cast<std::uint32_t>((current + shift) % g);
                    }
                }
                seq[k] = current;
            }
            controls.push_back(std::move(seq));
        }
    } else {
        const auto& ex = std::get<strategy::Exhaustive>(strat);
        const std::size_t cap = std::min(ex.max_scenarios, budget);
        std::size_t count = 1;
        for (std::size_t k = 0; k < m; ++k) {
            if (count > cap / g) {
                count = cap + 1;
                break;
            }
            count *= g;
        }
        if (count > cap) {
            throw LatticeTooLarge("lattice too large: " + std::to_string(g) + "^" + std::to_string(m) +
                                  " scenarios exceed the limit of " + std::to_string(cap));
        }
        for (std::size_t idx = 0; idx < count; ++idx) {
            std::vector<std::uint32_t> seq(m);
            std::size_t rest = idx;
            for (std::size_t k = m; k-- > 0;) {
                seq[k] = static_cast<std::uint32_t>(rest % g);
                rest /= g;
            }
            controls.push_back(std::move(seq));
        }
    }
    return ControlLattice{grid, set, std::move(controls), strat};
}

}  // namespace gsde
