#pragma once

#include <cmath>
#include <cstddef>
#include <functional>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "gsde/error.hpp"
#include "gsde/time_grid.hpp"

namespace gsde {

enum class EnsembleKind { RandomVariable, Process };

/// Samples indexed by (scenario, path[, node], component).
///
/// A RandomVariable has a single node and no grid. A Process carries a grid
/// whose node count matches the time axis; between nodes it is read as a
/// step process (left-continuous value held on [u_k, u_{k+1})).
/// Storage is row-major in (scenario, path, node, component).
class Ensemble {
public:
    Ensemble() = default;

    static Ensemble random_variable(std::size_t scenarios, std::size_t paths,
                                    std::size_t dim = 1, double fill = 0.0) {
        return Ensemble(EnsembleKind::RandomVariable, scenarios, paths, 1, dim, std::nullopt, fill);
    }

    static Ensemble process(std::size_t scenarios, std::size_t paths, const TimeGrid& grid,
                            std::size_t dim = 1, double fill = 0.0) {
        return Ensemble(EnsembleKind::Process, scenarios, paths, grid.node_count(), dim, grid, fill);
    }

    /// Builds a random variable from explicit values; rejects NaN/Inf.
    static Ensemble random_variable(std::size_t scenarios, std::size_t paths, std::size_t dim,
                                    std::vector<double> values) {
        Ensemble e = random_variable(scenarios, paths, dim);
        require(values.size() == e.values_.size(), "Ensemble: value count does not match shape");
        e.values_ = std::move(values);
        e.validate_finite();
        return e;
    }

    static Ensemble process(std::size_t scenarios, std::size_t paths, const TimeGrid& grid,
                            std::size_t dim, std::vector<double> values) {
        Ensemble e = process(scenarios, paths, grid, dim);
        require(values.size() == e.values_.size(), "Ensemble: value count does not match shape");
        e.values_ = std::move(values);
        e.validate_finite();
        return e;
    }

    /// Process with value f(scenario, path, node, component).
    template <typename F>
    static Ensemble process_from(std::size_t scenarios, std::size_t paths, const TimeGrid& grid,
                                 std::size_t dim, F&& f) {
        Ensemble e = process(scenarios, paths, grid, dim);
        for (std::size_t s = 0; s < scenarios; ++s)
            for (std::size_t p = 0; p < paths; ++p)
                for (std::size_t k = 0; k < e.nodes_; ++k)
                    for (std::size_t c = 0; c < dim; ++c) e.at(s, p, k, c) = f(s, p, k, c);
        e.validate_finite();
        return e;
    }

    EnsembleKind kind() const noexcept { return kind_; }
    bool is_process() const noexcept { return kind_ == EnsembleKind::Process; }
    std::size_t scenarios() const noexcept { return scenarios_; }
    std::size_t paths() const noexcept { return paths_; }
    std::size_t nodes() const noexcept { return nodes_; }
    std::size_t dim() const noexcept { return dim_; }
    std::size_t samples() const noexcept { return scenarios_ * paths_; }
    bool empty() const noexcept { return values_.empty(); }

    const TimeGrid& grid() const {
        require(grid_.has_value(), "Ensemble: process grid missing");
        return *grid_;
    }
    const std::optional<TimeGrid>& maybe_grid() const noexcept { return grid_; }

    double& at(std::size_t s, std::size_t p, std::size_t k = 0, std::size_t c = 0) noexcept {
        return values_[offset(s, p, k, c)];
    }
    double at(std::size_t s, std::size_t p, std::size_t k = 0, std::size_t c = 0) const noexcept {
        return values_[offset(s, p, k, c)];
    }

    /// Component vector at (s, p, k).
    std::span<double> state(std::size_t s, std::size_t p, std::size_t k = 0) noexcept {
        return {values_.data() + offset(s, p, k, 0), dim_};
    }
    std::span<const double> state(std::size_t s, std::size_t p, std::size_t k = 0) const noexcept {
        return {values_.data() + offset(s, p, k, 0), dim_};
    }

    std::span<const double> values() const noexcept { return values_; }
    std::span<double> values() noexcept { return values_; }

    /// Random variable holding node k of this process.
    Ensemble slice(std::size_t k) const {
        require(k < nodes_, "Ensemble::slice: node out of range");
        Ensemble out = random_variable(scenarios_, paths_, dim_);
        for (std::size_t s = 0; s < scenarios_; ++s)
            for (std::size_t p = 0; p < paths_; ++p)
                for (std::size_t c = 0; c < dim_; ++c) out.at(s, p, 0, c) = at(s, p, k, c);
        return out;
    }

    /// Component c as a scalar ensemble of the same kind.
    Ensemble component(std::size_t c) const {
        require(c < dim_, "Ensemble::component: index out of range");
        Ensemble out(kind_, scenarios_, paths_, nodes_, 1, grid_, 0.0);
        for (std::size_t s = 0; s < scenarios_; ++s)
            for (std::size_t p = 0; p < paths_; ++p)
                for (std::size_t k = 0; k < nodes_; ++k) out.at(s, p, k) = at(s, p, k, c);
        return out;
    }

    /// Process that repeats this random variable at every node of grid.
    Ensemble extend_constant(const TimeGrid& grid) const {
        require(kind_ == EnsembleKind::RandomVariable, "extend_constant: needs a random variable");
        Ensemble out = process(scenarios_, paths_, grid, dim_);
        for (std::size_t s = 0; s < scenarios_; ++s)
            for (std::size_t p = 0; p < paths_; ++p)
                for (std::size_t k = 0; k < out.nodes_; ++k)
                    for (std::size_t c = 0; c < dim_; ++c) out.at(s, p, k, c) = at(s, p, 0, c);
        return out;
    }

    bool same_shape(const Ensemble& o) const noexcept {
        return kind_ == o.kind_ && scenarios_ == o.scenarios_ && paths_ == o.paths_ &&
               nodes_ == o.nodes_ && dim_ == o.dim_;
    }

    /// Elementwise map, keeping the shape.
    template <typename F>
    Ensemble map(F&& f) const {
        Ensemble out = *this;
        for (double& v : out.values_) v = f(v);
        out.validate_finite();
        return out;
    }

    /// a*this + b*other elementwise.
    Ensemble combine(double a, const Ensemble& other, double b) const {
        require(same_shape(other), "Ensemble::combine: shape mismatch");
        Ensemble out = *this;
        for (std::size_t i = 0; i < values_.size(); ++i)
            out.values_[i] = a * values_[i] + b * other.values_[i];
        out.validate_finite();
        return out;
    }

    Ensemble operator-(const Ensemble& o) const { return combine(1.0, o, -1.0); }
    Ensemble operator+(const Ensemble& o) const { return combine(1.0, o, 1.0); }

    void validate_finite() const {
        for (std::size_t i = 0; i < values_.size(); ++i) {
            if (!std::isfinite(values_[i])) {
                throw NonFiniteError("Ensemble: non-finite value at flat index " + std::to_string(i));
            }
        }
    }

private:
    Ensemble(EnsembleKind kind, std::size_t scenarios, std::size_t paths, std::size_t nodes,
             std::size_t dim, std::optional<TimeGrid> grid, double fill)
        : kind_(kind), scenarios_(scenarios), paths_(paths), nodes_(nodes), dim_(dim),
          grid_(std::move(grid)) {
        require(scenarios > 0 && paths > 0, "Ensemble: scenarios and paths must be positive");
        require(dim > 0, "Ensemble: dimension must be positive");
        require(std::isfinite(fill), "Ensemble: fill value must be finite");
        values_.assign(scenarios * paths * nodes * dim, fill);
    }

    std::size_t offset(std::size_t s, std::size_t p, std::size_t k, std::size_t c) const noexcept {
        return ((s * paths_ + p) * nodes_ + k) * dim_ + c;
    }

    EnsembleKind kind_ = EnsembleKind::RandomVariable;
    std::size_t scenarios_ = 0;
    std::size_t paths_ = 0;
    std::size_t nodes_ = 0;
    std::size_t dim_ = 0;
    std::optional<TimeGrid> grid_;
    std::vector<double> values_;
};

inline double euclidean_norm(std::span<const double> v) noexcept {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return std::sqrt(acc);
}

inline double squared_norm(std::span<const double> v) noexcept {
    double acc = 0.0;
    for (double x : v) acc += x * x;
    return acc;
}

}  // namespace gsde
