#pragma once

#include <cmath>
#include <cstddef>
#include <string>

#include "gsde/error.hpp"

namespace gsde {

/// Uniform grid t_start = u_0 < u_1 < ... < u_steps = t_end.
class TimeGrid {
public:
    TimeGrid(double t_start, double t_end, std::size_t steps)
        : t_start_(t_start), t_end_(t_end), steps_(steps) {
        require(steps > 0, "TimeGrid: steps must be positive");
        require(std::isfinite(t_start) && std::isfinite(t_end),
                "TimeGrid: endpoints must be finite");
        require(t_end > t_start, "TimeGrid: t_end must exceed t_start");
    }

    double t_start() const noexcept { return t_start_; }
    double t_end() const noexcept { return t_end_; }
    std::size_t steps() const noexcept { return steps_; }
    std::size_t node_count() const noexcept { return steps_ + 1; }
    double dt() const noexcept { return (t_end_ - t_start_) / static_cast<double>(steps_); }
    double horizon() const noexcept { return t_end_ - t_start_; }

    double node(std::size_t k) const noexcept {
        if (k == steps_) return t_end_;
        return t_start_ + static_cast<double>(k) * dt();
    }

    /// Index of the node at time t; throws when t is not a grid node.
    std::size_t index_of(double t) const {
        const double x = (t - t_start_) / dt();
        const double k = std::round(x);
        if (std::abs(x - k) > 1e-9 * std::max(1.0, std::abs(x)) || k < 0.0 ||
            k > static_cast<double>(steps_)) {
            throw ContractViolation("time " + std::to_string(t) + " is not a grid node");
        }
        return static_cast<std::size_t>(k);
    }

    friend bool operator==(const TimeGrid& a, const TimeGrid& b) noexcept {
        return a.t_start_ == b.t_start_ && a.t_end_ == b.t_end_ && a.steps_ == b.steps_;
    }

private:
    double t_start_;
    double t_end_;
    std::size_t steps_;
};

/// Closed time window [start, end] whose endpoints lie on a grid.
struct Window {
    double start;
    double end;
};

struct NodeRange {
    std::size_t first;
    std::size_t last;  // inclusive
};

inline NodeRange resolve(const TimeGrid& grid, const Window& w) {
    const NodeRange r{grid.index_of(w.start), grid.index_of(w.end)};
    require(r.first <= r.last, "window start must not exceed window end");
    return r;
}

inline Window full_window(const TimeGrid& grid) { return {grid.t_start(), grid.t_end()}; }

}  // namespace gsde
