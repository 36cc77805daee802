#pragma once

#include <array>
#include <bit>
#include <cstdint>
#include <cstring>
#include <fstream>
#include <span>
#include <string>
#include <vector>

#include "gsde/ensemble.hpp"
#include "gsde/error.hpp"
#include "gsde/parallel.hpp"
#include "gsde/random.hpp"
#include "gsde/uncertainty.hpp"

namespace gsde {

/// Coordinate process B under every scenario measure plus its analytic
/// quadratic covariation tensor QV[s, k] = sum_{j<k} sigma_j sigma_j^T dt.
struct GBMBundle {
    Ensemble B;               // (S, P, m+1, n)
    std::vector<double> qv;   // (S, m+1, n, n)
    ControlLattice lattice;
    std::uint64_t seed = 0;

    std::size_t n() const noexcept { return B.dim(); }
    std::size_t scenarios() const noexcept { return B.scenarios(); }
    std::size_t paths() const noexcept { return B.paths(); }
    const TimeGrid& grid() const { return lattice.grid; }

    double qv_at(std::size_t s, std::size_t k, std::size_t i, std::size_t j) const noexcept {
        const std::size_t nn = n();
        return qv[((s * B.nodes() + k) * nn + i) * nn + j];
    }

    /// a^T QV[s, k] b.
    double qv_form(std::size_t s, std::size_t k, std::span<const double> a, std::span<const double> b) const noexcept {
        double acc = 0.0;
        for (std::size_t i = 0; i < n(); ++i)
            for (std::size_t j = 0; j < n(); ++j) acc += a[i] * qv_at(s, k, i, j) * b[j];
        return acc;
    }

    /// B^a = a^T B at (s, p, k).
    double projected(std::size_t s, std::size_t p, std::size_t k, std::span<const double> a) const noexcept {
        double acc = 0.0;
        const auto x = B.state(s, p, k);
        for (std::size_t i = 0; i < x.size(); ++i) acc += a[i] * x[i];
        return acc;
    }
};

/// Euler simulation of B = theta . W under each open-loop control.
/// Gaussian increments come from the counter stream keyed by
/// (seed, scenario, path, step), so output does not depend on threads.
inline GBMBundle simulate(const ControlLattice& lattice, std::size_t paths, std::size_t n, std::uint64_t seed) {
    require(paths >= 1, "simulate: paths must be positive");
    require(lattice.grid.steps() >= 1, "simulate: grid must have steps");
    require(n == lattice.set.dimension(), "simulate: dimension does not match the uncertainty set");
    require(lattice.scenarios() >= 1, "simulate: lattice has no scenarios");
    const TimeGrid& grid = lattice.grid;
    const std::size_t S = lattice.scenarios();
    const std::size_t m = grid.steps();
    const double dt = grid.dt();
    const double sqdt = std::sqrt(dt);

    GBMBundle bundle{Ensemble::process(S, paths, grid, n), std::vector<double>(S * (m + 1) * n * n, 0.0),
                     lattice, seed};

    for (std::size_t s = 0; s < S; ++s) {
        for (std::size_t k = 0; k < m; ++k) {
            const Matrix& sig = lattice.sigma(s, k);
            const Matrix inc = sig * sig.transpose() * dt;
            for (std::size_t i = 0; i < n; ++i)
                for (std::size_t j = 0; j < n; ++j) {
                    const std::size_t base = (s * (m + 1) + k) * n * n + i * n + j;
                    bundle.qv[base + n * n] = bundle.qv[base] + inc(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j));
                }
        }
    }

    Ensemble& B = bundle.B;
    parallel_for(S * paths, [&](std::size_t idx) {
        const std::size_t s = idx / paths;
        const std::size_t p = idx % paths;
        std::vector<double> dw(n);
        for (std::size_t k = 0; k < m; ++k) {
            CounterStream stream(seed, static_cast<std::uint32_t>(s), static_cast<std::uint32_t>(p),
                                 static_cast<std::uint32_t>(k));
            for (auto& w : dw) w = sqdt * stream.normal();
            const Matrix& sig = lattice.sigma(s, k);
            for (std::size_t i = 0; i < n; ++i) {
                double db = 0.0;
                for (std::size_t j = 0; j < n; ++j) db += sig(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) * dw[j];
                B.at(s, p, k + 1, i) = B.at(s, p, k, i) + db;
            }
        }
    });
    return bundle;
}

/// Pathwise (B^a_t)^2 - 2 sum_{u_j < t} B^a_{u_j} (B^a_{u_{j+1}} - B^a_{u_j}).
/// Validation surface only; the engine uses the analytic tensor.
inline Ensemble empirical_qv(const GBMBundle& bundle, std::span<const double> a) {
    require(a.size() == bundle.n(), "empirical_qv: direction length must equal n");
    const std::size_t S = bundle.scenarios();
    const std::size_t P = bundle.paths();
    const std::size_t nodes = bundle.B.nodes();
    Ensemble out = Ensemble::process(S, P, bundle.grid());
    for (std::size_t s = 0; s < S; ++s)
        for (std::size_t p = 0; p < P; ++p) {
            double ito = 0.0;
            for (std::size_t k = 0; k < nodes; ++k) {
                const double x = bundle.projected(s, p, k, a);
                out.at(s, p, k) = x * x - 2.0 * ito;
                if (k + 1 < nodes) ito += x * (bundle.projected(s, p, k + 1, a) - x);
            }
        }
    return out;
}

// Binary bundle dump: magic, version, grid, seed, then arrays each written
// as (rank:u64, dims:u64[rank], row-major little-endian f64 data).
namespace detail {
inline constexpr std::array<char, 8> kBundleMagic{'G', 'S', 'D', 'E', 'B', 'N', 'D', 'L'};
inline constexpr std::uint64_t kBundleVersion = 1;

static_assert(std::endian::native == std::endian::little, "bundle dump assumes a little-endian host");

template <typename T>
void put(std::ostream& os, T v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}
template <typename T>
T get(std::istream& is) {
    T v{};
    is.read(reinterpret_cast<char*>(&v), sizeof(T));
    if (!is) throw ContractViolation("bundle file truncated");
    return v;
}

inline void put_array(std::ostream& os, const std::vector<std::uint64_t>& dims, std::span<const double> data) {
    put<std::uint64_t>(os, dims.size());
    for (auto d : dims) put<std::uint64_t>(os, d);
    os.write(reinterpret_cast<const char*>(data.data()), static_cast<std::streamsize>(data.size() * sizeof(double)));
}

inline std::vector<double> get_array(std::istream& is, std::vector<std::uint64_t>& dims) {
    const auto rank = get<std::uint64_t>(is);
    if (rank > 8) throw ContractViolation("bundle file: bad array rank");
    dims.resize(rank);
    std::uint64_t count = 1;
    for (auto& d : dims) {
        d = get<std::uint64_t>(is);
        count *= d;
    }
    if (count > (std::uint64_t{1} << 34)) throw ContractViolation("bundle file: array too large");
    std::vector<double> data(count);
    is.read(reinterpret_cast<char*>(data.data()), static_cast<std::streamsize>(count * sizeof(double)));
    if (!is) throw ContractViolation("bundle file truncated");
    return data;
}
}  // namespace detail

inline void write_bundle(std::ostream& os, const GBMBundle& b) {
    using detail::put;
    os.write(detail::kBundleMagic.data(), detail::kBundleMagic.size());
    put<std::uint64_t>(os, detail::kBundleVersion);
    put<double>(os, b.grid().t_start());
    put<double>(os, b.grid().t_end());
    put<std::uint64_t>(os, b.grid().steps());
    put<std::uint64_t>(os, b.seed);

    const std::size_t n = b.n();
    const std::size_t G = b.lattice.set.size();
    std::vector<double> gens;
    for (const auto& g : b.lattice.set.generators())
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) gens.push_back(g(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)));
    detail::put_array(os, {G, n, n}, gens);

    std::vector<double> ctl;
    for (const auto& seq : b.lattice.controls)
        for (auto c : seq) ctl.push_back(static_cast<double>(c));
    detail::put_array(os, {b.lattice.scenarios(), b.grid().steps()}, ctl);

    detail::put_array(os, {b.scenarios(), b.paths(), b.B.nodes(), n}, b.B.values());
    detail::put_array(os, {b.scenarios(), b.B.nodes(), n, n}, b.qv);
}

/// Restores a dumped bundle. The lattice is rebuilt as a FiniteSet with
/// the stored generators, so the original set kind is not preserved.
inline GBMBundle read_bundle(std::istream& is) {
    using detail::get;
    std::array<char, 8> magic{};
    is.read(magic.data(), magic.size());
    if (!is || magic != detail::kBundleMagic) throw ContractViolation("not a bundle file");
    if (get<std::uint64_t>(is) != detail::kBundleVersion) throw ContractViolation("unsupported bundle version");
    const double t0 = get<double>(is);
    const double t1 = get<double>(is);
    const auto steps = get<std::uint64_t>(is);
    const auto seed = get<std::uint64_t>(is);
    const TimeGrid grid(t0, t1, steps);

    std::vector<std::uint64_t> dims;
    const auto gens = detail::get_array(is, dims);
    require(dims.size() == 3 && dims[1] == dims[2], "bundle file: bad generator block");
    const std::size_t n = dims[1];
    std::vector<Matrix> mats;
    for (std::size_t g = 0; g < dims[0]; ++g) {
        Matrix m(n, n);
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) m(static_cast<Eigen::Index>(i), static_cast<Eigen::Index>(j)) = gens[(g * n + i) * n + j];
        mats.push_back(m);
    }
    auto set = UncertaintySet::finite(std::move(mats));

    const auto ctl = detail::get_array(is, dims);
    require(dims.size() == 2 && dims[1] == steps, "bundle file: bad control block");
    std::vector<std::vector<std::uint32_t>> controls(dims[0], std::vector<std::uint32_t>(steps));
    for (std::size_t s = 0; s < dims[0]; ++s)
        for (std::size_t k = 0; k < steps; ++k) {
            const double c = ctl[s * steps + k];
            require(c >= 0 && c < static_cast<double>(set.size()), "bundle file: control index out of range");
            controls[s][k] = static_cast<std::uint32_t>(c);
        }
    const std::size_t S = dims[0];

    auto bvals = detail::get_array(is, dims);
    require(dims.size() == 4 && dims[0] == S && dims[2] == steps + 1 && dims[3] == n, "bundle file: bad path block");
    const std::size_t P = dims[1];
    auto qv = detail::get_array(is, dims);
    require(dims.size() == 4 && dims[0] == S && dims[1] == steps + 1, "bundle file: bad covariation block");

    ControlLattice lattice{grid, std::move(set), std::move(controls), strategy::ConstantVertices{}};
    return GBMBundle{Ensemble::process(S, P, grid, n, std::move(bvals)), std::move(qv), std::move(lattice), seed};
}

}  // namespace gsde
