#include "rabi/position.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <optional>
#include <stdexcept>
#include <string>

#include "rabi/error.hpp"
#include "rabi/parity.hpp"

namespace rabi {

PositionGrid::PositionGrid(double xi_max, double step) : step_(step) {
    if (!std::isfinite(xi_max) || !std::isfinite(step) || !(step > 0.0) || !(xi_max > 0.0))
        throw std::invalid_argument("position grid needs finite xi_max > 0 and step > 0");
    const auto half = static_cast<long long>(std::llround(xi_max / step));
    if (half < 1) throw std::invalid_argument("position grid step exceeds xi_max");
    points_.resize(static_cast<std::size_t>(2 * half + 1));
    for (long long i = -half; i <= half; ++i) points_[static_cast<std::size_t>(i + half)] = static_cast<double>(i) * step;
}

PositionGrid PositionGrid::for_coupling(double g) { return PositionGrid(std::max(10.0, 4.0 * g + 8.0), 0.02); }

HermiteBasis::HermiteBasis(const PositionGrid& grid, std::size_t n_max)
    : n_max_(n_max), points_(grid.size()), step_(grid.step()) {
    if (n_max < 1) throw std::invalid_argument("hermite basis needs n_max >= 1");
    if (n_max > 100 && grid.step() > 0.1)
        throw GridError("grid step " + std::to_string(grid.step()) + " too coarse for n_max = " + std::to_string(n_max) +
                        " (must be <= 0.1)");
    values_.assign((n_max + 1) * points_, 0.0);

    // Recurrence on the polynomial part with the Gaussian kept as a separate
    // log-scale; rescaling by 2^-500 whenever it grows keeps every step finite.
    const double phi0 = std::pow(std::numbers::pi, -0.25);
    constexpr double kBig = 0x1.0p500;
    const double log_big = 500.0 * std::numbers::ln2;
    for (std::size_t i = 0; i < points_; ++i) {
        const double xi = grid.points()[i];
        double log_scale = -0.5 * xi * xi;
        double factor = std::exp(log_scale);
        double prev = 0.0;
        double cur = phi0;
        values_[i] = cur * factor;
        for (std::size_t n = 0; n < n_max; ++n) {
            const double next = std::sqrt(2.0 / static_cast<double>(n + 1)) * xi * cur -
                                std::sqrt(static_cast<double>(n) / static_cast<double>(n + 1)) * prev;
            prev = cur;
            cur = next;
            if (std::abs(cur) > kBig) {
                cur /= kBig;
                prev /= kBig;
                log_scale += log_big;
                factor = std::exp(log_scale);
            }
            values_[(n + 1) * points_ + i] = cur * factor;
        }
    }
}

TwoComponentWavefunction position_wavefunction(std::span<const double> state, const PositionGrid& grid,
                                               const Truncation& trunc, SpinBasis basis, const HermiteBasis* shared) {
    trunc.validate();
    if (state.size() != trunc.dim()) throw std::invalid_argument("state size does not match truncation");
    double norm2 = 0.0;
    for (double c : state) norm2 += c * c;
    if (!(std::abs(std::sqrt(norm2) - 1.0) <= kNormTolerance))
        throw std::invalid_argument("state is not normalized");

    std::size_t last = 0;  // highest Fock number with support
    for (std::size_t i = 0; i < state.size(); ++i)
        if (state[i] != 0.0) last = basis::fock(i);

    std::optional<HermiteBasis> local;
    if (!shared) local.emplace(grid, std::max<std::size_t>(last, 1));
    const HermiteBasis& phi = shared ? *shared : *local;
    if (phi.points() != grid.size() || phi.step() != grid.step())
        throw std::invalid_argument("shared hermite basis was built on a different grid");
    if (phi.n_max() < last) throw std::invalid_argument("shared hermite basis has too few functions");

    TwoComponentWavefunction wf;
    wf.basis = SpinBasis::sigma_x;
    wf.xi.assign(grid.points().begin(), grid.points().end());
    wf.first.assign(grid.size(), 0.0);
    wf.second.assign(grid.size(), 0.0);
    for (std::size_t n = 0; n <= last; ++n) {
        const double cp = state[basis::index(n, +1)];
        const double cm = state[basis::index(n, -1)];
        if (cp == 0.0 && cm == 0.0) continue;
        const auto f = phi.function(n);
        for (std::size_t i = 0; i < grid.size(); ++i) {
            wf.first[i] += cp * f[i];
            wf.second[i] += cm * f[i];
        }
    }

    const std::size_t end = grid.size() - 1;
    const double edge = std::max({std::abs(wf.first[0]), std::abs(wf.first[end]), std::abs(wf.second[0]),
                                  std::abs(wf.second[end])});
    if (!(edge < kBoundaryAmplitude))
        throw GridError("wavefunction amplitude " + std::to_string(edge) + " at xi = +-" + std::to_string(grid.xi_max()) +
                        " exceeds the boundary bound; enlarge the grid");

    if (basis == SpinBasis::sigma_z) {
        // |+-> = (|up> +- |down>)/sqrt(2)
        const double r = std::numbers::sqrt2 / 2.0;
        for (std::size_t i = 0; i < grid.size(); ++i) {
            const double p = wf.first[i], m = wf.second[i];
            wf.first[i] = r * (p + m);
            wf.second[i] = r * (p - m);
        }
        wf.basis = SpinBasis::sigma_z;
    }
    return wf;
}

double trapezoid(std::span<const double> f, double step) {
    if (f.size() < 2) return 0.0;
    double s = 0.5 * (f.front() + f.back());
    for (std::size_t i = 1; i + 1 < f.size(); ++i) s += f[i];
    return s * step;
}

namespace {

double uniform_step(const TwoComponentWavefunction& wf) {
    const std::size_t n = wf.xi.size();
    if (n < 3 || wf.first.size() != n || wf.second.size() != n)
        throw std::invalid_argument("wavefunction arrays are inconsistent");
    const double h = wf.xi[1] - wf.xi[0];
    if (!(h > 0.0)) throw std::invalid_argument("wavefunction grid must be increasing");
    for (std::size_t i = 1; i < n; ++i)
        if (std::abs((wf.xi[i] - wf.xi[i - 1]) - h) > 1e-9 * h)
            throw std::invalid_argument("wavefunction grid must be uniform");
    return h;
}

}  // namespace

double quadrature_norm(const TwoComponentWavefunction& wf) {
    const double h = uniform_step(wf);
    std::vector<double> dens(wf.xi.size());
    for (std::size_t i = 0; i < dens.size(); ++i) dens[i] = wf.first[i] * wf.first[i] + wf.second[i] * wf.second[i];
    return trapezoid(dens, h);
}

double symmetry_defect(const TwoComponentWavefunction& wf) {
    const double h = uniform_step(wf);
    const std::size_t n = wf.xi.size();
    for (std::size_t i = 0; i < n; ++i) {
        const double a = wf.xi[i], b = wf.xi[n - 1 - i];
        if (std::abs(a + b) > 1e-9 * std::max(1.0, std::abs(a)))
            throw std::invalid_argument("symmetry defect needs a grid symmetric about xi = 0");
    }
    std::vector<double> overlap(n), dens(n);
    for (std::size_t i = 0; i < n; ++i) {
        const std::size_t m = n - 1 - i;
        if (wf.basis == SpinBasis::sigma_x)
            overlap[i] = wf.first[i] * wf.first[m] - wf.second[i] * wf.second[m];
        else
            overlap[i] = wf.first[i] * wf.second[m] + wf.second[i] * wf.first[m];
        dens[i] = wf.first[i] * wf.first[i] + wf.second[i] * wf.second[i];
    }
    const double norm = trapezoid(dens, h);
    if (!(norm > 0.0)) throw std::invalid_argument("wavefunction has zero norm");
    return std::clamp(1.0 - std::abs(trapezoid(overlap, h) / norm), 0.0, 1.0);
}

}  // namespace rabi
