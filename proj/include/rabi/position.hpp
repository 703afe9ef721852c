// position.hpp - eigenstates in the position representation
//
// xi is the dimensionless oscillator coordinate, a = (xi + d/dxi)/sqrt(2).
// phi_n(xi) are the normalized oscillator eigenfunctions.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

#include "rabi/model.hpp"

namespace rabi {

/// Uniform grid xi_i = i * step, i = -m..m. Symmetric about 0 by construction.
class PositionGrid {
public:
    PositionGrid(double xi_max, double step);

    /// max(10, 4g + 8) with step 0.02; superradiant states sit near +-sqrt(2) g.
    static PositionGrid for_coupling(double g);

    std::span<const double> points() const { return points_; }
    std::size_t size() const { return points_.size(); }
    double step() const { return step_; }
    double xi_max() const { return points_.back(); }

private:
    double step_;
    std::vector<double> points_;
};

/// phi_0 .. phi_{n_max} sampled on a grid, one contiguous row per n.
class HermiteBasis {
public:
    HermiteBasis(const PositionGrid& grid, std::size_t n_max);

    std::size_t n_max() const { return n_max_; }
    std::size_t points() const { return points_; }
    double step() const { return step_; }
    std::span<const double> function(std::size_t n) const { return {values_.data() + n * points_, points_}; }

private:
    std::size_t n_max_;
    std::size_t points_;
    double step_;
    std::vector<double> values_;
};

inline HermiteBasis hermite_basis(const PositionGrid& grid, std::size_t n_max) { return HermiteBasis(grid, n_max); }

enum class SpinBasis { sigma_x, sigma_z };

/// Two spin components on a grid: (psi_plus, psi_minus) in the sigma_x
/// basis, (psi_up, psi_down) in the sigma_z basis.
struct TwoComponentWavefunction {
    SpinBasis basis{SpinBasis::sigma_x};
    std::vector<double> xi;
    std::vector<double> first;
    std::vector<double> second;
};

/// Largest |psi| allowed at the grid edges.
inline constexpr double kBoundaryAmplitude = 1e-8;

/// psi_s(xi) = sum_n c_{n,s} phi_n(xi). Throws GridError if the grid edge
/// still carries amplitude >= kBoundaryAmplitude. A prebuilt basis on the
/// same grid may be passed to share it between states.
TwoComponentWavefunction position_wavefunction(std::span<const double> state, const PositionGrid& grid,
                                               const Truncation& trunc, SpinBasis basis = SpinBasis::sigma_x,
                                               const HermiteBasis* shared = nullptr);

double trapezoid(std::span<const double> f, double step);

/// Sum over both components of |psi|^2, trapezoid rule.
double quadrature_norm(const TwoComponentWavefunction& wf);

/// 1 - |<psi|R|psi>| / <psi|psi>, R = xi -> -xi combined with the spin part
/// of the parity (sign s in the sigma_x basis, up <-> down in sigma_z).
double symmetry_defect(const TwoComponentWavefunction& wf);

}  // namespace rabi
