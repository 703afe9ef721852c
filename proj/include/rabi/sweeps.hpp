// sweeps.hpp - parameter scans over coupling, truncation and delta

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "rabi/eigensolve.hpp"
#include "rabi/model.hpp"
#include "rabi/parity.hpp"

namespace rabi {

/// Inclusive grid start, start + step, ..., stop. Values are start + i*step
/// (no accumulation), with i running to round((stop - start) / step).
std::vector<double> make_grid(double start, double stop, double step);

struct SweepOptions {
    unsigned threads{0};
    double eps_par{kDefaultEpsPar};
    SolverPath path{SolverPath::dense};
    bool rayleigh_refine{false};
};

struct CouplingPoint {
    double g{0.0};
    double g_over_gc{0.0};
    ParityReport report;
    std::vector<double> residuals;
    bool sentinel{true};
};

struct CouplingSweep {
    double delta{0.0};
    Truncation trunc;
    std::size_t n_levels{0};
    SweepOptions options;
    std::vector<CouplingPoint> points;  // grid order
    /// Sentinel failed at the largest coupling of the grid.
    bool truncation_inadequate{false};
    double wall_seconds{0.0};

    std::size_t failed_points() const;
};

/// Lowest n_levels (even) at every g of an increasing grid.
CouplingSweep coupling_sweep(double delta, std::span<const double> g_grid, std::size_t n_levels,
                             const Truncation& trunc, const SweepOptions& opts = {});

struct ConvergencePoint {
    double g{0.0};
    double g_over_gc{0.0};
    std::vector<double> reference;                 // E_i(N_ref)
    std::vector<std::vector<double>> energies;     // [trunc][level]
    std::vector<std::vector<double>> differences;  // |E_i(N) - E_i(N_ref)|
};

struct ConvergenceSweep {
    double delta{0.0};
    std::vector<std::size_t> truncations;
    std::size_t reference_trunc{0};
    std::size_t n_levels{0};
    std::vector<ConvergencePoint> points;
};

/// Energies from the parity-sector path for each truncation against a
/// larger reference truncation.
ConvergenceSweep convergence_sweep(double delta, std::span<const double> g_grid,
                                   std::span<const std::size_t> truncations, std::size_t reference_trunc,
                                   std::size_t n_levels, unsigned threads = 0);

/// True when |E_level(N)-E_level(N_ref)| is non-increasing along the
/// (ascending) truncation list at every point, allowing `floor` of slack for
/// differences that sit at roundoff.
bool differences_monotone(const ConvergenceSweep& sweep, std::size_t level, double floor);

struct BoundaryRow {
    double delta{0.0};
    double g_c{0.0};
    std::size_t pair{0};
    std::optional<double> onset_g_over_gc;
    double resolution{0.0};  // grid step in g/g_c
    std::size_t excluded_points{0};
    bool degenerate{false};  // pair degenerate at every usable point
};

struct PhaseBoundary {
    std::vector<double> g_over_gc;
    double eps_par{kDefaultEpsPar};
    Truncation trunc;
    std::vector<BoundaryRow> rows;  // delta-major, then pair
    static constexpr double transition_line = 1.0;  // g/g_c of the superradiant transition

    /// Pair-k onsets (in g/g_c) are non-decreasing in delta over rows with
    /// an onset; empty if fewer than two such rows exist.
    std::optional<bool> onset_monotone_in_delta(std::size_t pair) const;
};

PhaseBoundary phase_boundary_scan(std::span<const double> delta_grid, std::span<const std::size_t> pairs,
                                  std::span<const double> g_over_gc_grid, double eps_par, const Truncation& trunc,
                                  unsigned threads = 0);

struct SentinelResult {
    bool pass{true};
    double max_tail{0.0};
};

/// Tail-population check on the lowest `levels` states (sector path).
SentinelResult convergence_sentinel(const ModelParams& params, const Truncation& trunc, std::size_t levels = 8);

}  // namespace rabi
