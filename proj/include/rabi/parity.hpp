// parity.hpp - parity expectations, level pairs and Fock-space populations

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <vector>

#include "rabi/eigensolve.hpp"
#include "rabi/model.hpp"

namespace rabi {

/// Default irregularity threshold: a pair is irregular once either member
/// has |<P>| < 1 - eps_par.
inline constexpr double kDefaultEpsPar = 0.1;

/// Tolerance on ||state||_2 - 1 accepted by the state-level functions.
inline constexpr double kNormTolerance = 1e-10;

/// <P> = sum_{n,s} s (-1)^n |c_{n,s}|^2 for a full-basis state.
double parity_expectation(std::span<const double> state, const Truncation& trunc);

/// <u|P|v> for two full-basis vectors.
double parity_matrix_element(std::span<const double> u, std::span<const double> v);

struct FockPopulations {
    double p_even{0.0};
    double p_odd{0.0};
    std::vector<double> photon;  // P(n) = sum_s |c_{n,s}|^2
    // spin-resolved parts: [0] for s = +1, [1] for s = -1
    double p_even_spin[2]{0.0, 0.0};
    double p_odd_spin[2]{0.0, 0.0};
};

FockPopulations fock_populations(std::span<const double> state, const Truncation& trunc);

/// Population in Fock states n >= ceil(0.9 * n_trunc).
double tail_population(std::span<const double> state, const Truncation& trunc);

/// Truncation is trusted when every retained state keeps its tail
/// population below this bound.
inline constexpr double kSentinelTail = 1e-12;

/// Tail check over all eigenvectors of a full-basis spectrum.
bool tail_populations_pass(const Spectrum& spectrum, const Truncation& trunc);

struct StateParity {
    std::size_t level{0};
    double energy{0.0};
    double energy_shifted{0.0};
    double parity{0.0};
    double p_even{0.0};
    double p_odd{0.0};
};

struct PairEntry {
    std::size_t pair_index{0};
    double gap_raw{0.0};          // E_{2k+1} - E_{2k}
    double gap_shifted{0.0};      // same, on g^2-shifted energies
    double parity_sum{0.0};       // <P>_{2k} + <P>_{2k+1}
    double subspace_trace{0.0};   // trace of P on span{v_2k, v_2k+1}
    bool regular{true};
    bool degenerate{false};       // gap below the solver degeneracy tolerance
};

struct ParityReport {
    double eps_par{kDefaultEpsPar};
    std::vector<StateParity> states;
    std::vector<PairEntry> pairs;
};

/// Pairs (2k, 2k+1) of consecutive sorted levels, k = 0 .. floor(count/2) - 1.
ParityReport pair_report(const Spectrum& spectrum, const ModelParams& params, const Truncation& trunc,
                         double eps_par = kDefaultEpsPar);

/// Regularity rule for one pair.
inline bool pair_is_regular(double parity_a, double parity_b, double eps_par) {
    return std::min(std::abs(parity_a), std::abs(parity_b)) >= 1.0 - eps_par;
}

struct OnsetResult {
    std::optional<double> g;          // smallest irregular grid coupling
    std::optional<std::size_t> index; // its grid index
    double resolution{0.0};           // max spacing of the grid
    std::size_t excluded_points{0};   // points skipped by the convergence sentinel
};

/// Onset from precomputed per-point parities of one pair. `usable[i]` false
/// marks a point excluded from the search.
OnsetResult first_irregular(std::span<const double> g_grid, std::span<const double> parity_a,
                            std::span<const double> parity_b, const std::vector<bool>& usable, double eps_par);

struct OnsetOptions {
    Truncation trunc{1000};
    unsigned threads{0};  // 0 = hardware concurrency, capped by RABI_LAB_THREADS
};

/// Scans `g_grid` with full-matrix solves and returns the first coupling at
/// which pair `pair_k` turns irregular under the eps_par rule.
OnsetResult onset_coupling(double delta, std::size_t pair_k, std::span<const double> g_grid, double eps_par,
                           const OnsetOptions& opts = {});

/// Throws unless the grid is non-empty and strictly increasing.
void validate_grid(std::span<const double> grid, const char* what);

void validate_eps_par(double eps_par);

}  // namespace rabi
