// eigensolve.hpp - symmetric eigenproblems with residual bookkeeping
//
// Both entry points funnel into one tridiagonal kernel: Sturm-count
// bisection for the k lowest eigenvalues, then inverse iteration with
// reorthogonalization inside eigenvalue clusters. Dense input is first
// reduced to tridiagonal form by a bandwidth-aware Givens reduction
// (bulge chasing), so banded operators cost O(n^2 b) instead of O(n^3).

#pragma once

#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "rabi/model.hpp"

namespace rabi {

enum class SolverPath { dense, tridiagonal };

std::string to_string(SolverPath path);

struct EigOptions {
    bool vectors{true};
    /// Replace each eigenvalue by the Rayleigh quotient of its vector.
    bool rayleigh_refine{false};
};

struct SpectrumMeta {
    std::optional<ModelParams> params;
    std::optional<Truncation> trunc;
    std::optional<int> sector;  // set for a parity-sector solve
    SolverPath path{SolverPath::dense};
    double wall_seconds{0.0};
};

struct Spectrum {
    std::size_t dim{0};
    std::vector<double> eigenvalues;     // ascending
    std::vector<double> eigenvectors;    // column-major, dim x count
    std::vector<double> residual_norms;  // ||M v - lambda v||_2 per pair
    std::vector<bool> degenerate_next;   // |lambda_i - lambda_{i+1}| < degeneracy_tol
    double scale{1.0};                   // max(1, max |M_ij|)
    SpectrumMeta meta;

    std::size_t count() const { return eigenvalues.size(); }
    bool has_vectors() const { return !eigenvectors.empty(); }
    std::span<const double> vector(std::size_t j) const {
        return {eigenvectors.data() + j * dim, dim};
    }
};

/// Relative tolerances promised by both solve paths.
namespace tolerance {
inline constexpr double residual = 1e-11;       // times max(1, max|M|)
inline constexpr double orthogonality = 1e-10;  // Gram defect, max norm
inline constexpr double degeneracy = 1e-12;     // times scale
inline constexpr double path_agreement = 1e-11;
}  // namespace tolerance

/// k lowest eigenpairs of a dense symmetric matrix (1 <= k <= dim).
Spectrum eig_sym_dense(const SymmetricMatrix& m, std::size_t k, const EigOptions& opts = {});

/// Same, from raw row-major data; rejects non-symmetric or non-finite input.
Spectrum eig_sym_dense(std::span<const double> row_major, std::size_t dim, std::size_t k,
                       const EigOptions& opts = {});

/// k lowest eigenpairs of a symmetric tridiagonal matrix.
Spectrum eig_sym_tridiag(std::span<const double> diag, std::span<const double> offdiag, std::size_t k,
                         const EigOptions& opts = {});

inline Spectrum eig_sym_tridiag(const Tridiagonal& t, std::size_t k, const EigOptions& opts = {}) {
    return eig_sym_tridiag(t.diag, t.offdiag, k, opts);
}

struct ResidualReport {
    std::vector<double> residuals;
    double max_residual{0.0};
    double max_norm_defect{0.0};  // max |v_i . v_i - 1|
    double max_gram_defect{0.0};  // max |v_i . v_j|, i != j
    double scale{1.0};
    double residual_tol{0.0};      // absolute, = tolerance::residual * scale
    std::vector<std::size_t> flagged;  // pairs whose residual exceeds residual_tol
    bool orthonormal{true};

    bool ok() const { return flagged.empty() && orthonormal; }
};

ResidualReport residual_report(const SymmetricMatrix& m, const Spectrum& spectrum);
ResidualReport residual_report(const Tridiagonal& t, const Spectrum& spectrum);

/// Full-matrix solve of the Rabi Hamiltonian; fills meta.
Spectrum solve_full(const ModelParams& params, const Truncation& trunc, std::size_t k,
                    const EigOptions& opts = {});

/// Solve one parity sector; vectors are in the sector basis n = 0..N-1.
Spectrum solve_sector(const ModelParams& params, const Truncation& trunc, int parity, std::size_t k,
                      const EigOptions& opts = {});

/// Lift a sector eigenvector into the full 2N basis.
std::vector<double> embed_sector_vector(std::span<const double> sector_vector, int parity);

/// Lowest k levels from both sectors, merged. Vectors are embedded into the
/// full basis; `parities` receives the sector label of each level.
Spectrum solve_by_sectors(const ModelParams& params, const Truncation& trunc, std::size_t k,
                          std::vector<int>* parities = nullptr, const EigOptions& opts = {});

}  // namespace rabi
