// model.hpp - quantum Rabi Hamiltonian in a truncated Fock basis
//
// H = a^dag a + (delta/2) sigma_x + g sigma_z (a + a^dag), with the mode
// frequency set to 1. Everything is assembled in the sigma_x eigenbasis,
// where the parity P = sigma_x exp(i pi a^dag a) is diagonal.

#pragma once

#include <cstddef>
#include <span>
#include <vector>

namespace rabi {

struct ModelParams {
    double delta{0.0};  // two-level splitting
    double g{0.0};      // coupling strength

    /// Throws std::invalid_argument unless both fields are finite and >= 0.
    void validate() const;
};

struct Truncation {
    std::size_t n_trunc{2};  // Fock states |0> .. |n_trunc-1>

    void validate() const;
    std::size_t dim() const { return 2 * n_trunc; }
};

/// Basis bookkeeping. Full index = 2n + slot, slot 0 holds s = +1 and
/// slot 1 holds s = -1 (s is the sigma_x eigenvalue). Parity of a basis
/// state is s * (-1)^n, so the diagonal of P reads +,-,-,+,+,-,...
namespace basis {

inline constexpr std::size_t index(std::size_t n, int s) { return 2 * n + (s > 0 ? 0 : 1); }
inline constexpr std::size_t fock(std::size_t index) { return index / 2; }
inline constexpr int spin(std::size_t index) { return (index % 2 == 0) ? +1 : -1; }
inline constexpr int parity(std::size_t index) {
    return spin(index) * ((fock(index) % 2 == 0) ? +1 : -1);
}
/// Spin label forced inside parity sector p.
inline constexpr int sector_spin(std::size_t n, int p) { return p * ((n % 2 == 0) ? +1 : -1); }

}  // namespace basis

/// Dense real symmetric matrix. Mutation goes through set(), which writes
/// both triangles, so the stored matrix is exactly symmetric.
class SymmetricMatrix {
public:
    SymmetricMatrix() = default;
    explicit SymmetricMatrix(std::size_t dim);

    /// Builds from row-major data; throws if the data is not exactly
    /// symmetric or holds non-finite entries.
    static SymmetricMatrix from_rows(std::size_t dim, std::span<const double> row_major);

    std::size_t dim() const { return dim_; }
    double operator()(std::size_t i, std::size_t j) const { return data_[i * dim_ + j]; }
    void set(std::size_t i, std::size_t j, double value);
    void add_diagonal(std::size_t i, double value) { data_[i * dim_ + i] += value; }

    std::span<const double> row(std::size_t i) const { return {data_.data() + i * dim_, dim_}; }
    std::span<const double> data() const { return data_; }

    double max_abs() const;
    /// Largest |i - j| with a nonzero entry.
    std::size_t half_bandwidth() const;

private:
    std::size_t dim_{0};
    std::vector<double> data_;
};

/// Symmetric tridiagonal matrix as (diagonal, off-diagonal).
struct Tridiagonal {
    std::vector<double> diag;
    std::vector<double> offdiag;

    std::size_t dim() const { return diag.size(); }
    void validate() const;
    double max_abs() const;
};

SymmetricMatrix build_hamiltonian(const ModelParams& params, const Truncation& trunc);

/// Parity operator in the sigma_x basis: diag(s * (-1)^n).
SymmetricMatrix build_parity(const Truncation& trunc);

/// Restriction of H to parity sector p in {-1, +1}: a chain over n with
/// diag[n] = n + p (-1)^n delta/2 and offdiag[n] = g sqrt(n+1).
Tridiagonal sector_hamiltonian(const ModelParams& params, const Truncation& trunc, int parity);

/// g_c = sqrt(1 + sqrt(1 + delta^2/16)).
double critical_coupling(double delta);

inline double shifted_energy(double energy, const ModelParams& params) {
    return energy + params.g * params.g;
}

/// Convenience: coupling from a ratio g/g_c at the given delta.
inline ModelParams params_from_ratio(double delta, double g_over_gc) {
    return ModelParams{delta, g_over_gc * critical_coupling(delta)};
}

}  // namespace rabi
