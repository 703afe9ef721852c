#include "rabi/model.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

namespace rabi {

void ModelParams::validate() const {
    if (!std::isfinite(delta) || !std::isfinite(g))
        throw std::invalid_argument("model parameters must be finite");
    if (delta < 0.0) throw std::invalid_argument("delta must be >= 0, got " + std::to_string(delta));
    if (g < 0.0) throw std::invalid_argument("g must be >= 0, got " + std::to_string(g));
}

void Truncation::validate() const {
    if (n_trunc < 2)
        throw std::invalid_argument("n_trunc must be >= 2, got " + std::to_string(n_trunc));
}

SymmetricMatrix::SymmetricMatrix(std::size_t dim) : dim_(dim), data_(dim * dim, 0.0) {}

SymmetricMatrix SymmetricMatrix::from_rows(std::size_t dim, std::span<const double> row_major) {
    if (row_major.size() != dim * dim)
        throw std::invalid_argument("matrix data size does not match dimension");
    for (std::size_t i = 0; i < dim; ++i) {
        for (std::size_t j = 0; j < dim; ++j) {
            double a = row_major[i * dim + j];
            if (!std::isfinite(a))
                throw std::invalid_argument("non-finite matrix entry at (" + std::to_string(i) + "," +
                                            std::to_string(j) + ")");
            if (j > i && a != row_major[j * dim + i])
                throw std::invalid_argument("matrix is not symmetric at (" + std::to_string(i) + "," +
                                            std::to_string(j) + ")");
        }
    }
    SymmetricMatrix m(dim);
    std::copy(row_major.begin(), row_major.end(), m.data_.begin());
    return m;
}

void SymmetricMatrix::set(std::size_t i, std::size_t j, double value) {
    data_[i * dim_ + j] = value;
    data_[j * dim_ + i] = value;
}

double SymmetricMatrix::max_abs() const {
    double m = 0.0;
    for (double a : data_) m = std::max(m, std::abs(a));
    return m;
}

std::size_t SymmetricMatrix::half_bandwidth() const {
    std::size_t b = 0;
    for (std::size_t i = 0; i < dim_; ++i)
        for (std::size_t j = i + b + 1; j < dim_; ++j)
            if (data_[i * dim_ + j] != 0.0) b = j - i;
    return b;
}

void Tridiagonal::validate() const {
    if (diag.empty()) throw std::invalid_argument("tridiagonal matrix is empty");
    if (offdiag.size() + 1 != diag.size())
        throw std::invalid_argument("offdiag must have exactly len(diag) - 1 entries");
    for (double a : diag)
        if (!std::isfinite(a)) throw std::invalid_argument("non-finite diagonal entry");
    for (double a : offdiag)
        if (!std::isfinite(a)) throw std::invalid_argument("non-finite off-diagonal entry");
}

double Tridiagonal::max_abs() const {
    double m = 0.0;
    for (double a : diag) m = std::max(m, std::abs(a));
    for (double a : offdiag) m = std::max(m, std::abs(a));
    return m;
}

SymmetricMatrix build_hamiltonian(const ModelParams& params, const Truncation& trunc) {
    params.validate();
    trunc.validate();
    const std::size_t n_max = trunc.n_trunc;
    SymmetricMatrix h(trunc.dim());
    for (std::size_t n = 0; n < n_max; ++n) {
        for (int s : {+1, -1}) {
            const std::size_t i = basis::index(n, s);
            h.set(i, i, static_cast<double>(n) + s * 0.5 * params.delta);
            // sigma_z flips s, (a + a^dag) moves n -> n+1 with amplitude sqrt(n+1)
            if (n + 1 < n_max && params.g != 0.0)
                h.set(i, basis::index(n + 1, -s), params.g * std::sqrt(static_cast<double>(n + 1)));
        }
    }
    return h;
}

SymmetricMatrix build_parity(const Truncation& trunc) {
    trunc.validate();
    SymmetricMatrix p(trunc.dim());
    for (std::size_t i = 0; i < trunc.dim(); ++i) p.set(i, i, basis::parity(i));
    return p;
}

Tridiagonal sector_hamiltonian(const ModelParams& params, const Truncation& trunc, int parity) {
    params.validate();
    trunc.validate();
    if (parity != 1 && parity != -1)
        throw std::invalid_argument("parity sector must be +1 or -1, got " + std::to_string(parity));
    Tridiagonal t;
    t.diag.resize(trunc.n_trunc);
    t.offdiag.resize(trunc.n_trunc - 1);
    for (std::size_t n = 0; n < trunc.n_trunc; ++n) {
        t.diag[n] = static_cast<double>(n) + basis::sector_spin(n, parity) * 0.5 * params.delta;
        if (n + 1 < trunc.n_trunc) t.offdiag[n] = params.g * std::sqrt(static_cast<double>(n + 1));
    }
    return t;
}

double critical_coupling(double delta) {
    if (!std::isfinite(delta) || delta < 0.0)
        throw std::invalid_argument("critical_coupling needs a finite delta >= 0");
    return std::sqrt(1.0 + std::sqrt(1.0 + delta * delta / 16.0));
}

}  // namespace rabi
