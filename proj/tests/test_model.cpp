#include <doctest.h>

#include <cmath>
#include <numbers>
#include <stdexcept>
#include <vector>

#include "oracles.hpp"
#include "rabi/eigensolve.hpp"
#include "rabi/model.hpp"

using namespace rabi;

namespace {

double commutator_max(const SymmetricMatrix& h, const SymmetricMatrix& p) {
    // P is diagonal, so [H,P]_ij = H_ij (P_jj - P_ii)
    double m = 0.0;
    for (std::size_t i = 0; i < h.dim(); ++i)
        for (std::size_t j = 0; j < h.dim(); ++j) m = std::max(m, std::abs(h(i, j) * (p(j, j) - p(i, i))));
    return m;
}

double full_commutator_max(const SymmetricMatrix& h, const SymmetricMatrix& p) {
    const std::size_t d = h.dim();
    double m = 0.0;
    for (std::size_t i = 0; i < d; ++i)
        for (std::size_t j = 0; j < d; ++j) {
            double hp = 0.0, ph = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                hp += h(i, k) * p(k, j);
                ph += p(i, k) * h(k, j);
            }
            m = std::max(m, std::abs(hp - ph));
        }
    return m;
}

}  // namespace

TEST_SUITE("model") {

TEST_CASE("parameter validation") {
    CHECK_NOTHROW((ModelParams{0.0, 0.0}.validate()));
    CHECK_THROWS_AS((ModelParams{-1.0, 0.0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((ModelParams{1.0, -0.1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((ModelParams{NAN, 0.0}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((ModelParams{1.0, INFINITY}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((Truncation{1}.validate()), std::invalid_argument);
    CHECK_THROWS_AS((Truncation{0}.validate()), std::invalid_argument);
    CHECK_NOTHROW((Truncation{2}.validate()));
    CHECK_THROWS_AS((build_hamiltonian({1.0, 0.3}, Truncation{1})), std::invalid_argument);
}

TEST_CASE("basis ordering and parity labels") {
    CHECK(basis::index(0, +1) == 0);
    CHECK(basis::index(0, -1) == 1);
    CHECK(basis::index(3, -1) == 7);
    CHECK(basis::fock(7) == 3);
    CHECK(basis::spin(7) == -1);
    for (std::size_t n = 0; n < 6; ++n)
        for (int p : {-1, 1}) CHECK(basis::parity(basis::index(n, basis::sector_spin(n, p))) == p);
}

TEST_CASE("parity operator for two Fock states") {
    const SymmetricMatrix p = build_parity(Truncation{2});
    REQUIRE(p.dim() == 4);
    CHECK(p(0, 0) == 1.0);
    CHECK(p(1, 1) == -1.0);
    CHECK(p(2, 2) == -1.0);
    CHECK(p(3, 3) == 1.0);
    CHECK(p.half_bandwidth() == 0);
}

TEST_CASE("parity is an involution") {
    for (std::size_t n : {2u, 7u, 30u}) {
        const SymmetricMatrix p = build_parity(Truncation{n});
        for (std::size_t i = 0; i < p.dim(); ++i)
            for (std::size_t j = 0; j < p.dim(); ++j) {
                double s = 0.0;
                for (std::size_t k = 0; k < p.dim(); ++k) s += p(i, k) * p(k, j);
                CHECK(s == (i == j ? 1.0 : 0.0));
            }
    }
}

TEST_CASE("hamiltonian is exactly symmetric and commutes with parity") {
    const ModelParams params{0.5, 0.7};
    const Truncation trunc{40};
    const SymmetricMatrix h = build_hamiltonian(params, trunc);
    const SymmetricMatrix p = build_parity(trunc);
    for (std::size_t i = 0; i < h.dim(); ++i)
        for (std::size_t j = 0; j < h.dim(); ++j) CHECK(h(i, j) == h(j, i));
    const double bound = 1e-13 * h.max_abs();
    CHECK(full_commutator_max(h, p) <= bound);
    CHECK(commutator_max(h, p) <= bound);
    CHECK(h.half_bandwidth() == 3);
}

TEST_CASE("sigma_x assembly matches the rotated sigma_z assembly") {
    const double delta = 1.0, g = 0.3;
    const std::size_t n = 8;
    const auto rotated = oracle::rotate_to_sigma_x(oracle::hamiltonian_sigma_z(delta, g, n), n);
    const SymmetricMatrix h = build_hamiltonian({delta, g}, Truncation{n});
    for (std::size_t i = 0; i < h.dim(); ++i)
        for (std::size_t j = 0; j < h.dim(); ++j) CHECK(std::abs(h(i, j) - rotated[i * h.dim() + j]) <= 1e-14);

    const auto ref = oracle::jacobi(oracle::hamiltonian_sigma_z(delta, g, n), 2 * n);
    const Spectrum s = eig_sym_dense(h, 2 * n);
    for (std::size_t j = 0; j < 2 * n; ++j) CHECK(std::abs(s.eigenvalues[j] - ref.values[j]) <= 1e-12);
}

TEST_CASE("sector chain for three Fock states") {
    const double delta = 0.8, g = 0.45;
    const Tridiagonal t = sector_hamiltonian({delta, g}, Truncation{3}, +1);
    REQUIRE(t.diag.size() == 3);
    REQUIRE(t.offdiag.size() == 2);
    CHECK(t.diag[0] == delta / 2);
    CHECK(t.diag[1] == 1 - delta / 2);
    CHECK(t.diag[2] == 2 + delta / 2);
    CHECK(t.offdiag[0] == g);
    CHECK(t.offdiag[1] == g * std::sqrt(2.0));
    CHECK_THROWS_AS((sector_hamiltonian({delta, g}, Truncation{3}, 0)), std::invalid_argument);
    CHECK_THROWS_AS((sector_hamiltonian({delta, g}, Truncation{3}, 2)), std::invalid_argument);
}

TEST_CASE("sector matrices are the parity blocks of the full matrix") {
    const ModelParams params{1.3, 0.9};
    const Truncation trunc{12};
    const SymmetricMatrix h = build_hamiltonian(params, trunc);
    for (int p : {-1, 1}) {
        const Tridiagonal t = sector_hamiltonian(params, trunc, p);
        for (std::size_t n = 0; n < trunc.n_trunc; ++n) {
            const std::size_t i = basis::index(n, basis::sector_spin(n, p));
            CHECK(t.diag[n] == h(i, i));
            if (n + 1 < trunc.n_trunc) {
                const std::size_t j = basis::index(n + 1, basis::sector_spin(n + 1, p));
                CHECK(t.offdiag[n] == h(i, j));
            }
        }
    }
}

TEST_CASE("decoupled chain eigenvalues are its diagonal") {
    for (int p : {-1, 1}) {
        const Tridiagonal t = sector_hamiltonian({1.0, 0.0}, Truncation{10}, p);
        const Spectrum s = eig_sym_tridiag(t, 10);
        std::vector<double> d = t.diag;
        std::sort(d.begin(), d.end());
        for (std::size_t j = 0; j < 10; ++j) CHECK(s.eigenvalues[j] == d[j]);
    }
}

TEST_CASE("sector union equals the full spectrum") {
    const ModelParams params{1.0, 0.5};
    const Truncation trunc{200};
    const Spectrum full = solve_full(params, trunc, trunc.dim());
    std::vector<double> merged;
    for (int p : {-1, 1}) {
        const Spectrum s = solve_sector(params, trunc, p, trunc.n_trunc, {false, false});
        merged.insert(merged.end(), s.eigenvalues.begin(), s.eigenvalues.end());
    }
    std::sort(merged.begin(), merged.end());
    double worst = 0.0;
    for (std::size_t j = 0; j < merged.size(); ++j) worst = std::max(worst, std::abs(merged[j] - full.eigenvalues[j]));
    CHECK(worst <= 1e-10);
}

TEST_CASE("g = 0 spectrum is n +- delta/2") {
    const double delta = 0.7;
    const Truncation trunc{20};
    const Spectrum s = solve_full({delta, 0.0}, trunc, trunc.dim());
    std::vector<double> expect;
    for (std::size_t n = 0; n < trunc.n_trunc; ++n) {
        expect.push_back(n + delta / 2);
        expect.push_back(n - delta / 2.0);
    }
    std::sort(expect.begin(), expect.end());
    for (std::size_t j = 0; j < expect.size(); ++j) CHECK(std::abs(s.eigenvalues[j] - expect[j]) <= 1e-12);
}

TEST_CASE("displaced oscillator limit at delta = 0") {
    const double g = 2.0;
    const Truncation trunc{400};
    const Spectrum s = solve_by_sectors({0.0, g}, trunc, 8, nullptr, {false, false});
    CHECK(std::abs(s.eigenvalues[0] + g * g) <= 1e-8);
    for (std::size_t k = 0; k < 4; ++k) {
        CHECK(std::abs(s.eigenvalues[2 * k] - (static_cast<double>(k) - g * g)) <= 1e-8);
        CHECK(std::abs(s.eigenvalues[2 * k + 1] - s.eigenvalues[2 * k]) <= 1e-10);
    }
}

TEST_CASE("critical coupling") {
    CHECK(critical_coupling(0.0) == doctest::Approx(std::numbers::sqrt2).epsilon(1e-15));
    // independent long double evaluation
    auto ref = [](long double d) { return std::sqrt(1.0L + std::sqrt(1.0L + d * d / 16.0L)); };
    for (double d : {0.5, 1.0, 5.0, 10.0, 25.0, 50.0})
        CHECK(std::abs(critical_coupling(d) - static_cast<double>(ref(d))) <= 1e-15 * critical_coupling(d));
    CHECK(std::abs(critical_coupling(1.0) - 1.42505312406394701) <= 1e-14);
    CHECK(std::abs(critical_coupling(50.0) - 3.67966522987954062) <= 1e-14);
    double prev = critical_coupling(0.0);
    for (int i = 1; i <= 100; ++i) {
        const double gc = critical_coupling(0.5 * i);
        CHECK(gc > prev);
        CHECK(gc >= std::numbers::sqrt2);
        prev = gc;
    }
    CHECK_THROWS_AS(critical_coupling(-0.1), std::invalid_argument);
}

TEST_CASE("g^2 shift") {
    CHECK(shifted_energy(-4.0, {0.0, 2.0}) == 0.0);
    CHECK(shifted_energy(1.2345, {3.0, 0.0}) == 1.2345);
    const ModelParams p = params_from_ratio(1.0, 2.0);
    CHECK(p.g == 2.0 * critical_coupling(1.0));
}

TEST_CASE("shifted ground level stays bounded over the coupling axis") {
    const Truncation trunc{600};
    double lo = 1e300, hi = -1e300;
    for (int i = 0; i <= 24; ++i) {
        const ModelParams p = params_from_ratio(1.0, 0.25 * i);
        const Spectrum s = solve_by_sectors(p, trunc, 1, nullptr, {false, false});
        const double e = shifted_energy(s.eigenvalues[0], p);
        lo = std::min(lo, e);
        hi = std::max(hi, e);
    }
    CHECK(lo >= -0.5 - 1e-12);
    CHECK(hi <= 0.0);
}

TEST_CASE("symmetric matrix construction rejects bad data") {
    CHECK_THROWS_AS((SymmetricMatrix::from_rows(2, std::vector<double>{0, 1, 2, 0})), std::invalid_argument);
    CHECK_THROWS_AS((SymmetricMatrix::from_rows(2, std::vector<double>{0, NAN, NAN, 0})), std::invalid_argument);
    CHECK_THROWS_AS((SymmetricMatrix::from_rows(2, std::vector<double>{0, 1, 1})), std::invalid_argument);
    const auto m = SymmetricMatrix::from_rows(2, std::vector<double>{0, 1, 1, 0});
    CHECK(m(0, 1) == 1.0);
}

}
