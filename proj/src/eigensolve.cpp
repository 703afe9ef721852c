#include "rabi/eigensolve.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdint>
#include <functional>
#include <limits>
#include <numeric>
#include <stdexcept>
#include <utility>

#include "rabi/error.hpp"

namespace rabi {

std::string to_string(SolverPath path) {
    return path == SolverPath::dense ? "dense" : "tridiagonal";
}

namespace {

constexpr double kEps = std::numeric_limits<double>::epsilon();
constexpr double kSafeMin = std::numeric_limits<double>::min();

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

// splitmix64; fixed seeds keep start vectors identical across runs and platforms
class StartVectorSource {
public:
    explicit StartVectorSource(std::uint64_t seed) : state_(seed) {}
    double uniform_pm1() {
        state_ += 0x9E3779B97F4A7C15ULL;
        std::uint64_t z = state_;
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9ULL;
        z = (z ^ (z >> 27)) * 0x94D049BB133111EBULL;
        z ^= z >> 31;
        return 2.0 * (static_cast<double>(z >> 11) * 0x1.0p-53) - 1.0;
    }

private:
    std::uint64_t state_;
};

double dot(std::span<const double> a, std::span<const double> b) {
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += a[i] * b[i];
    return s;
}

double norm2(std::span<const double> a) { return std::sqrt(dot(a, a)); }

// ---------------------------------------------------------------------------
// Tridiagonal kernel
// ---------------------------------------------------------------------------

struct TridiagView {
    std::span<const double> d;
    std::span<const double> e;
    std::size_t n() const { return d.size(); }
};

double pivot_floor(const TridiagView& t) {
    double emax = 1.0;
    for (double x : t.e) emax = std::max(emax, x * x);
    return kSafeMin * emax;
}

/// Number of eigenvalues strictly below x (Sturm sequence of LDL^T pivots).
std::size_t count_below(const TridiagView& t, double x, double pivmin) {
    std::size_t count = 0;
    double q = t.d[0] - x;
    if (std::abs(q) <= pivmin) q = -pivmin;
    if (q < 0.0) ++count;
    for (std::size_t i = 1; i < t.n(); ++i) {
        q = t.d[i] - x - t.e[i - 1] * t.e[i - 1] / q;
        if (std::abs(q) <= pivmin) q = -pivmin;
        if (q < 0.0) ++count;
    }
    return count;
}

double one_norm(const TridiagView& t) {
    double m = 0.0;
    for (std::size_t i = 0; i < t.n(); ++i) {
        double row = std::abs(t.d[i]);
        if (i > 0) row += std::abs(t.e[i - 1]);
        if (i + 1 < t.n()) row += std::abs(t.e[i]);
        m = std::max(m, row);
    }
    return m;
}

std::vector<double> lowest_eigenvalues(const TridiagView& t, std::size_t k) {
    const std::size_t n = t.n();
    const double pivmin = pivot_floor(t);

    double lo_bound = t.d[0], hi_bound = t.d[0];
    for (std::size_t i = 0; i < n; ++i) {
        double r = 0.0;
        if (i > 0) r += std::abs(t.e[i - 1]);
        if (i + 1 < n) r += std::abs(t.e[i]);
        lo_bound = std::min(lo_bound, t.d[i] - r);
        hi_bound = std::max(hi_bound, t.d[i] + r);
    }
    const double tnorm = std::max(std::abs(lo_bound), std::abs(hi_bound));
    const double fudge = 2.1 * kEps * tnorm * static_cast<double>(n) + 4.2 * pivmin;
    lo_bound -= fudge;
    hi_bound += fudge;

    std::vector<double> values(k);
    double floor_lo = lo_bound;
    for (std::size_t j = 0; j < k; ++j) {
        double lo = floor_lo, hi = hi_bound;
        for (int it = 0; it < 200; ++it) {
            const double width = hi - lo;
            const double tol = std::max(2.0 * pivmin, 2.0 * kEps * std::max(std::abs(lo), std::abs(hi)));
            if (width <= tol) break;
            const double mid = lo + 0.5 * width;
            if (mid <= lo || mid >= hi) break;
            if (count_below(t, mid, pivmin) > j)
                hi = mid;
            else
                lo = mid;
        }
        values[j] = lo + 0.5 * (hi - lo);
        floor_lo = lo;  // lambda_{j+1} >= lambda_j > lo
    }
    return values;
}

/// LU factorization of (T - shift I) with partial pivoting; U has two
/// superdiagonals. Tiny pivots are lifted to `pert` in magnitude.
class ShiftedLU {
public:
    ShiftedLU(const TridiagView& t, double shift, double pert)
        : u0_(t.n()), u1_(t.n(), 0.0), u2_(t.n(), 0.0), mult_(t.n(), 0.0), swapped_(t.n(), false) {
        const std::size_t n = t.n();
        double r0 = t.d[0] - shift;
        double r1 = n > 1 ? t.e[0] : 0.0;
        for (std::size_t i = 0; i + 1 < n; ++i) {
            const double c = t.e[i];
            const double a = t.d[i + 1] - shift;
            const double b = (i + 2 < n) ? t.e[i + 1] : 0.0;
            if (std::abs(r0) >= std::abs(c)) {
                const double piv = lift(r0, pert);
                u0_[i] = piv;
                u1_[i] = r1;
                mult_[i] = c / piv;
                r0 = a - mult_[i] * r1;
                r1 = b;
            } else {
                swapped_[i] = true;
                u0_[i] = c;
                u1_[i] = a;
                u2_[i] = b;
                mult_[i] = r0 / c;
                r0 = r1 - mult_[i] * a;
                r1 = -mult_[i] * b;
            }
        }
        u0_[n - 1] = lift(r0, pert);
    }

    /// Solves in place; the result is only meaningful up to a positive scale.
    void solve(std::vector<double>& y) const {
        const std::size_t n = u0_.size();
        for (std::size_t i = 0; i + 1 < n; ++i) {
            if (swapped_[i]) std::swap(y[i], y[i + 1]);
            y[i + 1] -= mult_[i] * y[i];
        }
        constexpr double big = 1e100;
        for (std::size_t ii = n; ii-- > 0;) {
            double s = y[ii];
            if (ii + 1 < n) s -= u1_[ii] * y[ii + 1];
            if (ii + 2 < n) s -= u2_[ii] * y[ii + 2];
            y[ii] = s / u0_[ii];
            if (std::abs(y[ii]) > big) {
                for (double& v : y) v /= big;
            }
        }
    }

private:
    static double lift(double piv, double pert) {
        if (std::abs(piv) < pert) return piv < 0.0 ? -pert : pert;
        return piv;
    }

    std::vector<double> u0_, u1_, u2_, mult_;
    std::vector<bool> swapped_;
};

/// Inverse iteration for the given (ascending) eigenvalues. Vectors whose
/// eigenvalues lie within 1e-3 * ||T||_1 of their predecessor form a cluster
/// and are reorthogonalized against each other on every sweep.
std::vector<double> inverse_iteration(const TridiagView& t, std::span<const double> values) {
    const std::size_t n = t.n();
    const std::size_t k = values.size();
    std::vector<double> vecs(n * k, 0.0);
    if (n == 1) {
        for (std::size_t j = 0; j < k; ++j) vecs[j] = 1.0;
        return vecs;
    }

    const double onenrm = std::max(one_norm(t), kSafeMin);
    const double ortol = 1e-3 * onenrm;
    const double pert = kEps * onenrm;
    const double growth_target = 1.0 / (10.0 * std::sqrt(static_cast<double>(n)) * kEps * onenrm);
    constexpr int kMaxIterations = 5;
    constexpr int kExtraIterations = 1;

    std::size_t cluster_begin = 0;
    double prev_shift = 0.0;
    std::vector<double> x(n);
    for (std::size_t j = 0; j < k; ++j) {
        double shift = values[j];
        if (j == 0 || values[j] - values[j - 1] > ortol) {
            cluster_begin = j;
        } else {
            // separate coincident shifts so the cluster vectors are not identical
            const double pertol = 10.0 * std::abs(kEps * shift);
            if (shift - prev_shift < pertol) shift = prev_shift + pertol;
        }
        prev_shift = shift;

        const ShiftedLU lu(t, shift, pert);
        StartVectorSource rng(0x5EEDULL + 7919ULL * j);
        for (double& v : x) v = rng.uniform_pm1();
        double nb = norm2(x);
        for (double& v : x) v /= nb;

        bool converged = false;
        int extra = 0;
        for (int it = 0; it < kMaxIterations; ++it) {
            lu.solve(x);
            for (int pass = 0; pass < 2; ++pass) {
                for (std::size_t c = cluster_begin; c < j; ++c) {
                    std::span<const double> v(vecs.data() + c * n, n);
                    const double proj = dot(v, x);
                    for (std::size_t i = 0; i < n; ++i) x[i] -= proj * v[i];
                }
            }
            const double growth = norm2(x);
            if (!(growth > 0.0) || !std::isfinite(growth))
                throw ConvergenceError("inverse iteration produced a degenerate vector", j);
            for (double& v : x) v /= growth;
            if (growth >= growth_target) converged = true;
            if (converged && extra++ >= kExtraIterations) break;
        }
        if (!converged) throw ConvergenceError("inverse iteration did not converge", j);
        std::copy(x.begin(), x.end(), vecs.begin() + static_cast<std::ptrdiff_t>(j * n));
    }
    return vecs;
}

// ---------------------------------------------------------------------------
// Band reduction (Schwarz-style Givens bulge chasing)
// ---------------------------------------------------------------------------

struct Rotation {
    std::size_t p;  // plane (p, p+1)
    double c;
    double s;
};

class BandWork {
public:
    BandWork(const SymmetricMatrix& m, std::size_t b) : n_(m.dim()), b_(b), stride_(b + 2) {
        data_.assign(n_ * stride_, 0.0);
        for (std::size_t i = 0; i < n_; ++i)
            for (std::size_t j = (i > b ? i - b : 0); j <= i; ++j) at(i, j) = m(i, j);
    }

    double& at(std::size_t i, std::size_t j) {
        if (i < j) std::swap(i, j);
        return data_[i * stride_ + (i - j)];
    }

    /// Rotates rows/columns p and p+1 so that entry (p+1, col) becomes zero.
    /// Returns false when the entry already vanishes.
    bool annihilate(std::size_t p, std::size_t col, Rotation& out) {
        const std::size_t q = p + 1;
        const double y = at(q, col);
        if (y == 0.0) return false;
        const double x = at(p, col);
        const double r = std::hypot(x, y);
        const double c = x / r;
        const double s = y / r;
        const std::size_t lo = p > b_ ? p - b_ : 0;
        const std::size_t hi = std::min(n_ - 1, q + b_);
        for (std::size_t k = lo; k <= hi; ++k) {
            if (k == p || k == q) continue;
            double& xp = at(p, k);
            double& xq = at(q, k);
            const double vp = xp, vq = xq;
            xp = c * vp + s * vq;
            xq = -s * vp + c * vq;
        }
        const double app = at(p, p), aqq = at(q, q), apq = at(p, q);
        at(p, p) = c * c * app + 2.0 * c * s * apq + s * s * aqq;
        at(q, q) = s * s * app - 2.0 * c * s * apq + c * c * aqq;
        at(p, q) = c * s * (aqq - app) + (c * c - s * s) * apq;
        at(p, col) = r;
        at(q, col) = 0.0;
        out = Rotation{p, c, s};
        return true;
    }

    /// Reduces to tridiagonal form, recording every rotation in order.
    void tridiagonalize(std::vector<Rotation>& rotations) {
        if (b_ < 2) return;
        Rotation rot{};
        for (std::size_t j = 0; j + 2 < n_; ++j) {
            const std::size_t reach = std::min(b_, n_ - 1 - j);
            for (std::size_t off = reach; off >= 2; --off) {
                const std::size_t i = j + off;
                if (!annihilate(i - 1, j, rot)) continue;
                rotations.push_back(rot);
                // the rotation leaves a bulge at (i + b, i - 1); chase it off the end
                std::size_t col = i - 1;
                std::size_t row = i + b_;
                while (row < n_) {
                    if (!annihilate(row - 1, col, rot)) break;
                    rotations.push_back(rot);
                    col = row - 1;
                    row += b_;
                }
            }
        }
    }

    void extract(std::vector<double>& d, std::vector<double>& e) {
        d.resize(n_);
        e.resize(n_ > 0 ? n_ - 1 : 0);
        for (std::size_t i = 0; i < n_; ++i) d[i] = at(i, i);
        for (std::size_t i = 0; i + 1 < n_; ++i) e[i] = at(i + 1, i);
    }

private:
    std::size_t n_;
    std::size_t b_;
    std::size_t stride_;
    std::vector<double> data_;
};

// ---------------------------------------------------------------------------
// Post-processing shared by both paths
// ---------------------------------------------------------------------------

std::size_t first_nonzero(std::span<const double> v) {
    for (std::size_t i = 0; i < v.size(); ++i)
        if (v[i] != 0.0) return i;
    return v.size();
}

void fix_signs(Spectrum& s) {
    for (std::size_t j = 0; j < s.count(); ++j) {
        double* v = s.eigenvectors.data() + j * s.dim;
        std::size_t arg = 0;
        for (std::size_t i = 1; i < s.dim; ++i)
            if (std::abs(v[i]) > std::abs(v[arg])) arg = i;
        if (v[arg] < 0.0)
            for (std::size_t i = 0; i < s.dim; ++i) v[i] = -v[i];
    }
}

/// Ascending eigenvalues; exact ties ordered by first nonzero basis index.
void order_pairs(Spectrum& s) {
    const std::size_t k = s.count();
    std::vector<std::size_t> order(k);
    std::iota(order.begin(), order.end(), 0);
    std::vector<std::size_t> lead(k, 0);
    if (s.has_vectors())
        for (std::size_t j = 0; j < k; ++j) lead[j] = first_nonzero(s.vector(j));
    std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t b) {
        if (s.eigenvalues[a] != s.eigenvalues[b]) return s.eigenvalues[a] < s.eigenvalues[b];
        return lead[a] < lead[b];
    });
    if (std::is_sorted(order.begin(), order.end())) return;
    std::vector<double> values(k);
    std::vector<double> vecs(s.eigenvectors.size());
    for (std::size_t j = 0; j < k; ++j) {
        values[j] = s.eigenvalues[order[j]];
        if (s.has_vectors())
            std::copy_n(s.eigenvectors.begin() + static_cast<std::ptrdiff_t>(order[j] * s.dim), s.dim,
                        vecs.begin() + static_cast<std::ptrdiff_t>(j * s.dim));
    }
    s.eigenvalues = std::move(values);
    if (s.has_vectors()) s.eigenvectors = std::move(vecs);
}

template <class MatVec>
void finalize(Spectrum& s, const EigOptions& opts, MatVec&& apply) {
    const std::size_t k = s.count();
    if (s.has_vectors()) {
        fix_signs(s);
        std::vector<double> mv(s.dim);
        if (opts.rayleigh_refine) {
            for (std::size_t j = 0; j < k; ++j) {
                apply(s.vector(j), mv);
                s.eigenvalues[j] = dot(s.vector(j), mv) / dot(s.vector(j), s.vector(j));
            }
        }
        order_pairs(s);
        s.residual_norms.assign(k, 0.0);
        for (std::size_t j = 0; j < k; ++j) {
            apply(s.vector(j), mv);
            double r = 0.0;
            const auto v = s.vector(j);
            for (std::size_t i = 0; i < s.dim; ++i) {
                const double d = mv[i] - s.eigenvalues[j] * v[i];
                r += d * d;
            }
            s.residual_norms[j] = std::sqrt(r);
        }
    }
    s.degenerate_next.assign(k, false);
    for (std::size_t j = 0; j + 1 < k; ++j)
        s.degenerate_next[j] =
            std::abs(s.eigenvalues[j + 1] - s.eigenvalues[j]) < tolerance::degeneracy * s.scale;
}

void check_count(std::size_t k, std::size_t dim) {
    if (k < 1 || k > dim)
        throw std::invalid_argument("requested " + std::to_string(k) + " eigenpairs from a " +
                                    std::to_string(dim) + "-dimensional problem");
}

void tridiag_matvec(const TridiagView& t, std::span<const double> v, std::vector<double>& out) {
    const std::size_t n = t.n();
    for (std::size_t i = 0; i < n; ++i) {
        double s = t.d[i] * v[i];
        if (i > 0) s += t.e[i - 1] * v[i - 1];
        if (i + 1 < n) s += t.e[i] * v[i + 1];
        out[i] = s;
    }
}

void banded_matvec(const SymmetricMatrix& m, std::size_t b, std::span<const double> v,
                   std::vector<double>& out) {
    const std::size_t n = m.dim();
    for (std::size_t i = 0; i < n; ++i) {
        const auto row = m.row(i);
        const std::size_t lo = i > b ? i - b : 0;
        const std::size_t hi = std::min(n - 1, i + b);
        double s = 0.0;
        for (std::size_t j = lo; j <= hi; ++j) s += row[j] * v[j];
        out[i] = s;
    }
}

}  // namespace

Spectrum eig_sym_tridiag(std::span<const double> diag, std::span<const double> offdiag, std::size_t k,
                         const EigOptions& opts) {
    const auto t0 = Clock::now();
    if (diag.empty()) throw std::invalid_argument("tridiagonal matrix is empty");
    if (offdiag.size() + 1 != diag.size())
        throw std::invalid_argument("offdiag must have exactly len(diag) - 1 entries");
    for (double a : diag)
        if (!std::isfinite(a)) throw std::invalid_argument("non-finite diagonal entry");
    for (double a : offdiag)
        if (!std::isfinite(a)) throw std::invalid_argument("non-finite off-diagonal entry");
    check_count(k, diag.size());

    const TridiagView t{diag, offdiag};
    Spectrum s;
    s.dim = diag.size();
    s.meta.path = SolverPath::tridiagonal;
    double mx = 1.0;
    for (double a : diag) mx = std::max(mx, std::abs(a));
    for (double a : offdiag) mx = std::max(mx, std::abs(a));
    s.scale = mx;

    if (std::all_of(offdiag.begin(), offdiag.end(), [](double x) { return x == 0.0; })) {
        // decoupled: the diagonal is the spectrum, exactly
        const std::size_t n = diag.size();
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return diag[a] < diag[c]; });
        s.eigenvalues.resize(k);
        if (opts.vectors) s.eigenvectors.assign(n * k, 0.0);
        for (std::size_t j = 0; j < k; ++j) {
            s.eigenvalues[j] = diag[order[j]];
            if (opts.vectors) s.eigenvectors[j * n + order[j]] = 1.0;
        }
    } else {
        s.eigenvalues = lowest_eigenvalues(t, k);
        if (opts.vectors) s.eigenvectors = inverse_iteration(t, s.eigenvalues);
    }
    finalize(s, opts, [&](std::span<const double> v, std::vector<double>& out) { tridiag_matvec(t, v, out); });
    s.meta.wall_seconds = seconds_since(t0);
    return s;
}

Spectrum eig_sym_dense(const SymmetricMatrix& m, std::size_t k, const EigOptions& opts) {
    const auto t0 = Clock::now();
    const std::size_t n = m.dim();
    check_count(k, n);
    for (double a : m.data())
        if (!std::isfinite(a)) throw std::invalid_argument("non-finite matrix entry");

    Spectrum s;
    s.dim = n;
    s.meta.path = SolverPath::dense;
    s.scale = std::max(1.0, m.max_abs());
    const std::size_t b = m.half_bandwidth();

    if (b == 0) {
        std::vector<std::size_t> order(n);
        std::iota(order.begin(), order.end(), 0);
        std::stable_sort(order.begin(), order.end(), [&](std::size_t a, std::size_t c) { return m(a, a) < m(c, c); });
        s.eigenvalues.resize(k);
        if (opts.vectors) s.eigenvectors.assign(n * k, 0.0);
        for (std::size_t j = 0; j < k; ++j) {
            s.eigenvalues[j] = m(order[j], order[j]);
            if (opts.vectors) s.eigenvectors[j * n + order[j]] = 1.0;
        }
    } else {
        BandWork work(m, b);
        std::vector<Rotation> rotations;
        work.tridiagonalize(rotations);
        std::vector<double> d, e;
        work.extract(d, e);
        const TridiagView t{d, e};
        s.eigenvalues = lowest_eigenvalues(t, k);
        if (opts.vectors) {
            s.eigenvectors = inverse_iteration(t, s.eigenvalues);
            // x = G_1^T ... G_m^T y
            for (std::size_t j = 0; j < k; ++j) {
                double* y = s.eigenvectors.data() + j * n;
                for (auto it = rotations.rbegin(); it != rotations.rend(); ++it) {
                    const double yp = y[it->p], yq = y[it->p + 1];
                    y[it->p] = it->c * yp - it->s * yq;
                    y[it->p + 1] = it->s * yp + it->c * yq;
                }
            }
        }
    }
    finalize(s, opts, [&](std::span<const double> v, std::vector<double>& out) { banded_matvec(m, b, v, out); });
    s.meta.wall_seconds = seconds_since(t0);
    return s;
}

Spectrum eig_sym_dense(std::span<const double> row_major, std::size_t dim, std::size_t k,
                       const EigOptions& opts) {
    return eig_sym_dense(SymmetricMatrix::from_rows(dim, row_major), k, opts);
}

namespace {

ResidualReport make_report(const Spectrum& spectrum, std::size_t dim, double scale,
                           const std::function<void(std::span<const double>, std::vector<double>&)>& apply) {
    if (spectrum.dim != dim)
        throw std::invalid_argument("spectrum dimension " + std::to_string(spectrum.dim) +
                                    " does not match matrix dimension " + std::to_string(dim));
    if (!spectrum.has_vectors()) throw std::invalid_argument("residual report needs eigenvectors");
    ResidualReport r;
    r.scale = scale;
    r.residual_tol = tolerance::residual * scale;
    const std::size_t k = spectrum.count();
    std::vector<double> mv(dim);
    r.residuals.resize(k);
    for (std::size_t j = 0; j < k; ++j) {
        const auto v = spectrum.vector(j);
        apply(v, mv);
        double acc = 0.0;
        for (std::size_t i = 0; i < dim; ++i) {
            const double d = mv[i] - spectrum.eigenvalues[j] * v[i];
            acc += d * d;
        }
        r.residuals[j] = std::sqrt(acc);
        r.max_residual = std::max(r.max_residual, r.residuals[j]);
        if (r.residuals[j] > r.residual_tol) r.flagged.push_back(j);
    }
    for (std::size_t i = 0; i < k; ++i) {
        r.max_norm_defect = std::max(r.max_norm_defect, std::abs(dot(spectrum.vector(i), spectrum.vector(i)) - 1.0));
        for (std::size_t j = i + 1; j < k; ++j)
            r.max_gram_defect = std::max(r.max_gram_defect, std::abs(dot(spectrum.vector(i), spectrum.vector(j))));
    }
    r.orthonormal = r.max_norm_defect <= tolerance::orthogonality && r.max_gram_defect <= tolerance::orthogonality;
    return r;
}

}  // namespace

ResidualReport residual_report(const SymmetricMatrix& m, const Spectrum& spectrum) {
    const std::size_t b = m.half_bandwidth();
    return make_report(spectrum, m.dim(), std::max(1.0, m.max_abs()),
                       [&](std::span<const double> v, std::vector<double>& out) { banded_matvec(m, b, v, out); });
}

ResidualReport residual_report(const Tridiagonal& t, const Spectrum& spectrum) {
    t.validate();
    const TridiagView view{t.diag, t.offdiag};
    return make_report(spectrum, t.dim(), std::max(1.0, t.max_abs()),
                       [&](std::span<const double> v, std::vector<double>& out) { tridiag_matvec(view, v, out); });
}

Spectrum solve_full(const ModelParams& params, const Truncation& trunc, std::size_t k, const EigOptions& opts) {
    Spectrum s = eig_sym_dense(build_hamiltonian(params, trunc), k, opts);
    s.meta.params = params;
    s.meta.trunc = trunc;
    return s;
}

Spectrum solve_sector(const ModelParams& params, const Truncation& trunc, int parity, std::size_t k,
                      const EigOptions& opts) {
    Spectrum s = eig_sym_tridiag(sector_hamiltonian(params, trunc, parity), k, opts);
    s.meta.params = params;
    s.meta.trunc = trunc;
    s.meta.sector = parity;
    return s;
}

std::vector<double> embed_sector_vector(std::span<const double> sector_vector, int parity) {
    std::vector<double> full(2 * sector_vector.size(), 0.0);
    for (std::size_t n = 0; n < sector_vector.size(); ++n)
        full[basis::index(n, basis::sector_spin(n, parity))] = sector_vector[n];
    return full;
}

Spectrum solve_by_sectors(const ModelParams& params, const Truncation& trunc, std::size_t k,
                          std::vector<int>* parities, const EigOptions& opts) {
    const auto t0 = Clock::now();
    trunc.validate();
    check_count(k, trunc.dim());
    const std::size_t per_sector = std::min(k, trunc.n_trunc);
    const Spectrum plus = solve_sector(params, trunc, +1, per_sector, opts);
    const Spectrum minus = solve_sector(params, trunc, -1, per_sector, opts);

    struct Level {
        double value;
        std::size_t lead;
        int parity;
        std::size_t j;
    };
    std::vector<Level> levels;
    for (int p : {+1, -1}) {
        const Spectrum& src = p > 0 ? plus : minus;
        for (std::size_t j = 0; j < src.count(); ++j) {
            // lead index in the full basis: first nonzero sector component, lifted
            std::size_t lead = 0;
            if (src.has_vectors()) {
                const std::size_t n0 = first_nonzero(src.vector(j));
                lead = basis::index(n0, basis::sector_spin(n0, p));
            }
            levels.push_back({src.eigenvalues[j], lead, p, j});
        }
    }
    std::stable_sort(levels.begin(), levels.end(), [](const Level& a, const Level& b) {
        if (a.value != b.value) return a.value < b.value;
        return a.lead < b.lead;
    });
    levels.resize(k);

    Spectrum s;
    s.dim = trunc.dim();
    s.meta.path = SolverPath::tridiagonal;
    s.meta.params = params;
    s.meta.trunc = trunc;
    s.scale = std::max(plus.scale, minus.scale);
    if (parities) parities->clear();
    for (const Level& l : levels) {
        const Spectrum& src = l.parity > 0 ? plus : minus;
        s.eigenvalues.push_back(l.value);
        if (src.has_vectors()) {
            const auto full = embed_sector_vector(src.vector(l.j), l.parity);
            s.eigenvectors.insert(s.eigenvectors.end(), full.begin(), full.end());
            s.residual_norms.push_back(src.residual_norms[l.j]);
        }
        if (parities) parities->push_back(l.parity);
    }
    s.degenerate_next.assign(k, false);
    for (std::size_t j = 0; j + 1 < k; ++j)
        s.degenerate_next[j] = std::abs(s.eigenvalues[j + 1] - s.eigenvalues[j]) < tolerance::degeneracy * s.scale;
    s.meta.wall_seconds = seconds_since(t0);
    return s;
}

}  // namespace rabi
