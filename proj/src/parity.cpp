#include "rabi/parity.hpp"

#include <algorithm>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rabi/parallel.hpp"

namespace rabi {

namespace {

double squared_norm(std::span<const double> v) {
    double s = 0.0;
    for (double x : v) s += x * x;
    return s;
}

void check_state(std::span<const double> state, const Truncation& trunc) {
    trunc.validate();
    if (state.size() != trunc.dim())
        throw std::invalid_argument("state has " + std::to_string(state.size()) + " components, expected " +
                                    std::to_string(trunc.dim()));
    const double norm = std::sqrt(squared_norm(state));
    if (!(std::abs(norm - 1.0) <= kNormTolerance))
        throw std::invalid_argument("state is not normalized (norm " + std::to_string(norm) + ")");
}

}  // namespace

double parity_expectation(std::span<const double> state, const Truncation& trunc) {
    check_state(state, trunc);
    double num = 0.0;
    for (std::size_t i = 0; i < state.size(); ++i) num += basis::parity(i) * state[i] * state[i];
    return std::clamp(num / squared_norm(state), -1.0, 1.0);
}

double parity_matrix_element(std::span<const double> u, std::span<const double> v) {
    if (u.size() != v.size()) throw std::invalid_argument("vector sizes differ");
    double s = 0.0;
    for (std::size_t i = 0; i < u.size(); ++i) s += basis::parity(i) * u[i] * v[i];
    return s;
}

FockPopulations fock_populations(std::span<const double> state, const Truncation& trunc) {
    check_state(state, trunc);
    FockPopulations f;
    f.photon.assign(trunc.n_trunc, 0.0);
    for (std::size_t n = 0; n < trunc.n_trunc; ++n) {
        const double up = state[basis::index(n, +1)];
        const double down = state[basis::index(n, -1)];
        f.photon[n] = up * up + down * down;
        if (n % 2 == 0) {
            f.p_even_spin[0] += up * up;
            f.p_even_spin[1] += down * down;
        } else {
            f.p_odd_spin[0] += up * up;
            f.p_odd_spin[1] += down * down;
        }
    }
    // renormalize so p_even + p_odd = 1 to roundoff even for a 1e-10 norm slip
    const double total = squared_norm(state);
    for (double& p : f.photon) p /= total;
    for (int s = 0; s < 2; ++s) {
        f.p_even_spin[s] /= total;
        f.p_odd_spin[s] /= total;
    }
    f.p_even = f.p_even_spin[0] + f.p_even_spin[1];
    f.p_odd = f.p_odd_spin[0] + f.p_odd_spin[1];
    return f;
}

double tail_population(std::span<const double> state, const Truncation& trunc) {
    trunc.validate();
    if (state.size() != trunc.dim()) throw std::invalid_argument("state size does not match truncation");
    const auto first = static_cast<std::size_t>(std::ceil(0.9 * static_cast<double>(trunc.n_trunc)));
    double tail = 0.0;
    for (std::size_t i = 2 * first; i < state.size(); ++i) tail += state[i] * state[i];
    return tail;
}

bool tail_populations_pass(const Spectrum& spectrum, const Truncation& trunc) {
    for (std::size_t j = 0; j < spectrum.count(); ++j)
        if (!(tail_population(spectrum.vector(j), trunc) < kSentinelTail)) return false;
    return true;
}

ParityReport pair_report(const Spectrum& spectrum, const ModelParams& params, const Truncation& trunc,
                         double eps_par) {
    validate_eps_par(eps_par);
    if (!spectrum.has_vectors()) throw std::invalid_argument("pair report needs eigenvectors");
    if (spectrum.count() < 2)
        throw std::invalid_argument("pair report needs at least 2 retained states, got " +
                                    std::to_string(spectrum.count()));
    if (spectrum.dim != trunc.dim()) throw std::invalid_argument("spectrum does not match truncation");

    ParityReport r;
    r.eps_par = eps_par;
    for (std::size_t j = 0; j < spectrum.count(); ++j) {
        const auto v = spectrum.vector(j);
        const FockPopulations f = fock_populations(v, trunc);
        r.states.push_back(StateParity{j, spectrum.eigenvalues[j], shifted_energy(spectrum.eigenvalues[j], params),
                                       parity_expectation(v, trunc), f.p_even, f.p_odd});
    }
    for (std::size_t k = 0; 2 * k + 1 < spectrum.count(); ++k) {
        const StateParity& a = r.states[2 * k];
        const StateParity& b = r.states[2 * k + 1];
        PairEntry e;
        e.pair_index = k;
        e.gap_raw = b.energy - a.energy;
        e.gap_shifted = b.energy_shifted - a.energy_shifted;
        e.parity_sum = a.parity + b.parity;

        const auto va = spectrum.vector(2 * k);
        const auto vb = spectrum.vector(2 * k + 1);
        const double gaa = squared_norm(va), gbb = squared_norm(vb);
        double gab = 0.0;
        for (std::size_t i = 0; i < va.size(); ++i) gab += va[i] * vb[i];
        const double paa = parity_matrix_element(va, va);
        const double pbb = parity_matrix_element(vb, vb);
        const double pab = parity_matrix_element(va, vb);
        // tr(G^{-1} B) for Gram matrix G and P-matrix B on the pair span
        const double det = gaa * gbb - gab * gab;
        e.subspace_trace = (gbb * paa + gaa * pbb - 2.0 * gab * pab) / det;

        e.regular = pair_is_regular(a.parity, b.parity, eps_par);
        e.degenerate = std::abs(e.gap_raw) < tolerance::degeneracy * spectrum.scale;
        r.pairs.push_back(e);
    }
    return r;
}

void validate_grid(std::span<const double> grid, const char* what) {
    if (grid.empty()) throw std::invalid_argument(std::string(what) + " grid is empty");
    for (std::size_t i = 0; i < grid.size(); ++i) {
        if (!std::isfinite(grid[i])) throw std::invalid_argument(std::string(what) + " grid has a non-finite value");
        if (i > 0 && !(grid[i] > grid[i - 1]))
            throw std::invalid_argument(std::string(what) + " grid must be strictly increasing");
    }
}

void validate_eps_par(double eps_par) {
    if (!(eps_par > 0.0 && eps_par < 1.0))
        throw std::invalid_argument("eps_par must lie in (0, 1), got " + std::to_string(eps_par));
}

OnsetResult first_irregular(std::span<const double> g_grid, std::span<const double> parity_a,
                            std::span<const double> parity_b, const std::vector<bool>& usable, double eps_par) {
    validate_grid(g_grid, "coupling");
    validate_eps_par(eps_par);
    if (parity_a.size() != g_grid.size() || parity_b.size() != g_grid.size() || usable.size() != g_grid.size())
        throw std::invalid_argument("per-point parity arrays must match the grid");
    OnsetResult r;
    for (std::size_t i = 1; i < g_grid.size(); ++i) r.resolution = std::max(r.resolution, g_grid[i] - g_grid[i - 1]);
    for (std::size_t i = 0; i < g_grid.size(); ++i) {
        if (!usable[i]) {
            ++r.excluded_points;
            continue;
        }
        if (!r.g && !pair_is_regular(parity_a[i], parity_b[i], eps_par)) {
            r.g = g_grid[i];
            r.index = i;
        }
    }
    return r;
}

OnsetResult onset_coupling(double delta, std::size_t pair_k, std::span<const double> g_grid, double eps_par,
                           const OnsetOptions& opts) {
    validate_grid(g_grid, "coupling");
    validate_eps_par(eps_par);
    opts.trunc.validate();
    const std::size_t levels = 2 * (pair_k + 1);
    if (levels > opts.trunc.dim()) throw std::invalid_argument("pair index exceeds the truncated spectrum");

    std::vector<double> pa(g_grid.size()), pb(g_grid.size());
    std::vector<char> ok(g_grid.size());
    parallel_for(g_grid.size(), opts.threads, [&](std::size_t i) {
        const ModelParams params{delta, g_grid[i]};
        const Spectrum s = solve_full(params, opts.trunc, levels);
        ok[i] = tail_populations_pass(s, opts.trunc);
        pa[i] = parity_expectation(s.vector(2 * pair_k), opts.trunc);
        pb[i] = parity_expectation(s.vector(2 * pair_k + 1), opts.trunc);
    });
    return first_irregular(g_grid, pa, pb, std::vector<bool>(ok.begin(), ok.end()), eps_par);
}

}  // namespace rabi
