#include "rabi/sweeps.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <stdexcept>
#include <string>

#include "rabi/parallel.hpp"

namespace rabi {

std::vector<double> make_grid(double start, double stop, double step) {
    if (!std::isfinite(start) || !std::isfinite(stop) || !std::isfinite(step))
        throw std::invalid_argument("grid bounds must be finite");
    if (!(step > 0.0)) throw std::invalid_argument("grid step must be > 0");
    if (stop < start) throw std::invalid_argument("grid stop must not be below start");
    const auto last = static_cast<std::size_t>(std::llround((stop - start) / step));
    std::vector<double> grid(last + 1);
    for (std::size_t i = 0; i <= last; ++i) grid[i] = start + static_cast<double>(i) * step;
    return grid;
}

std::size_t CouplingSweep::failed_points() const {
    return static_cast<std::size_t>(
        std::count_if(points.begin(), points.end(), [](const CouplingPoint& p) { return !p.sentinel; }));
}

CouplingSweep coupling_sweep(double delta, std::span<const double> g_grid, std::size_t n_levels,
                             const Truncation& trunc, const SweepOptions& opts) {
    const auto t0 = std::chrono::steady_clock::now();
    ModelParams{delta, 0.0}.validate();
    trunc.validate();
    validate_grid(g_grid, "coupling");
    validate_eps_par(opts.eps_par);
    if (n_levels < 2 || n_levels % 2 != 0)
        throw std::invalid_argument("n_levels must be even and >= 2, got " + std::to_string(n_levels));
    if (n_levels > trunc.dim()) throw std::invalid_argument("n_levels exceeds the truncated dimension");

    CouplingSweep sweep;
    sweep.delta = delta;
    sweep.trunc = trunc;
    sweep.n_levels = n_levels;
    sweep.options = opts;
    sweep.points.resize(g_grid.size());
    const double gc = critical_coupling(delta);
    const EigOptions eig{true, opts.rayleigh_refine};

    parallel_for(g_grid.size(), opts.threads, [&](std::size_t i) {
        const ModelParams params{delta, g_grid[i]};
        const Spectrum s = opts.path == SolverPath::dense ? solve_full(params, trunc, n_levels, eig)
                                                          : solve_by_sectors(params, trunc, n_levels, nullptr, eig);
        CouplingPoint& p = sweep.points[i];
        p.g = g_grid[i];
        p.g_over_gc = g_grid[i] / gc;
        p.report = pair_report(s, params, trunc, opts.eps_par);
        p.residuals = s.residual_norms;
        p.sentinel = tail_populations_pass(s, trunc);
    });
    sweep.truncation_inadequate = !sweep.points.back().sentinel;
    sweep.wall_seconds = std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
    return sweep;
}

ConvergenceSweep convergence_sweep(double delta, std::span<const double> g_grid,
                                   std::span<const std::size_t> truncations, std::size_t reference_trunc,
                                   std::size_t n_levels, unsigned threads) {
    ModelParams{delta, 0.0}.validate();
    validate_grid(g_grid, "coupling");
    if (truncations.empty()) throw std::invalid_argument("truncation list is empty");
    for (std::size_t i = 0; i < truncations.size(); ++i) {
        Truncation{truncations[i]}.validate();
        if (i > 0 && truncations[i] <= truncations[i - 1])
            throw std::invalid_argument("truncation list must be strictly increasing");
    }
    if (reference_trunc < truncations.back())
        throw std::invalid_argument("reference truncation " + std::to_string(reference_trunc) +
                                    " is smaller than candidate " + std::to_string(truncations.back()));
    if (n_levels < 1 || n_levels > 2 * truncations.front())
        throw std::invalid_argument("n_levels must lie in [1, 2 * smallest truncation]");

    ConvergenceSweep sweep;
    sweep.delta = delta;
    sweep.truncations.assign(truncations.begin(), truncations.end());
    sweep.reference_trunc = reference_trunc;
    sweep.n_levels = n_levels;
    sweep.points.resize(g_grid.size());
    const double gc = critical_coupling(delta);
    const EigOptions values_only{false, false};

    parallel_for(g_grid.size(), threads, [&](std::size_t i) {
        const ModelParams params{delta, g_grid[i]};
        ConvergencePoint& p = sweep.points[i];
        p.g = g_grid[i];
        p.g_over_gc = g_grid[i] / gc;
        p.reference = solve_by_sectors(params, Truncation{reference_trunc}, n_levels, nullptr, values_only).eigenvalues;
        for (std::size_t n : sweep.truncations) {
            const auto e = solve_by_sectors(params, Truncation{n}, n_levels, nullptr, values_only).eigenvalues;
            std::vector<double> d(n_levels);
            for (std::size_t l = 0; l < n_levels; ++l) d[l] = std::abs(e[l] - p.reference[l]);
            p.energies.push_back(e);
            p.differences.push_back(std::move(d));
        }
    });
    return sweep;
}

bool differences_monotone(const ConvergenceSweep& sweep, std::size_t level, double floor) {
    if (level >= sweep.n_levels) throw std::invalid_argument("level outside the sweep");
    for (const auto& p : sweep.points)
        for (std::size_t t = 1; t < p.differences.size(); ++t)
            if (p.differences[t][level] > p.differences[t - 1][level] + floor) return false;
    return true;
}

std::optional<bool> PhaseBoundary::onset_monotone_in_delta(std::size_t pair) const {
    std::vector<const BoundaryRow*> hits;
    for (const auto& r : rows)
        if (r.pair == pair && r.onset_g_over_gc) hits.push_back(&r);
    if (hits.size() < 2) return std::nullopt;
    std::sort(hits.begin(), hits.end(), [](const BoundaryRow* a, const BoundaryRow* b) { return a->delta < b->delta; });
    for (std::size_t i = 1; i < hits.size(); ++i)
        if (*hits[i]->onset_g_over_gc < *hits[i - 1]->onset_g_over_gc) return false;
    return true;
}

PhaseBoundary phase_boundary_scan(std::span<const double> delta_grid, std::span<const std::size_t> pairs,
                                  std::span<const double> g_over_gc_grid, double eps_par, const Truncation& trunc,
                                  unsigned threads) {
    validate_grid(delta_grid, "delta");
    validate_grid(g_over_gc_grid, "g/g_c");
    validate_eps_par(eps_par);
    trunc.validate();
    if (pairs.empty()) throw std::invalid_argument("pair list is empty");
    const std::size_t max_pair = *std::max_element(pairs.begin(), pairs.end());
    const std::size_t levels = 2 * (max_pair + 1);
    if (levels > trunc.dim()) throw std::invalid_argument("pair index exceeds the truncated spectrum");

    PhaseBoundary out;
    out.g_over_gc.assign(g_over_gc_grid.begin(), g_over_gc_grid.end());
    out.eps_par = eps_par;
    out.trunc = trunc;

    SweepOptions opts;
    opts.threads = threads;
    opts.eps_par = eps_par;
    for (double delta : delta_grid) {
        const double gc = critical_coupling(delta);
        std::vector<double> g_grid(g_over_gc_grid.size());
        for (std::size_t i = 0; i < g_grid.size(); ++i) g_grid[i] = g_over_gc_grid[i] * gc;
        const CouplingSweep sweep = coupling_sweep(delta, g_grid, levels, trunc, opts);

        std::vector<bool> usable(sweep.points.size());
        for (std::size_t i = 0; i < usable.size(); ++i) usable[i] = sweep.points[i].sentinel;
        for (std::size_t k : pairs) {
            std::vector<double> pa(sweep.points.size()), pb(sweep.points.size());
            bool all_degenerate = true;
            for (std::size_t i = 0; i < sweep.points.size(); ++i) {
                const auto& rep = sweep.points[i].report;
                pa[i] = rep.states[2 * k].parity;
                pb[i] = rep.states[2 * k + 1].parity;
                if (usable[i]) all_degenerate = all_degenerate && rep.pairs[k].degenerate;
            }
            const OnsetResult onset = first_irregular(g_over_gc_grid, pa, pb, usable, eps_par);
            BoundaryRow row;
            row.delta = delta;
            row.g_c = gc;
            row.pair = k;
            row.onset_g_over_gc = onset.g;
            row.resolution = onset.resolution;
            row.excluded_points = onset.excluded_points;
            row.degenerate = all_degenerate;
            out.rows.push_back(row);
        }
    }
    return out;
}

SentinelResult convergence_sentinel(const ModelParams& params, const Truncation& trunc, std::size_t levels) {
    params.validate();
    trunc.validate();
    const Spectrum s = solve_by_sectors(params, trunc, std::min(levels, trunc.dim()));
    SentinelResult r;
    for (std::size_t j = 0; j < s.count(); ++j) r.max_tail = std::max(r.max_tail, tail_population(s.vector(j), trunc));
    r.pass = r.max_tail < kSentinelTail;
    return r;
}

}  // namespace rabi
