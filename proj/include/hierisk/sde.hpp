#pragma once

// Euler-Maruyama path ensembles and the per-path tables the backward solvers
// consume. Controls enter through a per-step rule returning grid indices, so
// this layer stays ignorant of how policies are represented.

#include <cmath>
#include <cstdint>
#include <functional>
#include <utility>
#include <vector>

#include "hierisk/common.hpp"
#include "hierisk/parallel.hpp"
#include "hierisk/problem.hpp"
#include "hierisk/rng.hpp"

namespace hierisk {

struct PathEnsemble {
    TimeGrid grid;
    int n_paths = 0;
    int dim = 0;
    std::uint64_t seed = 0;
    std::vector<double> X;         // (p, k, i) for k = 0..N, path-major
    std::vector<double> dB;        // (p, k, i) for k = 0..N-1, already scaled by sqrt(dt)
    std::vector<std::uint16_t> u_idx;  // (p, k) control grid indices actually applied
    std::vector<std::uint16_t> v_idx;

    int paths() const { return n_paths; }
    int steps() const { return grid.steps; }

    const double* x(int p, int k) const {
        return &X[(std::size_t(p) * (grid.steps + 1) + k) * dim];
    }
    double* x(int p, int k) { return &X[(std::size_t(p) * (grid.steps + 1) + k) * dim]; }
    const double* db(int p, int k) const {
        return &dB[(std::size_t(p) * grid.steps + k) * dim];
    }
    double* db(int p, int k) { return &dB[(std::size_t(p) * grid.steps + k) * dim]; }
    std::uint16_t u_at(int p, int k) const { return u_idx[std::size_t(p) * grid.steps + k]; }
    std::uint16_t v_at(int p, int k) const { return v_idx[std::size_t(p) * grid.steps + k]; }
};

// Returns control grid indices to apply at (path, step, state).
using ControlRule = std::function<std::pair<int, int>(int p, int k, const double* x)>;

inline ControlRule fixed_controls(int ui, int vi) {
    return [ui, vi](int, int, const double*) { return std::make_pair(ui, vi); };
}

inline PathEnsemble simulate_paths(const ProblemSpec& spec, const TimeGrid& grid, int n_paths,
                                   std::uint64_t seed, const ControlRule& rule_in = {}) {
    if (n_paths < 1) throw SolveError("need at least one path");
    if (spec.control_grid_u.size() > 65535 || spec.control_grid_v.size() > 65535)
        throw SolveError("control grids larger than 65535 entries are not supported");
    const ControlRule rule = rule_in ? rule_in : fixed_controls(0, 0);

    PathEnsemble ens;
    ens.grid = grid;
    ens.n_paths = n_paths;
    ens.dim = spec.d();
    ens.seed = seed;
    const int N = grid.steps;
    const int d = ens.dim;
    ens.X.resize(std::size_t(n_paths) * (N + 1) * d);
    ens.dB.resize(std::size_t(n_paths) * N * d);
    ens.u_idx.resize(std::size_t(n_paths) * N);
    ens.v_idx.resize(std::size_t(n_paths) * N);

    const CounterRng rng(seed);
    const double dt = grid.dt();
    const double sdt = std::sqrt(dt);
    const int nu = int(spec.control_grid_u.size());
    const int nv = int(spec.control_grid_v.size());

    parallel_for(n_paths, [&](std::size_t lo, std::size_t hi) {
      for (int p = int(lo); p < int(hi); ++p) {
        double* xv = ens.x(p, 0);
        for (int i = 0; i < d; ++i) xv[i] = spec.x0[i];
        for (int k = 0; k < N; ++k) {
            const double t = grid.t(k);
            const double* xk = ens.x(p, k);
            double* xk1 = ens.x(p, k + 1);
            double* db = ens.db(p, k);
            for (int j = 0; j < d; ++j) db[j] = sdt * rng.normal(std::uint64_t(p), std::uint64_t(k), std::uint64_t(j));
            auto [ui, vi] = rule(p, k, xk);
            if (ui < 0 || ui >= nu || vi < 0 || vi >= nv)
                throw SolveError("control rule returned an index outside the control grids");
            ens.u_idx[std::size_t(p) * N + k] = std::uint16_t(ui);
            ens.v_idx[std::size_t(p) * N + k] = std::uint16_t(vi);
            const double u = spec.control_grid_u[ui];
            const double v = spec.control_grid_v[vi];
            try {
                for (int i = 0; i < d; ++i) {
                    double inc = spec.drift_at(i, t, xk, u, v) * dt;
                    for (int j = 0; j < d; ++j) inc += spec.sigma_at(i, j, t, xk, u, v) * db[j];
                    xk1[i] = xk[i] + inc;
                    if (!std::isfinite(xk1[i]))
                        throw SolveError("state became non-finite at path " + std::to_string(p) +
                                         " step " + std::to_string(k + 1) + " (t=" + fmt_shortest(grid.t(k + 1)) + ")");
                }
            } catch (const EvalError& e) {
                throw SolveError("dynamics evaluation failed at path " + std::to_string(p) +
                                 " step " + std::to_string(k) + ": " + e.what());
            }
        }
      }
    });
    return ens;
}

// c(t_k, X_k, control_k) per (path, step), flat (p, k).
inline std::vector<double> running_cost_table(const ProblemSpec& spec, const PathEnsemble& ens,
                                              bool leader) {
    const int N = ens.steps();
    std::vector<double> out(std::size_t(ens.paths()) * N);
    parallel_for(ens.paths(), [&](std::size_t lo, std::size_t hi) {
        for (int p = int(lo); p < int(hi); ++p)
            for (int k = 0; k < N; ++k) {
                const double t = ens.grid.t(k);
                const double* xk = ens.x(p, k);
                out[std::size_t(p) * N + k] =
                    leader ? spec.leader_cost_at(t, xk, spec.control_grid_u[ens.u_at(p, k)])
                           : spec.follower_cost_at(t, xk, spec.control_grid_v[ens.v_at(p, k)]);
            }
    });
    return out;
}

inline std::vector<double> terminal_table(const ProblemSpec& spec, const PathEnsemble& ens,
                                          bool leader) {
    std::vector<double> out(ens.paths());
    const int N = ens.steps();
    parallel_for(ens.paths(), [&](std::size_t lo, std::size_t hi) {
        for (int p = int(lo); p < int(hi); ++p)
            out[p] = leader ? spec.leader_terminal_at(ens.x(p, N))
                            : spec.follower_terminal_at(ens.x(p, N));
    });
    return out;
}

// Psi(X_N) for an arbitrary payoff expression over x (bound to x_1).
inline std::vector<double> terminal_payoff_table(const Expr& payoff, const PathEnsemble& ens) {
    std::vector<double> out(ens.paths());
    const int N = ens.steps();
    parallel_for(ens.paths(), [&](std::size_t lo, std::size_t hi) {
        for (int p = int(lo); p < int(hi); ++p) {
            Env e;
            e.set(Var::x, ens.x(p, N)[0]);
            out[p] = payoff.eval(e);
        }
    });
    return out;
}

// h(t_k, X_k) per (path, step), flat (p, k) for k = 0..N.
inline std::vector<double> obstacle_table(const ProblemSpec& spec, const PathEnsemble& ens) {
    const int N = ens.steps();
    std::vector<double> out(std::size_t(ens.paths()) * (N + 1));
    parallel_for(ens.paths(), [&](std::size_t lo, std::size_t hi) {
        for (int p = int(lo); p < int(hi); ++p)
            for (int k = 0; k <= N; ++k)
                out[std::size_t(p) * (N + 1) + k] = spec.obstacle_at(ens.grid.t(k), ens.x(p, k));
    });
    return out;
}

}  // namespace hierisk
