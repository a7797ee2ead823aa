#pragma once

// Obstacle-constrained backward solves, three ways:
//   - discrete reflection: project onto the obstacle each step, accumulating
//     the push into an increasing process A;
//   - penalization: fold n*(y - h)^- into the driver of the plain solver;
//   - a recombining binomial tree as an independent optimal-stopping oracle.
// Plus the diagnostics tying them to the constrained-solution conditions:
// obstacle domination, complementarity, the increment formula for A, and
// continuity in the data.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <vector>

#include "hierisk/bsde.hpp"
#include "hierisk/common.hpp"
#include "hierisk/parallel.hpp"
#include "hierisk/problem.hpp"
#include "hierisk/regression.hpp"
#include "hierisk/sde.hpp"

namespace hierisk {

struct ReflectOptions : BsdeOptions {
    double obstacle_shift = 0.0;  // added pointwise to h, for stability probes
};

struct ReflectedSolution {
    double y0 = 0.0;
    double se0 = 0.0;
    std::vector<double> Y;          // (p, k), k = 0..N, reflected values
    std::vector<double> Z;          // (p, k, j)
    std::vector<double> A;          // (p, k), nondecreasing, A[p][0] = 0
    std::vector<double> driver_dt;  // (p, k): dt * f_k at the regressed arguments
    std::vector<double> obstacle;   // (p, k): the h table actually used
    std::vector<double> pathwise_total;
    int n_paths = 0;
    int steps = 0;
    int dim = 0;

    double y_at(int p, int k) const { return Y[std::size_t(p) * (steps + 1) + k]; }
    double a_at(int p, int k) const { return A[std::size_t(p) * (steps + 1) + k]; }
    double h_at(int p, int k) const { return obstacle[std::size_t(p) * (steps + 1) + k]; }
    const double* z_at(int p, int k) const { return &Z[(std::size_t(p) * steps + k) * dim]; }
};

namespace detail {

inline void require_terminal_dominates(const std::vector<double>& terminal,
                                       const std::vector<double>& h, int N) {
    for (std::size_t p = 0; p < terminal.size(); ++p) {
        const double hT = h[p * (N + 1) + N];
        if (terminal[p] < hT - 1e-12 * (1.0 + std::fabs(hT)))
            throw SolveError("terminal value " + fmt_shortest(terminal[p]) +
                             " falls below the obstacle " + fmt_shortest(hT) + " at path " +
                             std::to_string(p));
    }
}

}  // namespace detail

inline ReflectedSolution solve_reflected(const ProblemSpec& spec, const PathEnsemble& ens,
                                         const std::vector<double>& terminal,
                                         const ReflectOptions& opt = {}) {
    require_valid(spec, opt.skip_validation);
    const int P = ens.paths();
    const int N = ens.steps();
    const int d = ens.dim;
    if (int(terminal.size()) != P) throw SolveError("terminal vector length must match path count");
    if (opt.running_cost && int(opt.running_cost->size()) != P * N)
        throw SolveError("running cost table must be paths x steps");
    const double dt = ens.grid.dt();

    ReflectedSolution res;
    res.n_paths = P;
    res.steps = N;
    res.dim = d;
    res.obstacle = obstacle_table(spec, ens);
    if (opt.obstacle_shift != 0.0)
        for (double& v : res.obstacle) v += opt.obstacle_shift;
    detail::require_terminal_dominates(terminal, res.obstacle, N);

    double ymean = 0, ysd = 0;
    for (double v : terminal) ymean += v;
    ymean /= P;
    for (double v : terminal) ysd += (v - ymean) * (v - ymean);
    ysd = std::sqrt(ysd / std::max(1, P - 1));
    detail::check_driver_timestep(spec, dt, ymean, ysd);

    res.Y.resize(std::size_t(P) * (N + 1));
    res.Z.resize(std::size_t(P) * N * d);
    res.A.assign(std::size_t(P) * (N + 1), 0.0);
    res.driver_dt.resize(std::size_t(P) * N);
    res.pathwise_total = terminal;
    for (int p = 0; p < P; ++p) res.Y[std::size_t(p) * (N + 1) + N] = terminal[p];

    const std::size_t xstride = std::size_t(N + 1) * d;
    std::vector<double> ynext(P), cont(P), ztarget(P), zfit(P);
    // A is assembled forward afterwards; stash increments in A[p][k+1] slots
    for (int k = N - 1; k >= 0; --k) {
        for (int p = 0; p < P; ++p) ynext[p] = res.Y[std::size_t(p) * (N + 1) + k + 1];
        StepRegression reg(ens.x(0, k), xstride, P, d, opt.degree);
        reg.project(ynext.data(), cont.data());
        for (int j = 0; j < d; ++j) {
            for (int p = 0; p < P; ++p) ztarget[p] = (ynext[p] - cont[p]) * ens.db(p, k)[j];
            reg.project(ztarget.data(), zfit.data());
            for (int p = 0; p < P; ++p) res.Z[(std::size_t(p) * N + k) * d + j] = zfit[p] / dt;
        }
        const double t = ens.grid.t(k);
        parallel_for(P, [&](std::size_t lo, std::size_t hi) {
            for (int p = int(lo); p < int(hi); ++p) {
                const double c = opt.running_cost ? (*opt.running_cost)[std::size_t(p) * N + k] : 0.0;
                const double f =
                    c + spec.generator_at(t, cont[p], res.z_at(p, k)) + opt.driver_shift;
                const double u = cont[p] + dt * f;  // unreflected one-step value
                if (!std::isfinite(u))
                    throw SolveError("backward value non-finite at step " + std::to_string(k) +
                                     " path " + std::to_string(p));
                const double h = res.obstacle[std::size_t(p) * (N + 1) + k];
                const double y = std::max(u, h);
                res.Y[std::size_t(p) * (N + 1) + k] = y;
                res.driver_dt[std::size_t(p) * N + k] = dt * f;
                res.A[std::size_t(p) * (N + 1) + k + 1] = y - u;  //= (h - u)^+
                res.pathwise_total[p] += dt * f + (y - u);
            }
        });
    }
    // prefix-sum the stashed increments: A[p][k] covers pushes at t_0..t_{k-1}
    parallel_for(P, [&](std::size_t lo, std::size_t hi) {
        for (int p = int(lo); p < int(hi); ++p) {
            double acc = 0;
            for (int k = 0; k <= N; ++k) {
                acc += res.A[std::size_t(p) * (N + 1) + k];
                res.A[std::size_t(p) * (N + 1) + k] = acc;
            }
        }
    });

    double mean = 0;
    for (int p = 0; p < P; ++p) mean += res.Y[std::size_t(p) * (N + 1)];
    res.y0 = mean / P;
    double var = 0;
    for (int p = 0; p < P; ++p) {
        const double dev = res.pathwise_total[p] - res.y0;
        var += dev * dev;
    }
    res.se0 = std::sqrt(var / (double(P) * std::max(1, P - 1)));
    return res;
}

inline BsdeResult solve_penalized(const ProblemSpec& spec, const PathEnsemble& ens,
                                  const std::vector<double>& terminal, double n_penalty,
                                  const ReflectOptions& opt = {}) {
    if (n_penalty < 0) throw SolveError("penalty coefficient must be nonnegative");
    std::vector<double> h = obstacle_table(spec, ens);
    if (opt.obstacle_shift != 0.0)
        for (double& v : h) v += opt.obstacle_shift;
    detail::require_terminal_dominates(terminal, h, ens.steps());
    BsdeOptions bo = opt;
    bo.penalty_obstacle = &h;
    bo.penalty_n = n_penalty;
    return solve_bsde(spec, ens, terminal, bo);
}

// ---------------------------------------------------------------------------
// binomial-tree optimal stopping oracle

// Recombining lattice after mapping the state through dx/ds = sigma(x); the
// s-lattice has spacing sqrt(dt) and up-probability (1 + sqrt(dt) mu_s)/2 with
// mu_s = m/sigma - sigma'/2, matching drift and variance locally. The value
// recursion is Y = max(h, cont + dt * (c_l + g(z))) with z read from the
// up/down spread. Scope: d = 1, time-independent dynamics, y-free generator
// vanishing at z = 0; controls pinned to the first grid entries.
inline double optimal_stopping_oracle(const ProblemSpec& spec, int tree_steps) {
    if (spec.d() != 1) throw SolveError("stopping oracle supports d = 1 only");
    if (tree_steps < 1) throw SolveError("stopping oracle needs at least one step");
    if (spec.drift[0].references(Var::t) || spec.sigma(0, 0).references(Var::t))
        throw SolveError("stopping oracle needs time-independent dynamics");
    if (spec.generator.references(Var::y))
        throw SolveError("stopping oracle supports y-free generators only");
    for (double t : {0.0, spec.horizon * 0.5, spec.horizon})
        if (std::fabs(spec.generator_scalar(t, 0.0, 0.0)) > 1e-12)
            throw SolveError("stopping oracle needs a generator vanishing at z = 0");

    const int N = tree_steps;
    const double T = spec.horizon;
    const double dt = T / N;
    const double sdt = std::sqrt(dt);
    const double u0 = spec.control_grid_u[0];
    const double v0 = spec.control_grid_v[0];

    auto sig = [&](double x) { return spec.sigma_at(0, 0, 0.0, &x, u0, v0); };
    auto drf = [&](double x) { return spec.drift_at(0, 0.0, &x, u0, v0); };

    // integrate the lattice coordinates outward from x0 with RK4 on dx/ds = sigma
    const int substeps = 16;
    std::vector<double> xs(2 * N + 1);  // index j + N for s = j * sdt
    xs[N] = spec.x0[0];
    auto rk4 = [&](double x, double hstep) {
        const double k1 = sig(x);
        const double k2 = sig(x + 0.5 * hstep * k1);
        const double k3 = sig(x + 0.5 * hstep * k2);
        const double k4 = sig(x + hstep * k3);
        return x + hstep * (k1 + 2 * k2 + 2 * k3 + k4) / 6.0;
    };
    for (int j = 0; j < N; ++j) {
        double up = xs[N + j], dn = xs[N - j];
        for (int ss = 0; ss < substeps; ++ss) up = rk4(up, sdt / substeps);
        for (int ss = 0; ss < substeps; ++ss) dn = rk4(dn, -sdt / substeps);
        xs[N + j + 1] = up;
        xs[N - j - 1] = dn;
    }

    std::vector<double> prob(2 * N + 1);
    for (int j = 0; j <= 2 * N; ++j) {
        const double x = xs[j];
        const double s = sig(x);
        if (!(s > 1e-12))
            throw SolveError("diffusion is not positive on the lattice (x = " + fmt_shortest(x) +
                             "); not lattice-compatible");
        const double delta = 1e-5 * (1.0 + std::fabs(x));
        const double sprime = (sig(x + delta) - sig(x - delta)) / (2 * delta);
        const double mu_s = drf(x) / s - 0.5 * sprime;
        const double p = 0.5 * (1.0 + sdt * mu_s);
        if (p < -0.02 || p > 1.02)
            throw SolveError("lattice probability " + fmt_shortest(p) + " out of range at x = " +
                             fmt_shortest(x) + "; refine the tree or reject the spec");
        prob[j] = std::clamp(p, 0.0, 1.0);
    }

    std::vector<double> val(N + 1);
    for (int i = 0; i <= N; ++i) {
        const double x = xs[2 * i - N + N];
        val[i] = spec.leader_terminal_at(&x);
    }
    for (int k = N - 1; k >= 0; --k) {
        const double t = T * k / N;
        for (int i = 0; i <= k; ++i) {
            const int j = 2 * i - k + N;  // lattice index of node (k, i)
            const double x = xs[j];
            const double p = prob[j];
            const double cont = p * val[i + 1] + (1 - p) * val[i];
            const double z = (val[i + 1] - val[i]) / (2 * sdt);
            const double c = spec.leader_cost_at(t, &x, u0);
            const double y = cont + dt * (c + spec.generator_scalar(t, cont, z));
            val[i] = std::max(spec.obstacle_at(t, &x), y);
        }
    }
    return val[0];
}

// ---------------------------------------------------------------------------
// diagnostics

struct DiagnosticsReport {
    double max_obstacle_violation = 0.0;   // max (h - Y)^+ over paths and steps
    double max_complementarity = 0.0;      // max over paths of sum_k (Y-h) dA
    double max_increment_gap = 0.0;        // worst |A_N - A_k  -  running max of (R_s - h_s)^-|
    double mean_increment_gap = 0.0;       // same, per-path worst averaged over paths
    double max_abs_y = 0.0;

    nlohmann::json to_json() const {
        return {{"max_obstacle_violation", max_obstacle_violation},
                {"max_complementarity", max_complementarity},
                {"max_increment_gap", max_increment_gap},
                {"mean_increment_gap", mean_increment_gap},
                {"max_abs_y", max_abs_y}};
    }
};

// The constrained solution should satisfy, per path,
//   A_N - A_k = max_{s in [k,N]} (R_s - h_s)^-
// where R_s = xi + sum_{j>=s} dt f_j - sum_{j>=s} Z_j dB_j rebuilds the value
// from the terminal without the pushes. Discretely the martingale part is
// only replicated up to projection residuals, so the gap shrinks with dt
// rather than vanishing.
inline DiagnosticsReport reflection_diagnostics(const ReflectedSolution& sol,
                                                const PathEnsemble& ens) {
    const int P = sol.n_paths;
    const int N = sol.steps;
    const int d = sol.dim;
    if (ens.paths() != P || ens.steps() != N || ens.dim != d)
        throw SolveError("diagnostics: ensemble does not match the solution");

    DiagnosticsReport rep;
    std::vector<double> worst(P, 0.0);
    std::vector<double> viol(P, 0.0), comp(P, 0.0), ymax(P, 0.0);
    parallel_for(P, [&](std::size_t lo, std::size_t hi) {
        for (int p = int(lo); p < int(hi); ++p) {
            for (int k = 0; k <= N; ++k) {
                viol[p] = std::max(viol[p], sol.h_at(p, k) - sol.y_at(p, k));
                ymax[p] = std::max(ymax[p], std::fabs(sol.y_at(p, k)));
            }
            double csum = 0;
            for (int k = 0; k < N; ++k)
                csum += (sol.y_at(p, k) - sol.h_at(p, k)) * (sol.a_at(p, k + 1) - sol.a_at(p, k));
            comp[p] = csum;

            // backward rebuild of R_s and the running max of (R_s - h_s)^-
            double R = sol.y_at(p, N);
            double runmax = std::max(sol.h_at(p, N) - R, 0.0);
            const double aN = sol.a_at(p, N);
            double gap = std::fabs(aN - sol.a_at(p, N) - runmax);  // s = N term
            for (int k = N - 1; k >= 0; --k) {
                double zdb = 0;
                for (int j = 0; j < d; ++j) zdb += sol.z_at(p, k)[j] * ens.db(p, k)[j];
                R += sol.driver_dt[std::size_t(p) * N + k] - zdb;
                runmax = std::max(runmax, std::max(sol.h_at(p, k) - R, 0.0));
                gap = std::max(gap, std::fabs((aN - sol.a_at(p, k)) - runmax));
            }
            worst[p] = gap;
        }
    });
    double mean_gap = 0;
    for (int p = 0; p < P; ++p) {
        rep.max_obstacle_violation = std::max(rep.max_obstacle_violation, std::max(viol[p], 0.0));
        rep.max_complementarity = std::max(rep.max_complementarity, std::fabs(comp[p]));
        rep.max_increment_gap = std::max(rep.max_increment_gap, worst[p]);
        rep.max_abs_y = std::max(rep.max_abs_y, ymax[p]);
        mean_gap += worst[p];
    }
    rep.mean_increment_gap = mean_gap / P;
    return rep;
}

// ---------------------------------------------------------------------------
// continuity in the data

struct Perturbation {
    double d_xi = 0.0;
    double d_driver = 0.0;
    double d_obstacle = 0.0;
};

struct StabilityLevel {
    double scale = 1.0;
    double sup_dY = 0.0;      // sup over paths and steps
    double sum_dZ2_dt = 0.0;  // mean over paths of sum_k |dZ|^2 dt
    double dA_T_sq = 0.0;     // mean over paths of (dA_N)^2
};

struct StabilityReport {
    std::vector<StabilityLevel> levels;  // scale halved per entry
    bool monotone = true;

    nlohmann::json to_json() const {
        auto arr = nlohmann::json::array();
        for (const auto& l : levels)
            arr.push_back({{"scale", l.scale},
                           {"sup_dY", l.sup_dY},
                           {"sum_dZ2_dt", l.sum_dZ2_dt},
                           {"dA_T_sq", l.dA_T_sq}});
        return {{"monotone", monotone}, {"levels", arr}};
    }
};

inline StabilityReport stability_probe(const ProblemSpec& spec, const PathEnsemble& ens,
                                       const std::vector<double>& terminal, Perturbation pert,
                                       int halvings = 4, const ReflectOptions& opt = {}) {
    for (double v : {pert.d_xi, pert.d_driver, pert.d_obstacle})
        if (std::fabs(v) > 1.0) throw SolveError("perturbation magnitudes must lie in [0, 1]");

    const ReflectedSolution base = solve_reflected(spec, ens, terminal, opt);
    const int P = base.n_paths, N = base.steps, d = base.dim;
    const double dt = ens.grid.dt();

    StabilityReport rep;
    double scale = 1.0;
    for (int level = 0; level <= halvings; ++level, scale *= 0.5) {
        ReflectOptions po = opt;
        po.skip_validation = true;
        po.driver_shift = opt.driver_shift + scale * pert.d_driver;
        po.obstacle_shift = opt.obstacle_shift + scale * pert.d_obstacle;
        std::vector<double> xi(terminal);
        for (double& v : xi) v += scale * pert.d_xi;
        const ReflectedSolution per = solve_reflected(spec, ens, xi, po);

        StabilityLevel lv;
        lv.scale = scale;
        for (int p = 0; p < P; ++p) {
            for (int k = 0; k <= N; ++k)
                lv.sup_dY = std::max(lv.sup_dY, std::fabs(per.y_at(p, k) - base.y_at(p, k)));
            double zacc = 0;
            for (int k = 0; k < N; ++k)
                for (int j = 0; j < d; ++j) {
                    const double dz = per.z_at(p, k)[j] - base.z_at(p, k)[j];
                    zacc += dz * dz * dt;
                }
            lv.sum_dZ2_dt += zacc;
            const double da = per.a_at(p, N) - base.a_at(p, N);
            lv.dA_T_sq += da * da;
        }
        lv.sum_dZ2_dt /= P;
        lv.dA_T_sq /= P;
        rep.levels.push_back(lv);
    }
    // metrics at rounding-noise scale count as zero, otherwise identical
    // reruns would flip the verdict on sign noise
    double ymax = 0;
    for (double v : base.Y) ymax = std::max(ymax, std::fabs(v));
    const double fy = 1e-10 * (1.0 + ymax);
    for (std::size_t i = 1; i < rep.levels.size(); ++i) {
        const auto& a = rep.levels[i - 1];
        const auto& b = rep.levels[i];
        const bool ok = (b.sup_dY <= a.sup_dY || b.sup_dY <= fy) &&
                        (b.sum_dZ2_dt <= a.sum_dZ2_dt || b.sum_dZ2_dt <= fy * fy) &&
                        (b.dA_T_sq <= a.dA_T_sq || b.dA_T_sq <= fy * fy);
        if (!ok) rep.monotone = false;
    }
    return rep;
}

}  // namespace hierisk
