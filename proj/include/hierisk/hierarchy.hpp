#pragma once
// Couples the two grid equations into a single Stackelberg solve, plus the
// checks that close the loop: a dynamic-programming split test, an
// acceptability verdict for the start point, and Monte Carlo verification of
// both value fields under the recorded policies.
//
// How the leader's control enters the follower's equation is the one choice
// the grid module left open. The coupled sweep answers it pointwise: at each
// node the follower's best reply v*(u) is computed against the follower
// field for every u, the leader then picks u* against the leader field with
// v*(u) substituted, and both fields advance one step with the same pair
// (u*, v*(u*)). The fixed-point mode solves the same system by alternating
// full single-agent sweeps; it is kept as an independent algorithmic path
// for cross-checks, and a policy that fails to settle is reported rather
// than hidden.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsde.hpp"
#include "hjbgrid.hpp"
#include "problem.hpp"
#include "rbsde.hpp"
#include "sde.hpp"

namespace hierisk {

enum class StackelbergMode { coupled, fixed_point };

struct IterationRecord {
    int iteration = 0;
    double changed = 0.0;  // fraction of leader policy entries that flipped
};

struct StackelbergSolution {
    ValueField leader_value;
    ValueField follower_value;
    // Both policies record the same equilibrium pair per node: u* for the
    // leader, v*(u*) for the follower. Kept separate so each consumer reads
    // the field named for it.
    PolicyField leader_policy;
    PolicyField follower_policy;
    BestResponseTable response;
    ValueField reflection_residual;  // amount projection pushed onto the leader field
    std::vector<IterationRecord> iterations;  // fixed_point passes; empty when coupled
    bool converged = true;
};

inline StackelbergSolution stackelberg_solve(const ProblemSpec& spec, const TimeGrid& tg,
                                             const SpaceGrid& sg,
                                             StackelbergMode mode = StackelbergMode::coupled,
                                             int max_iters = 50, double tol_policy = 0.0,
                                             bool skip_validation = false) {
    require_valid(spec, skip_validation);
    detail::require_cfl(spec, tg, sg);
    if (max_iters < 1) throw SolveError("max_iters must be at least 1");
    if (tol_policy < 0.0 || tol_policy >= 1.0)
        throw SolveError("tol_policy must lie in [0, 1)");

    StackelbergSolution sol;

    if (mode == StackelbergMode::fixed_point) {
        // Bootstrap with the first leader control, then alternate full
        // single-agent sweeps until the leader policy settles.
        auto fol = solve_follower_hjb(spec, tg, sg, LeaderControl::fixed(0), skip_validation);
        auto lead = solve_leader_obstacle(spec, tg, sg, fol.response, fol.value, skip_validation);
        sol.iterations.push_back({0, 1.0});
        double last_changed = 1.0;
        for (int it = 1; it < max_iters && last_changed > tol_policy; ++it) {
            const std::vector<std::uint16_t> prev_u = lead.policy.u;
            fol = solve_follower_hjb(spec, tg, sg, LeaderControl::from_field(&lead.policy),
                                     skip_validation);
            lead = solve_leader_obstacle(spec, tg, sg, fol.response, fol.value, skip_validation);
            long flips = 0;
            for (std::size_t i = 0; i < prev_u.size(); ++i)
                if (prev_u[i] != lead.policy.u[i]) ++flips;
            last_changed = double(flips) / double(prev_u.size());
            sol.iterations.push_back({it, last_changed});
        }
        sol.converged = last_changed <= tol_policy;
        if (last_changed > 0.0) {
            // The last follower pass ran against a superseded leader policy;
            // re-align so the returned pair is internally consistent.
            fol = solve_follower_hjb(spec, tg, sg, LeaderControl::from_field(&lead.policy),
                                     skip_validation);
        }
        sol.follower_value = std::move(fol.value);
        sol.response = std::move(fol.response);
        sol.leader_policy = fol.policy;
        sol.follower_policy = std::move(fol.policy);
        sol.leader_value = std::move(lead.value);
        sol.reflection_residual = std::move(lead.projection);
        return sol;
    }

    const int N = tg.steps;
    const int M = sg.nodes;
    const int nu = int(spec.control_grid_u.size());
    const int nv = int(spec.control_grid_v.size());
    const double dt = tg.dt();
    const double dx = sg.dx();

    sol.follower_value.grid = tg;
    sol.follower_value.space = sg;
    sol.follower_value.values.resize(std::size_t(N + 1) * M);
    sol.follower_value.equation = "follower";
    sol.follower_value.policy_note = "coupled sweep";
    sol.leader_value = sol.follower_value;
    sol.leader_value.equation = "leader";
    sol.reflection_residual = sol.leader_value;
    sol.reflection_residual.equation = "leader_projection";
    std::fill(sol.reflection_residual.values.begin(), sol.reflection_residual.values.end(), 0.0);
    sol.leader_policy.steps = N;
    sol.leader_policy.nodes = M;
    sol.leader_policy.u.resize(std::size_t(N) * M);
    sol.leader_policy.v.resize(std::size_t(N) * M);
    sol.response.steps = N;
    sol.response.nodes = M;
    sol.response.n_u = nu;
    sol.response.v_of_u.resize(std::size_t(N) * M * nu);

    for (int j = 0; j < M; ++j) {
        const double x = sg.x(j);
        const double psi = spec.leader_terminal_at(&x);
        const double hT = spec.obstacle_at(tg.horizon, &x);
        if (hT > psi + 1e-12 * (1.0 + std::fabs(psi)))
            throw SolveError("obstacle exceeds the terminal value at x = " + fmt_shortest(x));
        sol.leader_value.at(N, j) = psi;
        sol.follower_value.at(N, j) = spec.follower_terminal_at(&x);
    }

    for (int k = N - 1; k >= 0; --k) {
        const double t = tg.t(k);
        const double* fprev = sol.follower_value.slice(k + 1);
        const double* lprev = sol.leader_value.slice(k + 1);
        double* fcur = sol.follower_value.slice(k);
        double* lcur = sol.leader_value.slice(k);
        parallel_for(M - 2, [&](std::size_t lo, std::size_t hi) {
            std::vector<double> f_best(nu);
            std::vector<int> v_star(nu);
            for (int j = int(lo) + 1; j < int(hi) + 1; ++j) {
                const double x = sg.x(j);
                for (int iu = 0; iu < nu; ++iu) {
                    const double uc = spec.control_grid_u[iu];
                    double best = std::numeric_limits<double>::infinity();
                    int best_iv = 0;
                    for (int iv = 0; iv < nv; ++iv) {
                        const double vc = spec.control_grid_v[iv];
                        const double sig = spec.sigma_at(0, 0, t, &x, uc, vc);
                        const double m = spec.drift_at(0, t, &x, uc, vc);
                        const double z = detail::central_z(sig, fprev, j, dx);
                        const double ham =
                            detail::upwind_generator(sig * sig, m, fprev, j, dx) +
                            spec.follower_cost_at(t, &x, vc) +
                            spec.generator_at(t, fprev[j], &z);
                        const double val = fprev[j] + dt * ham;
                        if (val < best) {
                            best = val;
                            best_iv = iv;
                        }
                    }
                    f_best[iu] = best;
                    v_star[iu] = best_iv;
                    sol.response.v_of_u[(std::size_t(k) * M + j) * nu + iu] =
                        std::uint16_t(best_iv);
                }
                double lbest = std::numeric_limits<double>::infinity();
                int lbest_iu = 0;
                for (int iu = 0; iu < nu; ++iu) {
                    const double uc = spec.control_grid_u[iu];
                    const double vc = spec.control_grid_v[v_star[iu]];
                    const double sig = spec.sigma_at(0, 0, t, &x, uc, vc);
                    const double m = spec.drift_at(0, t, &x, uc, vc);
                    const double z = detail::central_z(sig, lprev, j, dx);
                    const double ham = detail::upwind_generator(sig * sig, m, lprev, j, dx) +
                                       spec.leader_cost_at(t, &x, uc) +
                                       spec.generator_at(t, lprev[j], &z);
                    const double val = lprev[j] + dt * ham;
                    if (val < lbest) {
                        lbest = val;
                        lbest_iu = iu;
                    }
                }
                if (!std::isfinite(lbest) || !std::isfinite(f_best[lbest_iu]))
                    throw SolveError("coupled update non-finite at step " + std::to_string(k) +
                                     " node " + std::to_string(j));
                fcur[j] = f_best[lbest_iu];
                const double h = spec.obstacle_at(t, &x);
                const double lifted = std::max(lbest, h);
                lcur[j] = lifted;
                sol.reflection_residual.at(k, j) = lifted - lbest;
                sol.leader_policy.u[std::size_t(k) * M + j] = std::uint16_t(lbest_iu);
                sol.leader_policy.v[std::size_t(k) * M + j] = std::uint16_t(v_star[lbest_iu]);
            }
        });
        detail::extrapolate_boundary(fcur, M);
        detail::extrapolate_boundary(lcur, M);
        for (int j = 0; j < M; j += M - 1) {
            const double x = sg.x(j);
            const double h = spec.obstacle_at(t, &x);
            if (lcur[j] < h) {
                sol.reflection_residual.at(k, j) = h - lcur[j];
                lcur[j] = h;
            }
            const int src = j == 0 ? 1 : M - 2;
            sol.leader_policy.u[std::size_t(k) * M + j] =
                sol.leader_policy.u[std::size_t(k) * M + src];
            sol.leader_policy.v[std::size_t(k) * M + j] =
                sol.leader_policy.v[std::size_t(k) * M + src];
            for (int iu = 0; iu < nu; ++iu)
                sol.response.v_of_u[(std::size_t(k) * M + j) * nu + iu] =
                    sol.response.v_of_u[(std::size_t(k) * M + src) * nu + iu];
        }
    }
    sol.follower_policy = sol.leader_policy;
    sol.converged = true;
    return sol;
}

// ---------------------------------------------------------------------------
// dynamic-programming split check

struct DppReport {
    double split_t = 0.0;
    int split_index = 0;
    double max_difference = 0.0;  // recomposed vs direct, over all slices and nodes

    nlohmann::json to_json() const {
        return {{"split_t", split_t},
                {"split_index", split_index},
                {"max_difference", max_difference}};
    }
};

// Re-solves the follower problem on [split, T], then on [0, split] with the
// sub-solution's split slice injected as terminal data. Backward induction
// composes, so the recomposition must reproduce the direct solve; a nonzero
// difference means time indexing or terminal handling is broken. Both
// sub-sweeps evaluate coefficients at absolute times.
inline DppReport dpp_check(const ProblemSpec& spec, const TimeGrid& tg, const SpaceGrid& sg,
                           const StackelbergSolution& sol, double split_t) {
    const int N = tg.steps;
    const int M = sg.nodes;
    if (sol.leader_policy.steps != N || sol.leader_policy.nodes != M)
        throw SolveError("solution grids do not match");
    const int k_split = int(std::lround(split_t / tg.horizon * N));
    if (k_split < 1 || k_split > N ||
        std::fabs(tg.t(std::min(k_split, N)) - split_t) > 1e-9 * std::max(1.0, tg.horizon))
        throw SolveError("split time " + fmt_shortest(split_t) +
                         " is not a grid node in (0, T]");

    const LeaderControl leader = LeaderControl::from_field(&sol.leader_policy);
    const FollowerGridSolution direct = solve_follower_hjb(spec, tg, sg, leader);

    ValueField recomposed = direct.value;
    PolicyField pol = direct.policy;
    BestResponseTable resp = direct.response;
    for (int j = 0; j < M; ++j) {
        const double x = sg.x(j);
        recomposed.at(N, j) = spec.follower_terminal_at(&x);
    }
    detail::follower_range(spec, tg, sg, leader, k_split, N, recomposed, pol, resp);
    // slice k_split now holds the tail solve; the head sweep reads it as its
    // terminal data, which is exactly the composition under test
    detail::follower_range(spec, tg, sg, leader, 0, k_split, recomposed, pol, resp);

    DppReport rep;
    rep.split_t = split_t;
    rep.split_index = k_split;
    for (std::size_t i = 0; i < recomposed.values.size(); ++i)
        rep.max_difference = std::max(
            rep.max_difference, std::fabs(recomposed.values[i] - direct.value.values[i]));
    return rep;
}

// ---------------------------------------------------------------------------
// argmin certificates

struct CertificateReport {
    long nodes_checked = 0;
    long follower_failures = 0;     // recorded reply not the lowest-index argmin
    long leader_failures = 0;       // a u-swap beats or lowest-index-ties the recorded u*
    long consistency_failures = 0;  // follower policy disagrees with response[u*]

    bool pass() const {
        return follower_failures == 0 && leader_failures == 0 && consistency_failures == 0;
    }
    nlohmann::json to_json() const {
        return {{"nodes_checked", nodes_checked},
                {"follower_failures", follower_failures},
                {"leader_failures", leader_failures},
                {"consistency_failures", consistency_failures},
                {"pass", pass()}};
    }
};

// Brute-force re-check of every recorded argmin. The Hamiltonians are
// re-evaluated with the same arithmetic the sweep used, so the comparison is
// exact: any disagreement is an indexing bug, not roundoff. Interior nodes
// only; boundary entries mirror their neighbor by construction.
inline CertificateReport argmin_certificates(const ProblemSpec& spec, const TimeGrid& tg,
                                             const SpaceGrid& sg,
                                             const StackelbergSolution& sol) {
    const int N = tg.steps;
    const int M = sg.nodes;
    const int nu = int(spec.control_grid_u.size());
    const int nv = int(spec.control_grid_v.size());
    const double dt = tg.dt();
    const double dx = sg.dx();
    if (sol.leader_policy.steps != N || sol.leader_policy.nodes != M ||
        sol.follower_value.steps() != N || sol.leader_value.steps() != N)
        throw SolveError("solution grids do not match");

    CertificateReport rep;
    std::vector<long> fol_fail(std::size_t(N), 0), led_fail(std::size_t(N), 0),
        con_fail(std::size_t(N), 0);
    parallel_for(N, [&](std::size_t klo, std::size_t khi) {
        std::vector<double> lval(nu);
        std::vector<int> v_star(nu);
        for (int k = int(klo); k < int(khi); ++k) {
            const double t = tg.t(k);
            const double* fprev = sol.follower_value.slice(k + 1);
            const double* lprev = sol.leader_value.slice(k + 1);
            for (int j = 1; j < M - 1; ++j) {
                const double x = sg.x(j);
                for (int iu = 0; iu < nu; ++iu) {
                    const double uc = spec.control_grid_u[iu];
                    double best = std::numeric_limits<double>::infinity();
                    int best_iv = 0;
                    for (int iv = 0; iv < nv; ++iv) {
                        const double vc = spec.control_grid_v[iv];
                        const double sig = spec.sigma_at(0, 0, t, &x, uc, vc);
                        const double m = spec.drift_at(0, t, &x, uc, vc);
                        const double z = detail::central_z(sig, fprev, j, dx);
                        const double ham =
                            detail::upwind_generator(sig * sig, m, fprev, j, dx) +
                            spec.follower_cost_at(t, &x, vc) +
                            spec.generator_at(t, fprev[j], &z);
                        const double val = fprev[j] + dt * ham;
                        if (val < best) {
                            best = val;
                            best_iv = iv;
                        }
                    }
                    v_star[iu] = best_iv;
                    if (sol.response.at(k, j, iu) != best_iv) ++fol_fail[k];
                }
                for (int iu = 0; iu < nu; ++iu) {
                    const double uc = spec.control_grid_u[iu];
                    const double vc = spec.control_grid_v[v_star[iu]];
                    const double sig = spec.sigma_at(0, 0, t, &x, uc, vc);
                    const double m = spec.drift_at(0, t, &x, uc, vc);
                    const double z = detail::central_z(sig, lprev, j, dx);
                    const double ham = detail::upwind_generator(sig * sig, m, lprev, j, dx) +
                                       spec.leader_cost_at(t, &x, uc) +
                                       spec.generator_at(t, lprev[j], &z);
                    lval[iu] = lprev[j] + dt * ham;
                }
                const int ru = sol.leader_policy.u_at(k, j);
                for (int iu = 0; iu < nu; ++iu) {
                    if (lval[iu] < lval[ru] || (iu < ru && lval[iu] == lval[ru])) {
                        ++led_fail[k];
                        break;
                    }
                }
                if (sol.follower_policy.v_at(k, j) != sol.response.at(k, j, ru)) ++con_fail[k];
            }
        }
    });
    for (int k = 0; k < N; ++k) {
        rep.follower_failures += fol_fail[k];
        rep.leader_failures += led_fail[k];
        rep.consistency_failures += con_fail[k];
    }
    rep.nodes_checked = long(N) * (M - 2);
    return rep;
}

// ---------------------------------------------------------------------------
// acceptability of the start point

struct AcceptabilityReport {
    bool accept = false;
    double max_terminal_violation = 0.0;  // max over paths of (h(T, X_T) - terminal payoff)^+
    long violating_paths = 0;
    double max_obstacle_violation = 0.0;  // from the pathwise reflected diagnostics
    double max_complementarity = 0.0;
    double max_abs_y = 0.0;
    std::string note;

    nlohmann::json to_json() const {
        return {{"accept", accept},
                {"max_terminal_violation", max_terminal_violation},
                {"violating_paths", violating_paths},
                {"max_obstacle_violation", max_obstacle_violation},
                {"max_complementarity", max_complementarity},
                {"max_abs_y", max_abs_y},
                {"note", note}};
    }
};

// Control rule that looks the recorded pair up at the nearest grid node.
// The references must outlive the returned rule.
inline ControlRule policy_rule(const StackelbergSolution& sol, const SpaceGrid& sg) {
    return [&sol, &sg](int, int k, const double* x) {
        const int j = sg.nearest(x[0]);
        return std::make_pair(sol.leader_policy.u_at(k, j), sol.follower_policy.v_at(k, j));
    };
}

// Decides whether the start point is acceptable: the terminal constraint
// must hold on every simulated path, and the pathwise reflected solve under
// the fixed policies must satisfy the discrete complementarity bounds. The
// terminal check runs first so an infeasible spec yields a reject verdict
// instead of a solver throw.
inline AcceptabilityReport controllability_check(const ProblemSpec& spec, const TimeGrid& tg,
                                                 const SpaceGrid& sg,
                                                 const StackelbergSolution& sol,
                                                 const PathEnsemble& ens) {
    const int N = tg.steps;
    if (ens.grid.steps != N || ens.grid.horizon != tg.horizon)
        throw SolveError("ensemble grid does not match");
    if (sol.leader_policy.steps != N || sol.leader_policy.nodes != sg.nodes)
        throw SolveError("solution grids do not match");
    for (int p = 0; p < ens.paths(); ++p)
        for (int k = 0; k < N; ++k) {
            const int j = sg.nearest(ens.x(p, k)[0]);
            if (ens.u_at(p, k) != sol.leader_policy.u_at(k, j) ||
                ens.v_at(p, k) != sol.follower_policy.v_at(k, j))
                throw SolveError("ensemble controls do not match the recorded policies at path " +
                                 std::to_string(p) + " step " + std::to_string(k));
        }

    AcceptabilityReport rep;
    for (int p = 0; p < ens.paths(); ++p) {
        const double* xT = ens.x(p, N);
        const double psi = spec.leader_terminal_at(xT);
        const double viol = spec.obstacle_at(tg.horizon, xT) - psi;
        if (viol > 1e-12 * (1.0 + std::fabs(psi))) {
            ++rep.violating_paths;
            rep.max_terminal_violation = std::max(rep.max_terminal_violation, viol);
        }
    }
    if (rep.violating_paths > 0) {
        rep.note = "terminal constraint fails on " + std::to_string(rep.violating_paths) +
                   " of " + std::to_string(ens.paths()) + " paths";
        return rep;
    }

    ReflectOptions opt;
    const std::vector<double> cost = running_cost_table(spec, ens, true);
    opt.running_cost = &cost;
    const std::vector<double> terminal = terminal_table(spec, ens, true);
    const ReflectedSolution ref = solve_reflected(spec, ens, terminal, opt);
    const DiagnosticsReport diag = reflection_diagnostics(ref, ens);
    rep.max_obstacle_violation = diag.max_obstacle_violation;
    rep.max_complementarity = diag.max_complementarity;
    rep.max_abs_y = diag.max_abs_y;
    rep.accept = diag.max_obstacle_violation <= 1e-9 * (1.0 + diag.max_abs_y) &&
                 std::fabs(diag.max_complementarity) <= 1e-6 * std::max(1.0, diag.max_abs_y);
    if (!rep.accept) rep.note = "discrete complementarity out of tolerance";
    return rep;
}

// ---------------------------------------------------------------------------
// Monte Carlo verification

struct VerificationReport {
    double follower_grid = 0.0;
    double follower_mc = 0.0;
    double follower_se = 0.0;
    double leader_grid = 0.0;
    double leader_mc = 0.0;
    double leader_se = 0.0;

    double follower_gap() const { return follower_mc - follower_grid; }
    double leader_gap() const { return leader_mc - leader_grid; }
    nlohmann::json to_json() const {
        return {{"follower",
                 {{"grid", follower_grid},
                  {"mc", follower_mc},
                  {"se", follower_se},
                  {"gap", follower_gap()}}},
                {"leader",
                 {{"grid", leader_grid},
                  {"mc", leader_mc},
                  {"se", leader_se},
                  {"gap", leader_gap()}}}};
    }
};

// Closes the loop between the two numerical routes: simulate under the
// recorded policies, price both cost streams by regression Monte Carlo on
// the same time grid, and compare against the grid fields at the anchor.
inline VerificationReport verify_by_simulation(const ProblemSpec& spec, const TimeGrid& tg,
                                               const SpaceGrid& sg,
                                               const StackelbergSolution& sol, int n_paths,
                                               std::uint64_t seed) {
    if (sol.leader_policy.steps != tg.steps || sol.leader_policy.nodes != sg.nodes)
        throw SolveError("solution grids do not match");
    const PathEnsemble ens = simulate_paths(spec, tg, n_paths, seed, policy_rule(sol, sg));

    VerificationReport rep;
    rep.follower_grid = sol.follower_value.at(0, sg.anchor_index);
    rep.leader_grid = sol.leader_value.at(0, sg.anchor_index);
    {
        BsdeOptions opt;
        const std::vector<double> cost = running_cost_table(spec, ens, false);
        opt.running_cost = &cost;
        const BsdeResult r = solve_bsde(spec, ens, terminal_table(spec, ens, false), opt);
        rep.follower_mc = r.y0;
        rep.follower_se = r.se0;
    }
    {
        ReflectOptions opt;
        const std::vector<double> cost = running_cost_table(spec, ens, true);
        opt.running_cost = &cost;
        const ReflectedSolution r = solve_reflected(spec, ens, terminal_table(spec, ens, true), opt);
        rep.leader_mc = r.y0;
        rep.leader_se = r.se0;
    }
    return rep;
}

}  // namespace hierisk
