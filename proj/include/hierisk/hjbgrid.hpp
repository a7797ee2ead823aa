#pragma once

// Monotone explicit finite differences on a 1-d space grid: the follower's
// HJB sweep with per-node control minimization, the leader's obstacle sweep
// driven by the follower's best-response table, the penalized variant of the
// obstacle sweep, and interior residual diagnostics.
//
// Scheme conventions, used consistently everywhere:
//   - upwind first differences (forward for m >= 0, backward for m < 0),
//     central second difference, z = D_phi * sigma with a central difference;
//   - explicit Euler backward in time, coefficients and costs evaluated at
//     the left endpoint t_k while differencing the k+1 slice;
//   - zero-second-derivative boundary closure (linear extrapolation);
//   - argmin ties resolved to the lowest control index.
// Under the CFL guard dt <= 0.9 dx^2 / (max a + dx max|m|) the interior
// update is a convex combination of neighbor values plus dt-scaled sources,
// which is what the comparison and monotonicity tests lean on.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hierisk/common.hpp"
#include "hierisk/parallel.hpp"
#include "hierisk/problem.hpp"

namespace hierisk {

struct ValueField {
    TimeGrid grid;
    SpaceGrid space;
    std::vector<double> values;  // (k, j) row-major, (steps+1) x nodes
    std::string equation;        // "follower", "leader", "leader_penalized"
    std::string policy_note;

    int steps() const { return grid.steps; }
    int nodes() const { return space.nodes; }
    double at(int k, int j) const { return values[std::size_t(k) * space.nodes + j]; }
    double& at(int k, int j) { return values[std::size_t(k) * space.nodes + j]; }
    const double* slice(int k) const { return &values[std::size_t(k) * space.nodes]; }
    double* slice(int k) { return &values[std::size_t(k) * space.nodes]; }
};

struct PolicyField {
    int steps = 0;
    int nodes = 0;
    std::vector<std::uint16_t> u;  // (k, j), empty when not applicable
    std::vector<std::uint16_t> v;

    int u_at(int k, int j) const { return u[std::size_t(k) * nodes + j]; }
    int v_at(int k, int j) const { return v[std::size_t(k) * nodes + j]; }
};

// minimizing v index for every (step, node, u index)
struct BestResponseTable {
    int steps = 0;
    int nodes = 0;
    int n_u = 0;
    std::vector<std::uint16_t> v_of_u;

    int at(int k, int j, int iu) const {
        return v_of_u[(std::size_t(k) * nodes + j) * n_u + iu];
    }
};

// ---------------------------------------------------------------------------
// CFL bookkeeping

struct CflBound {
    double max_a = 0.0;
    double max_abs_m = 0.0;
    double dx = 0.0;
    double dt_max = 0.0;
};

inline CflBound cfl_bound(const ProblemSpec& spec, const SpaceGrid& sg, double horizon) {
    CflBound b;
    b.dx = sg.dx();
    for (double t : {0.0, 0.5 * horizon, horizon})
        for (int j = 0; j < sg.nodes; ++j) {
            const double x = sg.x(j);
            for (double uc : spec.control_grid_u)
                for (double vc : spec.control_grid_v) {
                    const double sig = spec.sigma_at(0, 0, t, &x, uc, vc);
                    const double m = spec.drift_at(0, t, &x, uc, vc);
                    b.max_a = std::max(b.max_a, sig * sig);
                    b.max_abs_m = std::max(b.max_abs_m, std::fabs(m));
                }
        }
    const double denom = b.max_a + b.dx * b.max_abs_m;
    b.dt_max = denom > 0 ? 0.9 * b.dx * b.dx / denom : std::numeric_limits<double>::infinity();
    return b;
}

inline int cfl_steps(const ProblemSpec& spec, const SpaceGrid& sg, double horizon) {
    const CflBound b = cfl_bound(spec, sg, horizon);
    if (!std::isfinite(b.dt_max)) return 1;
    return std::max(1, int(std::ceil(horizon / b.dt_max)));
}

namespace detail {

inline void require_cfl(const ProblemSpec& spec, const TimeGrid& tg, const SpaceGrid& sg) {
    const CflBound b = cfl_bound(spec, sg, tg.horizon);
    if (tg.dt() > b.dt_max)
        throw SolveError("CFL violation: dt = " + fmt_shortest(tg.dt()) + " exceeds " +
                         fmt_shortest(b.dt_max) + "; use at least " +
                         std::to_string(cfl_steps(spec, sg, tg.horizon)) + " steps");
    if (spec.d() != 1) throw SolveError("grid solvers support d = 1 only");
    if (int(spec.control_grid_u.size()) > 65535 || int(spec.control_grid_v.size()) > 65535)
        throw SolveError("control grids larger than 65535 are not supported");
}

// 1/2 a D2 + m D1 on a slice, upwind in the drift
inline double upwind_generator(double a, double m, const double* s, int j, double dx) {
    const double d2 = (s[j + 1] - 2 * s[j] + s[j - 1]) / (dx * dx);
    const double d1 = m >= 0 ? (s[j + 1] - s[j]) / dx : (s[j] - s[j - 1]) / dx;
    return 0.5 * a * d2 + m * d1;
}

inline double central_z(double sig, const double* s, int j, double dx) {
    return sig * (s[j + 1] - s[j - 1]) / (2 * dx);
}

inline void extrapolate_boundary(double* s, int M) {
    s[0] = 2 * s[1] - s[2];
    s[M - 1] = 2 * s[M - 2] - s[M - 3];
}

}  // namespace detail

// second-order part of the operator at one interior node of slice k
inline double apply_generator(const ProblemSpec& spec, const ValueField& f, int k, int j,
                              double uc, double vc) {
    if (j < 1 || j > f.nodes() - 2) throw SolveError("generator needs an interior node");
    const double t = f.grid.t(k);
    const double x = f.space.x(j);
    const double sig = spec.sigma_at(0, 0, t, &x, uc, vc);
    const double m = spec.drift_at(0, t, &x, uc, vc);
    return detail::upwind_generator(sig * sig, m, f.slice(k), j, f.space.dx());
}

// ---------------------------------------------------------------------------
// follower sweep

struct LeaderControl {
    const PolicyField* field = nullptr;
    int fixed_index = 0;

    static LeaderControl fixed(int iu) { return LeaderControl{nullptr, iu}; }
    static LeaderControl from_field(const PolicyField* pf) { return LeaderControl{pf, 0}; }
};

struct FollowerGridSolution {
    ValueField value;
    PolicyField policy;
    BestResponseTable response;
};

namespace detail {

// Backward sweep over steps [k_lo, k_hi): slice k_hi must already be filled.
// Shared by the full solve and the dynamic-programming split check, which
// re-runs it on sub-ranges with injected terminal data at absolute times.
inline void follower_range(const ProblemSpec& spec, const TimeGrid& tg, const SpaceGrid& sg,
                           LeaderControl leader, int k_lo, int k_hi, ValueField& value,
                           PolicyField& policy, BestResponseTable& response) {
    const int M = sg.nodes;
    const int nu = int(spec.control_grid_u.size());
    const int nv = int(spec.control_grid_v.size());
    const double dt = tg.dt();
    const double dx = sg.dx();
    for (int k = k_hi - 1; k >= k_lo; --k) {
        const double t = tg.t(k);
        const double* prev = value.slice(k + 1);
        double* cur = value.slice(k);
        parallel_for(M - 2, [&](std::size_t lo, std::size_t hi) {
            for (int j = int(lo) + 1; j < int(hi) + 1; ++j) {
                const double x = sg.x(j);
                const int iu_used =
                    leader.field ? leader.field->u_at(k, j) : leader.fixed_index;
                double used_val = 0;
                for (int iu = 0; iu < nu; ++iu) {
                    const double uc = spec.control_grid_u[iu];
                    double best = std::numeric_limits<double>::infinity();
                    int best_iv = 0;
                    for (int iv = 0; iv < nv; ++iv) {
                        const double vc = spec.control_grid_v[iv];
                        const double sig = spec.sigma_at(0, 0, t, &x, uc, vc);
                        const double m = spec.drift_at(0, t, &x, uc, vc);
                        const double z = detail::central_z(sig, prev, j, dx);
                        const double ham = detail::upwind_generator(sig * sig, m, prev, j, dx) +
                                           spec.follower_cost_at(t, &x, vc) +
                                           spec.generator_at(t, prev[j], &z);
                        const double val = prev[j] + dt * ham;
                        if (val < best) {
                            best = val;
                            best_iv = iv;
                        }
                    }
                    response.v_of_u[(std::size_t(k) * M + j) * nu + iu] =
                        std::uint16_t(best_iv);
                    if (iu == iu_used) used_val = best;
                }
                if (!std::isfinite(used_val))
                    throw SolveError("follower update non-finite at step " + std::to_string(k) +
                                     " node " + std::to_string(j));
                cur[j] = used_val;
                policy.u[std::size_t(k) * M + j] = std::uint16_t(iu_used);
                policy.v[std::size_t(k) * M + j] =
                    response.v_of_u[(std::size_t(k) * M + j) * nu + iu_used];
            }
        });
        detail::extrapolate_boundary(cur, M);
        // boundary policies mirror the nearest interior node
        policy.u[std::size_t(k) * M] = policy.u[std::size_t(k) * M + 1];
        policy.v[std::size_t(k) * M] = policy.v[std::size_t(k) * M + 1];
        policy.u[std::size_t(k) * M + M - 1] = policy.u[std::size_t(k) * M + M - 2];
        policy.v[std::size_t(k) * M + M - 1] = policy.v[std::size_t(k) * M + M - 2];
        for (int j = 0; j < M; j += M - 1)
            for (int iu = 0; iu < nu; ++iu)
                response.v_of_u[(std::size_t(k) * M + j) * nu + iu] =
                    response.v_of_u[(std::size_t(k) * M + (j == 0 ? 1 : M - 2)) * nu + iu];
    }
}

}  // namespace detail

inline FollowerGridSolution solve_follower_hjb(const ProblemSpec& spec, const TimeGrid& tg,
                                               const SpaceGrid& sg, LeaderControl leader = {},
                                               bool skip_validation = false) {
    require_valid(spec, skip_validation);
    detail::require_cfl(spec, tg, sg);
    const int N = tg.steps;
    const int M = sg.nodes;
    const int nu = int(spec.control_grid_u.size());
    if (leader.field) {
        if (leader.field->steps != N || leader.field->nodes != M)
            throw SolveError("leader policy grids do not match");
    } else if (leader.fixed_index < 0 || leader.fixed_index >= nu) {
        throw SolveError("fixed leader control index out of range");
    }

    FollowerGridSolution out;
    out.value.grid = tg;
    out.value.space = sg;
    out.value.values.resize(std::size_t(N + 1) * M);
    out.value.equation = "follower";
    out.value.policy_note = leader.field ? "leader policy field" : "fixed leader control";
    out.policy.steps = N;
    out.policy.nodes = M;
    out.policy.u.resize(std::size_t(N) * M);
    out.policy.v.resize(std::size_t(N) * M);
    out.response.steps = N;
    out.response.nodes = M;
    out.response.n_u = nu;
    out.response.v_of_u.resize(std::size_t(N) * M * nu);

    for (int j = 0; j < M; ++j) {
        const double x = sg.x(j);
        out.value.at(N, j) = spec.follower_terminal_at(&x);
    }
    detail::follower_range(spec, tg, sg, leader, 0, N, out.value, out.policy, out.response);
    return out;
}

// ---------------------------------------------------------------------------
// leader obstacle sweep

struct LeaderGridSolution {
    ValueField value;
    PolicyField policy;
    ValueField projection;  // amount added by each max(phi, h), the discrete A-increments
};

inline LeaderGridSolution solve_leader_obstacle(const ProblemSpec& spec, const TimeGrid& tg,
                                                const SpaceGrid& sg,
                                                const BestResponseTable& response,
                                                const ValueField& follower_value,
                                                bool skip_validation = false) {
    require_valid(spec, skip_validation);
    detail::require_cfl(spec, tg, sg);
    const int N = tg.steps;
    const int M = sg.nodes;
    const int nu = int(spec.control_grid_u.size());
    const double dt = tg.dt();
    const double dx = sg.dx();
    if (response.steps != N || response.nodes != M || response.n_u != nu)
        throw SolveError("best-response table does not match the grids");
    if (follower_value.steps() != N || follower_value.nodes() != M)
        throw SolveError("follower value field does not match the grids");

    LeaderGridSolution out;
    out.value.grid = tg;
    out.value.space = sg;
    out.value.values.resize(std::size_t(N + 1) * M);
    out.value.equation = "leader";
    out.value.policy_note = "best-response follower";
    out.projection = out.value;
    out.projection.equation = "leader_projection";
    std::fill(out.projection.values.begin(), out.projection.values.end(), 0.0);
    out.policy.steps = N;
    out.policy.nodes = M;
    out.policy.u.resize(std::size_t(N) * M);
    out.policy.v.resize(std::size_t(N) * M);

    for (int j = 0; j < M; ++j) {
        const double x = sg.x(j);
        const double psi = spec.leader_terminal_at(&x);
        const double hT = spec.obstacle_at(tg.horizon, &x);
        if (hT > psi + 1e-12 * (1.0 + std::fabs(psi)))
            throw SolveError("obstacle exceeds the terminal value at x = " + fmt_shortest(x));
        out.value.at(N, j) = psi;
    }

    for (int k = N - 1; k >= 0; --k) {
        const double t = tg.t(k);
        const double* prev = out.value.slice(k + 1);
        double* cur = out.value.slice(k);
        parallel_for(M - 2, [&](std::size_t lo, std::size_t hi) {
            for (int j = int(lo) + 1; j < int(hi) + 1; ++j) {
                const double x = sg.x(j);
                double best = std::numeric_limits<double>::infinity();
                int best_iu = 0, best_iv = 0;
                for (int iu = 0; iu < nu; ++iu) {
                    const double uc = spec.control_grid_u[iu];
                    const int iv = response.at(k, j, iu);
                    const double vc = spec.control_grid_v[iv];
                    const double sig = spec.sigma_at(0, 0, t, &x, uc, vc);
                    const double m = spec.drift_at(0, t, &x, uc, vc);
                    const double z = detail::central_z(sig, prev, j, dx);
                    const double ham = detail::upwind_generator(sig * sig, m, prev, j, dx) +
                                       spec.leader_cost_at(t, &x, uc) +
                                       spec.generator_at(t, prev[j], &z);
                    const double val = prev[j] + dt * ham;
                    if (val < best) {
                        best = val;
                        best_iu = iu;
                        best_iv = iv;
                    }
                }
                if (!std::isfinite(best))
                    throw SolveError("leader update non-finite at step " + std::to_string(k) +
                                     " node " + std::to_string(j));
                const double h = spec.obstacle_at(t, &x);
                const double lifted = std::max(best, h);
                cur[j] = lifted;
                out.projection.at(k, j) = lifted - best;
                out.policy.u[std::size_t(k) * M + j] = std::uint16_t(best_iu);
                out.policy.v[std::size_t(k) * M + j] = std::uint16_t(best_iv);
            }
        });
        detail::extrapolate_boundary(cur, M);
        for (int j = 0; j < M; j += M - 1) {
            const double x = sg.x(j);
            const double h = spec.obstacle_at(t, &x);
            if (cur[j] < h) {
                out.projection.at(k, j) = h - cur[j];
                cur[j] = h;
            }
            out.policy.u[std::size_t(k) * M + j] =
                out.policy.u[std::size_t(k) * M + (j == 0 ? 1 : M - 2)];
            out.policy.v[std::size_t(k) * M + j] =
                out.policy.v[std::size_t(k) * M + (j == 0 ? 1 : M - 2)];
        }
    }
    return out;
}

inline ValueField penalized_obstacle_sweep(const ProblemSpec& spec, const TimeGrid& tg,
                                           const SpaceGrid& sg,
                                           const BestResponseTable& response, double n_penalty,
                                           bool skip_validation = false) {
    require_valid(spec, skip_validation);
    detail::require_cfl(spec, tg, sg);
    if (n_penalty < 0) throw SolveError("penalty coefficient must be nonnegative");
    if (tg.dt() * n_penalty > 1.0)
        throw SolveError("dt * penalty = " + fmt_shortest(tg.dt() * n_penalty) +
                         " > 1: explicit penalty coupling would be unstable");
    const int N = tg.steps;
    const int M = sg.nodes;
    const int nu = int(spec.control_grid_u.size());
    const double dt = tg.dt();
    const double dx = sg.dx();
    if (response.steps != N || response.nodes != M || response.n_u != nu)
        throw SolveError("best-response table does not match the grids");

    ValueField f;
    f.grid = tg;
    f.space = sg;
    f.values.resize(std::size_t(N + 1) * M);
    f.equation = "leader_penalized";
    f.policy_note = "penalty " + fmt_shortest(n_penalty);
    for (int j = 0; j < M; ++j) {
        const double x = sg.x(j);
        f.at(N, j) = spec.leader_terminal_at(&x);
    }

    for (int k = N - 1; k >= 0; --k) {
        const double t = tg.t(k);
        const double* prev = f.slice(k + 1);
        double* cur = f.slice(k);
        parallel_for(M - 2, [&](std::size_t lo, std::size_t hi) {
            for (int j = int(lo) + 1; j < int(hi) + 1; ++j) {
                const double x = sg.x(j);
                const double h = spec.obstacle_at(t, &x);
                const double pen = n_penalty * std::max(h - prev[j], 0.0);
                double best = std::numeric_limits<double>::infinity();
                for (int iu = 0; iu < nu; ++iu) {
                    const double uc = spec.control_grid_u[iu];
                    const double vc = spec.control_grid_v[response.at(k, j, iu)];
                    const double sig = spec.sigma_at(0, 0, t, &x, uc, vc);
                    const double m = spec.drift_at(0, t, &x, uc, vc);
                    const double z = detail::central_z(sig, prev, j, dx);
                    const double ham = detail::upwind_generator(sig * sig, m, prev, j, dx) +
                                       spec.leader_cost_at(t, &x, uc) +
                                       spec.generator_at(t, prev[j], &z) + pen;
                    best = std::min(best, prev[j] + dt * ham);
                }
                if (!std::isfinite(best))
                    throw SolveError("penalized update non-finite at step " + std::to_string(k) +
                                     " node " + std::to_string(j));
                cur[j] = best;
            }
        });
        detail::extrapolate_boundary(cur, M);
    }
    return f;
}

// ---------------------------------------------------------------------------
// residual diagnostics

enum class GridEquation { follower, leader };

struct ResidualReport {
    double max_interior_residual = 0.0;  // off the contact set
    double max_contact_gap = 0.0;        // |phi - h| on the contact set
    long interior_count = 0;
    long contact_count = 0;

    nlohmann::json to_json() const {
        return {{"max_interior_residual", max_interior_residual},
                {"max_contact_gap", max_contact_gap},
                {"interior_count", interior_count},
                {"contact_count", contact_count}};
    }
};

// Discrete residual at the recorded policy: forward time difference plus the
// Hamiltonian re-evaluated on the k slice (the sweep uses the k+1 slice, so
// this is an independent consistency measure, O(dt + dx^2) where the field is
// smooth). Leader nodes with phi - h below the contact margin report |phi - h|
// instead; the free boundary is not a smoothness region. The margin defaults
// to 10 dx, which adapts to the grid but shrinks under refinement; refinement
// studies should pass a fixed value-gap margin so the exclusion zone stays
// put while dx falls.
inline ResidualReport pde_residual(const ValueField& f, const ProblemSpec& spec,
                                   const PolicyField& policy, GridEquation eq,
                                   double contact_margin = -1.0) {
    const int N = f.steps();
    const int M = f.nodes();
    if (policy.steps != N || policy.nodes != M)
        throw SolveError("policy does not match the value field");
    const double dt = f.grid.dt();
    const double dx = f.space.dx();
    const double margin = contact_margin >= 0.0 ? contact_margin : 10 * dx;
    ResidualReport rep;
    for (int k = 0; k < N; ++k) {
        const double t = f.grid.t(k);
        const double* cur = f.slice(k);
        for (int j = 1; j < M - 1; ++j) {
            const double x = f.space.x(j);
            if (eq == GridEquation::leader) {
                const double h = spec.obstacle_at(t, &x);
                if (cur[j] - h <= margin) {
                    rep.max_contact_gap = std::max(rep.max_contact_gap, std::fabs(cur[j] - h));
                    ++rep.contact_count;
                    continue;
                }
            }
            const double uc = spec.control_grid_u[policy.u_at(k, j)];
            const double vc = spec.control_grid_v[policy.v_at(k, j)];
            const double sig = spec.sigma_at(0, 0, t, &x, uc, vc);
            const double m = spec.drift_at(0, t, &x, uc, vc);
            const double z = detail::central_z(sig, cur, j, dx);
            const double cost = eq == GridEquation::follower ? spec.follower_cost_at(t, &x, vc)
                                                             : spec.leader_cost_at(t, &x, uc);
            const double ham = detail::upwind_generator(sig * sig, m, cur, j, dx) + cost +
                               spec.generator_at(t, cur[j], &z);
            const double res = (f.at(k + 1, j) - cur[j]) / dt + ham;
            rep.max_interior_residual = std::max(rep.max_interior_residual, std::fabs(res));
            ++rep.interior_count;
        }
    }
    return rep;
}

}  // namespace hierisk
