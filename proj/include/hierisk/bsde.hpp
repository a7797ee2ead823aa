#pragma once

// Least-squares backward induction for
//   Y_k = E_k[Y_{k+1}] + dt * f(t_k, E_k[Y_{k+1}], Z_k),
//   Z_k = E_k[(Y_{k+1} - E_k[Y_{k+1}]) dB_k] / dt,
// where f = running_cost + generator + shift. Centering Y_{k+1} before the
// Z projection changes nothing algebraically (dB is centered conditionally)
// but makes additive constants in the terminal cancel to rounding error, so
// translation behaves exactly instead of leaking O(sqrt(dt/P)) noise.
//
// Conditional expectations are polynomial projections per step. Because the
// projection keeps sample means and step 0 collapses to the intercept, the
// estimate satisfies y0 = mean_p(G_p) with
//   G_p = xi_p + sum_k dt * f_k(p)
// evaluated at the regressed arguments, and se0 = sd(G_p)/sqrt(P) prices the
// Monte Carlo error of y0 itself, not the per-step residuals.

#include <cmath>
#include <cstdint>
#include <limits>
#include <string>
#include <vector>

#include "hierisk/common.hpp"
#include "hierisk/parallel.hpp"
#include "hierisk/problem.hpp"
#include "hierisk/regression.hpp"
#include "hierisk/sde.hpp"

namespace hierisk {

struct BsdeOptions {
    int degree = 2;
    double driver_shift = 0.0;                          // pointwise driver perturbation
    const std::vector<double>* running_cost = nullptr;  // (p,k) table added to the generator
    // penalty term n*(y - h)^- added to the driver; table has stride N+1 per path
    const std::vector<double>* penalty_obstacle = nullptr;
    double penalty_n = 0.0;
    bool skip_validation = false;
};

struct BsdeResult {
    double y0 = 0.0;
    double se0 = 0.0;
    std::vector<double> Y;               // (p, k), k = 0..N, regressed values
    std::vector<double> Z;               // (p, k, j), k = 0..N-1
    std::vector<double> pathwise_total;  // G_p
    int n_paths = 0;
    int steps = 0;
    int dim = 0;

    double y_at(int p, int k) const { return Y[std::size_t(p) * (steps + 1) + k]; }
    const double* z_at(int p, int k) const { return &Z[(std::size_t(p) * steps + k) * dim]; }
};

namespace detail {

// Explicit driver iteration needs dt * L_y < 1; probe around the data scale.
inline void check_driver_timestep(const ProblemSpec& spec, double dt, double ymean, double ysd) {
    if (!spec.generator.references(Var::y)) return;
    double L = 0.0;
    const double zscale = 1.0 + ysd;
    for (int i = 0; i < 9; ++i)
        for (int jz = -1; jz <= 1; ++jz) {
            const double y = ymean + ysd * (i - 4);
            const double z = jz * zscale;
            const double dy = 0.05 * (1.0 + std::fabs(y));
            for (double tt : {0.0, spec.horizon / 2, spec.horizon}) {
                const double a = spec.generator_scalar(tt, y, z);
                const double b = spec.generator_scalar(tt, y + dy, z);
                L = std::max(L, std::fabs(b - a) / dy);
            }
        }
    if (dt * L >= 1.0)
        throw SolveError("time step too coarse: dt * (generator y-slope " + fmt_shortest(L) +
                         ") >= 1; increase the step count");
}

}  // namespace detail

inline BsdeResult solve_bsde(const ProblemSpec& spec, const PathEnsemble& ens,
                             const std::vector<double>& terminal, const BsdeOptions& opt = {}) {
    require_valid(spec, opt.skip_validation);
    const int P = ens.paths();
    const int N = ens.steps();
    const int d = ens.dim;
    if (int(terminal.size()) != P) throw SolveError("terminal vector length must match path count");
    if (opt.running_cost && int(opt.running_cost->size()) != P * N)
        throw SolveError("running cost table must be paths x steps");
    const double dt = ens.grid.dt();
    if (opt.penalty_n != 0.0) {
        if (!opt.penalty_obstacle || int(opt.penalty_obstacle->size()) != P * (N + 1))
            throw SolveError("penalty needs an obstacle table of paths x (steps+1)");
        if (opt.penalty_n < 0) throw SolveError("penalty coefficient must be nonnegative");
        if (dt * opt.penalty_n > 1.0)
            throw SolveError("dt * penalty = " + fmt_shortest(dt * opt.penalty_n) +
                             " > 1: explicit penalty coupling would be unstable");
    }

    double ymean = 0, ysd = 0;
    for (double v : terminal) ymean += v;
    ymean /= P;
    for (double v : terminal) ysd += (v - ymean) * (v - ymean);
    ysd = std::sqrt(ysd / std::max(1, P - 1));
    detail::check_driver_timestep(spec, dt, ymean, ysd);

    BsdeResult res;
    res.n_paths = P;
    res.steps = N;
    res.dim = d;
    res.Y.resize(std::size_t(P) * (N + 1));
    res.Z.resize(std::size_t(P) * N * d);
    res.pathwise_total = terminal;

    for (int p = 0; p < P; ++p) res.Y[std::size_t(p) * (N + 1) + N] = terminal[p];

    const std::size_t xstride = std::size_t(N + 1) * d;
    std::vector<double> ynext(P), cont(P), ztarget(P), zfit(P);

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
                double f = c + spec.generator_at(t, cont[p], res.z_at(p, k)) + opt.driver_shift;
                if (opt.penalty_n != 0.0)
                    f += opt.penalty_n *
                         std::max((*opt.penalty_obstacle)[std::size_t(p) * (N + 1) + k] - cont[p], 0.0);
                const double yk = cont[p] + dt * f;
                if (!std::isfinite(yk))
                    throw SolveError("backward value non-finite at step " + std::to_string(k) +
                                     " path " + std::to_string(p));
                res.Y[std::size_t(p) * (N + 1) + k] = yk;
                res.pathwise_total[p] += dt * f;
            }
        });
    }

    double acc = 0;
    for (int p = 0; p < P; ++p) acc += res.Y[std::size_t(p) * (N + 1)];
    res.y0 = acc / P;
    double var = 0;
    for (int p = 0; p < P; ++p) {
        const double dev = res.pathwise_total[p] - res.y0;
        var += dev * dev;
    }
    res.se0 = std::sqrt(var / (double(P) * std::max(1, P - 1)));
    return res;
}

struct RiskResult {
    double rho = 0.0;
    double se = 0.0;
    BsdeResult solution;
};

// rho(Psi(X_T)) under the spec's generator; dynamics use the first entries of
// the control grids.
inline RiskResult risk_measure(const ProblemSpec& spec, const Expr& payoff, int n_paths, int steps,
                               std::uint64_t seed, const BsdeOptions& opt = {}) {
    require_valid(spec, opt.skip_validation);
    TimeGrid grid(spec.horizon, steps);
    PathEnsemble ens = simulate_paths(spec, grid, n_paths, seed);
    std::vector<double> xi = terminal_payoff_table(payoff, ens);
    BsdeOptions o = opt;
    o.skip_validation = true;  // just validated
    BsdeResult sol = solve_bsde(spec, ens, xi, o);
    return {sol.y0, sol.se0, std::move(sol)};
}

// ---------------------------------------------------------------------------
// comparison: bigger terminal and bigger driver must give a bigger value

struct ComparisonCheck {
    double min_terminal_gap = 0.0;  // min_p (xi_b - xi_a); >= 0 required
    double min_driver_gap = 0.0;    // min over probes of g_b - g_a; >= 0 required
    bool precondition_ok = false;
    double y0_a = 0, se_a = 0, y0_b = 0, se_b = 0;
    double gap() const { return y0_b - y0_a; }
};

inline ComparisonCheck check_comparison(const ProblemSpec& spec_a, const ProblemSpec& spec_b,
                                        const PathEnsemble& ens, const std::vector<double>& xi_a,
                                        const std::vector<double>& xi_b,
                                        const BsdeOptions& opt = {}) {
    ComparisonCheck out;
    out.min_terminal_gap = std::numeric_limits<double>::infinity();
    for (std::size_t p = 0; p < xi_a.size(); ++p)
        out.min_terminal_gap = std::min(out.min_terminal_gap, xi_b[p] - xi_a[p]);

    out.min_driver_gap = std::numeric_limits<double>::infinity();
    const CounterRng rng(0xc0417a5ull);
    for (int i = 0; i < 256; ++i) {
        const double t = spec_a.horizon * rng.uniform(0, i, 0);
        const double y = 3.0 * rng.normal(0, i, 1);
        const double z = 3.0 * rng.normal(0, i, 2);
        out.min_driver_gap = std::min(
            out.min_driver_gap, spec_b.generator_scalar(t, y, z) - spec_a.generator_scalar(t, y, z));
    }
    out.precondition_ok = out.min_terminal_gap >= -1e-12 && out.min_driver_gap >= -1e-12;

    BsdeResult a = solve_bsde(spec_a, ens, xi_a, opt);
    BsdeResult b = solve_bsde(spec_b, ens, xi_b, opt);
    out.y0_a = a.y0;
    out.se_a = a.se0;
    out.y0_b = b.y0;
    out.se_b = b.se0;
    return out;
}

// ---------------------------------------------------------------------------
// risk measure axioms, checked on a shared ensemble

struct AxiomCheck {
    std::string name;
    bool applicable = false;
    bool pass = true;
    double lhs = 0, rhs = 0, tol = 0;
    std::string note;
};

struct AxiomOptions {
    int n_paths = 20000;
    int steps = 32;
    std::uint64_t seed = 101;
    int degree = 2;
    std::string payoff_a = "pos(1 - x)";   // base payoff
    std::string payoff_b = "x";            // second payoff for convex mixes
    std::string nonneg_bump = "pos(x - 1)";  // pointwise >= 0, for monotonicity
    double theta = 0.5;
    double shift = 0.7;
    double lambda = 2.0;
    double exact_tol = 1e-10;  // scheme-exact identities
    double mc_sigmas = 3.0;    // inequalities that hold up to sampling noise
};

struct AxiomReport {
    std::vector<AxiomCheck> checks;
    bool all_pass = true;

    nlohmann::json to_json() const {
        auto arr = nlohmann::json::array();
        for (const auto& c : checks)
            arr.push_back({{"name", c.name},
                           {"applicable", c.applicable},
                           {"pass", c.pass},
                           {"lhs", c.lhs},
                           {"rhs", c.rhs},
                           {"tol", c.tol},
                           {"note", c.note}});
        return {{"all_pass", all_pass}, {"checks", arr}};
    }
};

inline AxiomReport check_axioms(const ProblemSpec& spec, const AxiomOptions& ao = {}) {
    require_valid(spec);
    AxiomReport rep;
    TimeGrid grid(spec.horizon, ao.steps);
    PathEnsemble ens = simulate_paths(spec, grid, ao.n_paths, ao.seed);
    BsdeOptions bo;
    bo.degree = ao.degree;
    bo.skip_validation = true;

    const Expr pa = Expr::parse(ao.payoff_a);
    const Expr pb = Expr::parse(ao.payoff_b);
    const Expr bump = Expr::parse(ao.nonneg_bump);
    const std::vector<double> xa = terminal_payoff_table(pa, ens);
    const std::vector<double> xb = terminal_payoff_table(pb, ens);
    auto solve = [&](const std::vector<double>& xi) { return solve_bsde(spec, ens, xi, bo); };

    const BsdeResult ra = solve(xa);
    const bool y_free = !spec.generator.references(Var::y);

    auto push = [&rep](AxiomCheck c) {
        if (c.applicable && !c.pass) rep.all_pass = false;
        rep.checks.push_back(std::move(c));
    };

    {  // convexity: rho(theta a + (1-theta) b) <= theta rho(a) + (1-theta) rho(b)
        AxiomCheck c;
        c.name = "convexity";
        c.applicable = spec.generator_flags.convex;
        if (c.applicable) {
            const BsdeResult rb = solve(xb);
            std::vector<double> mix(xa.size());
            for (std::size_t p = 0; p < xa.size(); ++p)
                mix[p] = ao.theta * xa[p] + (1 - ao.theta) * xb[p];
            const BsdeResult rm = solve(mix);
            c.lhs = rm.y0;
            c.rhs = ao.theta * ra.y0 + (1 - ao.theta) * rb.y0;
            // exact pointwise on a shared ensemble (projection is linear), up to rounding
            c.tol = ao.exact_tol;
            c.pass = c.lhs <= c.rhs + c.tol;
            c.note = "common-path mix of '" + ao.payoff_a + "' and '" + ao.payoff_b + "'";
        }
        push(c);
    }
    {  // monotonicity: xi_a <= xi_a + bump pointwise implies rho ordering up to MC noise
        AxiomCheck c;
        c.name = "monotonicity";
        c.applicable = true;
        std::vector<double> xc(xa.size());
        Env e;
        for (std::size_t p = 0; p < xa.size(); ++p) {
            e.set(Var::x, ens.x(int(p), ens.steps())[0]);
            xc[p] = xa[p] + bump.eval(e);
        }
        const BsdeResult rc = solve(xc);
        c.lhs = ra.y0;
        c.rhs = rc.y0;
        c.tol = ao.mc_sigmas * (ra.se0 + rc.se0);
        c.pass = c.lhs <= c.rhs + c.tol;
        c.note = "bump '" + ao.nonneg_bump + "'";
        push(c);
    }
    {  // translation: rho(xi + m) = rho(xi) + m, exact when g ignores y
        AxiomCheck c;
        c.name = "translation";
        c.applicable = y_free;
        if (c.applicable) {
            std::vector<double> xs(xa.size());
            for (std::size_t p = 0; p < xa.size(); ++p) xs[p] = xa[p] + ao.shift;
            const BsdeResult rs = solve(xs);
            c.lhs = rs.y0;
            c.rhs = ra.y0 + ao.shift;
            c.tol = ao.exact_tol;
            c.pass = std::fabs(c.lhs - c.rhs) <= c.tol;
            c.note = "shift " + fmt_shortest(ao.shift);
        } else {
            c.note = "generator depends on y; translation invariance not claimed";
        }
        push(c);
    }
    {  // positive homogeneity: rho(lambda xi) = lambda rho(xi)
        AxiomCheck c;
        c.name = "positive_homogeneity";
        c.applicable = spec.generator_flags.positively_homogeneous;
        if (c.applicable) {
            std::vector<double> xl(xa.size());
            for (std::size_t p = 0; p < xa.size(); ++p) xl[p] = ao.lambda * xa[p];
            const BsdeResult rl = solve(xl);
            c.lhs = rl.y0;
            c.rhs = ao.lambda * ra.y0;
            c.tol = ao.exact_tol * std::max(1.0, std::fabs(ao.lambda));
            c.pass = std::fabs(c.lhs - c.rhs) <= c.tol;
            c.note = "lambda " + fmt_shortest(ao.lambda);
        }
        push(c);
    }
    {  // normalization: rho(m) = m for constant payoffs; along a constant value
       // the driver only ever sees y = m, so the flag alone suffices
        AxiomCheck c;
        c.name = "normalization";
        c.applicable = spec.generator_flags.zero_at_zero_z;
        if (c.applicable) {
            std::vector<double> xconst(xa.size(), ao.shift);
            const BsdeResult rc = solve(xconst);
            c.lhs = rc.y0;
            c.rhs = ao.shift;
            c.tol = ao.exact_tol;
            c.pass = std::fabs(c.lhs - c.rhs) <= c.tol;
        } else {
            c.note = "generator does not declare zero_at_zero_z";
        }
        push(c);
    }
    return rep;
}

}  // namespace hierisk
