#pragma once

// Acceptance battery: eleven end-to-end checks with tolerances pinned in the
// code, run at desk scale (each stays under a couple of minutes on one core).
// run_acceptance prints one verdict line per check and returns the details;
// run_suite adapts it to the CLI's suite subcommand. Verdicts are reported
// exactly as measured. Two checks (put-triple-agreement and the increment-gap
// ratio inside complementarity-and-increment-gap) probe tolerances the pinned
// regression schemes cannot reach; their detail blocks carry the measured
// numbers, and nothing here softens a threshold to turn a FAIL green.

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <map>
#include <string>
#include <utility>
#include <vector>

#include "cli.hpp"

namespace hierisk {

struct CriterionResult {
    std::string name;
    bool pass = false;
    std::string note;  // one line for the verdict listing
    nlohmann::json detail;
};

namespace detail {

inline std::string num_lit(double v) { return "(" + fmt_shortest(v) + ")"; }

// m = 0, sigma = 1, no running costs, single controls: the plain testbed
// where the value of a terminal payoff is a pure generator expectation.
inline nlohmann::json suite_plain_spec(const std::string& generator) {
    nlohmann::json j;
    j["state_dim"] = 1;
    j["horizon"] = 1.0;
    j["x0"] = {0.0};
    j["drift"] = {"0"};
    j["diffusion"] = {{"1"}};
    j["leader_running_cost"] = "0";
    j["follower_running_cost"] = "0";
    j["leader_terminal"] = "x^2";
    j["follower_terminal"] = "x^2";
    j["generator"] = generator;
    j["obstacle"] = "-1000000";
    j["control_grid_u"] = {0.0};
    j["control_grid_v"] = {0.0};
    j["ellipticity_floor"] = 0.5;
    return j;
}

inline nlohmann::json suite_abs_z_spec(double mu) {
    nlohmann::json j = suite_plain_spec(num_lit(mu) + "*abs(z)");
    j["generator_flags"] = {{"convex", true},
                            {"positively_homogeneous", true},
                            {"zero_at_zero_z", true}};
    return j;
}

inline nlohmann::json suite_lq_spec() {
    nlohmann::json j = suite_plain_spec("0");
    j["drift"] = {"u+v"};
    j["leader_running_cost"] = "u^2+x^2";
    j["follower_running_cost"] = "v^2+x^2";
    j["control_grid_u"] = {-1.0, 0.0, 1.0};
    j["control_grid_v"] = {-1.0, 0.0, 1.0};
    return j;
}

inline nlohmann::json suite_put_spec() {
    nlohmann::json j = suite_plain_spec("0");
    j["diffusion"] = {{"0.2*x"}};
    j["x0"] = {1.0};
    j["leader_terminal"] = "pos(1-x)";
    j["obstacle"] = "pos(1-x)";
    j["follower_terminal"] = "0";
    j["ellipticity_floor"] = 0.001;
    return j;
}

// Lipschitz payoff with a random slope, kink, and level.
inline std::string random_payoff(const CounterRng& rng, std::uint64_t i) {
    const double a = 3.0 * rng.uniform(i, 0, 0) - 1.5;
    const double b = 3.0 * rng.uniform(i, 1, 0) - 1.5;
    const double c = 2.0 * rng.uniform(i, 2, 0) - 1.0;
    const double d = 2.0 * rng.uniform(i, 3, 0) - 1.0;
    return num_lit(a) + "*x + " + num_lit(b) + "*abs(x - " + num_lit(c) + ") + " + num_lit(d);
}

// Pointwise nonnegative, for monotone bumps and ordered payoff pairs.
inline std::string random_bump(const CounterRng& rng, std::uint64_t i) {
    const double a = 0.1 + 1.4 * rng.uniform(i, 4, 0);
    const double c = 2.0 * rng.uniform(i, 5, 0) - 1.0;
    return num_lit(a) + "*pos(x - " + num_lit(c) + ")";
}

inline double rel_diff(double a, double b) {
    return std::fabs(a - b) / std::max({std::fabs(a), std::fabs(b), 1e-300});
}

// --- 1: generator expectation axioms on random payoff pairs ---------------
// Driver 0.3|z|, 4e4 paths, 50 steps. Identity-style axioms (convexity on a
// shared ensemble, translation, homogeneity, normalization) must hold to
// 1e-10; monotonicity, the one genuinely stochastic inequality, to 3
// regression standard errors. 20 random payoff pairs.
inline CriterionResult criterion_axioms() {
    CriterionResult out;
    out.name = "generator-axioms";
    const ProblemSpec spec = load_spec(suite_abs_z_spec(0.3));
    const CounterRng rng(0xacce9701);
    int passed = 0;
    auto failures = nlohmann::json::array();
    for (int i = 0; i < 20; ++i) {
        AxiomOptions ao;
        ao.n_paths = 40000;
        ao.steps = 50;
        ao.seed = 1000 + std::uint64_t(i);
        ao.degree = 2;
        ao.payoff_a = random_payoff(rng, 2 * i);
        ao.payoff_b = random_payoff(rng, 2 * i + 1);
        ao.nonneg_bump = random_bump(rng, i);
        ao.theta = 0.1 + 0.8 * rng.uniform(i, 6, 0);
        ao.shift = 2.0 * rng.uniform(i, 7, 0) - 1.0;
        ao.lambda = 0.25 + 3.75 * rng.uniform(i, 8, 0);
        ao.exact_tol = 1e-10;
        ao.mc_sigmas = 3.0;
        const AxiomReport rep = check_axioms(spec, ao);
        if (rep.all_pass) {
            ++passed;
        } else {
            nlohmann::json f{{"pair", i}, {"payoff_a", ao.payoff_a}, {"payoff_b", ao.payoff_b}};
            f["report"] = rep.to_json();
            failures.push_back(f);
        }
    }
    out.pass = passed == 20;
    out.note = std::to_string(passed) + "/20 random payoff pairs";
    out.detail = {{"pairs", 20}, {"passed", passed}, {"failures", failures}};
    return out;
}

// --- 2: zero generator reduces to the classical expectation ---------------
inline CriterionResult criterion_classical_reduction() {
    CriterionResult out;
    out.name = "classical-reduction";
    const ProblemSpec spec = load_spec(suite_plain_spec("0"));
    const RiskResult r = risk_measure(spec, Expr::parse("x"), 100000, 50, 21);
    const double err = std::fabs(r.rho - spec.x0[0]);
    out.pass = err <= 3.0 * r.se;
    out.note = "|rho - x0| = " + fmt_shortest(err) + ", 3se = " + fmt_shortest(3.0 * r.se);
    out.detail = {{"rho", r.rho}, {"se", r.se}, {"x0", spec.x0[0]}, {"paths", 100000}, {"steps", 50}};
    return out;
}

// --- 3: 0.3|z| driver on the terminal Brownian state has value 0.3 --------
// The driver tilts the drift by at most 0.3, and the linear payoff makes the
// extreme tilt optimal, so the exact value is 0.3 * T. The error must fall
// along the refinement ladder and end below 2e-2. For this data the backward
// scheme is exact in the step count (Z is constant and the conditional means
// are linear in the state, inside the basis), so the measured error is pure
// sampling noise; the ladder multiplies paths by 16 per rung to cut the noise
// scale 4x each time, which is what makes the decrease observable.
inline CriterionResult criterion_closed_form() {
    CriterionResult out;
    out.name = "abs-z-closed-form";
    const ProblemSpec spec = load_spec(suite_abs_z_spec(0.3));
    const std::pair<int, int> ladder[] = {{25, 625}, {50, 10000}, {100, 160000}};
    std::vector<double> errs;
    auto rungs = nlohmann::json::array();
    for (const auto& [steps, paths] : ladder) {
        const RiskResult r = risk_measure(spec, Expr::parse("x"), paths, steps, 4242);
        errs.push_back(std::fabs(r.rho - 0.3));
        rungs.push_back(nlohmann::json{
            {"steps", steps}, {"paths", paths}, {"rho", r.rho}, {"error", errs.back()}});
    }
    const bool decreasing = errs[0] > errs[1] && errs[1] > errs[2];
    out.pass = decreasing && errs.back() <= 2e-2;
    out.note = "errors " + fmt_shortest(errs[0]) + " > " + fmt_shortest(errs[1]) + " > " +
               fmt_shortest(errs[2]) + ", final tol 2e-2";
    out.detail = {{"target", 0.3}, {"ladder", rungs}, {"decreasing", decreasing}};
    return out;
}

// --- 4: ordered drivers and payoffs give ordered values -------------------
// 100 random pairs with xi_1 >= xi_2 pointwise and mu_1 >= mu_2. The grid
// sweep is monotone, so its ordering must hold to rounding (-1e-8 slack);
// the regression solver gets 3 standard errors of room.
inline CriterionResult criterion_comparison() {
    CriterionResult out;
    out.name = "comparison-ordering";
    const CounterRng rng(0xacce9704);
    double worst_grid = std::numeric_limits<double>::infinity();
    double worst_mc_margin = std::numeric_limits<double>::infinity();
    bool preconditions = true;
    for (int i = 0; i < 100; ++i) {
        const double mu2 = 0.4 * rng.uniform(i, 10, 0);
        const double mu1 = mu2 + 0.3 * rng.uniform(i, 11, 0);
        const std::string xi2 = random_payoff(rng, 100 + i);
        const std::string xi1 = xi2 + " + " + random_bump(rng, 100 + i);

        nlohmann::json j1 = suite_abs_z_spec(mu1);
        nlohmann::json j2 = suite_abs_z_spec(mu2);
        j1["follower_terminal"] = xi1;
        j2["follower_terminal"] = xi2;
        const ProblemSpec s1 = load_spec(j1);
        const ProblemSpec s2 = load_spec(j2);

        // common grid: same dynamics, but the driver enters the time-step
        // bound, so take the stricter of the two
        const SpaceGrid sg = make_space_grid(-6.0, 6.0, 81, 0.0);
        const int n = std::max(cfl_steps(s1, sg, 1.0), cfl_steps(s2, sg, 1.0));
        const TimeGrid tg(1.0, n);
        const ValueField v1 = solve_follower_hjb(s1, tg, sg).value;
        const ValueField v2 = solve_follower_hjb(s2, tg, sg).value;
        for (std::size_t q = 0; q < v1.values.size(); ++q)
            worst_grid = std::min(worst_grid, v1.values[q] - v2.values[q]);

        // common paths: dynamics are control- and driver-free here, so one
        // ensemble serves both sides
        const TimeGrid mg(1.0, 32);
        const PathEnsemble ens = simulate_paths(s1, mg, 4000, 500 + std::uint64_t(i));
        const std::vector<double> t1 = terminal_table(s1, ens, false);
        const std::vector<double> t2 = terminal_table(s2, ens, false);
        const ComparisonCheck c = check_comparison(s2, s1, ens, t2, t1);
        preconditions = preconditions && c.precondition_ok;
        worst_mc_margin = std::min(worst_mc_margin, c.gap() + 3.0 * (c.se_a + c.se_b));
    }
    out.pass = preconditions && worst_grid >= -1e-8 && worst_mc_margin >= 0.0;
    out.note = "grid min gap " + fmt_shortest(worst_grid) + ", mc worst margin " +
               fmt_shortest(worst_mc_margin);
    out.detail = {{"pairs", 100},
                  {"preconditions_ok", preconditions},
                  {"grid_min_gap", worst_grid},
                  {"grid_tol", -1e-8},
                  {"mc_worst_margin_3se", worst_mc_margin}};
    return out;
}

// --- 5: reflected, penalized, and lattice values on the put ---------------
// Pairwise 1% agreement demanded between the reflected solve, the penalized
// solve at n = 256 (dt * n = 1), and a 512-step lattice. The regression
// reflection has a known upward bias against the lattice at 256 time steps
// (the per-step max clips one-sided fit error near the payoff kink), so the
// two lattice pairs are expected to miss 1%; reflected-vs-penalized agreement
// and monotonicity in n are exact properties of the scheme and must hold.
inline CriterionResult criterion_put_triple() {
    CriterionResult out;
    out.name = "put-triple-agreement";
    const ProblemSpec spec = load_spec(suite_put_spec());
    const TimeGrid tg(1.0, 256);
    const PathEnsemble ens = simulate_paths(spec, tg, 100000, 77);
    const std::vector<double> terminal = terminal_table(spec, ens, true);
    ReflectOptions ro;
    ro.degree = 5;

    const ReflectedSolution refl = solve_reflected(spec, ens, terminal, ro);
    std::vector<double> pen_y0;
    for (double n : {4.0, 16.0, 64.0, 256.0})
        pen_y0.push_back(solve_penalized(spec, ens, terminal, n, ro).y0);
    const double tree = optimal_stopping_oracle(spec, 512);

    bool monotone = true;
    for (std::size_t i = 1; i < pen_y0.size(); ++i)
        monotone = monotone && pen_y0[i] >= pen_y0[i - 1] - 1e-10;

    const double d_rp = rel_diff(refl.y0, pen_y0.back());
    const double d_rt = rel_diff(refl.y0, tree);
    const double d_pt = rel_diff(pen_y0.back(), tree);
    out.pass = monotone && d_rp <= 1e-2 && d_rt <= 1e-2 && d_pt <= 1e-2;
    out.note = "refl/pen " + fmt_shortest(d_rp) + ", refl/tree " + fmt_shortest(d_rt) +
               ", pen/tree " + fmt_shortest(d_pt) + " vs 1e-2; monotone " +
               (monotone ? "yes" : "no");
    out.detail = {{"reflected_y0", refl.y0},
                  {"penalized_y0", pen_y0},
                  {"tree_y0", tree},
                  {"rel_reflected_penalized", d_rp},
                  {"rel_reflected_tree", d_rt},
                  {"rel_penalized_tree", d_pt},
                  {"monotone_in_n", monotone},
                  {"paths", 100000},
                  {"steps", 256},
                  {"degree", 5}};
    return out;
}

// --- 6: complementarity and the increment-gap refinement rate -------------
// On a smooth binding obstacle the per-path complementarity sum must vanish
// to 1e-6 * max|Y| (it is zero by construction of the reflection max). The
// gap between realized pushes and the replicated continuation shortfall is
// asked to shrink 1.5x per dt halving; its driver is a backward walk of
// per-step replication residuals whose sup scales like sqrt(dt), so the
// observed ratio ceiles near sqrt(2) and this half is expected to miss.
inline CriterionResult criterion_complementarity() {
    CriterionResult out;
    out.name = "complementarity-and-increment-gap";
    nlohmann::json j = suite_plain_spec("0");
    j["obstacle"] = "x^2 + 2*(1-t)";
    const ProblemSpec spec = load_spec(j);

    bool compl_ok = true;
    std::vector<double> gaps;
    auto levels = nlohmann::json::array();
    for (int steps : {32, 64, 128}) {
        const TimeGrid tg(1.0, steps);
        const PathEnsemble ens = simulate_paths(spec, tg, 65536, 177);
        const std::vector<double> terminal = terminal_table(spec, ens, true);
        const ReflectedSolution sol = solve_reflected(spec, ens, terminal);
        const DiagnosticsReport diag = reflection_diagnostics(sol, ens);
        compl_ok = compl_ok && diag.max_complementarity <= 1e-6 * diag.max_abs_y;
        gaps.push_back(diag.mean_increment_gap);
        levels.push_back(nlohmann::json{{"steps", steps},
                                        {"max_complementarity", diag.max_complementarity},
                                        {"max_abs_y", diag.max_abs_y},
                                        {"mean_increment_gap", diag.mean_increment_gap}});
    }
    const double r1 = gaps[0] / gaps[1];
    const double r2 = gaps[1] / gaps[2];
    const bool ratios_ok = r1 >= 1.5 && r2 >= 1.5;
    out.pass = compl_ok && ratios_ok;
    out.note = std::string("complementarity ") + (compl_ok ? "ok" : "violated") +
               "; gap ratios " + fmt_shortest(r1) + ", " + fmt_shortest(r2) + " vs 1.5";
    out.detail = {{"levels", levels},
                  {"complementarity_ok", compl_ok},
                  {"gap_ratios", {r1, r2}},
                  {"ratio_tol", 1.5}};
    return out;
}

// --- 7: penalized grid sweeps climb to the projected solve ----------------
inline CriterionResult criterion_penalized_limit() {
    CriterionResult out;
    out.name = "penalized-obstacle-limit";
    const ProblemSpec spec = load_spec(suite_put_spec());
    const SpaceGrid sg = make_space_grid(0.3, 2.3, 201, 1.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    const FollowerGridSolution fol = solve_follower_hjb(spec, tg, sg);
    const ValueField projected = solve_leader_obstacle(spec, tg, sg, fol.response, fol.value).value;

    std::vector<ValueField> phi;
    for (double n : {4.0, 16.0, 64.0, 256.0})
        phi.push_back(penalized_obstacle_sweep(spec, tg, sg, fol.response, n));

    double worst_monotone = std::numeric_limits<double>::infinity();
    for (std::size_t i = 1; i < phi.size(); ++i)
        for (std::size_t q = 0; q < phi[i].values.size(); ++q)
            worst_monotone = std::min(worst_monotone, phi[i].values[q] - phi[i - 1].values[q]);

    double sup = 0.0;
    for (std::size_t q = 0; q < projected.values.size(); ++q)
        sup = std::max(sup, std::fabs(phi.back().values[q] - projected.values[q]));

    out.pass = worst_monotone >= -1e-10 && sup <= 1e-2;
    out.note = "monotone slack " + fmt_shortest(worst_monotone) + ", |phi_256 - projected| = " +
               fmt_shortest(sup) + " vs 1e-2";
    out.detail = {{"nodes", sg.nodes},
                  {"steps", tg.steps},
                  {"min_monotone_gap", worst_monotone},
                  {"sup_gap_to_projected", sup}};
    return out;
}

// --- 8: split-horizon recomposition of the follower solve -----------------
inline CriterionResult criterion_split_recompose() {
    CriterionResult out;
    out.name = "split-horizon-recomposition";
    auto run_case = [](const nlohmann::json& sj) {
        const ProblemSpec spec = load_spec(sj);
        const SpaceGrid sg = make_space_grid(-6.0, 6.0, 121, 0.0);
        int n = cfl_steps(spec, sg, 1.0);
        n += n % 2;  // put T/2 on a grid node
        const TimeGrid tg(1.0, n);
        const StackelbergSolution sol = stackelberg_solve(spec, tg, sg);
        return dpp_check(spec, tg, sg, sol, 0.5).max_difference;
    };
    const double lq = run_case(suite_lq_spec());
    nlohmann::json affine = suite_lq_spec();
    affine["follower_running_cost"] = "1";
    affine["follower_terminal"] = "0";
    const double unit = run_case(affine);
    out.pass = lq <= 2e-2 && unit <= 1e-12;
    out.note = "lq " + fmt_shortest(lq) + " vs 2e-2, unit-cost " + fmt_shortest(unit) +
               " vs 1e-12";
    out.detail = {{"lq_max_difference", lq},
                  {"lq_tol", 2e-2},
                  {"unit_cost_max_difference", unit},
                  {"unit_cost_tol", 1e-12}};
    return out;
}

// --- 9: simulated play matches the grid equilibrium values ----------------
inline CriterionResult criterion_equilibrium_verification() {
    CriterionResult out;
    out.name = "equilibrium-verification";
    const ProblemSpec spec = load_spec(suite_lq_spec());
    const SpaceGrid sg = make_space_grid(-6.0, 6.0, 121, 0.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    const StackelbergSolution sol = stackelberg_solve(spec, tg, sg);

    const VerificationReport v = verify_by_simulation(spec, tg, sg, sol, 20000, 515);
    const bool fol_ok = std::fabs(v.follower_gap()) <= 3.0 * v.follower_se + 2e-2;
    const bool lead_ok = std::fabs(v.leader_gap()) <= 3.0 * v.leader_se + 2e-2;

    const CertificateReport certs = argmin_certificates(spec, tg, sg, sol);
    const bool certs_ok =
        certs.pass() && certs.nodes_checked == long(tg.steps) * (sg.nodes - 2);

    out.pass = fol_ok && lead_ok && certs_ok;
    out.note = "gaps f " + fmt_shortest(v.follower_gap()) + " / l " + fmt_shortest(v.leader_gap()) +
               " within 3se+2e-2: " + (fol_ok && lead_ok ? "yes" : "no") + "; certificates " +
               (certs_ok ? "exact" : "violated");
    out.detail = {{"verification", v.to_json()}, {"certificates", certs.to_json()}};
    return out;
}

// --- 10: interior residuals and closed-form errors refine at 1.8x ---------
// Each level multiplies the node count by sqrt(2) (so dx^2 halves) and lets
// the time-step bound halve dt with it. Smooth data only: kinked payoffs pin
// the residual to the contact margin and are covered, red, by the put checks.
inline CriterionResult criterion_scheme_order() {
    CriterionResult out;
    out.name = "scheme-order";
    auto rungs = nlohmann::json::array();
    bool all_ok = true;

    auto record = [&](const char* label, const std::vector<double>& m) {
        const double r1 = m[0] / m[1];
        const double r2 = m[1] / m[2];
        const bool ok = r1 >= 1.8 && r2 >= 1.8;
        all_ok = all_ok && ok;
        rungs.push_back(nlohmann::json{{"case", label},
                                       {"metrics", m},
                                       {"ratios", {r1, r2}},
                                       {"pass", ok}});
        return std::string(label) + " " + fmt_shortest(r1) + "/" + fmt_shortest(r2);
    };

    nlohmann::json jf = suite_plain_spec("0");
    jf["follower_terminal"] = "log(exp(x) + exp(0-x))";
    const ProblemSpec sf = load_spec(jf);
    std::vector<double> rf;
    for (int m : {161, 227, 321}) {
        const SpaceGrid sg = make_space_grid(-8.0, 8.0, m, 0.0);
        const TimeGrid tg(1.0, cfl_steps(sf, sg, 1.0));
        const FollowerGridSolution sol = solve_follower_hjb(sf, tg, sg);
        rf.push_back(pde_residual(sol.value, sf, sol.policy, GridEquation::follower)
                         .max_interior_residual);
    }
    std::string note = record("follower-residual", rf);

    // fixed value-gap margin 0.05: the default 10 dx margin shrinks under
    // refinement, letting nodes creep toward the free boundary where higher
    // derivatives blow up, and the measured residual stalls near 4e-4
    nlohmann::json jl = suite_plain_spec("0");
    jl["leader_terminal"] = "log(exp(x) + exp(0-x))";
    jl["obstacle"] = "log(exp(x) + exp(0-x)) + 2*(1-t)/(1+x^2) - 0.6";
    const ProblemSpec sl = load_spec(jl);
    std::vector<double> rl;
    for (int m : {361, 509, 721}) {
        const SpaceGrid sg = make_space_grid(-8.0, 8.0, m, 0.0);
        const TimeGrid tg(1.0, cfl_steps(sl, sg, 1.0));
        const FollowerGridSolution fol = solve_follower_hjb(sl, tg, sg);
        const LeaderGridSolution lead = solve_leader_obstacle(sl, tg, sg, fol.response, fol.value);
        rl.push_back(pde_residual(lead.value, sl, lead.policy, GridEquation::leader, 0.05)
                         .max_interior_residual);
    }
    note += "; " + record("leader-residual", rl);

    // quartic payoff over the unit Brownian state: exact value
    // x^4 + 6 x^2 (T-t) + 3 (T-t)^2, measured at t = 0 on |x| <= 2 with the
    // boundary closure pushed out to |x| = 10
    nlohmann::json jq = suite_plain_spec("0");
    jq["follower_terminal"] = "x^4";
    const ProblemSpec sq = load_spec(jq);
    std::vector<double> rq;
    for (int m : {201, 285, 401}) {
        const SpaceGrid sg = make_space_grid(-10.0, 10.0, m, 0.0);
        const TimeGrid tg(1.0, cfl_steps(sq, sg, 1.0));
        const FollowerGridSolution sol = solve_follower_hjb(sq, tg, sg);
        double err = 0.0;
        for (int q = 0; q < sg.nodes; ++q) {
            const double x = sg.x(q);
            if (std::fabs(x) > 2.0) continue;
            const double exact = x * x * x * x + 6.0 * x * x + 3.0;
            err = std::max(err, std::fabs(sol.value.at(0, q) - exact));
        }
        rq.push_back(err);
    }
    note += "; " + record("quartic-error", rq);

    out.pass = all_ok;
    out.note = note + " vs 1.8";
    out.detail = {{"cases", rungs}, {"ratio_tol", 1.8}};
    return out;
}

// --- 11: identical configs produce identical bytes, any thread count ------
inline std::map<std::string, std::string> dir_bytes(const std::filesystem::path& d) {
    std::map<std::string, std::string> files;
    for (const auto& e : std::filesystem::directory_iterator(d))
        if (e.is_regular_file()) files[e.path().filename().string()] = read_text(e.path().string());
    return files;
}

inline CriterionResult criterion_determinism() {
    CriterionResult out;
    out.name = "artifact-determinism";
    namespace fs = std::filesystem;
    const fs::path root = fs::temp_directory_path() / "hierisk_acceptance_determinism";
    fs::remove_all(root);

    std::vector<std::pair<std::string, RunConfig>> jobs;
    {
        RunConfig c;
        c.subcommand = "risk";
        c.spec_json = suite_abs_z_spec(0.3);
        c.paths = 4000;
        c.steps = 50;
        c.seed = 7;
        jobs.emplace_back("risk", c);
    }
    {
        RunConfig c;
        c.subcommand = "rbsde";
        c.spec_json = suite_put_spec();
        c.paths = 3000;
        c.steps = 50;
        c.seed = 5;
        jobs.emplace_back("rbsde", c);
    }
    {
        RunConfig c;
        c.subcommand = "stackelberg";
        c.spec_json = suite_lq_spec();
        c.nodes = 61;
        c.x_min = -6.0;
        c.x_max = 6.0;
        c.paths = 2000;
        c.verify = true;
        jobs.emplace_back("stackelberg", c);
    }

    bool all_ok = true;
    auto report = nlohmann::json::array();
    for (auto& [label, cfg] : jobs) {
        const int threads[] = {1, 3, 1};  // repeat and a different pool size
        std::vector<std::map<std::string, std::string>> runs;
        bool rc_ok = true;
        for (int v = 0; v < 3; ++v) {
            RunConfig c = cfg;
            c.threads = threads[v];
            c.out_dir = (root / (label + "_" + std::to_string(v))).string();
            rc_ok = rc_ok && run(c) == 0;
            runs.push_back(dir_bytes(c.out_dir));
        }
        const bool identical = rc_ok && runs[0] == runs[1] && runs[0] == runs[2];
        all_ok = all_ok && identical;
        report.push_back(nlohmann::json{
            {"job", label}, {"files", runs[0].size()}, {"identical", identical}});
    }
    set_thread_count(0);
    out.pass = all_ok;
    out.note = all_ok ? "3 jobs x {repeat, 1 vs 3 threads} byte-identical"
                      : "artifact bytes diverged";
    out.detail = {{"jobs", report}};
    return out;
}

}  // namespace detail

inline std::vector<CriterionResult> run_acceptance(std::FILE* log = stdout) {
    using Fn = CriterionResult (*)();
    struct Entry {
        const char* name;
        Fn fn;
    };
    static constexpr Entry table[] = {
        {"generator-axioms", detail::criterion_axioms},
        {"classical-reduction", detail::criterion_classical_reduction},
        {"abs-z-closed-form", detail::criterion_closed_form},
        {"comparison-ordering", detail::criterion_comparison},
        {"put-triple-agreement", detail::criterion_put_triple},
        {"complementarity-and-increment-gap", detail::criterion_complementarity},
        {"penalized-obstacle-limit", detail::criterion_penalized_limit},
        {"split-horizon-recomposition", detail::criterion_split_recompose},
        {"equilibrium-verification", detail::criterion_equilibrium_verification},
        {"scheme-order", detail::criterion_scheme_order},
        {"artifact-determinism", detail::criterion_determinism},
    };
    std::vector<CriterionResult> out;
    for (const Entry& e : table) {
        CriterionResult r;
        try {
            r = e.fn();
        } catch (const std::exception& ex) {
            r.name = e.name;
            r.pass = false;
            r.note = std::string("error: ") + ex.what();
            r.detail = {{"error", ex.what()}};
        }
        if (log) {
            std::fprintf(log, "[%s] %-34s %s\n", r.pass ? "PASS" : "FAIL", r.name.c_str(),
                         r.note.c_str());
            std::fflush(log);
        }
        out.push_back(std::move(r));
    }
    return out;
}

inline int run_suite(const RunConfig& cfg) {
    const std::filesystem::path out(cfg.out_dir);
    std::filesystem::create_directories(out);
    if (cfg.threads >= 0) set_thread_count(unsigned(cfg.threads));
    const std::vector<CriterionResult> results = run_acceptance(stdout);
    bool all = true;
    auto arr = nlohmann::json::array();
    for (const CriterionResult& r : results) {
        all = all && r.pass;
        arr.push_back(nlohmann::json{
            {"name", r.name}, {"pass", r.pass}, {"note", r.note}, {"detail", r.detail}});
    }
    write_json((out / "suite.json").string(), {{"all_pass", all}, {"criteria", arr}});
    write_json((out / "manifest.json").string(),
               make_manifest("suite", nlohmann::json::object(), nlohmann::json::object()));
    return all ? 0 : 1;
}

}  // namespace hierisk
