#include <gtest/gtest.h>

#include <cmath>

#include "fixtures.hpp"
#include "hierisk/rbsde.hpp"

using namespace hierisk;
using nlohmann::json;

namespace {

// martingale geometric state, put-style payoff that doubles as the obstacle
ProblemSpec put_spec() {
    json j = base_spec_json();
    j["diffusion"] = {{"0.2*x"}};
    j["x0"] = {1.0};
    j["leader_terminal"] = "pos(1-x)";
    j["obstacle"] = "pos(1-x)";
    j["ellipticity_floor"] = 0.001;
    return load_spec(j);
}

double norm_cdf(double x) { return 0.5 * std::erfc(-x / std::sqrt(2.0)); }

// at-the-money put on a driftless geometric state, vol 0.2, unit horizon
double closed_form_put() { return norm_cdf(0.1) - norm_cdf(-0.1); }

}  // namespace

TEST(Reflected, SlackObstacleReproducesPlainSolve) {
    ProblemSpec s = base_spec();
    TimeGrid g(1.0, 24);
    PathEnsemble ens = simulate_paths(s, g, 4000, 7);
    std::vector<double> xi = terminal_table(s, ens, true);

    BsdeResult plain = solve_bsde(s, ens, xi);
    ReflectedSolution refl = solve_reflected(s, ens, xi);

    EXPECT_EQ(refl.y0, plain.y0);
    EXPECT_EQ(refl.se0, plain.se0);
    for (int p = 0; p < 4000; p += 997)
        for (int k = 0; k <= 24; ++k) {
            EXPECT_EQ(refl.y_at(p, k), plain.y_at(p, k));
            EXPECT_EQ(refl.a_at(p, k), 0.0);
        }

    DiagnosticsReport rep = reflection_diagnostics(refl, ens);
    EXPECT_EQ(rep.max_obstacle_violation, 0.0);
    EXPECT_EQ(rep.max_complementarity, 0.0);
    EXPECT_EQ(rep.max_increment_gap, 0.0);
    EXPECT_GT(rep.max_abs_y, 0.0);
}

TEST(Reflected, ConstantValueWhenTerminalEqualsObstacle) {
    json j = base_spec_json();
    j["leader_terminal"] = "5";
    j["obstacle"] = "5";
    ProblemSpec s = load_spec(j);
    TimeGrid g(1.0, 16);
    PathEnsemble ens = simulate_paths(s, g, 1000, 3);
    std::vector<double> xi(1000, 5.0);

    // regression of a constant is exact up to solver rounding, so Y rides the
    // obstacle with pushes at roundoff scale
    ReflectedSolution refl = solve_reflected(s, ens, xi);
    EXPECT_NEAR(refl.y0, 5.0, 1e-12);
    for (int p = 0; p < 1000; p += 111)
        for (int k = 0; k <= 16; ++k) {
            EXPECT_NEAR(refl.y_at(p, k), 5.0, 1e-12);
            EXPECT_NEAR(refl.a_at(p, k), 0.0, 1e-12);
            if (k < 16) EXPECT_NEAR(refl.z_at(p, k)[0], 0.0, 1e-12);
        }
}

TEST(Reflected, BindingObstacleLiftsTheValue) {
    // obstacle sits 2(T-t) above the unconstrained value x^2 + (T-t), so the
    // solve should ride the obstacle and start at h(0, x0) = 2 exactly
    json j = base_spec_json();
    j["obstacle"] = "x^2 + 2*(1-t)";
    ProblemSpec s = load_spec(j);
    const int N = 64, P = 8000;
    TimeGrid g(1.0, N);
    PathEnsemble ens = simulate_paths(s, g, P, 11);
    std::vector<double> xi = terminal_table(s, ens, true);

    ReflectedSolution refl = solve_reflected(s, ens, xi);
    EXPECT_NEAR(refl.y0, 2.0, 1e-10);

    double mean_aN = 0;
    for (int p = 0; p < P; ++p) mean_aN += refl.a_at(p, N);
    mean_aN /= P;
    EXPECT_GT(mean_aN, 0.5);
    EXPECT_LT(mean_aN, 1.5);

    DiagnosticsReport rep = reflection_diagnostics(refl, ens);
    EXPECT_EQ(rep.max_obstacle_violation, 0.0);
    EXPECT_EQ(rep.max_complementarity, 0.0);
}

TEST(Reflected, TerminalBelowObstacleThrows) {
    ProblemSpec s = base_spec();
    TimeGrid g(1.0, 8);
    PathEnsemble ens = simulate_paths(s, g, 200, 1);
    std::vector<double> xi = terminal_table(s, ens, true);
    ReflectOptions opt;
    opt.obstacle_shift = 1e7;  // lifts h far above any terminal value
    try {
        solve_reflected(s, ens, xi, opt);
        FAIL() << "expected a rejection";
    } catch (const SolveError& e) {
        EXPECT_NE(std::string(e.what()).find("below the obstacle"), std::string::npos);
    }
}

TEST(Penalized, ZeroCoefficientMatchesPlainSolve) {
    ProblemSpec s = base_spec();
    TimeGrid g(1.0, 16);
    PathEnsemble ens = simulate_paths(s, g, 2000, 9);
    std::vector<double> xi = terminal_table(s, ens, true);
    BsdeResult plain = solve_bsde(s, ens, xi);
    BsdeResult pen = solve_penalized(s, ens, xi, 0.0);
    EXPECT_EQ(pen.y0, plain.y0);
}

TEST(Penalized, InactiveObstacleLeavesSolveUntouched) {
    ProblemSpec s = base_spec();  // obstacle -1e6, never touched
    TimeGrid g(1.0, 64);
    PathEnsemble ens = simulate_paths(s, g, 2000, 9);
    std::vector<double> xi = terminal_table(s, ens, true);
    BsdeResult plain = solve_bsde(s, ens, xi);
    BsdeResult pen = solve_penalized(s, ens, xi, 32.0);
    EXPECT_EQ(pen.y0, plain.y0);
}

TEST(Penalized, RejectsPenaltyStifferThanTheTimestep) {
    ProblemSpec s = base_spec();
    TimeGrid g(1.0, 16);
    PathEnsemble ens = simulate_paths(s, g, 500, 2);
    std::vector<double> xi = terminal_table(s, ens, true);
    try {
        solve_penalized(s, ens, xi, 64.0);  // dt n = 4
        FAIL() << "expected a rejection";
    } catch (const SolveError& e) {
        EXPECT_NE(std::string(e.what()).find("unstable"), std::string::npos);
    }
}

TEST(Penalized, ValueIncreasesWithThePenalty) {
    ProblemSpec s = put_spec();
    const int N = 64, P = 8192;
    TimeGrid g(1.0, N);
    PathEnsemble ens = simulate_paths(s, g, P, 41);
    std::vector<double> xi = terminal_table(s, ens, true);

    const double y4 = solve_penalized(s, ens, xi, 4.0).y0;
    const double y16 = solve_penalized(s, ens, xi, 16.0).y0;
    const double y64 = solve_penalized(s, ens, xi, 64.0).y0;
    EXPECT_LE(y4, y16 + 1e-10);
    EXPECT_LE(y16, y64 + 1e-10);

    // penalization approaches the reflected value from below
    ReflectedSolution refl = solve_reflected(s, ens, xi);
    EXPECT_LE(y64, refl.y0 + 2e-3);
    EXPECT_GT(y64, refl.y0 - 2e-2);
}

TEST(Reflected, DominatesTheUnconstrainedValue) {
    ProblemSpec s = put_spec();
    TimeGrid g(1.0, 32);
    PathEnsemble ens = simulate_paths(s, g, 4096, 13);
    std::vector<double> xi = terminal_table(s, ens, true);
    double xi_mean = 0;
    for (double v : xi) xi_mean += v;
    xi_mean /= xi.size();

    // zero driver, so the push A_N >= 0 is the whole excess over plain MC
    ReflectedSolution refl = solve_reflected(s, ens, xi);
    EXPECT_GE(refl.y0, xi_mean - 1e-15);
}

TEST(StoppingOracle, FlatLatticeExpectationIsExact) {
    // unit diffusion maps to the plain symmetric walk: E x_T^2 = T exactly
    ProblemSpec s = base_spec();
    EXPECT_NEAR(optimal_stopping_oracle(s, 64), 1.0, 1e-12);
}

TEST(StoppingOracle, MatchesClosedFormPutValue) {
    // driftless geometric state: stopping early never pays, so the tree must
    // land on the European value
    ProblemSpec s = put_spec();
    const double bs = closed_form_put();
    const double o512 = optimal_stopping_oracle(s, 512);
    const double o1024 = optimal_stopping_oracle(s, 1024);
    EXPECT_NEAR(o512, bs, 1e-3);
    EXPECT_NEAR(o1024, bs, 1e-3);
    EXPECT_LT(std::fabs(o512 - o1024), 5e-4);
}

TEST(StoppingOracle, RejectsSpecsOutsideItsScope) {
    {
        json j = base_spec_json();
        j["state_dim"] = 2;
        j["x0"] = {0.0, 0.0};
        j["drift"] = {"0", "0"};
        j["diffusion"] = json::array({json::array({"1", "0"}), json::array({"0", "1"})});
        EXPECT_THROW(optimal_stopping_oracle(load_spec(j), 32), SolveError);
    }
    {
        json j = base_spec_json();
        j["drift"] = {"t"};
        EXPECT_THROW(optimal_stopping_oracle(load_spec(j), 32), SolveError);
    }
    {
        json j = base_spec_json();
        j["generator"] = "0.1*y";
        EXPECT_THROW(optimal_stopping_oracle(load_spec(j), 32), SolveError);
    }
    {
        json j = base_spec_json();
        j["generator"] = "0.3*abs(z) + 0.1";
        EXPECT_THROW(optimal_stopping_oracle(load_spec(j), 32), SolveError);
    }
    {
        json j = base_spec_json();
        j["drift"] = {"50"};
        EXPECT_THROW(optimal_stopping_oracle(load_spec(j), 16), SolveError);
    }
    {
        json j = base_spec_json();
        j["diffusion"] = {{"0.2*x"}};  // x0 = 0 pins the lattice at sigma = 0
        EXPECT_THROW(optimal_stopping_oracle(load_spec(j), 16), SolveError);
    }
}

TEST(Reflected, OracleGapIsUpwardBiasThatShrinksWithTheBasis) {
    // the fitted-value recursion clips regression error one-sidedly at the
    // obstacle, so it sits above the tree value; the excess is exactly
    // mean(A_N) here (zero driver) and shrinks as the basis improves
    ProblemSpec s = put_spec();
    const int N = 64, P = 16384;
    TimeGrid g(1.0, N);
    PathEnsemble ens = simulate_paths(s, g, P, 77);
    std::vector<double> xi = terminal_table(s, ens, true);
    const double oracle = optimal_stopping_oracle(s, 512);

    ReflectOptions o2, o5;
    o2.degree = 2;
    o5.degree = 5;
    ReflectedSolution r2 = solve_reflected(s, ens, xi, o2);
    ReflectedSolution r5 = solve_reflected(s, ens, xi, o5);

    EXPECT_GE(r2.y0, oracle - 3 * r2.se0);
    EXPECT_GE(r5.y0, oracle - 3 * r5.se0);
    EXPECT_LT(r5.y0, r2.y0);               // richer basis, smaller ratchet
    EXPECT_LT(r5.y0, oracle * 1.25);        // measured ~ +10% at these sizes
    EXPECT_LT(r2.y0, oracle * 1.45);        // measured ~ +23%

    double xim = 0, a5 = 0;
    for (double v : xi) xim += v;
    xim /= P;
    for (int p = 0; p < P; ++p) a5 += r5.a_at(p, N);
    a5 /= P;
    EXPECT_NEAR(r5.y0 - xim, a5, 1e-10);
}

TEST(Reflected, IncrementFormulaHoldsApproximately) {
    ProblemSpec s = put_spec();
    const int N = 64, P = 8192;
    TimeGrid g(1.0, N);
    PathEnsemble ens = simulate_paths(s, g, P, 19);
    std::vector<double> xi = terminal_table(s, ens, true);

    ReflectOptions opt;
    opt.degree = 5;
    ReflectedSolution refl = solve_reflected(s, ens, xi, opt);
    DiagnosticsReport rep = reflection_diagnostics(refl, ens);
    EXPECT_EQ(rep.max_obstacle_violation, 0.0);
    EXPECT_EQ(rep.max_complementarity, 0.0);
    EXPECT_GT(rep.max_abs_y, 0.5);
    // typical paths replicate the increment formula well; the worst path is
    // dominated by the martingale replication error and stays order max|Y|
    EXPECT_LE(rep.mean_increment_gap, 5e-2 * rep.max_abs_y);
    EXPECT_LE(rep.max_increment_gap, 1.5 * rep.max_abs_y);
}

TEST(Stability, ZeroPerturbationReportsZeros) {
    ProblemSpec s = base_spec();
    TimeGrid g(1.0, 16);
    PathEnsemble ens = simulate_paths(s, g, 1000, 4);
    std::vector<double> xi = terminal_table(s, ens, true);

    StabilityReport rep = stability_probe(s, ens, xi, Perturbation{}, 3);
    EXPECT_TRUE(rep.monotone);
    ASSERT_EQ(rep.levels.size(), 4u);
    for (const auto& lv : rep.levels) {
        EXPECT_EQ(lv.sup_dY, 0.0);
        EXPECT_EQ(lv.sum_dZ2_dt, 0.0);
        EXPECT_EQ(lv.dA_T_sq, 0.0);
    }
}

TEST(Stability, ConstantTerminalShiftPropagatesExactly) {
    // with a slack obstacle and zero driver, shifting the terminal by c moves
    // every Y by c, leaves Z alone (the centered estimator kills constants)
    // and never touches A
    ProblemSpec s = base_spec();
    TimeGrid g(1.0, 16);
    PathEnsemble ens = simulate_paths(s, g, 2000, 8);
    std::vector<double> xi = terminal_table(s, ens, true);

    Perturbation pert;
    pert.d_xi = 0.25;
    StabilityReport rep = stability_probe(s, ens, xi, pert, 3);
    EXPECT_TRUE(rep.monotone);
    for (const auto& lv : rep.levels) {
        EXPECT_NEAR(lv.sup_dY, 0.25 * lv.scale, 1e-10);
        EXPECT_LE(lv.sum_dZ2_dt, 1e-18);
        EXPECT_EQ(lv.dA_T_sq, 0.0);
    }
}

TEST(Stability, PerturbationResponseShrinksWithTheScale) {
    ProblemSpec s = put_spec();
    TimeGrid g(1.0, 32);
    PathEnsemble ens = simulate_paths(s, g, 4096, 23);
    std::vector<double> xi = terminal_table(s, ens, true);

    Perturbation pert;
    pert.d_xi = 0.05;
    pert.d_driver = 0.05;
    pert.d_obstacle = 0.05;
    StabilityReport rep = stability_probe(s, ens, xi, pert, 3);
    EXPECT_TRUE(rep.monotone);
    ASSERT_EQ(rep.levels.size(), 4u);
    EXPECT_LT(rep.levels.back().sup_dY, rep.levels.front().sup_dY);
    EXPECT_GT(rep.levels.front().sup_dY, 0.0);
}
