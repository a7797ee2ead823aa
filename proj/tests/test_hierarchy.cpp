#include <gtest/gtest.h>

#include <cmath>
#include <cstdint>

#include "fixtures.hpp"
#include "hierisk/hierarchy.hpp"

using namespace hierisk;
using nlohmann::json;

namespace {

ProblemSpec lq_spec() {
    json j = base_spec_json();
    j["drift"] = {"u+v"};
    j["leader_running_cost"] = "u^2+x^2";
    j["follower_running_cost"] = "v^2+x^2";
    j["control_grid_u"] = {-1.0, 0.0, 1.0};
    j["control_grid_v"] = {-1.0, 0.0, 1.0};
    return load_spec(j);
}

ProblemSpec put_spec() {
    json j = base_spec_json();
    j["diffusion"] = {{"0.2*x"}};
    j["x0"] = {1.0};
    j["leader_terminal"] = "pos(1-x)";
    j["obstacle"] = "pos(1-x)";
    j["leader_running_cost"] = "0";
    j["follower_running_cost"] = "0";
    j["follower_terminal"] = "0";
    j["ellipticity_floor"] = 0.001;
    return load_spec(j);
}

double max_field_diff(const ValueField& a, const ValueField& b) {
    double m = 0;
    for (std::size_t i = 0; i < a.values.size(); ++i)
        m = std::max(m, std::fabs(a.values[i] - b.values[i]));
    return m;
}

}  // namespace

// The coupled sweep is its own fixed point: re-solving the follower under the
// recorded leader policy and the leader against that response reproduces both
// fields exactly, because the sequential solvers run the same arithmetic on
// the same slices.
TEST(Stackelberg, CoupledMatchesTheSequentialComposition) {
    const ProblemSpec spec = lq_spec();
    const SpaceGrid sg = make_space_grid(-6.0, 6.0, 121, 0.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    const auto sol = stackelberg_solve(spec, tg, sg);
    EXPECT_TRUE(sol.converged);
    EXPECT_TRUE(sol.iterations.empty());

    const auto fol =
        solve_follower_hjb(spec, tg, sg, LeaderControl::from_field(&sol.leader_policy));
    const auto lead = solve_leader_obstacle(spec, tg, sg, fol.response, fol.value);
    EXPECT_EQ(0.0, max_field_diff(sol.follower_value, fol.value));
    EXPECT_EQ(0.0, max_field_diff(sol.leader_value, lead.value));
    EXPECT_EQ(0.0, max_field_diff(sol.reflection_residual, lead.projection));
    EXPECT_EQ(sol.response.v_of_u, fol.response.v_of_u);
    EXPECT_EQ(sol.leader_policy.u, lead.policy.u);
    EXPECT_EQ(sol.leader_policy.v, lead.policy.v);
}

TEST(Stackelberg, DecoupledProblemSeparates) {
    json j = base_spec_json();
    j["drift"] = {"u+v"};
    j["leader_running_cost"] = "u^2";
    j["follower_running_cost"] = "v^2";
    // nonnegative controls keep the drift sign fixed, so the upwind side never
    // flips and the reply table is u-independent; the alternation then settles
    j["control_grid_u"] = {0.0, 1.0};
    j["control_grid_v"] = {0.0, 1.0};
    const ProblemSpec spec = load_spec(j);
    const SpaceGrid sg = make_space_grid(-6.0, 6.0, 121, 0.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));

    const auto co = stackelberg_solve(spec, tg, sg);
    // the reply never depends on which u it answers
    for (int k = 0; k < tg.steps; ++k)
        for (int j2 = 0; j2 < sg.nodes; ++j2)
            ASSERT_EQ(co.response.at(k, j2, 0), co.response.at(k, j2, 1));

    // the reply boundary still drifts between alternation passes (u sits in
    // the follower's drift), so settling takes a few dozen of them
    const auto fp = stackelberg_solve(spec, tg, sg, StackelbergMode::fixed_point, 50);
    ASSERT_TRUE(fp.converged);
    EXPECT_EQ(0.0, fp.iterations.back().changed);
    EXPECT_EQ(0.0, max_field_diff(co.follower_value, fp.follower_value));
    EXPECT_EQ(0.0, max_field_diff(co.leader_value, fp.leader_value));
    EXPECT_EQ(co.leader_policy.u, fp.leader_policy.u);
    EXPECT_EQ(co.follower_policy.v, fp.follower_policy.v);
}

// A settled alternation satisfies the same per-node argmin equations as the
// coupled sweep, and those determine the backward induction uniquely.
TEST(Stackelberg, ConvergedFixedPointAgreesWithTheCoupledSweep) {
    const ProblemSpec spec = lq_spec();
    const SpaceGrid sg = make_space_grid(-6.0, 6.0, 81, 0.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    const auto co = stackelberg_solve(spec, tg, sg);
    const auto fp = stackelberg_solve(spec, tg, sg, StackelbergMode::fixed_point, 50);
    ASSERT_TRUE(fp.converged);
    EXPECT_LE(max_field_diff(co.leader_value, fp.leader_value), 1e-12);
    EXPECT_LE(max_field_diff(co.follower_value, fp.follower_value), 1e-12);
    EXPECT_LE(std::fabs(co.leader_value.at(0, sg.anchor_index) -
                        fp.leader_value.at(0, sg.anchor_index)),
              2e-2);
}

TEST(Stackelberg, SingleLeaderControlCollapsesToTheSequentialSolves) {
    const ProblemSpec spec = put_spec();
    const SpaceGrid sg = make_space_grid(0.3, 2.3, 101, 1.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    const auto co = stackelberg_solve(spec, tg, sg);
    const auto fol = solve_follower_hjb(spec, tg, sg, LeaderControl::fixed(0));
    const auto lead = solve_leader_obstacle(spec, tg, sg, fol.response, fol.value);
    EXPECT_EQ(0.0, max_field_diff(co.follower_value, fol.value));
    EXPECT_EQ(0.0, max_field_diff(co.leader_value, lead.value));
    EXPECT_EQ(0.0, max_field_diff(co.reflection_residual, lead.projection));
}

TEST(Stackelberg, ProjectionResidualMarksTheContactSet) {
    const ProblemSpec spec = put_spec();
    const SpaceGrid sg = make_space_grid(0.3, 2.3, 101, 1.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    const auto sol = stackelberg_solve(spec, tg, sg);
    bool touched = false;
    for (int k = 0; k < tg.steps; ++k)
        for (int j = 0; j < sg.nodes; ++j) {
            const double r = sol.reflection_residual.at(k, j);
            ASSERT_GE(r, 0.0);
            const double x = sg.x(j);
            const double h = spec.obstacle_at(tg.t(k), &x);
            ASSERT_GE(sol.leader_value.at(k, j) - h, 0.0);
            if (r > 0.0) {
                ASSERT_EQ(h, sol.leader_value.at(k, j));
                touched = true;
            }
        }
    EXPECT_TRUE(touched);
}

TEST(Stackelberg, UnsettledAlternationIsFlaggedNotHidden) {
    const ProblemSpec spec = lq_spec();
    const SpaceGrid sg = make_space_grid(-6.0, 6.0, 61, 0.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    const auto sol = stackelberg_solve(spec, tg, sg, StackelbergMode::fixed_point, 1);
    EXPECT_FALSE(sol.converged);
    ASSERT_EQ(1u, sol.iterations.size());
    EXPECT_EQ(1.0, sol.iterations[0].changed);
    // the returned pair is still internally consistent after the re-alignment
    for (int k = 0; k < tg.steps; ++k)
        for (int j = 0; j < sg.nodes; ++j)
            ASSERT_EQ(sol.follower_policy.v_at(k, j),
                      sol.response.at(k, j, sol.leader_policy.u_at(k, j)));
}

TEST(Stackelberg, RejectsBadIterationParameters) {
    const ProblemSpec spec = lq_spec();
    const SpaceGrid sg = make_space_grid(-6.0, 6.0, 61, 0.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    EXPECT_THROW(stackelberg_solve(spec, tg, sg, StackelbergMode::fixed_point, 0), SolveError);
    EXPECT_THROW(stackelberg_solve(spec, tg, sg, StackelbergMode::coupled, 25, 1.0), SolveError);
    EXPECT_THROW(stackelberg_solve(spec, TimeGrid(1.0, 3), sg), SolveError);
}

TEST(Stackelberg, ArgminCertificatesHoldEverywhere) {
    const ProblemSpec spec = lq_spec();
    const SpaceGrid sg = make_space_grid(-6.0, 6.0, 121, 0.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    const auto sol = stackelberg_solve(spec, tg, sg);
    const auto cert = argmin_certificates(spec, tg, sg, sol);
    EXPECT_EQ(long(tg.steps) * (sg.nodes - 2), cert.nodes_checked);
    EXPECT_EQ(0, cert.follower_failures);
    EXPECT_EQ(0, cert.leader_failures);
    EXPECT_EQ(0, cert.consistency_failures);
    EXPECT_TRUE(cert.pass());
}

TEST(Dpp, DegenerateSplitAtTheHorizonIsExact) {
    const ProblemSpec spec = lq_spec();
    const SpaceGrid sg = make_space_grid(-6.0, 6.0, 61, 0.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    const auto sol = stackelberg_solve(spec, tg, sg);
    const auto rep = dpp_check(spec, tg, sg, sol, 1.0);
    EXPECT_EQ(tg.steps, rep.split_index);
    EXPECT_EQ(0.0, rep.max_difference);
}

// Backward induction composes: solving [T/2, T] first and feeding its slice
// to a [0, T/2] solve reruns the identical updates at the same absolute
// times, so the recomposition is exact, not merely close.
TEST(Dpp, RecomposedSolveMatchesTheDirectOne) {
    const ProblemSpec spec = lq_spec();
    const SpaceGrid sg = make_space_grid(-6.0, 6.0, 121, 0.0);
    int steps = cfl_steps(spec, sg, 1.0);
    steps += steps % 2;
    const TimeGrid tg(1.0, steps);
    const auto sol = stackelberg_solve(spec, tg, sg);
    const auto rep = dpp_check(spec, tg, sg, sol, 0.5);
    EXPECT_EQ(steps / 2, rep.split_index);
    EXPECT_EQ(0.0, rep.max_difference);
}

TEST(Dpp, AffineCostRecomposesToTheLinearValue) {
    json j = base_spec_json();
    j["follower_running_cost"] = "1";
    j["follower_terminal"] = "0";
    const ProblemSpec spec = load_spec(j);
    const SpaceGrid sg = make_space_grid(-4.0, 4.0, 41, 0.0);
    int steps = cfl_steps(spec, sg, 1.0);
    steps += steps % 2;
    const TimeGrid tg(1.0, steps);
    const auto sol = stackelberg_solve(spec, tg, sg);
    const auto rep = dpp_check(spec, tg, sg, sol, 0.5);
    EXPECT_EQ(0.0, rep.max_difference);
    for (int k = 0; k <= tg.steps; ++k)
        EXPECT_NEAR(1.0 - tg.t(k), sol.follower_value.at(k, sg.anchor_index), 1e-12);
}

TEST(Dpp, RejectsSplitsOffTheGrid) {
    const ProblemSpec spec = lq_spec();
    const SpaceGrid sg = make_space_grid(-6.0, 6.0, 61, 0.0);
    const TimeGrid tg(1.0, 64);
    const auto sol = stackelberg_solve(spec, tg, sg);
    EXPECT_THROW(dpp_check(spec, tg, sg, sol, 1.0 / 3.0), SolveError);
    EXPECT_THROW(dpp_check(spec, tg, sg, sol, 0.0), SolveError);
    EXPECT_THROW(dpp_check(spec, tg, sg, sol, 1.5), SolveError);
}

TEST(Controllability, UnconstrainedSpecAcceptsEverywhere) {
    const ProblemSpec spec = lq_spec();
    const SpaceGrid sg = make_space_grid(-6.0, 6.0, 121, 0.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    const auto sol = stackelberg_solve(spec, tg, sg);
    const PathEnsemble ens = simulate_paths(spec, tg, 2000, 777, policy_rule(sol, sg));
    const auto rep = controllability_check(spec, tg, sg, sol, ens);
    EXPECT_TRUE(rep.accept);
    EXPECT_EQ(0, rep.violating_paths);
    EXPECT_EQ(0.0, rep.max_terminal_violation);
    EXPECT_LE(rep.max_obstacle_violation, 1e-9 * (1.0 + rep.max_abs_y));
}

TEST(Controllability, ConstantObstacleOnTheBoundaryAccepts) {
    json j = base_spec_json();
    j["leader_terminal"] = "3";
    j["obstacle"] = "3";
    j["leader_running_cost"] = "0";
    j["follower_running_cost"] = "0";
    j["follower_terminal"] = "0";
    const ProblemSpec spec = load_spec(j);
    const SpaceGrid sg = make_space_grid(-6.0, 6.0, 61, 0.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    const auto sol = stackelberg_solve(spec, tg, sg);
    EXPECT_NEAR(3.0, sol.leader_value.at(0, sg.anchor_index), 1e-12);
    const PathEnsemble ens = simulate_paths(spec, tg, 500, 11, policy_rule(sol, sg));
    const auto rep = controllability_check(spec, tg, sg, sol, ens);
    EXPECT_TRUE(rep.accept);
    EXPECT_EQ(0, rep.violating_paths);
    EXPECT_NEAR(3.0, rep.max_abs_y, 1e-12);
}

// The breach region sits beyond the grid's right edge but well inside the
// diffusion's reach, so the node-wise dominance checks pass while a sizable
// share of paths end with the obstacle above the payoff.
TEST(Controllability, TerminalBreachBeyondTheGridRejects) {
    json j = base_spec_json();
    j["x0"] = {3.5};
    j["leader_terminal"] = "0";
    j["obstacle"] = "pos(x-4)-1";
    j["leader_running_cost"] = "0";
    j["follower_running_cost"] = "0";
    j["follower_terminal"] = "0";
    const ProblemSpec spec = load_spec(j);
    const SpaceGrid sg = make_space_grid(0.5, 4.0, 29, 3.5);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    const auto sol =
        stackelberg_solve(spec, tg, sg, StackelbergMode::coupled, 25, 0.0, true);
    const PathEnsemble ens = simulate_paths(spec, tg, 2000, 99, policy_rule(sol, sg));
    const auto rep = controllability_check(spec, tg, sg, sol, ens);
    EXPECT_FALSE(rep.accept);
    EXPECT_GT(rep.violating_paths, 0);
    EXPECT_GT(rep.max_terminal_violation, 0.0);
    EXPECT_NE(std::string::npos, rep.note.find("terminal"));
}

TEST(Controllability, MismatchedEnsembleIsRejected) {
    const ProblemSpec spec = lq_spec();
    const SpaceGrid sg = make_space_grid(-6.0, 6.0, 61, 0.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    const auto sol = stackelberg_solve(spec, tg, sg);
    const PathEnsemble wrong_grid = simulate_paths(spec, TimeGrid(1.0, 7), 50, 5);
    EXPECT_THROW(controllability_check(spec, tg, sg, sol, wrong_grid), SolveError);
    const PathEnsemble wrong_rule = simulate_paths(spec, tg, 50, 5, fixed_controls(0, 0));
    EXPECT_THROW(controllability_check(spec, tg, sg, sol, wrong_rule), SolveError);
}

TEST(Verify, DeterministicCostStreamHasNoGap) {
    json j = base_spec_json();
    j["leader_running_cost"] = "0";
    j["follower_running_cost"] = "1";
    j["follower_terminal"] = "0";
    const ProblemSpec spec = load_spec(j);
    const SpaceGrid sg = make_space_grid(-6.0, 6.0, 61, 0.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    const auto sol = stackelberg_solve(spec, tg, sg);
    const auto rep = verify_by_simulation(spec, tg, sg, sol, 4000, 2024);
    EXPECT_NEAR(1.0, rep.follower_mc, 1e-10);
    EXPECT_LE(std::fabs(rep.follower_gap()), 1e-10);
    EXPECT_LE(rep.follower_se, 1e-12);
    EXPECT_LE(std::fabs(rep.leader_gap()), 3.0 * rep.leader_se + 2e-2);
}

TEST(Verify, LqGridAndMonteCarloAgree) {
    const ProblemSpec spec = lq_spec();
    const SpaceGrid sg = make_space_grid(-6.0, 6.0, 121, 0.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    const auto sol = stackelberg_solve(spec, tg, sg);
    const auto rep = verify_by_simulation(spec, tg, sg, sol, 20000, 515);
    EXPECT_LE(std::fabs(rep.follower_gap()), 3.0 * rep.follower_se + 2e-2);
    EXPECT_LE(std::fabs(rep.leader_gap()), 3.0 * rep.leader_se + 2e-2);
}

// The grid anchor tracks the tree oracle tightly, but the Monte Carlo side of
// the chain is the fitted-value reflected solve, whose regression ratchet
// biases it upward far past the oracle agreement. Pin both facts.
TEST(Verify, ReflectedMonteCarloSitsAboveTheGridOnThePut) {
    const ProblemSpec spec = put_spec();
    const SpaceGrid sg = make_space_grid(0.3, 2.3, 101, 1.0);
    const TimeGrid tg(1.0, cfl_steps(spec, sg, 1.0));
    const auto sol = stackelberg_solve(spec, tg, sg);
    const double tree = optimal_stopping_oracle(spec, 512);
    EXPECT_LE(std::fabs(sol.leader_value.at(0, sg.anchor_index) - tree), 0.01 * tree);
    const auto rep = verify_by_simulation(spec, tg, sg, sol, 4000, 31);
    EXPECT_NEAR(0.0, rep.follower_mc, 1e-12);
    EXPECT_GT(rep.leader_gap(), 0.0);
    EXPECT_LE(rep.leader_gap(), 0.8 * rep.leader_grid);
}
