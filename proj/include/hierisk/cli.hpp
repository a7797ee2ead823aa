#pragma once

// Subcommand dispatch behind the hierisk binary. run() takes an already
// parsed RunConfig and is an ordinary function, so tests can drive whole jobs
// in-process and byte-compare the artifacts they leave behind. Flag parsing
// lives in tools/main.cpp; the suite subcommand lives with the acceptance
// battery, which needs run() and would otherwise pull this header into a
// cycle.
//
// Artifact layout, everything under cfg.out_dir:
//   validate       validation.json
//   simulate       paths.csv
//   risk           risk.json, bsde_curve.csv
//   rbsde          rbsde.json, then rbsde_curve.csv (reflect) or
//                  bsde_curve.csv (penalize); oracle is summary-only
//   hjb-follower   follower_value.csv, follower_policy.csv, residual.json
//   hjb-leader     leader_value.csv, leader_policy.csv, projection.csv,
//                  residual.json
//   stackelberg    leader_value.csv, follower_value.csv, policy.csv,
//                  projection.csv, summary.json
// plus manifest.json everywhere: the spec itself, its hash, and every
// resolved parameter, enough to re-run the job exactly. Artifacts never
// depend on wall clock, machine identity, or worker count.

#include <cstdint>
#include <cstdio>
#include <filesystem>
#include <string>
#include <utility>
#include <vector>

#include "bsde.hpp"
#include "common.hpp"
#include "hierarchy.hpp"
#include "hjbgrid.hpp"
#include "io.hpp"
#include "parallel.hpp"
#include "problem.hpp"
#include "rbsde.hpp"
#include "sde.hpp"

namespace hierisk {

struct RunConfig {
    std::string subcommand;
    std::string spec_path;      // read when spec_json is null, inside run()'s
    nlohmann::json spec_json;   // error boundary, so bad files land in error.json
    std::string out_dir = ".";

    int steps = 0;        // 0: CFL-limited for grid jobs, 100 for Monte Carlo
    int nodes = 0;        // 0: 201
    double x_min = 0.0;   // x_min == x_max: bounds from suggest_space_bounds
    double x_max = 0.0;
    int paths = 10000;
    std::uint64_t seed = 1;
    int degree = 2;

    std::string payoff;              // risk: expression; empty = follower terminal
    std::string method = "reflect";  // rbsde: reflect | penalize | oracle
    double penalty = 256.0;
    int tree_steps = 512;

    std::string mode = "coupled";  // stackelberg: coupled | fixed-point
    int max_iters = 50;
    double split = -1.0;   // stackelberg: run the split check at this time
    bool verify = false;   // stackelberg: simulate under the computed policies

    int u_index = 0;
    int v_index = 0;
    int threads = -1;  // -1: leave the worker pool as it is
};

namespace detail {

inline void require_control_indices(const ProblemSpec& spec, int iu, int iv) {
    if (iu < 0 || iu >= int(spec.control_grid_u.size()))
        throw SpecError("u index " + std::to_string(iu) + " is outside the control grid");
    if (iv < 0 || iv >= int(spec.control_grid_v.size()))
        throw SpecError("v index " + std::to_string(iv) + " is outside the control grid");
}

struct ResolvedGrids {
    TimeGrid time;
    SpaceGrid space;
    double lo = 0.0;  // raw bounds handed to make_space_grid; the manifest
    double hi = 0.0;  // records these, not realized node positions, so a
                      // re-run rebuilds the identical grid
};

// Space bounds come from the spec alone (fixed probe seed), never from
// cfg.seed: moving the PDE grid when someone reseeds the Monte Carlo side
// would be a nasty surprise.
inline ResolvedGrids resolve_grids(const RunConfig& cfg, const ProblemSpec& spec) {
    double lo = cfg.x_min;
    double hi = cfg.x_max;
    if (lo == hi) {
        const auto b = suggest_space_bounds(spec);
        lo = b.first;
        hi = b.second;
    }
    const int m = cfg.nodes > 0 ? cfg.nodes : 201;
    SpaceGrid sg = make_space_grid(lo, hi, m, spec.x0[0]);
    const int n = cfg.steps > 0 ? cfg.steps : cfl_steps(spec, sg, spec.horizon);
    return {TimeGrid(spec.horizon, n), sg, lo, hi};
}

inline int mc_steps(const RunConfig& cfg) { return cfg.steps > 0 ? cfg.steps : 100; }

inline nlohmann::json grid_parameters(const ResolvedGrids& g) {
    return {{"steps", g.time.steps},
            {"nodes", g.space.nodes},
            {"x_min", g.lo},
            {"x_max", g.hi}};
}

inline void write_manifest(const std::filesystem::path& out, const RunConfig& cfg,
                           nlohmann::json parameters) {
    write_json((out / "manifest.json").string(),
               make_manifest(cfg.subcommand, cfg.spec_json, std::move(parameters)));
}

// Exit 2, not 1, when the spec merely fails its checks: the job itself ran
// fine and validation.json is the report. Structural errors (unparseable
// spec) still surface as error.json with exit 1 like everywhere else.
inline int run_validate(const RunConfig& cfg, const std::filesystem::path& out) {
    const ProblemSpec spec = load_spec(cfg.spec_json);
    const ValidationReport rep = validate_spec(spec, 512, cfg.seed);
    write_json((out / "validation.json").string(), rep.to_json());
    write_manifest(out, cfg, {{"samples", rep.samples}, {"seed", cfg.seed}});
    return rep.pass ? 0 : 2;
}

inline int run_simulate(const RunConfig& cfg, const std::filesystem::path& out) {
    const ProblemSpec spec = load_spec(cfg.spec_json);
    require_valid(spec);
    require_control_indices(spec, cfg.u_index, cfg.v_index);
    const int steps = mc_steps(cfg);
    const TimeGrid tg(spec.horizon, steps);
    const PathEnsemble ens =
        simulate_paths(spec, tg, cfg.paths, cfg.seed, fixed_controls(cfg.u_index, cfg.v_index));
    export_ensemble(ens, (out / "paths.csv").string());
    write_manifest(out, cfg,
                   {{"paths", cfg.paths},
                    {"steps", steps},
                    {"seed", cfg.seed},
                    {"u_index", cfg.u_index},
                    {"v_index", cfg.v_index}});
    return 0;
}

inline int run_risk(const RunConfig& cfg, const std::filesystem::path& out) {
    const ProblemSpec spec = load_spec(cfg.spec_json);
    const Expr payoff = cfg.payoff.empty() ? spec.follower_terminal : Expr::parse(cfg.payoff);
    const int steps = mc_steps(cfg);
    BsdeOptions opt;
    opt.degree = cfg.degree;
    const RiskResult r = risk_measure(spec, payoff, cfg.paths, steps, cfg.seed, opt);
    export_bsde_curve(r.solution, TimeGrid(spec.horizon, steps), (out / "bsde_curve.csv").string());
    write_json((out / "risk.json").string(), {{"rho_0", r.rho},
                                              {"standard_error", r.se},
                                              {"paths", cfg.paths},
                                              {"steps", steps},
                                              {"degree", cfg.degree}});
    write_manifest(out, cfg,
                   {{"payoff", cfg.payoff},
                    {"paths", cfg.paths},
                    {"steps", steps},
                    {"seed", cfg.seed},
                    {"degree", cfg.degree}});
    return 0;
}

inline int run_rbsde(const RunConfig& cfg, const std::filesystem::path& out) {
    if (cfg.method != "reflect" && cfg.method != "penalize" && cfg.method != "oracle")
        throw SpecError("unknown rbsde method: " + cfg.method);
    const ProblemSpec spec = load_spec(cfg.spec_json);
    if (cfg.method == "oracle") {
        const double price = optimal_stopping_oracle(spec, cfg.tree_steps);
        write_json((out / "rbsde.json").string(),
                   {{"method", "oracle"}, {"y0", price}, {"tree_steps", cfg.tree_steps}});
        write_manifest(out, cfg, {{"method", cfg.method}, {"tree_steps", cfg.tree_steps}});
        return 0;
    }
    require_valid(spec);
    require_control_indices(spec, cfg.u_index, cfg.v_index);
    const int steps = mc_steps(cfg);
    const TimeGrid tg(spec.horizon, steps);
    const PathEnsemble ens =
        simulate_paths(spec, tg, cfg.paths, cfg.seed, fixed_controls(cfg.u_index, cfg.v_index));
    const std::vector<double> terminal = terminal_table(spec, ens, true);
    ReflectOptions opt;
    opt.degree = cfg.degree;
    nlohmann::json summary;
    if (cfg.method == "reflect") {
        const ReflectedSolution sol = solve_reflected(spec, ens, terminal, opt);
        export_rbsde_curve(sol, (out / "rbsde_curve.csv").string());
        summary = {{"method", "reflect"}, {"y0", sol.y0}, {"standard_error", sol.se0}};
    } else {
        const BsdeResult r = solve_penalized(spec, ens, terminal, cfg.penalty, opt);
        export_bsde_curve(r, tg, (out / "bsde_curve.csv").string());
        summary = {{"method", "penalize"},
                   {"y0", r.y0},
                   {"standard_error", r.se0},
                   {"penalty", cfg.penalty}};
    }
    summary["paths"] = cfg.paths;
    summary["steps"] = steps;
    write_json((out / "rbsde.json").string(), summary);
    write_manifest(out, cfg,
                   {{"method", cfg.method},
                    {"paths", cfg.paths},
                    {"steps", steps},
                    {"seed", cfg.seed},
                    {"degree", cfg.degree},
                    {"penalty", cfg.penalty},
                    {"u_index", cfg.u_index},
                    {"v_index", cfg.v_index}});
    return 0;
}

inline int run_hjb_follower(const RunConfig& cfg, const std::filesystem::path& out) {
    const ProblemSpec spec = load_spec(cfg.spec_json);
    require_control_indices(spec, cfg.u_index, 0);
    const ResolvedGrids g = resolve_grids(cfg, spec);
    const FollowerGridSolution fol =
        solve_follower_hjb(spec, g.time, g.space, LeaderControl::fixed(cfg.u_index));
    export_value_field(fol.value, (out / "follower_value.csv").string());
    export_policy_field(fol.policy, spec, g.time, g.space, (out / "follower_policy.csv").string());
    write_json((out / "residual.json").string(),
               pde_residual(fol.value, spec, fol.policy, GridEquation::follower).to_json());
    nlohmann::json params = grid_parameters(g);
    params["u_index"] = cfg.u_index;
    write_manifest(out, cfg, params);
    return 0;
}

// One-pass play: the reply table is computed against a follower field that
// assumes the pinned leader index, then the leader optimizes over it once.
// The alternating and coupled equilibrium solves are the stackelberg job.
inline int run_hjb_leader(const RunConfig& cfg, const std::filesystem::path& out) {
    const ProblemSpec spec = load_spec(cfg.spec_json);
    require_control_indices(spec, cfg.u_index, 0);
    const ResolvedGrids g = resolve_grids(cfg, spec);
    const FollowerGridSolution fol =
        solve_follower_hjb(spec, g.time, g.space, LeaderControl::fixed(cfg.u_index));
    const LeaderGridSolution lead =
        solve_leader_obstacle(spec, g.time, g.space, fol.response, fol.value);
    export_value_field(lead.value, (out / "leader_value.csv").string());
    export_policy_field(lead.policy, spec, g.time, g.space, (out / "leader_policy.csv").string());
    export_value_field(lead.projection, (out / "projection.csv").string());
    write_json((out / "residual.json").string(),
               pde_residual(lead.value, spec, lead.policy, GridEquation::leader).to_json());
    nlohmann::json params = grid_parameters(g);
    params["u_index"] = cfg.u_index;
    write_manifest(out, cfg, params);
    return 0;
}

inline int run_stackelberg(const RunConfig& cfg, const std::filesystem::path& out) {
    StackelbergMode mode;
    if (cfg.mode == "coupled")
        mode = StackelbergMode::coupled;
    else if (cfg.mode == "fixed-point" || cfg.mode == "fixed_point")
        mode = StackelbergMode::fixed_point;
    else
        throw SpecError("unknown stackelberg mode: " + cfg.mode);
    const ProblemSpec spec = load_spec(cfg.spec_json);
    const ResolvedGrids g = resolve_grids(cfg, spec);
    const StackelbergSolution sol = stackelberg_solve(spec, g.time, g.space, mode, cfg.max_iters);
    export_value_field(sol.leader_value, (out / "leader_value.csv").string());
    export_value_field(sol.follower_value, (out / "follower_value.csv").string());
    // Both players act on the same (u, v) pair per node, so one policy file.
    export_policy_field(sol.leader_policy, spec, g.time, g.space, (out / "policy.csv").string());
    export_value_field(sol.reflection_residual, (out / "projection.csv").string());

    const int j0 = g.space.anchor_index;
    nlohmann::json summary{
        {"leader_value_0", sol.leader_value.at(0, j0)},
        {"follower_value_0", sol.follower_value.at(0, j0)},
        {"mode", cfg.mode},
        {"converged", sol.converged},
        {"certificates", argmin_certificates(spec, g.time, g.space, sol).to_json()}};
    nlohmann::json iters = nlohmann::json::array();
    for (const IterationRecord& it : sol.iterations)
        iters.push_back(nlohmann::json{{"iteration", it.iteration}, {"changed", it.changed}});
    summary["iterations"] = iters;
    if (cfg.split >= 0.0)
        summary["dpp"] = dpp_check(spec, g.time, g.space, sol, cfg.split).to_json();
    if (cfg.verify) {
        summary["gaps"] =
            verify_by_simulation(spec, g.time, g.space, sol, cfg.paths, cfg.seed).to_json();
        const PathEnsemble ens =
            simulate_paths(spec, g.time, cfg.paths, cfg.seed, policy_rule(sol, g.space));
        summary["acceptability"] = controllability_check(spec, g.time, g.space, sol, ens).to_json();
    }
    write_json((out / "summary.json").string(), summary);
    nlohmann::json params = grid_parameters(g);
    params["mode"] = cfg.mode;
    params["max_iters"] = cfg.max_iters;
    params["split"] = cfg.split;
    params["verify"] = cfg.verify;
    params["paths"] = cfg.paths;
    params["seed"] = cfg.seed;
    write_manifest(out, cfg, params);
    return 0;
}

}  // namespace detail

inline int run(RunConfig cfg) {
    const std::filesystem::path out(cfg.out_dir);
    try {
        std::filesystem::create_directories(out);
        if (cfg.threads >= 0) set_thread_count(unsigned(cfg.threads));
        if (cfg.spec_json.is_null() && !cfg.spec_path.empty())
            cfg.spec_json = nlohmann::json::parse(read_text(cfg.spec_path));
        if (cfg.subcommand == "validate") return detail::run_validate(cfg, out);
        if (cfg.subcommand == "simulate") return detail::run_simulate(cfg, out);
        if (cfg.subcommand == "risk") return detail::run_risk(cfg, out);
        if (cfg.subcommand == "rbsde") return detail::run_rbsde(cfg, out);
        if (cfg.subcommand == "hjb-follower") return detail::run_hjb_follower(cfg, out);
        if (cfg.subcommand == "hjb-leader") return detail::run_hjb_leader(cfg, out);
        if (cfg.subcommand == "stackelberg") return detail::run_stackelberg(cfg, out);
        throw SpecError("unknown subcommand: " + cfg.subcommand);
    } catch (const std::exception& e) {
        std::fprintf(stderr, "hierisk %s: %s\n", cfg.subcommand.c_str(), e.what());
        try {
            std::filesystem::create_directories(out);
            write_json((out / "error.json").string(),
                       {{"error", e.what()}, {"subcommand", cfg.subcommand}});
        } catch (...) {
            // best effort; the exit status still carries the failure
        }
        return 1;
    }
}

}  // namespace hierisk
