// hierisk command line. Every subcommand reads one problem spec, writes its
// artifacts plus a manifest into --out, and exits 0 on success. The suite
// subcommand runs the acceptance battery instead of a single job.

#include <cstdlib>
#include <string>

#include <CLI11.hpp>

#include "hierisk/acceptance.hpp"
#include "hierisk/cli.hpp"

int main(int argc, char** argv) {
    CLI::App app{"hierarchical risk solvers", "hierisk"};
    app.require_subcommand(1);
    app.set_version_flag("--version", std::string(hierisk::kVersion));

    hierisk::RunConfig cfg;
    int threads = 0;  // 0: size the pool to the hardware

    auto add_common = [&](CLI::App* sub, bool needs_spec) {
        if (needs_spec)
            sub->add_option("--spec", cfg.spec_path, "problem spec (json)")
                ->required()
                ->check(CLI::ExistingFile);
        sub->add_option("--out", cfg.out_dir, "output directory");
        sub->add_option("--threads", threads, "worker threads (0 = all cores)");
        return sub;
    };
    auto add_grid = [&](CLI::App* sub) {
        sub->add_option("--steps", cfg.steps, "time steps (0 = stability-limited)");
        sub->add_option("--nodes", cfg.nodes, "space nodes");
        sub->add_option("--x-min", cfg.x_min, "left edge of the space grid");
        sub->add_option("--x-max", cfg.x_max, "right edge of the space grid");
    };
    auto add_mc = [&](CLI::App* sub) {
        sub->add_option("--paths", cfg.paths, "simulated paths");
        sub->add_option("--steps", cfg.steps, "time steps");
        sub->add_option("--seed", cfg.seed, "rng seed");
    };

    add_common(app.add_subcommand("validate", "run the spec sanity checks"), true)
        ->add_option("--seed", cfg.seed, "probe seed");

    CLI::App* sim = add_common(app.add_subcommand("simulate", "sample controlled paths"), true);
    add_mc(sim);
    sim->add_option("--u-index", cfg.u_index, "pinned leader control index");
    sim->add_option("--v-index", cfg.v_index, "pinned follower control index");

    CLI::App* risk = add_common(app.add_subcommand("risk", "risk value of a payoff"), true);
    add_mc(risk);
    risk->add_option("--degree", cfg.degree, "regression basis degree");
    risk->add_option("--payoff", cfg.payoff, "payoff expression (default: follower terminal)");

    CLI::App* rbs = add_common(app.add_subcommand("rbsde", "constrained value of the obstacle problem"), true);
    add_mc(rbs);
    rbs->add_option("--degree", cfg.degree, "regression basis degree");
    rbs->add_option("--method", cfg.method, "reflect | penalize | oracle");
    rbs->add_option("--penalty", cfg.penalty, "penalty level n (method penalize)");
    rbs->add_option("--tree-steps", cfg.tree_steps, "lattice steps (method oracle)");

    CLI::App* hf = add_common(app.add_subcommand("hjb-follower", "follower grid sweep under a pinned leader"), true);
    add_grid(hf);
    hf->add_option("--u-index", cfg.u_index, "pinned leader control index");

    CLI::App* hl = add_common(app.add_subcommand("hjb-leader", "leader obstacle sweep against the reply table"), true);
    add_grid(hl);
    hl->add_option("--u-index", cfg.u_index, "leader index pinning the follower field");

    CLI::App* st = add_common(app.add_subcommand("stackelberg", "coupled equilibrium sweep"), true);
    add_grid(st);
    st->add_option("--mode", cfg.mode, "coupled | fixed-point");
    st->add_option("--max-iters", cfg.max_iters, "fixed-point iteration cap");
    st->add_option("--split", cfg.split, "also recompose the solve split at this time");
    st->add_flag("--verify", cfg.verify, "simulate under the computed policies");
    st->add_option("--paths", cfg.paths, "verification paths");
    st->add_option("--seed", cfg.seed, "verification seed");

    add_common(app.add_subcommand("suite", "run the acceptance battery"), false);

    CLI11_PARSE(app, argc, argv);

    cfg.subcommand = app.get_subcommands().front()->get_name();
    if (const char* env = std::getenv("HIERISK_THREADS")) threads = std::atoi(env);
    cfg.threads = threads;

    if (cfg.subcommand == "suite") return hierisk::run_suite(cfg);
    return hierisk::run(cfg);
}
