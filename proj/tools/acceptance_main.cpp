// Standalone acceptance runner, registered with ctest. Takes the output
// directory as the only argument; exit status is the battery verdict.

#include "hierisk/acceptance.hpp"

int main(int argc, char** argv) {
    hierisk::RunConfig cfg;
    cfg.subcommand = "suite";
    cfg.out_dir = argc > 1 ? argv[1] : "acceptance_out";
    return hierisk::run_suite(cfg);
}
