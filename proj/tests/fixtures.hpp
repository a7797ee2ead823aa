#pragma once

#include <nlohmann/json.hpp>

#include "hierisk/problem.hpp"

// Baseline one-dimensional spec the tests mutate. Brownian state, zero driver,
// obstacle far below anything so plain and reflected solves coincide.
inline nlohmann::json base_spec_json() {
    return nlohmann::json{
        {"state_dim", 1},
        {"horizon", 1.0},
        {"x0", {0.0}},
        {"drift", {"0"}},
        {"diffusion", {{"1"}}},
        {"leader_running_cost", "u^2"},
        {"follower_running_cost", "v^2"},
        {"leader_terminal", "x^2"},
        {"follower_terminal", "x^2"},
        {"generator", "0"},
        {"obstacle", "-1000000"},
        {"control_grid_u", {0.0}},
        {"control_grid_v", {0.0}},
        {"ellipticity_floor", 0.5},
    };
}

inline hierisk::ProblemSpec base_spec() { return hierisk::load_spec(base_spec_json()); }
