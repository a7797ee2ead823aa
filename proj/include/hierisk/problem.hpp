#pragma once

// Problem description and its sampled sanity checks.
//
// Binding conventions for scalar expressions over vector states:
//   drift[i] and sigma[i][j] bind x to component x_i (row index).
//   Costs, terminals and the obstacle bind x to x_1.
//   The generator sees z either componentwise (summed) or through |z|,
//   selected by generator_z_mode. With d = 1, componentwise means the
//   signed scalar z.

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <limits>
#include <map>
#include <mutex>
#include <string>
#include <unordered_map>
#include <vector>

#include <nlohmann/json.hpp>

#include "hierisk/common.hpp"
#include "hierisk/expr.hpp"
#include "hierisk/rng.hpp"

namespace hierisk {

enum class ZMode { componentwise, norm };

struct GeneratorFlags {
    bool convex = false;
    bool positively_homogeneous = false;
    bool zero_at_zero_z = false;
};

struct ProblemSpec {
    int state_dim = 1;
    double horizon = 1.0;
    std::vector<double> x0;
    std::vector<Expr> drift;      // d entries
    std::vector<Expr> diffusion;  // d*d entries, row-major
    Expr leader_running_cost;     // c_l(t, x, u)
    Expr follower_running_cost;   // c_f(t, x, v)
    Expr leader_terminal;         // Psi_l(x)
    Expr follower_terminal;       // Psi_f(x)
    Expr generator;               // g(t, y, z)
    Expr obstacle;                // h(t, x)
    std::vector<double> control_grid_u;
    std::vector<double> control_grid_v;
    double ellipticity_floor = 0.0;
    GeneratorFlags generator_flags;
    ZMode generator_z_mode = ZMode::componentwise;

    int d() const { return state_dim; }
    const Expr& sigma(int i, int j) const { return diffusion[std::size_t(i) * state_dim + j]; }

    double drift_at(int i, double t, const double* x, double u, double v) const {
        Env e;
        e.set(Var::t, t).set(Var::x, x[i]).set(Var::u, u).set(Var::v, v);
        return drift[i].eval(e);
    }
    double sigma_at(int i, int j, double t, const double* x, double u, double v) const {
        Env e;
        e.set(Var::t, t).set(Var::x, x[i]).set(Var::u, u).set(Var::v, v);
        return sigma(i, j).eval(e);
    }
    double leader_cost_at(double t, const double* x, double u) const {
        Env e;
        e.set(Var::t, t).set(Var::x, x[0]).set(Var::u, u);
        return leader_running_cost.eval(e);
    }
    double follower_cost_at(double t, const double* x, double v) const {
        Env e;
        e.set(Var::t, t).set(Var::x, x[0]).set(Var::v, v);
        return follower_running_cost.eval(e);
    }
    double leader_terminal_at(const double* x) const {
        Env e;
        e.set(Var::x, x[0]);
        return leader_terminal.eval(e);
    }
    double follower_terminal_at(const double* x) const {
        Env e;
        e.set(Var::x, x[0]);
        return follower_terminal.eval(e);
    }
    double obstacle_at(double t, const double* x) const {
        Env e;
        e.set(Var::t, t).set(Var::x, x[0]);
        return obstacle.eval(e);
    }
    // Scalar z binding, used by the grid solvers (d = 1) and by z_mode expansion.
    double generator_scalar(double t, double y, double z) const {
        Env e;
        e.set(Var::t, t).set(Var::y, y).set(Var::z, z);
        return generator.eval(e);
    }
    double generator_at(double t, double y, const double* z) const {
        if (generator_z_mode == ZMode::norm) {
            double s = 0;
            for (int i = 0; i < state_dim; ++i) s += z[i] * z[i];
            return generator_scalar(t, y, std::sqrt(s));
        }
        if (state_dim == 1) return generator_scalar(t, y, z[0]);
        double acc = 0;
        for (int i = 0; i < state_dim; ++i) acc += generator_scalar(t, y, z[i]);
        return acc;
    }

    std::uint64_t content_hash() const {
        std::string blob;
        auto add = [&blob](const std::string& s) {
            blob += s;
            blob += '\x1f';
        };
        add(std::to_string(state_dim));
        add(fmt_g17(horizon));
        for (double v : x0) add(fmt_g17(v));
        for (const Expr& e : drift) add(e.str());
        for (const Expr& e : diffusion) add(e.str());
        add(leader_running_cost.str());
        add(follower_running_cost.str());
        add(leader_terminal.str());
        add(follower_terminal.str());
        add(generator.str());
        add(obstacle.str());
        for (double v : control_grid_u) add(fmt_g17(v));
        add("|");
        for (double v : control_grid_v) add(fmt_g17(v));
        add(fmt_g17(ellipticity_floor));
        add(std::to_string(int(generator_flags.convex) + 2 * int(generator_flags.positively_homogeneous) +
                           4 * int(generator_flags.zero_at_zero_z)));
        add(generator_z_mode == ZMode::norm ? "norm" : "componentwise");
        return fnv1a64(blob.data(), blob.size());
    }
};

// ---------------------------------------------------------------------------
// grids

struct TimeGrid {
    double horizon = 1.0;
    int steps = 1;

    TimeGrid() = default;
    TimeGrid(double T, int n) : horizon(T), steps(n) {
        if (!(T > 0) || n < 1) throw SpecError("time grid needs horizon > 0 and steps >= 1");
    }
    double dt() const { return horizon / steps; }
    // k*T/N, not accumulation: t(steps) lands on the horizon within 1 ulp.
    double t(int k) const { return horizon * double(k) / double(steps); }
};

struct SpaceGrid {
    // Anchored so that x(anchor_index) == anchor bitwise.
    double anchor = 0.0;
    int anchor_index = 0;
    double dx_ = 1.0;
    int nodes = 0;

    double dx() const { return dx_; }
    double x(int j) const { return anchor + (j - anchor_index) * dx_; }
    double x_min() const { return x(0); }
    double x_max() const { return x(nodes - 1); }
    int nearest(double xv) const {
        const double r = (xv - x_min()) / dx_;
        int j = int(std::lround(r));
        return std::clamp(j, 0, nodes - 1);
    }
    int interior_nearest(double xv) const { return std::clamp(nearest(xv), 1, std::max(1, nodes - 2)); }
};

// M must be odd so the snapped grid keeps x0 on a node.
inline SpaceGrid make_space_grid(double x_min, double x_max, int m, double x0) {
    if (m < 3 || m % 2 == 0) throw SpecError("space grid needs an odd node count >= 3");
    if (!(x_min < x0 && x0 < x_max)) throw SpecError("space grid must satisfy x_min < x0 < x_max");
    SpaceGrid g;
    g.nodes = m;
    g.dx_ = (x_max - x_min) / (m - 1);
    g.anchor = x0;
    g.anchor_index = int(std::lround((x0 - x_min) / g.dx_));
    g.anchor_index = std::clamp(g.anchor_index, 1, m - 2);
    return g;
}

// ---------------------------------------------------------------------------
// loading

namespace detail {

inline Expr parse_spec_field(const nlohmann::json& j, const std::string& field,
                             std::initializer_list<Var> allowed) {
    if (!j.is_string())
        throw SpecError("spec field '" + field + "' must be a string expression");
    Expr e;
    try {
        e = Expr::parse(j.get<std::string>());
    } catch (const ParseError& err) {
        throw SpecError("spec field '" + field + "': " + err.what());
    }
    for (int vi = 0; vi < 6; ++vi) {
        const Var v = static_cast<Var>(vi);
        if (!e.references(v)) continue;
        bool ok = false;
        for (Var a : allowed)
            if (a == v) ok = true;
        if (!ok)
            throw SpecError("spec field '" + field + "' may not reference '" + var_name(v) + "'");
    }
    return e;
}

inline std::vector<double> parse_real_array(const nlohmann::json& j, const std::string& field,
                                            std::size_t min_len) {
    if (!j.is_array() || j.size() < min_len)
        throw SpecError("spec field '" + field + "' must be an array with at least " +
                        std::to_string(min_len) + " entries");
    std::vector<double> out;
    out.reserve(j.size());
    for (const auto& v : j) {
        if (!v.is_number())
            throw SpecError("spec field '" + field + "' must contain numbers only");
        const double d = v.get<double>();
        if (!std::isfinite(d)) throw SpecError("spec field '" + field + "' contains a non-finite value");
        out.push_back(d);
    }
    return out;
}

}  // namespace detail

inline ProblemSpec load_spec(const nlohmann::json& j) {
    if (!j.is_object()) throw SpecError("spec must be a JSON object");

    static const char* known[] = {
        "state_dim", "horizon", "x0", "drift", "diffusion",
        "leader_running_cost", "follower_running_cost", "leader_terminal", "follower_terminal",
        "generator", "obstacle", "control_grid_u", "control_grid_v",
        "ellipticity_floor", "generator_flags", "generator_z_mode"};
    for (auto it = j.begin(); it != j.end(); ++it) {
        bool ok = false;
        for (const char* k : known)
            if (it.key() == k) ok = true;
        if (!ok) throw SpecError("unknown spec field '" + it.key() + "'");
    }
    auto need = [&j](const char* key) -> const nlohmann::json& {
        auto it = j.find(key);
        if (it == j.end()) throw SpecError(std::string("missing spec field '") + key + "'");
        return *it;
    };

    ProblemSpec s;
    if (!need("state_dim").is_number_integer() || need("state_dim").get<int>() < 1)
        throw SpecError("spec field 'state_dim' must be an integer >= 1");
    s.state_dim = need("state_dim").get<int>();
    if (!need("horizon").is_number() || !(need("horizon").get<double>() > 0))
        throw SpecError("spec field 'horizon' must be a positive number");
    s.horizon = need("horizon").get<double>();

    s.x0 = detail::parse_real_array(need("x0"), "x0", 1);
    if (s.x0.size() != std::size_t(s.state_dim))
        throw SpecError("spec field 'x0' must have length state_dim");

    const auto& drift = need("drift");
    if (!drift.is_array() || drift.size() != std::size_t(s.state_dim))
        throw SpecError("spec field 'drift' must be an array of state_dim expressions");
    for (std::size_t i = 0; i < drift.size(); ++i)
        s.drift.push_back(detail::parse_spec_field(drift[i], "drift[" + std::to_string(i) + "]",
                                                   {Var::t, Var::x, Var::u, Var::v}));

    const auto& diff = need("diffusion");
    if (!diff.is_array() || diff.size() != std::size_t(s.state_dim))
        throw SpecError("spec field 'diffusion' must be an array of state_dim rows");
    for (std::size_t i = 0; i < diff.size(); ++i) {
        if (!diff[i].is_array() || diff[i].size() != std::size_t(s.state_dim))
            throw SpecError("spec field 'diffusion' rows must each hold state_dim expressions");
        for (std::size_t k = 0; k < diff[i].size(); ++k)
            s.diffusion.push_back(detail::parse_spec_field(
                diff[i][k], "diffusion[" + std::to_string(i) + "][" + std::to_string(k) + "]",
                {Var::t, Var::x, Var::u, Var::v}));
    }

    s.leader_running_cost =
        detail::parse_spec_field(need("leader_running_cost"), "leader_running_cost", {Var::t, Var::x, Var::u});
    s.follower_running_cost =
        detail::parse_spec_field(need("follower_running_cost"), "follower_running_cost", {Var::t, Var::x, Var::v});
    s.leader_terminal = detail::parse_spec_field(need("leader_terminal"), "leader_terminal", {Var::x});
    s.follower_terminal = detail::parse_spec_field(need("follower_terminal"), "follower_terminal", {Var::x});
    s.generator = detail::parse_spec_field(need("generator"), "generator", {Var::t, Var::y, Var::z});
    s.obstacle = detail::parse_spec_field(need("obstacle"), "obstacle", {Var::t, Var::x});

    s.control_grid_u = detail::parse_real_array(need("control_grid_u"), "control_grid_u", 1);
    s.control_grid_v = detail::parse_real_array(need("control_grid_v"), "control_grid_v", 1);

    if (!need("ellipticity_floor").is_number() || need("ellipticity_floor").get<double>() < 0)
        throw SpecError("spec field 'ellipticity_floor' must be a number >= 0");
    s.ellipticity_floor = need("ellipticity_floor").get<double>();

    if (auto it = j.find("generator_flags"); it != j.end()) {
        if (!it->is_object()) throw SpecError("spec field 'generator_flags' must be an object");
        for (auto f = it->begin(); f != it->end(); ++f) {
            if (!f.value().is_boolean())
                throw SpecError("generator_flags entries must be booleans");
            if (f.key() == "convex")
                s.generator_flags.convex = f.value().get<bool>();
            else if (f.key() == "positively_homogeneous")
                s.generator_flags.positively_homogeneous = f.value().get<bool>();
            else if (f.key() == "zero_at_zero_z")
                s.generator_flags.zero_at_zero_z = f.value().get<bool>();
            else
                throw SpecError("unknown generator_flags field '" + f.key() + "'");
        }
    }
    if (auto it = j.find("generator_z_mode"); it != j.end()) {
        const std::string m = it->is_string() ? it->get<std::string>() : "";
        if (m == "componentwise")
            s.generator_z_mode = ZMode::componentwise;
        else if (m == "norm")
            s.generator_z_mode = ZMode::norm;
        else
            throw SpecError("spec field 'generator_z_mode' must be \"componentwise\" or \"norm\"");
    }
    return s;
}

struct LoadedSpec {
    ProblemSpec spec;
    std::uint64_t file_hash = 0;
    std::string path;
};

inline LoadedSpec load_spec_file(const std::string& path) {
    FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw SpecError("cannot open spec file '" + path + "'");
    std::string bytes;
    char buf[4096];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) bytes.append(buf, n);
    std::fclose(f);
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(bytes);
    } catch (const nlohmann::json::exception& err) {
        throw SpecError("spec file '" + path + "' is not valid JSON: " + err.what());
    }
    return {load_spec(j), fnv1a64(bytes.data(), bytes.size()), path};
}

// ---------------------------------------------------------------------------
// sampled validation

struct ValidationIssue {
    std::string check;
    std::string detail;
};

struct ValidationReport {
    bool pass = true;
    double min_sigma_eig = std::numeric_limits<double>::infinity();
    double ellipticity_floor = 0.0;
    std::map<std::string, double> lipschitz;
    std::map<std::string, double> growth;
    std::vector<ValidationIssue> issues;
    int samples = 0;
    std::uint64_t seed = 0;

    void fail(const std::string& check, const std::string& detail) {
        pass = false;
        if (issues.size() < 32) issues.push_back({check, detail});
    }

    nlohmann::json to_json() const {
        nlohmann::json j;
        j["pass"] = pass;
        j["min_sigma_eig"] = min_sigma_eig;
        j["ellipticity_floor"] = ellipticity_floor;
        j["lipschitz"] = lipschitz;
        j["growth"] = growth;
        j["samples"] = samples;
        j["seed"] = seed;
        auto arr = nlohmann::json::array();
        for (const auto& issue : issues) arr.push_back({{"check", issue.check}, {"detail", issue.detail}});
        j["issues"] = arr;
        return j;
    }
};

namespace detail {

inline std::string point_str(double t, const double* x, int d, double u, double v) {
    std::string s = "t=" + fmt_shortest(t) + " x=[";
    for (int i = 0; i < d; ++i) s += (i ? "," : "") + fmt_shortest(x[i]);
    s += "] u=" + fmt_shortest(u) + " v=" + fmt_shortest(v);
    return s;
}

// Crude Euler walk of the spec's own dynamics; visits the states the real
// solvers will visit. Controls cycle through both grids.
template <class Fn>
void pilot_states(const ProblemSpec& spec, int n_paths, int n_steps, std::uint64_t seed, Fn&& fn) {
    const CounterRng rng(seed);
    const int d = spec.d();
    const double dt = spec.horizon / n_steps;
    const double sdt = std::sqrt(dt);
    std::vector<double> x(d), xn(d);
    for (int p = 0; p < n_paths; ++p) {
        x = spec.x0;
        for (int k = 0; k < n_steps; ++k) {
            const double t = spec.horizon * k / n_steps;
            const double u = spec.control_grid_u[(p + k) % spec.control_grid_u.size()];
            const double v = spec.control_grid_v[(2 * p + k) % spec.control_grid_v.size()];
            if (!fn(t, x.data(), u, v, p, k)) return;
            bool finite = true;
            try {
                for (int i = 0; i < d && finite; ++i) {
                    double inc = spec.drift_at(i, t, x.data(), u, v) * dt;
                    for (int j = 0; j < d; ++j)
                        inc += spec.sigma_at(i, j, t, x.data(), u, v) * sdt * rng.normal(p, k, j);
                    xn[i] = x[i] + inc;
                    finite = std::isfinite(xn[i]);
                }
            } catch (const EvalError&) {
                finite = false;  // the callback already saw this state and flagged it
            }
            if (!finite) break;  // abandon the path, keep sampling the others
            x = xn;
        }
        if (!fn(spec.horizon, x.data(), spec.control_grid_u[p % spec.control_grid_u.size()],
                spec.control_grid_v[p % spec.control_grid_v.size()], p, n_steps))
            return;
    }
}

}  // namespace detail

// Samples states along pilot paths and reports ellipticity, Lipschitz quotients,
// growth ratios, terminal-obstacle consistency and declared generator normalization.
inline ValidationReport validate_spec(const ProblemSpec& spec, int n_samples = 512,
                                      std::uint64_t seed = 1) {
    ValidationReport rep;
    rep.ellipticity_floor = spec.ellipticity_floor;
    rep.seed = seed;
    const int d = spec.d();
    const int n_steps = 64;
    const int n_paths = std::max(1, n_samples / n_steps);
    const CounterRng rng(seed ^ 0x517cc1b727220a95ull);

    auto lip = [&rep](const std::string& key, double q) {
        auto [it, inserted] = rep.lipschitz.try_emplace(key, q);
        if (!inserted) it->second = std::max(it->second, q);
    };
    auto grow = [&rep](const std::string& key, double q) {
        auto [it, inserted] = rep.growth.try_emplace(key, q);
        if (!inserted) it->second = std::max(it->second, q);
    };

    std::vector<double> xp(d);
    detail::pilot_states(spec, n_paths, n_steps, seed, [&](double t, const double* x, double u,
                                                           double v, int p, int k) {
        ++rep.samples;
        const std::string at = detail::point_str(t, x, d, u, v);
        double xnorm = 0;
        for (int i = 0; i < d; ++i) xnorm += x[i] * x[i];
        xnorm = std::sqrt(xnorm);

        // perturbed copy for Lipschitz quotients
        double dnorm = 0;
        for (int i = 0; i < d; ++i) {
            const double delta = 0.1 * (1.0 + std::fabs(x[i])) * rng.normal(p, k, 64 + i);
            xp[i] = x[i] + delta;
            dnorm += delta * delta;
        }
        dnorm = std::sqrt(dnorm);

        try {
            // ellipticity of sigma*sigma^T
            double min_eig;
            if (d == 1) {
                const double s = spec.sigma_at(0, 0, t, x, u, v);
                min_eig = s * s;
            } else {
                // Gershgorin lower bound is enough for a sampled floor check
                min_eig = std::numeric_limits<double>::infinity();
                std::vector<double> a(std::size_t(d) * d, 0.0);
                for (int i = 0; i < d; ++i)
                    for (int j = 0; j < d; ++j) {
                        double acc = 0;
                        for (int m = 0; m < d; ++m)
                            acc += spec.sigma_at(i, m, t, x, u, v) * spec.sigma_at(j, m, t, x, u, v);
                        a[std::size_t(i) * d + j] = acc;
                    }
                for (int i = 0; i < d; ++i) {
                    double off = 0;
                    for (int j = 0; j < d; ++j)
                        if (j != i) off += std::fabs(a[std::size_t(i) * d + j]);
                    min_eig = std::min(min_eig, a[std::size_t(i) * d + i] - off);
                }
            }
            if (min_eig < rep.min_sigma_eig) rep.min_sigma_eig = min_eig;
            if (min_eig < spec.ellipticity_floor)
                rep.fail("ellipticity", "sigma*sigma^T min eigenvalue " + fmt_shortest(min_eig) +
                                            " < floor " + fmt_shortest(spec.ellipticity_floor) +
                                            " at " + at);

            for (int i = 0; i < d; ++i) {
                const double m0 = spec.drift_at(i, t, x, u, v);
                const double m1 = spec.drift_at(i, t, xp.data(), u, v);
                grow("drift", std::fabs(m0) / (1.0 + xnorm));
                if (dnorm > 1e-12) lip("drift", std::fabs(m1 - m0) / dnorm);
                for (int jj = 0; jj < d; ++jj) {
                    const double s0 = spec.sigma_at(i, jj, t, x, u, v);
                    const double s1 = spec.sigma_at(i, jj, t, xp.data(), u, v);
                    grow("diffusion", std::fabs(s0) / (1.0 + xnorm));
                    if (dnorm > 1e-12) lip("diffusion", std::fabs(s1 - s0) / dnorm);
                }
            }

            const double cl0 = spec.leader_cost_at(t, x, u), cl1 = spec.leader_cost_at(t, xp.data(), u);
            const double cf0 = spec.follower_cost_at(t, x, v), cf1 = spec.follower_cost_at(t, xp.data(), v);
            const double h0 = spec.obstacle_at(t, x), h1 = spec.obstacle_at(t, xp.data());
            const double pl = spec.leader_terminal_at(x), pf = spec.follower_terminal_at(x);
            if (dnorm > 1e-12) {
                lip("leader_running_cost", std::fabs(cl1 - cl0) / dnorm);
                lip("follower_running_cost", std::fabs(cf1 - cf0) / dnorm);
                lip("obstacle", std::fabs(h1 - h0) / dnorm);
                lip("leader_terminal", std::fabs(spec.leader_terminal_at(xp.data()) - pl) / dnorm);
                lip("follower_terminal", std::fabs(spec.follower_terminal_at(xp.data()) - pf) / dnorm);
            }
            grow("leader_terminal", std::fabs(pl) / (1.0 + xnorm));
            grow("follower_terminal", std::fabs(pf) / (1.0 + xnorm));

            // generator quotients in y and z
            const double ybase = rng.normal(p, k, 80) * (1.0 + xnorm);
            const double zbase = rng.normal(p, k, 81) * (1.0 + xnorm);
            const double dy = 0.5 * (1.0 + std::fabs(ybase));
            const double dz = 0.5 * (1.0 + std::fabs(zbase));
            const double g00 = spec.generator_scalar(t, ybase, zbase);
            lip("generator.y", std::fabs(spec.generator_scalar(t, ybase + dy, zbase) - g00) / dy);
            lip("generator.z", std::fabs(spec.generator_scalar(t, ybase, zbase + dz) - g00) / dz);
            grow("generator", std::fabs(g00) / (1.0 + std::fabs(ybase) + std::fabs(zbase)));

            // terminal data must dominate the obstacle at the horizon
            const double hT = spec.obstacle_at(spec.horizon, x);
            if (hT > pl + 1e-12 * (1.0 + std::fabs(pl)))
                rep.fail("terminal_obstacle",
                         "obstacle(T,x) = " + fmt_shortest(hT) + " exceeds leader_terminal = " +
                             fmt_shortest(pl) + " at " + at);

            if (spec.generator_flags.zero_at_zero_z) {
                const double gz0 = spec.generator_scalar(t, ybase, 0.0);
                if (std::fabs(gz0) > 1e-12 * (1.0 + std::fabs(ybase)))
                    rep.fail("generator_normalization",
                             "flag zero_at_zero_z declared but g(t,y,0) = " + fmt_shortest(gz0) +
                                 " at " + at + " y=" + fmt_shortest(ybase));
            }
        } catch (const EvalError& err) {
            rep.fail("domain", std::string(err.what()) + " at " + at);
        }
        return rep.issues.size() < 32;
    });
    return rep;
}

// Memoized gate used by solver entry points.
inline void require_valid(const ProblemSpec& spec, bool skip_validation = false,
                          std::uint64_t seed = 1) {
    if (skip_validation) return;
    static std::mutex mu;
    static std::unordered_map<std::uint64_t, bool> memo;
    const std::uint64_t key = spec.content_hash();
    {
        std::lock_guard<std::mutex> lock(mu);
        auto it = memo.find(key);
        if (it != memo.end()) {
            if (it->second) return;
            throw SpecError("spec failed validation (cached); run validate for details or override");
        }
    }
    const ValidationReport rep = validate_spec(spec, 512, seed);
    {
        std::lock_guard<std::mutex> lock(mu);
        memo[key] = rep.pass;
    }
    if (!rep.pass) {
        std::string msg = "spec failed validation";
        if (!rep.issues.empty())
            msg += ": [" + rep.issues[0].check + "] " + rep.issues[0].detail;
        throw SpecError(msg);
    }
}

// x0 +/- 6 * max sampled |sigma| * sqrt(T), for coordinate 0.
inline std::pair<double, double> suggest_space_bounds(const ProblemSpec& spec,
                                                      std::uint64_t seed = 1) {
    double sigma_bar = 0.0;
    detail::pilot_states(spec, 16, 64, seed, [&](double t, const double* x, double u, double v,
                                                 int, int) {
        try {
            for (int i = 0; i < spec.d(); ++i)
                for (int j = 0; j < spec.d(); ++j)
                    sigma_bar = std::max(sigma_bar, std::fabs(spec.sigma_at(i, j, t, x, u, v)));
        } catch (const EvalError&) {
        }
        return true;
    });
    if (!(sigma_bar > 0)) sigma_bar = 1.0;
    const double w = 6.0 * sigma_bar * std::sqrt(spec.horizon);
    return {spec.x0[0] - w, spec.x0[0] + w};
}

}  // namespace hierisk
