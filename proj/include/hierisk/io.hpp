#pragma once
// CSV and JSON artifacts. Everything written here is deterministic: fixed
// column orders, 17-digit doubles (they re-parse to the identical bits), no
// timestamps, no machine identity. Reruns with the same config and seed must
// produce byte-identical files, so anything environment-shaped stays out.

#include <cmath>
#include <cstdint>
#include <cstdio>
#include <cstdlib>
#include <stdexcept>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "bsde.hpp"
#include "common.hpp"
#include "hjbgrid.hpp"
#include "problem.hpp"
#include "rbsde.hpp"
#include "sde.hpp"

namespace hierisk {

class IoError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

inline void write_text(const std::string& path, const std::string& body) {
    std::FILE* f = std::fopen(path.c_str(), "wb");
    if (!f) throw IoError("cannot open " + path + " for writing");
    const std::size_t n = std::fwrite(body.data(), 1, body.size(), f);
    const int rc = std::fclose(f);
    if (n != body.size() || rc != 0) throw IoError("short write to " + path);
}

inline std::string read_text(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open " + path);
    std::string body;
    char buf[1 << 16];
    std::size_t n;
    while ((n = std::fread(buf, 1, sizeof(buf), f)) > 0) body.append(buf, n);
    std::fclose(f);
    return body;
}

// ---------------------------------------------------------------------------
// field exports, (t, x, value) and (t, x, u, v), row-major by time then space

inline void export_value_field(const ValueField& f, const std::string& path) {
    std::string out = "t,x,value\n";
    out.reserve(out.size() + std::size_t(f.steps() + 1) * f.nodes() * 64);
    for (int k = 0; k <= f.steps(); ++k) {
        const std::string ts = fmt_g17(f.grid.t(k));
        for (int j = 0; j < f.nodes(); ++j) {
            const double v = f.at(k, j);
            if (!std::isfinite(v))
                throw IoError("non-finite value at step " + std::to_string(k) + " node " +
                              std::to_string(j));
            out += ts;
            out += ',';
            out += fmt_g17(f.space.x(j));
            out += ',';
            out += fmt_g17(v);
            out += '\n';
        }
    }
    write_text(path, out);
}

// u and v columns carry the control values the indices point at, so the file
// is readable without the spec.
inline void export_policy_field(const PolicyField& p, const ProblemSpec& spec,
                                const TimeGrid& tg, const SpaceGrid& sg,
                                const std::string& path) {
    if (p.steps != tg.steps || p.nodes != sg.nodes)
        throw IoError("policy field does not match the grids");
    std::string out = "t,x,u,v\n";
    out.reserve(out.size() + std::size_t(p.steps) * p.nodes * 80);
    for (int k = 0; k < p.steps; ++k) {
        const std::string ts = fmt_g17(tg.t(k));
        for (int j = 0; j < p.nodes; ++j) {
            out += ts;
            out += ',';
            out += fmt_g17(sg.x(j));
            out += ',';
            out += fmt_g17(spec.control_grid_u[p.u_at(k, j)]);
            out += ',';
            out += fmt_g17(spec.control_grid_v[p.v_at(k, j)]);
            out += '\n';
        }
    }
    write_text(path, out);
}

// (path, step, t, x_1..x_d, u_index, v_index); the terminal row of each path
// has no control interval, marked with -1.
inline void export_ensemble(const PathEnsemble& ens, const std::string& path) {
    std::string out = "path,step,t";
    for (int i = 1; i <= ens.dim; ++i) out += ",x_" + std::to_string(i);
    out += ",u_index,v_index\n";
    out.reserve(out.size() + std::size_t(ens.paths()) * (ens.steps() + 1) * 64);
    for (int p = 0; p < ens.paths(); ++p)
        for (int k = 0; k <= ens.steps(); ++k) {
            out += std::to_string(p);
            out += ',';
            out += std::to_string(k);
            out += ',';
            out += fmt_g17(ens.grid.t(k));
            const double* x = ens.x(p, k);
            for (int i = 0; i < ens.dim; ++i) {
                out += ',';
                out += fmt_g17(x[i]);
            }
            if (k < ens.steps()) {
                out += ',';
                out += std::to_string(ens.u_at(p, k));
                out += ',';
                out += std::to_string(ens.v_at(p, k));
            } else {
                out += ",-1,-1";
            }
            out += '\n';
        }
    write_text(path, out);
}

// (step, t, y_mean, y_std, z_mean); z has no terminal entry, written as 0.
inline void export_bsde_curve(const BsdeResult& r, const TimeGrid& tg, const std::string& path) {
    std::string out = "step,t,y_mean,y_std,z_mean\n";
    const int P = r.n_paths;
    for (int k = 0; k <= r.steps; ++k) {
        double sum = 0, sq = 0, zsum = 0;
        for (int p = 0; p < P; ++p) {
            const double y = r.y_at(p, k);
            sum += y;
            sq += y * y;
            if (k < r.steps) zsum += r.z_at(p, k)[0];
        }
        const double mean = sum / P;
        const double var = std::max(0.0, sq / P - mean * mean);
        out += std::to_string(k);
        out += ',';
        out += fmt_g17(tg.t(k));
        out += ',';
        out += fmt_g17(mean);
        out += ',';
        out += fmt_g17(std::sqrt(var));
        out += ',';
        out += fmt_g17(k < r.steps ? zsum / P : 0.0);
        out += '\n';
    }
    write_text(path, out);
}

// (step, y_mean, a_mean)
inline void export_rbsde_curve(const ReflectedSolution& r, const std::string& path) {
    std::string out = "step,y_mean,a_mean\n";
    const int P = r.n_paths;
    for (int k = 0; k <= r.steps; ++k) {
        double ysum = 0, asum = 0;
        for (int p = 0; p < P; ++p) {
            ysum += r.y_at(p, k);
            asum += r.a_at(p, k);
        }
        out += std::to_string(k);
        out += ',';
        out += fmt_g17(ysum / P);
        out += ',';
        out += fmt_g17(asum / P);
        out += '\n';
    }
    write_text(path, out);
}

// ---------------------------------------------------------------------------
// CSV import, strict enough for round-trip tests and spot checks

struct CsvTable {
    std::vector<std::string> header;
    std::vector<std::vector<double>> columns;

    int rows() const { return columns.empty() ? 0 : int(columns[0].size()); }
    const std::vector<double>& col(const std::string& name) const {
        for (std::size_t i = 0; i < header.size(); ++i)
            if (header[i] == name) return columns[i];
        throw IoError("no column named " + name);
    }
};

inline CsvTable import_csv(const std::string& path) {
    const std::string body = read_text(path);
    CsvTable t;
    std::size_t pos = 0;
    const auto next_line = [&](std::string& line) {
        if (pos >= body.size()) return false;
        const std::size_t e = body.find('\n', pos);
        line = body.substr(pos, e == std::string::npos ? e : e - pos);
        pos = e == std::string::npos ? body.size() : e + 1;
        return true;
    };
    std::string line;
    if (!next_line(line)) throw IoError("empty file " + path);
    std::size_t c = 0;
    while (c <= line.size()) {
        const std::size_t e = line.find(',', c);
        t.header.push_back(line.substr(c, e == std::string::npos ? e : e - c));
        if (e == std::string::npos) break;
        c = e + 1;
    }
    t.columns.resize(t.header.size());
    long lineno = 1;
    while (next_line(line)) {
        ++lineno;
        if (line.empty()) continue;
        const char* s = line.c_str();
        for (std::size_t i = 0; i < t.columns.size(); ++i) {
            char* end = nullptr;
            t.columns[i].push_back(std::strtod(s, &end));
            if (end == s || (i + 1 < t.columns.size() && *end != ',') ||
                (i + 1 == t.columns.size() && *end != '\0'))
                throw IoError("malformed row " + std::to_string(lineno) + " in " + path);
            s = end + 1;
        }
    }
    return t;
}

// Rebuilds a ValueField from its export. The value column reproduces the
// original bitwise; grid node positions are reconstructed from the first two
// rows, which reproduces positions only up to re-rounded arithmetic.
inline ValueField import_value_field(const std::string& path) {
    const CsvTable t = import_csv(path);
    const std::vector<double>& tc = t.col("t");
    const std::vector<double>& xc = t.col("x");
    const std::vector<double>& vc = t.col("value");
    const int rows = t.rows();
    if (rows < 2) throw IoError("field file " + path + " has too few rows");
    int nodes = 1;
    while (nodes < rows && tc[nodes] == tc[0]) ++nodes;
    if (rows % nodes != 0) throw IoError("field file " + path + " is not a full grid");
    const int steps = rows / nodes - 1;
    if (steps < 1) throw IoError("field file " + path + " has a single time slice");
    ValueField f;
    f.grid = TimeGrid(tc[rows - 1], steps);
    SpaceGrid sg;
    sg.anchor = xc[0];
    sg.anchor_index = 0;
    sg.dx_ = xc[1] - xc[0];
    sg.nodes = nodes;
    f.space = sg;
    f.values = vc;
    return f;
}

// ---------------------------------------------------------------------------
// run manifest

inline std::string spec_hash(const nlohmann::json& spec_json) {
    const std::string canon = spec_json.dump();
    return hex64(fnv1a64(canon.data(), canon.size()));
}

// Everything needed to re-run the job exactly, nothing environment-shaped.
// Thread counts are deliberately absent: results do not depend on them.
inline nlohmann::json make_manifest(const std::string& subcommand,
                                    const nlohmann::json& spec_json,
                                    const nlohmann::json& parameters) {
    return {{"tool", "hierisk"},
            {"version", kVersion},
            {"subcommand", subcommand},
            {"spec_hash", spec_hash(spec_json)},
            {"spec", spec_json},
            {"parameters", parameters}};
}

inline void write_json(const std::string& path, const nlohmann::json& j) {
    write_text(path, j.dump(2) + "\n");
}

}  // namespace hierisk
