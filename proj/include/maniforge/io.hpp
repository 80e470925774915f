#pragma once

#include "maniforge/common.hpp"
#include "maniforge/config.hpp"
#include "maniforge/persistence.hpp"
#include "maniforge/section.hpp"

#include <json.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <string>

namespace maniforge {

using Json = nlohmann::ordered_json;

inline std::string g17(double v) { return detail::format_double(v); }

/// Atomic write: temp file in the same directory, then rename.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
    std::filesystem::create_directories(path.parent_path());
    std::filesystem::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw StructuralError("cannot open for writing: " + tmp.string());
        out << content;
    }
    std::filesystem::rename(tmp, path);
}

// ---------------------------------------------------------------------------
// Section CSV: one row per node, columns x_1..x_m, q_1..q_k and, when the
// derivative field is present, dq_i_dx_j in row-major order. A sidecar JSON
// carries the geometry.
// ---------------------------------------------------------------------------
inline std::string section_to_csv(const Section& s) {
    std::ostringstream out;
    for (int a = 1; a <= s.base_dim(); ++a) out << (a > 1 ? "," : "") << "x_" << a;
    for (int i = 1; i <= s.fiber_dim(); ++i) out << ",q_" << i;
    if (s.has_derivative())
        for (int i = 1; i <= s.fiber_dim(); ++i)
            for (int j = 1; j <= s.base_dim(); ++j) out << ",dq_" << i << "_dx_" << j;
    out << "\n";
    for (int node = 0; node < s.node_count(); ++node) {
        Vec x = s.node_point(node);
        for (int a = 0; a < s.base_dim(); ++a) out << (a ? "," : "") << g17(x[a]);
        const Vec& q = s.value(node);
        for (int i = 0; i < s.fiber_dim(); ++i) out << "," << g17(q[i]);
        if (s.has_derivative()) {
            const Mat& t = s.derivative(node);
            for (int i = 0; i < s.fiber_dim(); ++i)
                for (int j = 0; j < s.base_dim(); ++j) out << "," << g17(t(i, j));
        }
        out << "\n";
    }
    return out.str();
}

inline Json section_sidecar(const Section& s) {
    Json j;
    j["base_dim"] = s.base_dim();
    j["fiber_dim"] = s.fiber_dim();
    j["rho"] = s.rho();
    j["epsilon"] = s.epsilon();
    j["delta"] = s.delta();
    j["grid_per_axis"] = s.nodes_per_axis();
    j["node_count"] = s.node_count();
    j["interpolation"] = to_string(s.interpolation());
    j["has_derivative"] = s.has_derivative();
    return j;
}

/// Cloud CSV: provenance then c_1..c_n.
inline std::string cloud_to_csv(const PointCloud& cloud) {
    std::ostringstream out;
    int n = cloud.empty() ? 0 : static_cast<int>(cloud.points.front().size());
    out << "provenance";
    for (int i = 1; i <= n; ++i) out << ",c_" << i;
    out << "\n";
    for (std::size_t r = 0; r < cloud.size(); ++r) {
        out << cloud.provenance[r];
        for (int i = 0; i < n; ++i) out << "," << g17(cloud.points[r][i]);
        out << "\n";
    }
    return out.str();
}

/// Trajectory CSV: t then c_1..c_n per sample row.
inline std::string trajectory_to_csv(const std::vector<double>& times,
                                     const std::vector<Vec>& states) {
    require(times.size() == states.size(), "trajectory_to_csv: length mismatch");
    std::ostringstream out;
    int n = states.empty() ? 0 : static_cast<int>(states.front().size());
    out << "t";
    for (int i = 1; i <= n; ++i) out << ",c_" << i;
    out << "\n";
    for (std::size_t r = 0; r < times.size(); ++r) {
        out << g17(times[r]);
        for (int i = 0; i < n; ++i) out << "," << g17(states[r][i]);
        out << "\n";
    }
    return out.str();
}

/// Convergence table CSV: h,c0,c1,dist_fwd,dist_bwd.
inline std::string convergence_to_csv(const ConvergenceTable& table) {
    std::ostringstream out;
    out << "h,c0,c1,dist_fwd,dist_bwd\n";
    for (const ConvergenceRow& r : table.rows) {
        out << g17(r.h) << "," << g17(r.c0) << "," << g17(r.c1) << "," << g17(r.dist_fwd) << ","
            << g17(r.dist_bwd) << "\n";
    }
    return out.str();
}

inline Json transform_report_json(const TransformReport& rep) {
    Json j;
    j["iterations"] = rep.iterations;
    j["converged"] = rep.converged;
    j["contraction_ratio"] = rep.contraction_ratio;
    j["invariance_residual"] = rep.invariance_residual;
    j["admissible"] = rep.admissible;
    if (!rep.failure.empty()) j["failure"] = rep.failure;
    j["c0_history"] = rep.c0_history;
    if (!rep.c1_history.empty()) j["c1_history"] = rep.c1_history;
    return j;
}

}  // namespace maniforge
