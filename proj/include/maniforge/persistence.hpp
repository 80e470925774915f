#pragma once

#include "maniforge/common.hpp"
#include "maniforge/graph_transform.hpp"
#include "maniforge/maps.hpp"
#include "maniforge/section.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace maniforge {

// ---------------------------------------------------------------------------
// Point clouds with provenance. Provenance strings: "localManifold",
// "forwardIterate <k>", "trajectorySample".
// ---------------------------------------------------------------------------
struct PointCloud {
    std::vector<Vec> points;
    std::vector<std::string> provenance;

    void add(Vec p, std::string tag) {
        points.push_back(std::move(p));
        provenance.push_back(std::move(tag));
    }
    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }
};

/// dist(A, B) = sup_{a in A} inf_{b in B} |a - b| in the supplied norm
/// (Euclidean when none given). Exact over the finite clouds; asymmetric.
inline double hausdorff_semidistance(const PointCloud& a, const PointCloud& b,
                                     const std::function<double(const Vec&)>& norm = {}) {
    require(!a.empty() && !b.empty(), "hausdorff_semidistance: clouds must be nonempty");
    auto norm_of = [&](const Vec& v) { return norm ? norm(v) : v.norm(); };
    double sup = 0.0;
    for (const Vec& p : a.points) {
        double inf = std::numeric_limits<double>::infinity();
        for (const Vec& q : b.points) inf = std::min(inf, norm_of(p - q));
        sup = std::max(sup, inf);
    }
    return sup;
}

// ---------------------------------------------------------------------------
// Section distances: c0 = max node value difference, c1 = max node derivative
// difference (operator norm). Sections on different grids are resampled onto
// the first grid by interpolation, and the result records that.
// ---------------------------------------------------------------------------
struct SectionDistance {
    double c0 = 0.0;
    double c1 = 0.0;
    bool c1_available = false;
    bool resampled = false;
};

inline SectionDistance section_distances(const Section& phi, const Section& psi,
                                         const std::function<double(const Vec&)>& fiber_norm = {}) {
    require(phi.base_dim() == psi.base_dim() && phi.fiber_dim() == psi.fiber_dim(),
            "section_distances: incompatible sections");
    auto norm_of = [&](const Vec& v) { return fiber_norm ? fiber_norm(v) : v.norm(); };
    SectionDistance out;
    out.resampled = phi.nodes_per_axis() != psi.nodes_per_axis() || phi.rho() != psi.rho();
    out.c1_available = phi.has_derivative() && psi.has_derivative();
    for (int node = 0; node < phi.node_count(); ++node) {
        Vec x = phi.node_point(node);
        Vec dv = phi.value(node) - (out.resampled ? psi.value_at(x) : psi.value(node));
        out.c0 = std::max(out.c0, norm_of(dv));
        if (out.c1_available) {
            Mat dT = phi.derivative(node) - (out.resampled ? psi.derivative_at(x) : psi.derivative(node));
            out.c1 = std::max(out.c1, operator_two_norm(dT));
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Global unstable set: lift the local section grid, push it forward k times,
// accumulate the union, discard points leaving the bound box (flagged).
// ---------------------------------------------------------------------------
struct GlobalCloudResult {
    PointCloud cloud;
    int discarded = 0;
    bool total_escape = false;
};

inline GlobalCloudResult global_unstable_cloud(const Section& phi_local, const TimeTauMap& map,
                                               int iterations, double bound_box) {
    require(iterations >= 0, "global_unstable_cloud: iterations must be nonnegative");
    require(bound_box > 0.0, "global_unstable_cloud: bound box must be positive");
    GlobalCloudResult out;
    ManifoldChart chart = phi_local.chart();
    std::vector<Vec> frontier;
    for (int node = 0; node < phi_local.node_count(); ++node) {
        Vec lifted = chart.lift(phi_local.node_point(node));
        out.cloud.add(lifted, "localManifold");
        frontier.push_back(std::move(lifted));
    }
    for (int k = 1; k <= iterations; ++k) {
        std::vector<Vec> next;
        next.reserve(frontier.size());
        for (const Vec& p : frontier) {
            Vec q;
            try {
                q = map.apply(p);
            } catch (const NumericalError&) {
                ++out.discarded;  // blow-up counts as leaving the box
                continue;
            }
            if (!all_finite(q) || map.norm(q) > bound_box) {
                ++out.discarded;
                continue;
            }
            out.cloud.add(q, "forwardIterate " + std::to_string(k));
            next.push_back(std::move(q));
        }
        frontier = std::move(next);
        if (frontier.empty()) {
            out.total_escape = k == 1 && out.cloud.size() == static_cast<std::size_t>(
                                                                 phi_local.node_count());
            break;
        }
    }
    return out;
}

// ---------------------------------------------------------------------------
// Convergence-in-h study scaffolding. The caller supplies a runner that
// computes the perturbed section for a given h (pipelines wire the model,
// perturbation kind and transform together); this assembles distances and
// the log-log fit against the unperturbed section.
// ---------------------------------------------------------------------------
struct ConvergenceRow {
    double h = 0.0;
    double c0 = 0.0;
    double c1 = 0.0;
    double dist_fwd = 0.0;  // dist(W, W_h)
    double dist_bwd = 0.0;  // dist(W_h, W)
    bool converged = true;
};

struct ConvergenceTable {
    std::vector<ConvergenceRow> rows;
    double fit_slope_c0 = 0.0;
    double fit_slope_c1 = 0.0;
    int fit_points = 0;
};

/// Least-squares slopes of log(c0) and log(c1) against log(h) over converged
/// rows with h <= h_fit_cap (the asymptotic regime).
inline void fit_convergence_slopes(ConvergenceTable& table, double h_fit_cap = 1e-1) {
    std::vector<double> lx, ly0, ly1;
    for (const ConvergenceRow& r : table.rows) {
        if (!r.converged || r.h <= 0.0 || r.h > h_fit_cap) continue;
        if (r.c0 <= 0.0) continue;
        lx.push_back(std::log(r.h));
        ly0.push_back(std::log(r.c0));
        ly1.push_back(r.c1 > 0.0 ? std::log(r.c1) : std::log(r.c0));
    }
    table.fit_points = static_cast<int>(lx.size());
    if (lx.size() >= 2) {
        table.fit_slope_c0 = fit_slope(lx, ly0);
        table.fit_slope_c1 = fit_slope(lx, ly1);
    }
}

// ---------------------------------------------------------------------------
// Cross-space section comparison for resolution studies: two sections whose
// fibers live in different state spaces are compared through user-supplied
// lifts into a common space, sup over the shared base grid.
// ---------------------------------------------------------------------------
inline double lifted_graph_distance(const Section& coarse, const Section& fine,
                                    const std::function<Vec(const Vec&)>& lift_coarse,
                                    const std::function<Vec(const Vec&)>& lift_fine,
                                    const std::function<double(const Vec&)>& norm,
                                    int probe_nodes = 0) {
    require(coarse.base_dim() == fine.base_dim(), "lifted_graph_distance: base dims differ");
    const Section& grid = coarse;
    int total = grid.node_count();
    int stride = 1;
    if (probe_nodes > 0 && probe_nodes < total) stride = total / probe_nodes;
    double sup = 0.0;
    for (int node = 0; node < total; node += stride) {
        Vec x = grid.node_point(node);
        Vec a = lift_coarse(coarse.chart().lift(x));
        Vec b = lift_fine(fine.chart().lift(x));
        sup = std::max(sup, norm(a - b));
    }
    return sup;
}

}  // namespace maniforge
