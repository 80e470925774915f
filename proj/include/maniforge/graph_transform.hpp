#pragma once

#include "maniforge/common.hpp"
#include "maniforge/maps.hpp"
#include "maniforge/section.hpp"

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

namespace maniforge {

struct TransformConfig {
    double tol_c0 = 1e-10;
    double tol_c1 = 1e-8;
    int max_iter = 80;
    double rho_ext_factor = 1.25;   // extension ring for base preimages
    double preimage_tol = 1e-10;
    int preimage_max_iter = 50;
    bool track_derivative = true;   // coupled value/derivative iteration
    bool enforce_admissibility = true;
    // Inflowing runs under a truncated map: the far field is linear, preimages
    // may legitimately leave the extension ring (ray-extended evaluation).
    bool allow_far_preimages = false;
    std::function<double(const Vec&)> fiber_norm;  // |.|_gamma of a fiber vector
};

struct TransformReport {
    int iterations = 0;
    std::vector<double> c0_history;
    std::vector<double> c1_history;
    double contraction_ratio = 0.0;
    bool converged = false;
    double invariance_residual = 0.0;
    bool admissible = true;
    std::string failure;  // empty on success
};

namespace detail {

inline double fiber_norm_of(const TransformConfig& cfg, const Vec& v) {
    return cfg.fiber_norm ? cfg.fiber_norm(v) : v.norm();
}

inline std::string node_label(const Section& s, int node) {
    auto idx = s.unflatten(node);
    std::string out = "(";
    for (int a = 0; a < s.base_dim(); ++a)
        out += std::to_string(idx[static_cast<std::size_t>(a)]) + (a + 1 < s.base_dim() ? "," : "");
    return out + ")";
}

// Geometric fit of the tail of the difference history (points still above
// the tolerance floor); returns exp(slope of log d_n).
inline double fit_contraction_ratio(const std::vector<double>& hist, double tol) {
    std::vector<double> xs, ys;
    double floor_val = std::max(10.0 * tol, 1e-14);
    for (std::size_t i = 1; i < hist.size(); ++i) {
        if (hist[i] > floor_val && hist[i - 1] > floor_val && hist[i] > 0.0) {
            xs.push_back(static_cast<double>(i));
            ys.push_back(std::log(hist[i]));
        }
    }
    if (xs.size() < 2) {
        // Fall back to the last usable successive quotient.
        for (std::size_t i = hist.size(); i-- > 1;)
            if (hist[i] > 0.0 && hist[i - 1] > 0.0) return hist[i] / hist[i - 1];
        return 0.0;
    }
    return std::exp(fit_slope(xs, ys));
}

}  // namespace detail

// ---------------------------------------------------------------------------
// One graph-transform step: for each target node xi solve the base preimage
// G^1(x, Phi(x)) = xi by Newton (initial guess: linearized-base preimage) and
// set Phi'(xi) = G^2(x, Phi(x)). All nodes read the frozen previous iterate.
// ---------------------------------------------------------------------------
inline Section graph_transform_step(const Section& phi, const TimeTauMap& map,
                                    const TransformConfig& cfg = {},
                                    std::vector<Vec>* preimage_cache = nullptr) {
    const int m = phi.base_dim();
    const int k = phi.fiber_dim();
    require(map.dim == m + k, "graph_transform_step: map/section dimension mismatch");

    Section next = phi;
    next.ensure_derivative();
    ManifoldChart chart = phi.chart();
    // Newton must differentiate exactly what it evaluates: the interpolant,
    // not the (independently iterated) derivative field.
    ManifoldChart newton_chart = chart;
    newton_chart.derivative = [&phi](const Vec& x) { return phi.interpolant_derivative_at(x); };

    // Linearized base map at the section center, for initial preimage guesses.
    Vec center = Vec::Zero(m);
    Vec lifted0 = chart.lift(center);
    Mat dphi0 = newton_chart.derivative(center);
    Mat base_lin(m, m);
    for (int i = 0; i < m; ++i) {
        Vec dir = Vec::Zero(map.dim);
        dir[i] = 1.0;
        dir.tail(k) = dphi0.col(i);
        base_lin.col(i) = map.tangent(lifted0, dir).head(m);
    }
    Eigen::PartialPivLU<Mat> base_lin_lu(base_lin);

    const double rho_ext = cfg.rho_ext_factor * phi.rho();
    const bool do_deriv = cfg.track_derivative && phi.has_derivative();

    bool use_cache = preimage_cache && static_cast<int>(preimage_cache->size()) == phi.node_count();
    if (preimage_cache && !use_cache) preimage_cache->assign(static_cast<std::size_t>(phi.node_count()), Vec());

    for (int node = 0; node < phi.node_count(); ++node) {
        Vec xi = phi.node_point(node);
        Vec guess;
        if (use_cache && (*preimage_cache)[static_cast<std::size_t>(node)].size() == m) {
            guess = (*preimage_cache)[static_cast<std::size_t>(node)];
        } else {
            guess = base_lin_lu.solve(xi);
            if (!all_finite(guess) || guess.cwiseAbs().maxCoeff() > rho_ext) guess = xi;
        }

        PreimageResult pre = base_preimage(map, newton_chart, xi, guess, cfg.preimage_tol,
                                           cfg.preimage_max_iter);
        if (!pre.converged && cfg.allow_far_preimages) {
            // Truncated maps fold the base radius: the root for an outer
            // target can sit in the far blend zone. March the guess outward
            // and accept the innermost root found.
            for (double scale : {1.0, 1.6, 2.5, 4.0, 6.0}) {
                pre = base_preimage(map, newton_chart, xi, Vec(scale * xi), cfg.preimage_tol,
                                    cfg.preimage_max_iter);
                if (pre.converged) break;
            }
        }
        if (!pre.converged)
            throw NumericalError("graph_transform_step: preimage Newton failed at node " +
                                 detail::node_label(phi, node) + " (residual " +
                                 std::to_string(pre.residual) + ")");
        if (!cfg.allow_far_preimages && phi.domain_norm(pre.x) > rho_ext)
            throw NumericalError(
                "graph_transform_step: overflow violation, preimage left the extension ring at "
                "node " +
                detail::node_label(phi, node));

        if (preimage_cache) (*preimage_cache)[static_cast<std::size_t>(node)] = pre.x;
        Vec lifted = chart.lift(pre.x);
        next.value(node) = pre.image.tail(k);

        if (do_deriv) {
            // T'(xi) = [Q DG (I + T)] [P DG (I + T)]^{-1} at the preimage.
            // Outside the domain the graph is the ray extension, whose tangent
            // is the (chained) interpolant derivative; feeding the raw field
            // back in would couple boundary nodes to themselves.
            Mat t_here = phi.in_domain(pre.x) ? phi.derivative_field_at(pre.x)
                                              : phi.interpolant_derivative_at(pre.x);
            Mat base_block(m, m);
            Mat fiber_block(k, m);
            for (int i = 0; i < m; ++i) {
                Vec dir = Vec::Zero(map.dim);
                dir[i] = 1.0;
                dir.tail(k) = t_here.col(i);
                Vec img = map.tangent(lifted, dir);
                base_block.col(i) = img.head(m);
                fiber_block.col(i) = img.tail(k);
            }
            Eigen::PartialPivLU<Mat> lu(base_block);
            Mat inv = lu.inverse();
            if (!inv.allFinite())
                throw NumericalError(
                    "graph_transform_step: singular base block (smoothing condition fails) at "
                    "node " +
                    detail::node_label(phi, node));
            next.derivative(node) = fiber_block * inv;
        }
    }
    return next;
}

/// Derivative-only transform step (the Lambda iteration of the C^1 theory),
/// exposed separately for tests; `phi` supplies both the section and the
/// incoming derivative field T.
inline Section derivative_transform_step(const Section& phi, const TimeTauMap& map,
                                         const TransformConfig& cfg = {}) {
    require(phi.has_derivative(), "derivative_transform_step: derivative field absent");
    const int m = phi.base_dim();
    const int k = phi.fiber_dim();
    Section next = phi;
    ManifoldChart chart = phi.chart();
    ManifoldChart newton_chart = chart;
    newton_chart.derivative = [&phi](const Vec& x) { return phi.interpolant_derivative_at(x); };

    for (int node = 0; node < phi.node_count(); ++node) {
        Vec xi = phi.node_point(node);
        PreimageResult pre = base_preimage(map, newton_chart, xi, xi, cfg.preimage_tol,
                                           cfg.preimage_max_iter);
        if (!pre.converged)
            throw NumericalError("derivative_transform_step: preimage failed at node " +
                                 detail::node_label(phi, node));
        Vec lifted = chart.lift(pre.x);
        Mat t_here = phi.in_domain(pre.x) ? phi.derivative_field_at(pre.x)
                                          : phi.interpolant_derivative_at(pre.x);
        Mat base_block(m, m);
        Mat fiber_block(k, m);
        for (int i = 0; i < m; ++i) {
            Vec dir = Vec::Zero(map.dim);
            dir[i] = 1.0;
            dir.tail(k) = t_here.col(i);
            Vec img = map.tangent(lifted, dir);
            base_block.col(i) = img.head(m);
            fiber_block.col(i) = img.tail(k);
        }
        Eigen::PartialPivLU<Mat> lu(base_block);
        Mat inv = lu.inverse();
        if (!inv.allFinite())
            throw NumericalError(
                "derivative_transform_step: singular base block (smoothing condition fails) at "
                "node " +
                detail::node_label(phi, node));
        next.derivative(node) = fiber_block * inv;
    }
    return next;
}

/// Max fiber-norm residual of the invariance equation over the grid:
/// |Q G(x, Phi(x)) - Phi(P G(x, Phi(x)))|.
inline double invariance_residual(const Section& phi, const TimeTauMap& map,
                                  const TransformConfig& cfg = {}) {
    const int m = phi.base_dim();
    const int k = phi.fiber_dim();
    ManifoldChart chart = phi.chart();
    double worst = 0.0;
    for (int node = 0; node < phi.node_count(); ++node) {
        if (!phi.in_domain(phi.node_point(node))) continue;  // bounding-grid node
        Vec lifted = chart.lift(phi.node_point(node));
        Vec image = map.apply(lifted);
        Vec base_img = image.head(m);
        if (!phi.in_domain(base_img)) continue;  // image left the chart
        Vec mismatch = image.tail(k) - phi.value_at(base_img);
        worst = std::max(worst, detail::fiber_norm_of(cfg, mismatch));
    }
    return worst;
}

// ---------------------------------------------------------------------------
// Fixed-point iteration of the graph transform with the coupled derivative
// iteration, admissibility checks per iterate, and a contraction-ratio fit.
// ---------------------------------------------------------------------------
inline std::pair<Section, TransformReport> iterate_to_fixed_point(const Section& phi0,
                                                                  const TimeTauMap& map,
                                                                  const TransformConfig& cfg = {}) {
    TransformReport report;
    Section current = phi0;
    if (cfg.track_derivative) current.ensure_derivative();

    auto admissibility_failure = [&](const Section& s) -> std::string {
        double sup = s.sup_value_norm(cfg.fiber_norm);
        if (sup > s.epsilon())
            return "iterate left the epsilon-tube (sup |Phi| = " + std::to_string(sup) + " > " +
                   std::to_string(s.epsilon()) + ")";
        double lip = lipschitz_estimate(s, cfg.fiber_norm);
        if (lip > s.delta())
            return "iterate exceeded the Lipschitz bound (Lip = " + std::to_string(lip) + " > " +
                   std::to_string(s.delta()) + ")";
        return {};
    };

    if (cfg.enforce_admissibility) {
        std::string fail = admissibility_failure(current);
        if (!fail.empty()) {
            report.failure = "initial section inadmissible: " + fail;
            report.admissible = false;
            return {current, report};
        }
    }

    std::vector<Vec> preimage_cache;
    for (int it = 0; it < cfg.max_iter; ++it) {
        Section next = graph_transform_step(current, map, cfg, &preimage_cache);
        double dc0 = 0.0, dc1 = 0.0;
        for (int node = 0; node < next.node_count(); ++node) {
            Vec dv = next.value(node) - current.value(node);
            dc0 = std::max(dc0, detail::fiber_norm_of(cfg, dv));
            if (cfg.track_derivative && current.has_derivative())
                dc1 = std::max(dc1,
                               operator_two_norm(Mat(next.derivative(node) - current.derivative(node))));
        }
        report.c0_history.push_back(dc0);
        if (cfg.track_derivative) report.c1_history.push_back(dc1);
        report.iterations = it + 1;
        current = next;

        if (cfg.enforce_admissibility) {
            std::string fail = admissibility_failure(current);
            if (!fail.empty()) {
                report.failure = "iteration " + std::to_string(it + 1) + ": " + fail;
                report.admissible = false;
                report.contraction_ratio =
                    detail::fit_contraction_ratio(report.c0_history, cfg.tol_c0);
                return {current, report};
            }
        }

        bool c0_done = dc0 <= cfg.tol_c0;
        bool c1_done = !cfg.track_derivative || dc1 <= cfg.tol_c1;
        if (c0_done && c1_done) {
            report.converged = true;
            break;
        }
    }

    report.contraction_ratio = detail::fit_contraction_ratio(report.c0_history, cfg.tol_c0);
    report.invariance_residual = invariance_residual(current, map, cfg);
    if (!report.converged && report.failure.empty())
        report.failure = "no convergence within " + std::to_string(cfg.max_iter) +
                         " iterations (last c0 change " +
                         std::to_string(report.c0_history.empty() ? 0.0 : report.c0_history.back()) +
                         ")";
    return {current, report};
}

}  // namespace maniforge
