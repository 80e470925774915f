#pragma once

#include "maniforge/common.hpp"
#include "maniforge/maps.hpp"
#include "maniforge/models.hpp"
#include "maniforge/schemes.hpp"
#include "maniforge/spectral.hpp"

#include <unsupported/Eigen/MatrixFunctions>

#include <algorithm>
#include <cmath>
#include <complex>
#include <vector>

namespace maniforge {

// ---------------------------------------------------------------------------
// Linearization at a fixed point: either the time-tau map differential DG(u)
// (map case, hyperbolicity read off the unit circle) or the vector-field
// Jacobian (generator case, read off the imaginary axis).
// ---------------------------------------------------------------------------
struct LinearizationReport {
    Mat matrix;
    CVec eigenvalues;
    bool map_case = true;
    double tau = 0.0;       // map case only
    double margin = 0.0;    // distance of the spectrum to the unit circle / imaginary axis
    bool hyperbolic = false;
    int unstable_count = 0; // |lambda| > 1 (map) or Re lambda > 0 (generator)
};

namespace detail {

inline LinearizationReport analyze_matrix(Mat m, bool map_case, double tau,
                                          double margin_threshold) {
    LinearizationReport rep;
    rep.matrix = std::move(m);
    rep.map_case = map_case;
    rep.tau = tau;
    Eigen::EigenSolver<Mat> es(rep.matrix, /*computeEigenvectors=*/false);
    if (es.info() != Eigen::Success) {
        Eigen::PartialPivLU<Mat> lu(rep.matrix);
        throw NumericalError("linearize: eigensolver failed; rcond estimate " +
                             std::to_string(lu.rcond()));
    }
    rep.eigenvalues = es.eigenvalues();
    double margin = std::numeric_limits<double>::infinity();
    int unstable = 0;
    for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i) {
        std::complex<double> lam = rep.eigenvalues[i];
        double dist = map_case ? std::abs(std::abs(lam) - 1.0) : std::abs(lam.real());
        margin = std::min(margin, dist);
        bool exp = map_case ? (std::abs(lam) > 1.0) : (lam.real() > 0.0);
        if (exp) ++unstable;
    }
    rep.margin = margin;
    rep.hyperbolic = margin > margin_threshold;
    rep.unstable_count = unstable;
    return rep;
}

}  // namespace detail

inline LinearizationReport linearize_map(const TimeTauMap& map, const Vec& ubar,
                                         double margin_threshold = 1e-9) {
    require(ubar.size() == map.dim, "linearize_map: dimension mismatch");
    Mat jac = materialize([&](const Vec& w) { return map.tangent(ubar, w); }, map.dim);
    return detail::analyze_matrix(std::move(jac), /*map_case=*/true, map.tau, margin_threshold);
}

inline LinearizationReport linearize_map(const Model& model, const TimeStepScheme& scheme,
                                         const Vec& ubar, double margin_threshold = 1e-9) {
    Mat jac = materialize([&](const Vec& w) { return frechet_differential(model, scheme, ubar, w); },
                          model.dim());
    return detail::analyze_matrix(std::move(jac), /*map_case=*/true,
                                  scheme.dt * scheme.substeps, margin_threshold);
}

/// Jacobian of the vector field at ubar (columns are directional derivatives
/// of rhs), analyzed against the imaginary axis.
inline LinearizationReport linearize_generator(const Model& model, const Vec& ubar,
                                               double margin_threshold = 1e-9) {
    Mat jac = materialize([&](const Vec& w) { return model.rhs_tangent(ubar, w); }, model.dim());
    return detail::analyze_matrix(std::move(jac), /*map_case=*/false, 0.0, margin_threshold);
}

// ---------------------------------------------------------------------------
// Invariant-subspace splitting via the matrix sign function. The sign
// iteration only needs LU solves and is robust for spectra well separated
// from the dividing circle/axis, which the hyperbolicity margin guarantees.
// ---------------------------------------------------------------------------
namespace detail {

inline Mat matrix_sign(Mat x, int max_iter = 100, double tol = 1e-13) {
    const int n = static_cast<int>(x.rows());
    Mat id = Mat::Identity(n, n);
    for (int it = 0; it < max_iter; ++it) {
        Eigen::PartialPivLU<Mat> lu(x);
        Mat xinv = lu.solve(id);
        // Determinant-based scaling through log-magnitudes to avoid overflow.
        double logdet = 0.0;
        for (int i = 0; i < n; ++i) logdet += std::log(std::abs(lu.matrixLU()(i, i)));
        double c = std::exp(-logdet / n);
        if (!std::isfinite(c) || c <= 0.0) c = 1.0;
        Mat next = 0.5 * (c * x + (1.0 / c) * xinv);
        double delta = (next - x).cwiseAbs().maxCoeff();
        x = next;
        if (delta <= tol * std::max(1.0, x.cwiseAbs().maxCoeff())) break;
    }
    double defect = (x * x - id).cwiseAbs().maxCoeff();
    if (!(defect < 1e-6))
        throw NumericalError("matrix_sign: iteration did not converge (defect " +
                             std::to_string(defect) + "); spectrum too close to the divide");
    return x;
}

}  // namespace detail

enum class SplitMode { MapUnitCircle, GeneratorImagAxis };

struct SpectralSplitResult {
    SplitFrame frame;          // first m columns span the expanding subspace
    Splitting splitting;       // leading split in frame coordinates
    Mat projector_p;           // spectral projector onto the expanding set
    Mat projector_q;
    int unstable_dim = 0;
    double projector_defect = 0.0;  // max of |P^2-P|, |PQ|, |P+Q-I| in operator norm
};

inline SpectralSplitResult spectral_split(const LinearizationReport& report, SplitMode mode) {
    const int n = static_cast<int>(report.matrix.rows());
    require((mode == SplitMode::MapUnitCircle) == report.map_case,
            "spectral_split: mode does not match the report kind");
    if (!report.hyperbolic)
        throw NumericalError("spectral_split: spectrum within margin of the divide (margin " +
                             std::to_string(report.margin) + ")");

    Mat w;
    if (mode == SplitMode::MapUnitCircle) {
        // Inverse Cayley transform: |lambda| > 1 maps to Re > 0.
        Mat mp = report.matrix + Mat::Identity(n, n);
        Eigen::PartialPivLU<Mat> lu(mp);
        w = (report.matrix - Mat::Identity(n, n)) * lu.solve(Mat::Identity(n, n));
    } else {
        w = report.matrix;
    }

    Mat s = detail::matrix_sign(std::move(w));
    SpectralSplitResult out;
    out.projector_p = 0.5 * (s + Mat::Identity(n, n));
    out.projector_q = 0.5 * (Mat::Identity(n, n) - s);
    out.unstable_dim = static_cast<int>(std::llround(out.projector_p.trace()));
    require(out.unstable_dim == report.unstable_count,
            "spectral_split: projector rank disagrees with the eigenvalue count");

    double d1 = operator_two_norm(Mat(out.projector_p * out.projector_p - out.projector_p));
    double d2 = operator_two_norm(Mat(out.projector_p * out.projector_q));
    double d3 = operator_two_norm(
        Mat(out.projector_p + out.projector_q - Mat::Identity(n, n)));
    out.projector_defect = std::max({d1, d2, d3});

    const int m = out.unstable_dim;
    Mat basis(n, n);
    if (m > 0) {
        Eigen::ColPivHouseholderQR<Mat> qr(out.projector_p);
        Mat q = qr.householderQ();
        basis.leftCols(m) = q.leftCols(m);
    }
    if (m < n) {
        Eigen::ColPivHouseholderQR<Mat> qr(out.projector_q);
        Mat q = qr.householderQ();
        basis.rightCols(n - m) = q.leftCols(n - m);
    }
    // Deterministic column signs: largest-magnitude entry positive.
    for (int j = 0; j < n; ++j) {
        int idx = 0;
        basis.col(j).cwiseAbs().maxCoeff(&idx);
        if (basis(idx, j) < 0.0) basis.col(j) = -basis.col(j);
    }
    out.frame = SplitFrame(std::move(basis), m);
    out.splitting = Splitting::leading(m, n);
    return out;
}

// ---------------------------------------------------------------------------
// Dichotomy constants: the contraction rate a of the linearized map backward
// on the expanding set and forward on the contracting set. If a >= 1 at the
// given tau, tau is doubled (map powers / semigroup time) until a < 1 or a
// cap is reached.
// ---------------------------------------------------------------------------
struct DichotomyReport {
    double a = 0.0;
    double tau = 0.0;
    double norm_p_expansion = 0.0;   // guaranteed forward expansion factor on P
    double norm_q_contraction = 0.0; // forward contraction factor on Q
    bool contraction_achieved = false;
    int doublings = 0;
    double coupling_defect = 0.0;    // size of the off-diagonal blocks in frame coords
};

inline DichotomyReport dichotomy_constants(const LinearizationReport& report,
                                           const SpectralSplitResult& split, double tau,
                                           int samples = 16, int max_doublings = 30) {
    const int n = static_cast<int>(report.matrix.rows());
    const int m = split.unstable_dim;
    require(m > 0 && m < n, "dichotomy_constants: need a nontrivial splitting");

    // One-step map in frame coordinates (block diagonal up to the defect).
    Mat step;
    double tau0;
    if (report.map_case) {
        tau0 = report.tau;
        require(tau >= tau0 * (1.0 - 1e-9), "dichotomy_constants: tau below the map time");
        step = report.matrix;
    } else {
        tau0 = tau;
        step = Mat((report.matrix * tau).exp());
    }
    Mat frame_basis = split.frame.basis();
    Eigen::PartialPivLU<Mat> basis_lu(frame_basis);
    Mat af = basis_lu.solve(step * frame_basis);

    DichotomyReport out;
    out.coupling_defect = std::max(operator_two_norm(Mat(af.topRightCorner(m, n - m))),
                                   operator_two_norm(Mat(af.bottomLeftCorner(n - m, m))));

    int k0 = report.map_case ? std::max(1, static_cast<int>(std::llround(tau / tau0))) : 1;
    Mat ap = af.topLeftCorner(m, m);
    Mat aq = af.bottomRightCorner(n - m, n - m);

    std::mt19937_64 rng = make_rng(0xd1c207);
    auto block_a = [&](const Mat& p_block, const Mat& q_block) {
        Eigen::PartialPivLU<Mat> plu(p_block);
        Mat p_inv = plu.solve(Mat::Identity(m, m));
        double np = operator_two_norm(p_inv);
        double nq = operator_two_norm(q_block);
        for (int s = 0; s < samples; ++s) {
            Vec xp = random_unit_vector(rng, m);
            np = std::max(np, (p_inv * xp).norm());
            Vec xq = random_unit_vector(rng, n - m);
            nq = std::max(nq, (q_block * xq).norm());
        }
        return std::tuple<double, double>(np, nq);
    };

    Mat pk = Mat::Identity(m, m), qk = Mat::Identity(n - m, n - m);
    for (int i = 0; i < k0; ++i) {
        pk = ap * pk;
        qk = aq * qk;
    }
    double t_now = k0 * tau0;
    for (int d = 0; d <= max_doublings; ++d) {
        auto [np, nq] = block_a(pk, qk);
        out.a = std::max(np, nq);
        out.tau = t_now;
        out.norm_p_expansion = 1.0 / np;
        out.norm_q_contraction = nq;
        out.doublings = d;
        if (out.a < 1.0) {
            out.contraction_achieved = true;
            return out;
        }
        pk = pk * pk;
        qk = qk * qk;
        t_now *= 2.0;
    }
    return out;  // dichotomy failure: a >= 1 at every tried horizon
}

// ---------------------------------------------------------------------------
// Finite-horizon generalized Lyapunov-type numbers along the backward orbit
// through a base point on the manifold: nu_T = |B_T|^(1/T),
// theta_T = log|A_T| / (-log|B_T|).
// ---------------------------------------------------------------------------
struct LyapunovNumbers {
    double nu = 0.0;
    double theta = 0.0;
    bool theta_defined = false;
    double horizon = 0.0;
    Vec base_point;
};

/// `map` and `chart` live in frame coordinates (base = leading components).
/// The backward orbit is produced by Newton on the base-restricted map.
inline LyapunovNumbers lyapunov_type_numbers(const TimeTauMap& map, const ManifoldChart& chart,
                                             const Vec& base_point, double horizon,
                                             double preimage_tol = 1e-10) {
    const int m = chart.base_dim;
    const int k = chart.fiber_dim;
    require(base_point.size() == m, "lyapunov_type_numbers: base point dimension mismatch");
    require(map.tau > 0.0, "lyapunov_type_numbers: map must carry its tau");
    int n_steps = std::max(1, static_cast<int>(std::llround(horizon / map.tau)));
    double t_eff = n_steps * map.tau;

    // Backward orbit x_0 (= base_point), x_1, ..., x_n with G|_M(x_{j+1}) = x_j.
    std::vector<Vec> orbit(static_cast<std::size_t>(n_steps) + 1);
    orbit[0] = base_point;
    for (int j = 0; j < n_steps; ++j) {
        PreimageResult pre = base_preimage(map, chart, orbit[static_cast<std::size_t>(j)],
                                           orbit[static_cast<std::size_t>(j)], preimage_tol);
        if (!pre.converged)
            throw NumericalError("lyapunov_type_numbers: backward base orbit failed at step " +
                                 std::to_string(j + 1) + " (residual " +
                                 std::to_string(pre.residual) + ")");
        orbit[static_cast<std::size_t>(j) + 1] = pre.x;
    }

    // Composite tangent along the orbit, deepest point first.
    auto chain = [&](Vec w) {
        for (int j = n_steps; j >= 1; --j)
            w = map.tangent(chart.lift(orbit[static_cast<std::size_t>(j)]), w);
        return w;
    };

    Mat bt(k, k);
    for (int j = 0; j < k; ++j) {
        Vec e = Vec::Zero(map.dim);
        e[m + j] = 1.0;
        bt.col(j) = chain(e).tail(k);
    }
    Mat dphi = chart.derivative(orbit.back());
    Mat fwd(m, m);
    for (int i = 0; i < m; ++i) {
        Vec e = Vec::Zero(map.dim);
        e[i] = 1.0;
        e.tail(k) = dphi.col(i);
        fwd.col(i) = chain(e).head(m);
    }

    LyapunovNumbers out;
    out.base_point = base_point;
    out.horizon = t_eff;
    double norm_b = operator_two_norm(bt);
    out.nu = std::pow(norm_b, 1.0 / t_eff);
    if (out.nu < 1.0 && norm_b > 0.0) {
        Eigen::PartialPivLU<Mat> lu(fwd);
        Mat inv = lu.solve(Mat::Identity(m, m));
        double norm_a = operator_two_norm(inv);
        out.theta = std::log(norm_a) / (-std::log(norm_b));
        out.theta_defined = true;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Conditions gate: sup |B(p)| < theta1 (stability) and
// sup |A(p)| |B(p)| < theta1 (smoothing), chart constant 1. A and B are the
// transition operators of the negatively invariant (overflowing) convention
// by default; the inflowing convention replaces the backward operators by
// forward ones.
// ---------------------------------------------------------------------------
enum class ConditionMode { Overflowing, Inflowing };

struct ConditionCheck {
    double stability_lhs = 0.0;
    double smoothing_lhs = 0.0;
    double theta1 = 0.0;
    bool pass = false;
    int samples = 0;
    bool marginal = false;  // pass with less than 10% margin
};

inline ConditionCheck check_conditions(const TimeTauMap& map, const ManifoldChart& chart,
                                       const std::vector<Vec>& samples, double theta1 = 0.9,
                                       ConditionMode mode = ConditionMode::Overflowing,
                                       double preimage_tol = 1e-10) {
    require(!samples.empty(), "check_conditions: need at least one sample");
    const int m = chart.base_dim;
    const int k = chart.fiber_dim;
    ConditionCheck out;
    out.theta1 = theta1;
    out.samples = static_cast<int>(samples.size());

    int idx = 0;
    for (const Vec& x : samples) {
        ++idx;
        Vec x_eval;
        if (mode == ConditionMode::Overflowing) {
            PreimageResult pre = base_preimage(map, chart, x, x, preimage_tol);
            if (!pre.converged)
                throw NumericalError(
                    "check_conditions: base-restricted map not invertible near sample " +
                    std::to_string(idx) + " (residual " + std::to_string(pre.residual) + ")");
            x_eval = pre.x;
        } else {
            x_eval = x;
        }
        Vec p = chart.lift(x_eval);

        Mat b(k, k);
        for (int j = 0; j < k; ++j) {
            Vec e = Vec::Zero(map.dim);
            e[m + j] = 1.0;
            b.col(j) = map.tangent(p, e).tail(k);
        }
        double norm_b = operator_two_norm(b);

        Mat dphi = chart.derivative(x_eval);
        Mat fwd(m, m);
        for (int i = 0; i < m; ++i) {
            Vec e = Vec::Zero(map.dim);
            e[i] = 1.0;
            e.tail(k) = dphi.col(i);
            fwd.col(i) = map.tangent(p, e).head(m);
        }
        double norm_a;
        if (mode == ConditionMode::Overflowing) {
            Eigen::PartialPivLU<Mat> lu(fwd);
            Mat inv = lu.solve(Mat::Identity(m, m));
            if (!inv.allFinite())
                throw NumericalError(
                    "check_conditions: base tangent map singular at sample " + std::to_string(idx));
            norm_a = operator_two_norm(inv);
        } else {
            norm_a = operator_two_norm(fwd);
        }

        out.stability_lhs = std::max(out.stability_lhs, norm_b);
        out.smoothing_lhs = std::max(out.smoothing_lhs, norm_a * norm_b);
    }
    out.pass = (out.stability_lhs < theta1) && (out.smoothing_lhs < theta1);
    if (out.pass) {
        double headroom = std::min(theta1 - out.stability_lhs, theta1 - out.smoothing_lhs);
        out.marginal = headroom < 0.1 * theta1;
    }
    return out;
}

// ---------------------------------------------------------------------------
// Spectral gap condition on the (shifted) spectrum: lambda_m >= K3 and
// lambda_{m+1} - lambda_m >= K4 lambda_{m+1}^beta. Evaluated on the shifted
// eigenvalues lambda + zeta so indefinite low modes are handled the same way
// the norms are.
// ---------------------------------------------------------------------------
struct GapCheckResult {
    bool pass = false;
    double lambda_m = 0.0;
    double lambda_m1 = 0.0;
    double gap = 0.0;
    double required_gap = 0.0;
    double k3_margin = 0.0;
    double gap_margin = 0.0;
};

inline GapCheckResult spectral_gap_check(const SpectralOperator& op, int m, double k3, double k4,
                                         double beta) {
    require(m >= 1 && m < op.dimension(), "spectral_gap_check: need 1 <= m < n");
    GapCheckResult out;
    out.lambda_m = op.shifted_eigenvalue(m - 1);
    out.lambda_m1 = op.shifted_eigenvalue(m);
    out.gap = out.lambda_m1 - out.lambda_m;
    out.required_gap = k4 * std::pow(out.lambda_m1, beta);
    out.k3_margin = out.lambda_m - k3;
    out.gap_margin = out.gap - out.required_gap;
    out.pass = (out.k3_margin >= 0.0) && (out.gap_margin >= 0.0);
    return out;
}

/// Smallest m in [1, m_max] passing the gap condition, or 0 if none does.
inline int select_gap_dimension(const SpectralOperator& op, double k3, double k4, double beta,
                                int m_max) {
    m_max = std::min(m_max, op.dimension() - 1);
    for (int m = 1; m <= m_max; ++m)
        if (spectral_gap_check(op, m, k3, k4, beta).pass) return m;
    return 0;
}

}  // namespace maniforge
