#pragma once

#include "maniforge/common.hpp"
#include "maniforge/models.hpp"

#include <cmath>
#include <string>
#include <vector>

namespace maniforge {

enum class SchemeKind { ExactDuhamel, RK4, IMEXEuler };

inline std::string to_string(SchemeKind k) {
    switch (k) {
        case SchemeKind::ExactDuhamel: return "ExactDuhamel";
        case SchemeKind::RK4: return "RK4";
        case SchemeKind::IMEXEuler: return "IMEXEuler";
    }
    return "?";
}

inline SchemeKind scheme_kind_from_string(const std::string& s) {
    if (s == "ExactDuhamel") return SchemeKind::ExactDuhamel;
    if (s == "RK4") return SchemeKind::RK4;
    if (s == "IMEXEuler") return SchemeKind::IMEXEuler;
    throw StructuralError("unknown scheme kind: " + s);
}

struct TimeStepScheme {
    SchemeKind kind = SchemeKind::RK4;
    double dt = 0.0;
    int substeps = 1;

    static TimeStepScheme exact(double tau) {
        TimeStepScheme s;
        s.kind = SchemeKind::ExactDuhamel;
        s.dt = tau;
        s.substeps = 1;
        return s;
    }

    static TimeStepScheme with_substeps(SchemeKind kind, double tau, int n) {
        require(n >= 1 && tau > 0.0, "TimeStepScheme: need tau > 0 and substeps >= 1");
        TimeStepScheme s;
        s.kind = kind;
        s.substeps = n;
        s.dt = tau / n;
        return s;
    }

    static TimeStepScheme with_dt(SchemeKind kind, double tau, double dt) {
        require(dt > 0.0 && tau > 0.0, "TimeStepScheme: need tau, dt > 0");
        int n = static_cast<int>(std::llround(tau / dt));
        n = std::max(n, 1);
        TimeStepScheme s;
        s.kind = kind;
        s.substeps = n;
        s.dt = dt;
        require(std::abs(s.dt * n - tau) <= 1e-12 * std::abs(tau),
                "TimeStepScheme: dt * substeps must equal tau to 1e-12 relative");
        return s;
    }
};

inline constexpr double kBlowupBound = 1e8;

// ---------------------------------------------------------------------------
// One step of the fully discrete scheme,
//   u' = (u + dt (f - B(u))) ./ (1 + dt nu lambda),
// stated against an explicit operator so it can be exercised standalone.
// ---------------------------------------------------------------------------
template <typename NonlinearFn>
Vec imex_euler_step(const Vec& stokes_eigenvalues, double nu, double dt, const Vec& f,
                    NonlinearFn&& nonlinear, const Vec& u) {
    require(dt > 0.0, "imex_euler_step: dt must be positive");
    require(u.size() == stokes_eigenvalues.size() && f.size() == u.size(),
            "imex_euler_step: dimension mismatch");
    Vec b = nonlinear(u);
    require(b.size() == u.size(), "imex_euler_step: nonlinear term dimension mismatch");
    Vec out(u.size());
    for (int i = 0; i < u.size(); ++i)
        out[i] = (u[i] + dt * (f[i] - b[i])) / (1.0 + dt * nu * stokes_eigenvalues[i]);
    return out;
}

namespace detail {

inline void check_blowup(const Model& model, const Vec& v, int step, const char* where,
                         double bound) {
    if (!all_finite(v) || model.gamma_norm(v) > bound)
        throw NumericalError(std::string(where) + ": divergence at step " +
                             std::to_string(step) + " (|v|_gamma exceeds " +
                             std::to_string(bound) + ")");
}

// Saddle2 time-tau map in closed form (Duhamel):
//   x' = x e^tau,  y' = y e^{-tau} + x^2 (e^{2 tau} - e^{-tau}) / 3.
inline Vec saddle2_exact(const Vec& v, double tau) {
    double ep = std::exp(tau), em = std::exp(-tau);
    Vec out(2);
    out[0] = v[0] * ep;
    out[1] = v[1] * em + v[0] * v[0] * (ep * ep - em) / 3.0;
    return out;
}

inline Vec saddle2_exact_tangent(const Vec& v, const Vec& w, double tau) {
    double ep = std::exp(tau), em = std::exp(-tau);
    Vec out(2);
    out[0] = w[0] * ep;
    out[1] = w[1] * em + 2.0 * v[0] * w[0] * (ep * ep - em) / 3.0;
    return out;
}

inline Vec rk4_step(const Model& model, const Vec& u, double dt) {
    Vec k1 = model.rhs(u);
    Vec k2 = model.rhs(u + 0.5 * dt * k1);
    Vec k3 = model.rhs(u + 0.5 * dt * k2);
    Vec k4 = model.rhs(u + dt * k3);
    return u + (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
}

// Joint RK4 step of state and tangent; the tangent update is the exact
// derivative of the state update.
inline void rk4_step_tangent(const Model& model, Vec& u, Vec& w, double dt) {
    Vec k1 = model.rhs(u);
    Vec m1 = model.rhs_tangent(u, w);
    Vec u2 = u + 0.5 * dt * k1;
    Vec k2 = model.rhs(u2);
    Vec m2 = model.rhs_tangent(u2, w + 0.5 * dt * m1);
    Vec u3 = u + 0.5 * dt * k2;
    Vec k3 = model.rhs(u3);
    Vec m3 = model.rhs_tangent(u3, w + 0.5 * dt * m2);
    Vec u4 = u + dt * k3;
    Vec k4 = model.rhs(u4);
    Vec m4 = model.rhs_tangent(u4, w + dt * m3);
    u += (dt / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4);
    w += (dt / 6.0) * (m1 + 2.0 * m2 + 2.0 * m3 + m4);
}

inline Vec imex_step_model(const Model& model, const Vec& u, double dt) {
    Vec b = model.quadratic(u);
    const Vec& f = model.forcing();
    const Vec& lam = model.symbol();
    double nu = model.viscosity();
    Vec out(u.size());
    for (int i = 0; i < u.size(); ++i)
        out[i] = (u[i] + dt * (f[i] - b[i])) / (1.0 + dt * nu * lam[i]);
    return out;
}

inline void imex_step_tangent(const Model& model, Vec& u, Vec& w, double dt) {
    Vec db = model.quadratic_tangent(u, w);
    Vec un = imex_step_model(model, u, dt);
    const Vec& lam = model.symbol();
    double nu = model.viscosity();
    for (int i = 0; i < u.size(); ++i)
        w[i] = (w[i] - dt * db[i]) / (1.0 + dt * nu * lam[i]);
    u = un;
}

inline void check_scheme_supported(const Model& model, const TimeStepScheme& scheme) {
    switch (scheme.kind) {
        case SchemeKind::ExactDuhamel:
            require(model.kind() == ModelKind::Saddle2,
                    "ExactDuhamel is only available for Saddle2");
            break;
        case SchemeKind::IMEXEuler:
            require(model.kind() != ModelKind::AppendixPolar,
                    "IMEXEuler needs a diagonal linear part; use RK4 for AppendixPolar");
            break;
        case SchemeKind::RK4:
            break;
    }
}

}  // namespace detail

/// G(v) = S(tau) v under the chosen discretization.
inline Vec time_tau_map(const Model& model, const TimeStepScheme& scheme, const Vec& v,
                        double blowup_bound = kBlowupBound) {
    require(all_finite(v), "time_tau_map: state must be finite");
    detail::check_scheme_supported(model, scheme);
    if (scheme.kind == SchemeKind::ExactDuhamel)
        return detail::saddle2_exact(v, scheme.dt * scheme.substeps);
    Vec u = v;
    for (int s = 0; s < scheme.substeps; ++s) {
        u = (scheme.kind == SchemeKind::RK4) ? detail::rk4_step(model, u, scheme.dt)
                                             : detail::imex_step_model(model, u, scheme.dt);
        detail::check_blowup(model, u, s + 1, "time_tau_map", blowup_bound);
    }
    return u;
}

/// DG(v) w by integrating the variational system with the same scheme; this
/// is the exact derivative of the discrete map.
inline Vec frechet_differential(const Model& model, const TimeStepScheme& scheme, const Vec& v,
                                const Vec& w, double blowup_bound = kBlowupBound) {
    require(all_finite(v) && all_finite(w), "frechet_differential: inputs must be finite");
    detail::check_scheme_supported(model, scheme);
    if (scheme.kind == SchemeKind::ExactDuhamel)
        return detail::saddle2_exact_tangent(v, w, scheme.dt * scheme.substeps);
    Vec u = v, t = w;
    for (int s = 0; s < scheme.substeps; ++s) {
        if (scheme.kind == SchemeKind::RK4)
            detail::rk4_step_tangent(model, u, t, scheme.dt);
        else
            detail::imex_step_tangent(model, u, t, scheme.dt);
        detail::check_blowup(model, u, s + 1, "frechet_differential", blowup_bound);
        if (!all_finite(t))
            throw NumericalError("frechet_differential: tangent diverged at step " +
                                 std::to_string(s + 1));
    }
    return t;
}

struct FixedPointResult {
    Vec point;
    int iterations = 0;
    double residual = 0.0;
    std::vector<double> residual_history;
    bool jacobian_singular = false;  // Newton met a singular DG - Id (nonhyperbolic)
};

/// Newton iteration for G(u) = u with a dense direct solve of (DG - Id).
inline FixedPointResult newton_fixed_point(const Model& model, const TimeStepScheme& scheme,
                                           const Vec& guess, double tol, int max_iter = 50) {
    require(tol > 0.0, "newton_fixed_point: tolerance must be positive");
    const int n = model.dim();
    require(guess.size() == n, "newton_fixed_point: guess dimension mismatch");

    FixedPointResult result;
    Vec u = guess;
    for (int it = 0; it < max_iter; ++it) {
        Vec res = time_tau_map(model, scheme, u) - u;
        double rnorm = model.gamma_norm(res);
        result.residual_history.push_back(rnorm);
        if (rnorm <= tol) {
            result.point = u;
            result.iterations = it;
            result.residual = rnorm;
            return result;
        }
        Mat jac(n, n);
        Vec e = Vec::Zero(n);
        for (int j = 0; j < n; ++j) {
            e[j] = 1.0;
            jac.col(j) = frechet_differential(model, scheme, u, e);
            e[j] = 0.0;
        }
        jac.diagonal().array() -= 1.0;
        Eigen::FullPivLU<Mat> lu(jac);
        Vec step;
        if (lu.isInvertible()) {
            step = lu.solve(-res);
        } else {
            // DG - Id singular: fixed point sits at a nonhyperbolic spot.
            // Fall back to a least-squares step and record the condition.
            result.jacobian_singular = true;
            step = jac.completeOrthogonalDecomposition().solve(-res);
        }
        u += step;
        require(all_finite(u), "newton_fixed_point: iterate left the finite domain");
    }
    std::string hist;
    for (double r : result.residual_history) hist += " " + std::to_string(r);
    throw NumericalError("newton_fixed_point: no convergence in " + std::to_string(max_iter) +
                         " iterations; residual history:" + hist);
}

}  // namespace maniforge
