#pragma once

#include "maniforge/common.hpp"
#include "maniforge/models.hpp"
#include "maniforge/schemes.hpp"
#include "maniforge/spectral.hpp"

#include <functional>
#include <memory>
#include <string>
#include <utility>

namespace maniforge {

// ---------------------------------------------------------------------------
// TimeTauMap: a time-tau map G with its Frechet differential and the norm of
// the space it acts on. Everything downstream (hyperbolicity checks, graph
// transform, persistence experiments) consumes this interface, so model maps,
// perturbed maps and coordinate-conjugated maps compose freely.
// ---------------------------------------------------------------------------
struct TimeTauMap {
    int dim = 0;
    double tau = 0.0;
    std::function<Vec(const Vec&)> apply;
    std::function<Vec(const Vec&, const Vec&)> tangent;  // DG(v) w
    std::function<double(const Vec&)> norm;              // |.|_gamma on states
    Vec gamma_weight;  // diagonal norm weights; empty when the norm is not diagonal
};

inline TimeTauMap make_map(std::shared_ptr<const Model> model, const TimeStepScheme& scheme) {
    TimeTauMap map;
    map.dim = model->dim();
    map.tau = scheme.dt * scheme.substeps;
    map.gamma_weight = model->gamma_weights();
    map.apply = [model, scheme](const Vec& v) { return time_tau_map(*model, scheme, v); };
    map.tangent = [model, scheme](const Vec& v, const Vec& w) {
        return frechet_differential(*model, scheme, v, w);
    };
    map.norm = [model](const Vec& v) { return model->gamma_norm(v); };
    return map;
}

/// v -> G(v + ubar) - ubar: translate a fixed point to the origin.
inline TimeTauMap recenter(const TimeTauMap& inner, const Vec& ubar) {
    require(ubar.size() == inner.dim, "recenter: dimension mismatch");
    TimeTauMap map = inner;
    map.apply = [inner, ubar](const Vec& v) { return Vec(inner.apply(ubar + v) - ubar); };
    map.tangent = [inner, ubar](const Vec& v, const Vec& w) { return inner.tangent(ubar + v, w); };
    return map;
}

/// Galerkin-style perturbation P_N o G o P_N realized by a 0/1 mask over
/// coordinates (the retained spectral set).
inline TimeTauMap mode_truncation(const TimeTauMap& inner, const Vec& mask) {
    require(mask.size() == inner.dim, "mode_truncation: mask dimension mismatch");
    TimeTauMap map = inner;
    map.apply = [inner, mask](const Vec& v) {
        return Vec(mask.cwiseProduct(inner.apply(mask.cwiseProduct(v))));
    };
    map.tangent = [inner, mask](const Vec& v, const Vec& w) {
        return Vec(mask.cwiseProduct(inner.tangent(mask.cwiseProduct(v), mask.cwiseProduct(w))));
    };
    return map;
}

inline Vec leading_mode_mask(int dim, int retained) {
    require(retained >= 0 && retained <= dim, "leading_mode_mask: bad retained count");
    Vec mask = Vec::Zero(dim);
    mask.head(retained).setOnes();
    return mask;
}

// ---------------------------------------------------------------------------
// Analytic perturbations G_h(v) = G(v) + h * shape(v), with |shape| and
// |Dshape| of order one so h plays the role of the C^1 distance.
// ---------------------------------------------------------------------------
struct AnalyticShape {
    std::string name;
    std::function<Vec(const Vec&)> value;
    std::function<Vec(const Vec&, const Vec&)> tangent;
};

inline AnalyticShape analytic_shape(const std::string& form, int dim) {
    AnalyticShape s;
    s.name = form;
    if (form == "trig") {
        // shape_i = cos(v_j + 0.1 (i+1)), j = (i+1) mod dim
        s.value = [dim](const Vec& v) {
            Vec out(dim);
            for (int i = 0; i < dim; ++i) {
                int j = (i + 1) % dim;
                out[i] = std::cos(v[j] + 0.1 * (i + 1));
            }
            return out;
        };
        s.tangent = [dim](const Vec& v, const Vec& w) {
            Vec out(dim);
            for (int i = 0; i < dim; ++i) {
                int j = (i + 1) % dim;
                out[i] = -std::sin(v[j] + 0.1 * (i + 1)) * w[j];
            }
            return out;
        };
    } else if (form == "constant") {
        double c = 1.0 / std::sqrt(static_cast<double>(dim));
        s.value = [dim, c](const Vec&) { return Vec(Vec::Constant(dim, c)); };
        s.tangent = [dim](const Vec&, const Vec&) { return Vec(Vec::Zero(dim)); };
    } else {
        throw StructuralError("analytic_shape: unknown form '" + form + "'");
    }
    return s;
}

inline TimeTauMap analytic_perturbation(const TimeTauMap& inner, double h,
                                        const std::string& form) {
    require(h >= 0.0, "analytic_perturbation: h must be nonnegative");
    AnalyticShape shape = analytic_shape(form, inner.dim);
    TimeTauMap map = inner;
    map.apply = [inner, h, shape](const Vec& v) {
        return Vec(inner.apply(v) + h * shape.value(v));
    };
    map.tangent = [inner, h, shape](const Vec& v, const Vec& w) {
        return Vec(inner.tangent(v, w) + h * shape.tangent(v, w));
    };
    return map;
}

// ---------------------------------------------------------------------------
// CutoffSpec: theta(x) = 1 on [0,2], cubic-Hermite descent on [2,4], 0 beyond;
// max |theta'| = 3/4. theta_R(x) = theta(x / R^2).
// ---------------------------------------------------------------------------
struct CutoffSpec {
    double radius = 1.0;  // R

    static double theta(double x) {
        if (x <= 2.0) return 1.0;
        if (x >= 4.0) return 0.0;
        double s = (x - 2.0) / 2.0;
        return 1.0 - s * s * (3.0 - 2.0 * s);
    }

    static double theta_prime(double x) {
        if (x <= 2.0 || x >= 4.0) return 0.0;
        double s = (x - 2.0) / 2.0;
        return -3.0 * s * (1.0 - s);
    }

    double theta_r(double x) const { return theta(x / (radius * radius)); }
    double theta_r_prime(double x) const {
        return theta_prime(x / (radius * radius)) / (radius * radius);
    }
};

// ---------------------------------------------------------------------------
// Truncated map G~(v) = G(v) - theta_R(|v|^2) (G(v) - G_h(v)): agrees with
// G_h bitwise where theta = 1 and with G bitwise where theta = 0. The cutoff
// argument uses the |.|_gamma norm of the space.
// ---------------------------------------------------------------------------
inline TimeTauMap truncate_map(const TimeTauMap& g, const TimeTauMap& g_h,
                               const CutoffSpec& cutoff) {
    require(g.dim == g_h.dim, "truncate_map: dimension mismatch");
    require(g.gamma_weight.size() == g.dim,
            "truncate_map: requires a diagonal-norm space (apply before conjugation)");
    TimeTauMap map = g;
    map.apply = [g, g_h, cutoff](const Vec& v) {
        double x = g.norm(v);
        double t = cutoff.theta_r(x * x);
        if (t == 1.0) return g_h.apply(v);
        if (t == 0.0) return g.apply(v);
        Vec gv = g.apply(v);
        return Vec(gv - t * (gv - g_h.apply(v)));
    };
    map.tangent = [g, g_h, cutoff](const Vec& v, const Vec& w) {
        double x = g.norm(v);
        double x2 = x * x;
        double t = cutoff.theta_r(x2);
        if (t == 1.0) return g_h.tangent(v, w);
        if (t == 0.0) return g.tangent(v, w);
        // d/dv |v|_gamma^2 . w = 2 sum_i weight_i^2 v_i w_i
        double dx2 = 0.0;
        for (int i = 0; i < v.size(); ++i) {
            double gw = g.gamma_weight[i];
            dx2 += 2.0 * gw * gw * v[i] * w[i];
        }
        double dt = cutoff.theta_r_prime(x2) * dx2;
        Vec diff = g.apply(v) - g_h.apply(v);
        return Vec(g.tangent(v, w) - t * (g.tangent(v, w) - g_h.tangent(v, w)) - dt * diff);
    };
    return map;
}

// ---------------------------------------------------------------------------
// SplitFrame: a basis of the state space whose first m columns span the
// (expanding) P-subspace and the rest span Q. Working coordinates of the
// graph transform are coefficients in this basis; for index splittings on
// diagonal models the basis is a permutation.
// ---------------------------------------------------------------------------
class SplitFrame {
public:
    SplitFrame() = default;

    SplitFrame(Mat basis, int base_dim) : basis_(std::move(basis)), base_dim_(base_dim) {
        require(basis_.rows() == basis_.cols() && basis_.rows() > 0, "SplitFrame: square basis");
        require(base_dim_ >= 0 && base_dim_ <= basis_.cols(), "SplitFrame: bad base dimension");
        lu_ = Eigen::PartialPivLU<Mat>(basis_);
        identity_ = basis_.isIdentity(0.0);
    }

    static SplitFrame identity(int dim, int base_dim) {
        return SplitFrame(Mat::Identity(dim, dim), base_dim);
    }

    /// Frame moving the given coordinate indices to the front (diagonal models).
    static SplitFrame from_splitting(const Splitting& split) {
        int n = split.dimension();
        split.validate(n);
        Mat basis = Mat::Zero(n, n);
        int col = 0;
        for (int i : split.p_indices) basis(i, col++) = 1.0;
        for (int i : split.q_indices) basis(i, col++) = 1.0;
        return SplitFrame(std::move(basis), static_cast<int>(split.p_indices.size()));
    }

    int dim() const { return static_cast<int>(basis_.rows()); }
    int base_dim() const { return base_dim_; }
    int fiber_dim() const { return dim() - base_dim_; }
    const Mat& basis() const { return basis_; }
    bool is_identity() const { return identity_; }

    Vec to_frame(const Vec& state) const { return identity_ ? state : Vec(lu_.solve(state)); }
    Vec from_frame(const Vec& coords) const { return identity_ ? coords : Vec(basis_ * coords); }

private:
    Mat basis_;
    Eigen::PartialPivLU<Mat> lu_;
    int base_dim_ = 0;
    bool identity_ = true;
};

/// Conjugate a map into frame coordinates: c -> W^{-1} G(W c).
inline TimeTauMap conjugate(const TimeTauMap& inner, const SplitFrame& frame) {
    require(frame.dim() == inner.dim, "conjugate: dimension mismatch");
    if (frame.is_identity()) return inner;
    TimeTauMap map = inner;
    map.gamma_weight = Vec();  // norm is no longer diagonal in these coordinates
    map.apply = [inner, frame](const Vec& c) { return frame.to_frame(inner.apply(frame.from_frame(c))); };
    map.tangent = [inner, frame](const Vec& c, const Vec& w) {
        return frame.to_frame(inner.tangent(frame.from_frame(c), frame.from_frame(w)));
    };
    map.norm = [inner, frame](const Vec& c) { return inner.norm(frame.from_frame(c)); };
    return map;
}

// ---------------------------------------------------------------------------
// ManifoldChart: evaluation of a candidate manifold as a graph over the
// P-coordinates of a frame. Sections provide one; tests can supply exact
// charts in closed form.
// ---------------------------------------------------------------------------
struct ManifoldChart {
    int base_dim = 0;
    int fiber_dim = 0;
    std::function<Vec(const Vec&)> value;       // Phi(x), fiber coordinates
    std::function<Mat(const Vec&)> derivative;  // DPhi(x), fiber_dim x base_dim

    Vec lift(const Vec& x) const {
        Vec out(base_dim + fiber_dim);
        out.head(base_dim) = x;
        out.tail(fiber_dim) = value(x);
        return out;
    }
};

struct PreimageResult {
    Vec x;
    Vec image;  // full map image at the accepted point (saves a re-evaluation)
    int iterations = 0;
    double residual = 0.0;
    bool converged = false;
};

/// Solve P G(x, Phi(x)) = target for the base point x by damped Newton,
/// starting from `guess`. Works in frame coordinates (base = leading
/// components). Step halving guards against folds of the base map.
inline PreimageResult base_preimage(const TimeTauMap& map, const ManifoldChart& chart,
                                    const Vec& target, const Vec& guess, double tol = 1e-10,
                                    int max_iter = 50) {
    const int m = chart.base_dim;
    require(target.size() == m && guess.size() == m, "base_preimage: base dimension mismatch");
    PreimageResult out;
    out.x = guess;
    out.image = map.apply(chart.lift(out.x));
    Vec res = out.image.head(m) - target;
    out.residual = res.norm();
    for (int it = 0; it <= max_iter; ++it) {
        out.iterations = it;
        if (out.residual <= tol) {
            out.converged = true;
            return out;
        }
        if (it == max_iter) break;
        // Forward-difference Jacobian of the composite base map: one apply per
        // axis, and exact consistency with what the residual evaluates.
        Mat jac(m, m);
        for (int i = 0; i < m; ++i) {
            double delta = 1e-7 * std::max(1.0, std::abs(out.x[i]));
            Vec xp = out.x;
            xp[i] += delta;
            jac.col(i) = (map.apply(chart.lift(xp)).head(m) - res - target) / delta;
        }
        Eigen::PartialPivLU<Mat> lu(jac);
        Vec step = lu.solve(-res);
        if (!all_finite(step)) return out;  // singular base block
        double scale = 1.0;
        bool accepted = false;
        for (int half = 0; half < 10 && !accepted; ++half) {
            Vec trial = out.x + scale * step;
            Vec trial_image = map.apply(chart.lift(trial));
            Vec trial_res = trial_image.head(m) - target;
            if (all_finite(trial_res) && trial_res.norm() < out.residual) {
                out.x = trial;
                out.image = std::move(trial_image);
                res = trial_res;
                out.residual = res.norm();
                accepted = true;
            } else {
                scale *= 0.5;
            }
        }
        if (!accepted) break;  // stagnation: no descent along the Newton step
    }
    return out;
}

}  // namespace maniforge
