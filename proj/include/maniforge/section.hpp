#pragma once

#include "maniforge/common.hpp"
#include "maniforge/maps.hpp"

#include <array>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

namespace maniforge {

enum class Interpolation { Multilinear, Cubic };

inline std::string to_string(Interpolation k) {
    return k == Interpolation::Multilinear ? "multilinear" : "cubic";
}

inline Interpolation interpolation_from_string(const std::string& s) {
    if (s == "multilinear") return Interpolation::Multilinear;
    if (s == "cubic") return Interpolation::Cubic;
    throw StructuralError("unknown interpolation kind: " + s);
}

namespace detail {

// Per-axis interpolation weights on a uniform grid of g nodes. `u` is the
// continuous grid coordinate in [0, g-1] (callers clamp/scale beforehand).
// Cubic uses the Catmull-Rom/Hermite form with second-order one-sided slopes
// at the boundary, so quadratic data is reproduced exactly.
struct AxisStencil {
    std::array<int, 5> index{};
    std::array<double, 5> value_w{};
    std::array<double, 5> deriv_w{};  // d/du weights
    int count = 0;
};

inline void accumulate(AxisStencil& s, int idx, double vw, double dw) {
    for (int i = 0; i < s.count; ++i) {
        if (s.index[static_cast<std::size_t>(i)] == idx) {
            s.value_w[static_cast<std::size_t>(i)] += vw;
            s.deriv_w[static_cast<std::size_t>(i)] += dw;
            return;
        }
    }
    s.index[static_cast<std::size_t>(s.count)] = idx;
    s.value_w[static_cast<std::size_t>(s.count)] = vw;
    s.deriv_w[static_cast<std::size_t>(s.count)] = dw;
    ++s.count;
}

inline AxisStencil axis_stencil(double u, int g, Interpolation kind) {
    AxisStencil s;
    int cell = static_cast<int>(std::floor(u));
    cell = std::max(0, std::min(cell, g - 2));
    double t = u - cell;

    if (kind == Interpolation::Multilinear) {
        accumulate(s, cell, 1.0 - t, -1.0);
        accumulate(s, cell + 1, t, 1.0);
        return s;
    }

    // Hermite basis over the cell; slopes in grid units.
    double h00 = 1.0 - 3.0 * t * t + 2.0 * t * t * t;
    double h10 = t - 2.0 * t * t + t * t * t;
    double h01 = 3.0 * t * t - 2.0 * t * t * t;
    double h11 = -t * t + t * t * t;
    double d00 = -6.0 * t + 6.0 * t * t;
    double d10 = 1.0 - 4.0 * t + 3.0 * t * t;
    double d01 = 6.0 * t - 6.0 * t * t;
    double d11 = -2.0 * t + 3.0 * t * t;

    accumulate(s, cell, h00, d00);
    accumulate(s, cell + 1, h01, d01);

    auto slope = [&](int node, double vw, double dw) {
        // Distribute the slope estimate at `node` onto value weights.
        if (node > 0 && node < g - 1) {
            accumulate(s, node + 1, 0.5 * vw, 0.5 * dw);
            accumulate(s, node - 1, -0.5 * vw, -0.5 * dw);
        } else if (node == 0) {
            require(g >= 3, "cubic interpolation needs at least 3 nodes per axis");
            accumulate(s, 0, -1.5 * vw, -1.5 * dw);
            accumulate(s, 1, 2.0 * vw, 2.0 * dw);
            accumulate(s, 2, -0.5 * vw, -0.5 * dw);
        } else {
            accumulate(s, g - 1, 1.5 * vw, 1.5 * dw);
            accumulate(s, g - 2, -2.0 * vw, -2.0 * dw);
            accumulate(s, g - 3, 0.5 * vw, 0.5 * dw);
        }
    };
    slope(cell, h10, d10);
    slope(cell + 1, h11, d11);
    return s;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Section: a discretized graph Phi from the base box [-rho, rho]^m (P-coords)
// to the fiber (Q-coords), on a tensor-product grid with g nodes per axis,
// optionally carrying a derivative field T (fiber_dim x m per node).
// Evaluation outside the box extends constant-along-rays. Immutable value
// semantics: transform steps produce new snapshots.
// ---------------------------------------------------------------------------
class Section {
public:
    Section() = default;

    Section(int base_dim, int fiber_dim, double rho, int nodes_per_axis, Interpolation interp,
            double epsilon, double delta)
        : base_dim_(base_dim),
          fiber_dim_(fiber_dim),
          rho_(rho),
          g_(nodes_per_axis),
          interp_(interp),
          epsilon_(epsilon),
          delta_(delta) {
        require(base_dim >= 1 && base_dim <= 3, "Section: base dimension must be 1..3");
        require(fiber_dim >= 1, "Section: fiber dimension must be positive");
        require(rho > 0.0, "Section: rho must be positive");
        require(nodes_per_axis >= (interp == Interpolation::Cubic ? 3 : 2),
                "Section: too few nodes per axis");
        require(epsilon > 0.0 && delta > 0.0, "Section: epsilon, delta must be positive");
        int count = 1;
        for (int a = 0; a < base_dim_; ++a) count *= g_;
        values_.assign(static_cast<std::size_t>(count), Vec::Zero(fiber_dim_));
    }

    static Section zero(int base_dim, int fiber_dim, double rho, int nodes_per_axis,
                        Interpolation interp, double epsilon, double delta,
                        bool with_derivative = true) {
        Section s(base_dim, fiber_dim, rho, nodes_per_axis, interp, epsilon, delta);
        if (with_derivative)
            s.derivs_.assign(s.values_.size(), Mat::Zero(fiber_dim, base_dim));
        return s;
    }

    int base_dim() const { return base_dim_; }
    int fiber_dim() const { return fiber_dim_; }
    double rho() const { return rho_; }
    int nodes_per_axis() const { return g_; }
    int node_count() const { return static_cast<int>(values_.size()); }
    Interpolation interpolation() const { return interp_; }
    double epsilon() const { return epsilon_; }
    double delta() const { return delta_; }
    bool has_derivative() const { return !derivs_.empty(); }
    double spacing() const { return 2.0 * rho_ / (g_ - 1); }

    const Vec& value(int node) const { return values_[static_cast<std::size_t>(node)]; }
    Vec& value(int node) { return values_[static_cast<std::size_t>(node)]; }
    const Mat& derivative(int node) const { return derivs_[static_cast<std::size_t>(node)]; }
    Mat& derivative(int node) { return derivs_[static_cast<std::size_t>(node)]; }

    void ensure_derivative() {
        if (derivs_.empty()) derivs_.assign(values_.size(), Mat::Zero(fiber_dim_, base_dim_));
    }

    std::array<int, 3> unflatten(int node) const {
        std::array<int, 3> idx{0, 0, 0};
        for (int a = 0; a < base_dim_; ++a) {
            idx[static_cast<std::size_t>(a)] = node % g_;
            node /= g_;
        }
        return idx;
    }

    int flatten(const std::array<int, 3>& idx) const {
        int node = 0;
        for (int a = base_dim_ - 1; a >= 0; --a) node = node * g_ + idx[static_cast<std::size_t>(a)];
        return node;
    }

    Vec node_point(int node) const {
        auto idx = unflatten(node);
        Vec x(base_dim_);
        for (int a = 0; a < base_dim_; ++a)
            x[a] = -rho_ + spacing() * idx[static_cast<std::size_t>(a)];
        return x;
    }

    /// Interpolated value; points outside the box are pulled back along rays.
    Vec value_at(const Vec& x) const { return evaluate(x).first; }

    /// Spatial derivative of the interpolant (not the stored T field).
    Mat interpolant_derivative_at(const Vec& x) const { return evaluate(x).second; }

    /// Interpolated derivative field; requires the field to be present.
    /// Outside the box the constant-along-rays pullback is chained in, so the
    /// reported derivative matches the extended evaluation (what a Newton
    /// solve against value_at needs).
    Mat derivative_at(const Vec& x) const {
        return derivative_field_at(x) * extension_jacobian(x);
    }

    /// The derivative field itself, extended constant along rays (no chain
    /// rule): continuous across the box-corner rays, which is what the
    /// derivative-transform iteration propagates.
    Mat derivative_field_at(const Vec& x) const {
        require(has_derivative(), "Section: derivative field absent");
        Vec xin = pull_into_box(x);
        Mat out = Mat::Zero(fiber_dim_, base_dim_);
        for_stencil(xin, [&](int node, double w, const Vec&) {
            out += w * derivs_[static_cast<std::size_t>(node)];
        });
        return out;
    }

    /// Chart view for preimage solves and condition checks. Prefers the
    /// stored derivative field, falling back to the interpolant gradient.
    ManifoldChart chart() const {
        ManifoldChart c;
        c.base_dim = base_dim_;
        c.fiber_dim = fiber_dim_;
        c.value = [this](const Vec& x) { return value_at(x); };
        if (has_derivative())
            c.derivative = [this](const Vec& x) { return derivative_at(x); };
        else
            c.derivative = [this](const Vec& x) { return interpolant_derivative_at(x); };
        return c;
    }

    /// Max over nodes of the fiber norm (Euclidean by default).
    double sup_value_norm(const std::function<double(const Vec&)>& fiber_norm = {}) const {
        double sup = 0.0;
        for (const Vec& v : values_) sup = std::max(sup, fiber_norm ? fiber_norm(v) : v.norm());
        return sup;
    }

    // Domain: the p-norm ball of radius rho (p = 8), inscribed in the grid
    // box. It is smooth, so the constant-along-rays extension has a smooth
    // pullback; with base dimension 1 it coincides with the interval.
    static constexpr double kPullPower = 8.0;

    double domain_norm(const Vec& x) const {
        if (base_dim_ == 1) return std::abs(x[0]);
        double acc = 0.0;
        for (int a = 0; a < base_dim_; ++a) acc += std::pow(std::abs(x[a]), kPullPower);
        return std::pow(acc, 1.0 / kPullPower);
    }

    bool in_domain(const Vec& x) const { return domain_norm(x) <= rho_; }

private:
    std::pair<Vec, Mat> evaluate(const Vec& x) const {
        require(x.size() == base_dim_, "Section: query dimension mismatch");
        Vec xin = pull_into_box(x);
        Vec val = Vec::Zero(fiber_dim_);
        Mat grad = Mat::Zero(fiber_dim_, base_dim_);
        const double inv_dx = 1.0 / spacing();

        std::array<detail::AxisStencil, 3> st;
        for (int a = 0; a < base_dim_; ++a) {
            double u = (xin[a] + rho_) * inv_dx;
            st[static_cast<std::size_t>(a)] = detail::axis_stencil(u, g_, interp_);
        }
        std::array<int, 3> pick{0, 0, 0};
        iterate_stencils(st, pick, 0, [&](const std::array<int, 3>& sel) {
            std::array<int, 3> idx{0, 0, 0};
            double w = 1.0;
            for (int a = 0; a < base_dim_; ++a) {
                const auto& s = st[static_cast<std::size_t>(a)];
                idx[static_cast<std::size_t>(a)] = s.index[static_cast<std::size_t>(sel[static_cast<std::size_t>(a)])];
                w *= s.value_w[static_cast<std::size_t>(sel[static_cast<std::size_t>(a)])];
            }
            const Vec& nodal = values_[static_cast<std::size_t>(flatten(idx))];
            val += w * nodal;
            for (int d = 0; d < base_dim_; ++d) {
                double dw = 1.0;
                for (int a = 0; a < base_dim_; ++a) {
                    const auto& s = st[static_cast<std::size_t>(a)];
                    std::size_t j = static_cast<std::size_t>(sel[static_cast<std::size_t>(a)]);
                    dw *= (a == d) ? s.deriv_w[j] : s.value_w[j];
                }
                grad.col(d) += (dw * inv_dx) * nodal;
            }
        });
        return {val, Mat(grad * extension_jacobian(x))};
    }

    template <typename Fn>
    void for_stencil(const Vec& xin, Fn&& fn) const {
        const double inv_dx = 1.0 / spacing();
        std::array<detail::AxisStencil, 3> st;
        for (int a = 0; a < base_dim_; ++a) {
            double u = (xin[a] + rho_) * inv_dx;
            st[static_cast<std::size_t>(a)] = detail::axis_stencil(u, g_, interp_);
        }
        std::array<int, 3> pick{0, 0, 0};
        iterate_stencils(st, pick, 0, [&](const std::array<int, 3>& sel) {
            std::array<int, 3> idx{0, 0, 0};
            double w = 1.0;
            for (int a = 0; a < base_dim_; ++a) {
                const auto& s = st[static_cast<std::size_t>(a)];
                idx[static_cast<std::size_t>(a)] = s.index[static_cast<std::size_t>(sel[static_cast<std::size_t>(a)])];
                w *= s.value_w[static_cast<std::size_t>(sel[static_cast<std::size_t>(a)])];
            }
            fn(flatten(idx), w, Vec());
        });
    }

    template <typename Fn>
    void iterate_stencils(const std::array<detail::AxisStencil, 3>& st, std::array<int, 3>& pick,
                          int axis, Fn&& fn) const {
        if (axis == base_dim_) {
            fn(pick);
            return;
        }
        for (int i = 0; i < st[static_cast<std::size_t>(axis)].count; ++i) {
            pick[static_cast<std::size_t>(axis)] = i;
            iterate_stencils(st, pick, axis + 1, fn);
        }
    }

    Vec pull_into_box(const Vec& x) const {
        double n = domain_norm(x);
        if (n <= rho_) return x;
        return (rho_ / n) * x;  // constant along rays outside
    }

    // d(pullback)/dx: identity inside; outside, for N(x) the p-norm,
    // (rho/N) (I - x grad(N)^T / N) with grad(N)_k = (x_k/N)^{p-1}.
    Mat extension_jacobian(const Vec& x) const {
        double n = domain_norm(x);
        if (n <= rho_) return Mat::Identity(base_dim_, base_dim_);
        Vec grad_n(base_dim_);
        for (int a = 0; a < base_dim_; ++a) {
            double t = x[a] / n;
            grad_n[a] = std::pow(std::abs(t), kPullPower - 1.0) * (t < 0 ? -1.0 : 1.0);
        }
        return Mat((rho_ / n) *
                   (Mat::Identity(base_dim_, base_dim_) - x * grad_n.transpose() / n));
    }

    int base_dim_ = 0;
    int fiber_dim_ = 0;
    double rho_ = 0.0;
    int g_ = 0;
    Interpolation interp_ = Interpolation::Multilinear;
    double epsilon_ = 0.0;
    double delta_ = 0.0;
    std::vector<Vec> values_;
    std::vector<Mat> derivs_;
};

/// Lip(Phi): max over axis-neighbor node pairs of |Phi(z)-Phi(z')|/|z-z'|,
/// refined by the derivative field's operator norms when present.
inline double lipschitz_estimate(const Section& s,
                                 const std::function<double(const Vec&)>& fiber_norm = {}) {
    auto norm_of = [&](const Vec& v) { return fiber_norm ? fiber_norm(v) : v.norm(); };
    double lip = 0.0;
    const double dx = s.spacing();
    for (int node = 0; node < s.node_count(); ++node) {
        auto idx = s.unflatten(node);
        for (int a = 0; a < s.base_dim(); ++a) {
            if (idx[static_cast<std::size_t>(a)] + 1 >= s.nodes_per_axis()) continue;
            auto nb = idx;
            nb[static_cast<std::size_t>(a)] += 1;
            Vec diff = s.value(s.flatten(nb)) - s.value(node);
            lip = std::max(lip, norm_of(diff) / dx);
        }
    }
    if (s.has_derivative() && !fiber_norm) {
        for (int node = 0; node < s.node_count(); ++node)
            lip = std::max(lip, operator_two_norm(s.derivative(node)));
    }
    return lip;
}

}  // namespace maniforge
