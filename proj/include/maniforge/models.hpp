#pragma once

#include "maniforge/common.hpp"
#include "maniforge/fft.hpp"
#include "maniforge/spectral.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <memory>
#include <string>
#include <vector>

namespace maniforge {

enum class ModelKind { Saddle2, AppendixPolar, KuramotoSivashinsky, NSETorus };

inline std::string to_string(ModelKind k) {
    switch (k) {
        case ModelKind::Saddle2: return "Saddle2";
        case ModelKind::AppendixPolar: return "AppendixPolar";
        case ModelKind::KuramotoSivashinsky: return "KuramotoSivashinsky";
        case ModelKind::NSETorus: return "NSETorus";
    }
    return "?";
}

inline ModelKind model_kind_from_string(const std::string& s) {
    if (s == "Saddle2") return ModelKind::Saddle2;
    if (s == "AppendixPolar") return ModelKind::AppendixPolar;
    if (s == "KuramotoSivashinsky") return ModelKind::KuramotoSivashinsky;
    if (s == "NSETorus") return ModelKind::NSETorus;
    throw StructuralError("unknown model name: " + s);
}

struct ModelSpec {
    ModelKind kind = ModelKind::Saddle2;
    std::map<std::string, double> parameters;
    double tau = 1.0;

    double param(const std::string& key, double fallback) const {
        auto it = parameters.find(key);
        return it == parameters.end() ? fallback : it->second;
    }
    bool has_param(const std::string& key) const { return parameters.count(key) > 0; }
};

/// 2D integer wavevector of the torus lattice.
struct Mode2 {
    int kx = 0;
    int ky = 0;
    double k2() const { return static_cast<double>(kx) * kx + static_cast<double>(ky) * ky; }
};

// ---------------------------------------------------------------------------
// Model: a concrete evolution equation du/dt + Au + R(u) = 0 in coefficient
// coordinates. The linear part is diagonal (symbol per coordinate); the
// nonlinearity and its directional derivative are supplied as virtuals.
// R(u) = quadratic(u) - forcing, so rhs(u) = -symbol.*u - quadratic(u) + forcing.
// ---------------------------------------------------------------------------
class Model {
public:
    virtual ~Model() = default;

    ModelKind kind() const { return kind_; }
    std::string name() const { return to_string(kind_); }
    int dim() const { return static_cast<int>(symbol_.size()); }
    double gamma() const { return gamma_; }
    double viscosity() const { return nu_; }
    const Vec& symbol() const { return symbol_; }  // diagonal of A, coordinate order
    double zeta() const { return zeta_; }
    const Vec& forcing() const { return forcing_; }

    /// Galerkin-projected quadratic term B(u,u); zero for linear models.
    virtual Vec quadratic(const Vec& u) const = 0;
    /// Directional derivative DB(u)w = B(u,w) + B(w,u).
    virtual Vec quadratic_tangent(const Vec& u, const Vec& w) const = 0;

    Vec rhs(const Vec& v) const {
        check_state(v);
        return forcing_ - nu_ * symbol_.cwiseProduct(v) - quadratic(v);
    }
    Vec rhs_tangent(const Vec& v, const Vec& w) const {
        check_state(v);
        check_state(w);
        return -nu_ * symbol_.cwiseProduct(w) - quadratic_tangent(v, w);
    }

    double gamma_norm(const Vec& v) const {
        check_state(v);
        if (gamma_ == 0.0) return v.norm();
        return gamma_weight_.cwiseProduct(v).norm();
    }

    /// Per-coordinate weights (nu lambda_i + zeta)^gamma of the |.|_gamma norm.
    const Vec& gamma_weights() const { return gamma_weight_; }

    /// Spectrum of nu*A sorted ascending, with the normalizing shift.
    SpectralOperator sorted_operator() const {
        std::vector<double> eigs(symbol_.data(), symbol_.data() + symbol_.size());
        for (double& e : eigs) e *= nu_;
        std::sort(eigs.begin(), eigs.end());
        return SpectralOperator(std::move(eigs), zeta_);
    }

protected:
    void init(ModelKind kind, Vec symbol, double nu, Vec forcing, double gamma) {
        kind_ = kind;
        symbol_ = std::move(symbol);
        nu_ = nu;
        forcing_ = std::move(forcing);
        gamma_ = gamma;
        double lo = (nu_ * symbol_).minCoeff();
        zeta_ = std::max(0.0, 1.0 - lo);
        gamma_weight_.resize(symbol_.size());
        for (int i = 0; i < symbol_.size(); ++i)
            gamma_weight_[i] = std::pow(nu_ * symbol_[i] + zeta_, gamma_);
    }
    void check_state(const Vec& v) const {
        require(v.size() == symbol_.size(), name() + ": state dimension mismatch");
    }

private:
    ModelKind kind_ = ModelKind::Saddle2;
    Vec symbol_;
    Vec forcing_;
    Vec gamma_weight_;
    double nu_ = 1.0;
    double gamma_ = 0.0;
    double zeta_ = 0.0;
};

// ---------------------------------------------------------------------------
// Saddle2: xdot = x, ydot = -y + x^2. A = diag(-1, 1), B(v) = (0, -x^2).
// The planar saddle whose unstable manifold is exactly y = x^2/3.
// ---------------------------------------------------------------------------
class Saddle2Model final : public Model {
public:
    explicit Saddle2Model(double gamma) {
        Vec sym(2);
        sym << -1.0, 1.0;
        init(ModelKind::Saddle2, sym, 1.0, Vec::Zero(2), gamma);
    }
    Vec quadratic(const Vec& u) const override {
        Vec b = Vec::Zero(2);
        b[1] = -u[0] * u[0];
        return b;
    }
    Vec quadratic_tangent(const Vec& u, const Vec& w) const override {
        Vec b = Vec::Zero(2);
        b[1] = -2.0 * u[0] * w[0];
        return b;
    }
};

// ---------------------------------------------------------------------------
// AppendixPolar: rdot = (r-1)(r sin^2(theta/2) - 1) + h r sin^2(theta/2),
// thetadot = sin(theta), integrated in Cartesian coordinates to avoid the
// polar singularity. The whole field counts as the nonlinearity (A = 0).
// ---------------------------------------------------------------------------
class AppendixPolarModel final : public Model {
public:
    AppendixPolarModel(double h, double gamma) : h_(h) {
        require(h >= 0.0, "AppendixPolar: h must be nonnegative");
        init(ModelKind::AppendixPolar, Vec::Zero(2), 1.0, Vec::Zero(2), gamma);
    }

    double h() const { return h_; }

    // rhs = -quadratic, so quadratic returns minus the Cartesian vector field.
    Vec quadratic(const Vec& u) const override {
        double x = u[0], y = u[1];
        double r = std::hypot(x, y);
        require(r > 1e-12, "AppendixPolar: state at the coordinate singularity r=0");
        double s = 0.5 * (r - x);  // r sin^2(theta/2)
        double rdot = (r - 1.0) * (s - 1.0) + h_ * s;
        Vec b(2);
        b[0] = -((x * rdot - y * y) / r);
        b[1] = -((y * rdot + x * y) / r);
        return b;
    }

    Vec quadratic_tangent(const Vec& u, const Vec& w) const override {
        double x = u[0], y = u[1];
        double r = std::hypot(x, y);
        require(r > 1e-12, "AppendixPolar: state at the coordinate singularity r=0");
        double rx = x / r, ry = y / r;
        double s = 0.5 * (r - x);
        double sx = 0.5 * (rx - 1.0), sy = 0.5 * ry;
        double rdot = (r - 1.0) * (s - 1.0) + h_ * s;
        double rdot_x = rx * (s - 1.0) + (r - 1.0 + h_) * sx;
        double rdot_y = ry * (s - 1.0) + (r - 1.0 + h_) * sy;
        double f1 = x * rdot - y * y, f2 = y * rdot + x * y;
        double j11 = (rdot + x * rdot_x) / r - f1 * x / (r * r * r);
        double j12 = (x * rdot_y - 2.0 * y) / r - f1 * y / (r * r * r);
        double j21 = (y * rdot_x + y) / r - f2 * x / (r * r * r);
        double j22 = (rdot + y * rdot_y + x) / r - f2 * y / (r * r * r);
        Vec b(2);
        b[0] = -(j11 * w[0] + j12 * w[1]);
        b[1] = -(j21 * w[0] + j22 * w[1]);
        return b;
    }

private:
    double h_;
};

inline void cartesian_to_polar(const Vec& v, double& r, double& theta) {
    r = std::hypot(v[0], v[1]);
    theta = std::atan2(v[1], v[0]);
}

inline Vec polar_to_cartesian(double r, double theta) {
    Vec v(2);
    v[0] = r * std::cos(theta);
    v[1] = r * std::sin(theta);
    return v;
}

// ---------------------------------------------------------------------------
// Kuramoto-Sivashinsky, u_t + u_xxxx + u_xx + u u_x = 0 on [0, L] periodic,
// mean-zero Fourier-Galerkin with N modes. Coordinates interleave
// (a_1, b_1, ..., a_N, b_N) with u = sum a_k cos(q_k x) + b_k sin(q_k x),
// q_k = 2 pi k / L. Linear symbol q^4 - q^2. Quadratic term evaluated
// pseudospectrally on a padded grid (exact Galerkin product).
// ---------------------------------------------------------------------------
class KuramotoSivashinskyModel final : public Model {
public:
    KuramotoSivashinskyModel(int n_modes, double length, double gamma)
        : n_modes_(n_modes), length_(length) {
        require(n_modes >= 1, "KS: need at least one mode");
        require(length > 0.0, "KS: domain length must be positive");
        grid_ = 1;
        while (grid_ < 3 * n_modes + 1) grid_ <<= 1;
        Vec sym(2 * n_modes);
        for (int k = 1; k <= n_modes; ++k) {
            double q = 2.0 * M_PI * k / length_;
            double lam = q * q * q * q - q * q;
            sym[2 * (k - 1)] = lam;
            sym[2 * (k - 1) + 1] = lam;
        }
        init(ModelKind::KuramotoSivashinsky, sym, 1.0, Vec::Zero(2 * n_modes), gamma);
    }

    int n_modes() const { return n_modes_; }
    double length() const { return length_; }
    double wavenumber(int k) const { return 2.0 * M_PI * k / length_; }

    // Galerkin_N[u u_x] = Galerkin_N[(u^2)_x / 2]
    Vec quadratic(const Vec& u) const override {
        check_state(u);
        std::vector<Cplx> grid_u = synthesize(u);
        for (auto& z : grid_u) z *= z;
        fft_forward(grid_u);
        const double scale = 1.0 / static_cast<double>(grid_);
        Vec out(dim());
        for (int k = 1; k <= n_modes_; ++k) {
            Cplx uhat2 = grid_u[static_cast<std::size_t>(k)] * scale;
            Cplx bk = Cplx(0.0, wavenumber(k) * 0.5) * uhat2;  // i q/2 (u^2)^
            out[2 * (k - 1)] = 2.0 * bk.real();
            out[2 * (k - 1) + 1] = -2.0 * bk.imag();
        }
        return out;
    }

    // DB(u)w = Galerkin_N[(u w)_x]
    Vec quadratic_tangent(const Vec& u, const Vec& w) const override {
        check_state(u);
        check_state(w);
        std::vector<Cplx> gu = synthesize(u);
        std::vector<Cplx> gw = synthesize(w);
        for (std::size_t j = 0; j < gu.size(); ++j) gu[j] *= gw[j];
        fft_forward(gu);
        const double scale = 1.0 / static_cast<double>(grid_);
        Vec out(dim());
        for (int k = 1; k <= n_modes_; ++k) {
            Cplx prod = gu[static_cast<std::size_t>(k)] * scale;
            Cplx bk = Cplx(0.0, wavenumber(k)) * prod;  // i q (u w)^
            out[2 * (k - 1)] = 2.0 * bk.real();
            out[2 * (k - 1) + 1] = -2.0 * bk.imag();
        }
        return out;
    }

    // Complex Fourier coefficient of mode k >= 1 from the real coordinates.
    static Cplx complex_coeff(const Vec& u, int k) {
        return 0.5 * Cplx(u[2 * (k - 1)], -u[2 * (k - 1) + 1]);
    }

private:
    std::vector<Cplx> synthesize(const Vec& u) const {
        std::vector<Cplx> spec(static_cast<std::size_t>(grid_), Cplx(0.0, 0.0));
        for (int k = 1; k <= n_modes_; ++k) {
            Cplx c = complex_coeff(u, k);
            spec[static_cast<std::size_t>(k)] = c;
            spec[static_cast<std::size_t>(grid_ - k)] = std::conj(c);
        }
        fft_inverse(spec);
        for (auto& z : spec) z *= static_cast<double>(grid_);  // unnormalized synthesis
        return spec;
    }

    int n_modes_;
    double length_;
    int grid_;
};

// ---------------------------------------------------------------------------
// NSETorus: vorticity form of 2D Navier-Stokes on [0, 2 pi]^2,
//   omega_t + u . grad omega = nu Lap omega + f,
// restricted to the point-symmetric subspace omega(-z) = omega(z), i.e. a
// pure cosine lattice with real coefficients. That subspace is invariant
// under the dynamics and collapses the translation degeneracy of the
// Kolmogorov equilibrium, so its leading instability is a simple eigenvalue.
// Modes are enumerated over the half-lattice sorted by (|k|^2, kx, ky);
// the Stokes symbol is |k|^2 (ascending by construction).
// ---------------------------------------------------------------------------
class NSETorusModel final : public Model {
public:
    /// forcing_coeffs: per-mode cosine coefficients of the vorticity forcing,
    /// looked up by wavevector.
    NSETorusModel(int n_max, double nu, const std::vector<std::pair<Mode2, double>>& forcing_coeffs,
                  double gamma)
        : n_max_(n_max) {
        require(n_max >= 1, "NSETorus: need at least one mode");
        require(nu > 0.0, "NSETorus: viscosity must be positive");
        grid_ = 1;
        while (grid_ < 3 * n_max + 1) grid_ <<= 1;

        for (int kx = 0; kx <= n_max; ++kx) {
            int ky_lo = (kx == 0) ? 1 : -n_max;
            for (int ky = ky_lo; ky <= n_max; ++ky) modes_.push_back({kx, ky});
        }
        std::sort(modes_.begin(), modes_.end(), [](const Mode2& a, const Mode2& b) {
            if (a.k2() != b.k2()) return a.k2() < b.k2();
            if (a.kx != b.kx) return a.kx < b.kx;
            return a.ky < b.ky;
        });

        int n = static_cast<int>(modes_.size());
        Vec sym(n);
        for (int i = 0; i < n; ++i) sym[i] = modes_[static_cast<std::size_t>(i)].k2();
        Vec f = Vec::Zero(n);
        for (const auto& [mode, coeff] : forcing_coeffs) {
            int idx = mode_index(mode);
            require(idx >= 0, "NSETorus: forcing mode outside the retained lattice");
            f[idx] = coeff;
        }
        init(ModelKind::NSETorus, sym, nu, f, gamma);
    }

    int n_max() const { return n_max_; }
    const std::vector<Mode2>& modes() const { return modes_; }

    int mode_index(const Mode2& m) const {
        // Map to the half-lattice representative (k and -k carry the same coeff).
        Mode2 r = m;
        if (r.kx < 0 || (r.kx == 0 && r.ky < 0)) {
            r.kx = -r.kx;
            r.ky = -r.ky;
        }
        for (std::size_t i = 0; i < modes_.size(); ++i)
            if (modes_[i].kx == r.kx && modes_[i].ky == r.ky) return static_cast<int>(i);
        return -1;
    }

    // u . grad omega; bilinear in (stream source alpha, advected field beta).
    // The two real velocity components share one complex transform, and so do
    // the two vorticity gradients, so an evaluation costs three FFTs.
    Vec advect(const Vec& alpha, const Vec& beta) const {
        check_state(alpha);
        check_state(beta);
        const std::size_t m = static_cast<std::size_t>(grid_);
        // packed spectra: U = u_x^ + i u_y^, W = (d_x omega)^ + i (d_y omega)^
        std::vector<Cplx> up(m * m, Cplx(0, 0)), wp(m * m, Cplx(0, 0));
        const Cplx iunit(0.0, 1.0);
        for (std::size_t i = 0; i < modes_.size(); ++i) {
            const Mode2& k = modes_[i];
            double k2 = k.k2();
            Cplx a = 0.5 * alpha[static_cast<Eigen::Index>(i)] / k2;  // psi^ at +k
            Cplx b = 0.5 * beta[static_cast<Eigen::Index>(i)];        // omega^ at +k
            // u = grad^perp psi = (d_y psi, -d_x psi)
            Cplx ux = iunit * static_cast<double>(k.ky) * a;
            Cplx uy = -iunit * static_cast<double>(k.kx) * a;
            Cplx wx = iunit * static_cast<double>(k.kx) * b;
            Cplx wy = iunit * static_cast<double>(k.ky) * b;
            put_packed(up, k, ux + iunit * uy, std::conj(ux) + iunit * std::conj(uy));
            put_packed(wp, k, wx + iunit * wy, std::conj(wx) + iunit * std::conj(wy));
        }
        fft2_inverse(up, m);
        fft2_inverse(wp, m);
        const double unnorm = static_cast<double>(m * m);
        std::vector<Cplx> prod(m * m);
        for (std::size_t j = 0; j < prod.size(); ++j) {
            double u1 = up[j].real() * unnorm, u2 = up[j].imag() * unnorm;
            double w1 = wp[j].real() * unnorm, w2 = wp[j].imag() * unnorm;
            prod[j] = Cplx(u1 * w1 + u2 * w2, 0.0);
        }
        fft2_forward(prod, m);
        const double scale = 1.0 / unnorm;
        Vec out(dim());
        for (std::size_t i = 0; i < modes_.size(); ++i) {
            Cplx c = fetch(prod, modes_[i]) * scale;
            out[static_cast<Eigen::Index>(i)] = 2.0 * c.real();  // cosine projection
        }
        return out;
    }

    Vec quadratic(const Vec& u) const override { return advect(u, u); }

    Vec quadratic_tangent(const Vec& u, const Vec& w) const override {
        return advect(u, w) + advect(w, u);
    }

private:
    void put_packed(std::vector<Cplx>& spec, const Mode2& k, Cplx at_plus, Cplx at_minus) const {
        const int m = grid_;
        auto wrap = [m](int k1) { return (k1 % m + m) % m; };
        spec[static_cast<std::size_t>(wrap(k.ky)) * static_cast<std::size_t>(m) +
             static_cast<std::size_t>(wrap(k.kx))] = at_plus;
        spec[static_cast<std::size_t>(wrap(-k.ky)) * static_cast<std::size_t>(m) +
             static_cast<std::size_t>(wrap(-k.kx))] = at_minus;
    }

    Cplx fetch(const std::vector<Cplx>& spec, const Mode2& k) const {
        const int m = grid_;
        auto wrap = [m](int k1) { return (k1 % m + m) % m; };
        return spec[static_cast<std::size_t>(wrap(k.ky)) * static_cast<std::size_t>(m) +
                    static_cast<std::size_t>(wrap(k.kx))];
    }

    int n_max_;
    int grid_ = 0;
    std::vector<Mode2> modes_;
};

// ---------------------------------------------------------------------------
// build_model: ModelSpec -> concrete model.
// ---------------------------------------------------------------------------
inline std::shared_ptr<const Model> build_model(const ModelSpec& spec) {
    switch (spec.kind) {
        case ModelKind::Saddle2:
            return std::make_shared<Saddle2Model>(spec.param("gamma", 0.0));
        case ModelKind::AppendixPolar:
            return std::make_shared<AppendixPolarModel>(spec.param("h", 0.0),
                                                        spec.param("gamma", 0.0));
        case ModelKind::KuramotoSivashinsky: {
            require(spec.has_param("modes"), "KS: parameter 'modes' is required");
            require(spec.has_param("L"), "KS: parameter 'L' is required");
            return std::make_shared<KuramotoSivashinskyModel>(
                static_cast<int>(spec.param("modes", 0)), spec.param("L", 0.0),
                spec.param("gamma", 0.25));
        }
        case ModelKind::NSETorus: {
            require(spec.has_param("modes"), "NSETorus: parameter 'modes' is required");
            require(spec.has_param("nu"), "NSETorus: parameter 'nu' is required");
            std::vector<std::pair<Mode2, double>> forcing;
            double amp = spec.param("forcing_amplitude", 0.0);
            if (amp != 0.0) {
                Mode2 kf{static_cast<int>(spec.param("forcing_kx", 0.0)),
                         static_cast<int>(spec.param("forcing_ky", 2.0))};
                forcing.emplace_back(kf, amp);
            }
            double amp2 = spec.param("forcing2_amplitude", 0.0);
            if (amp2 != 0.0) {
                Mode2 kf2{static_cast<int>(spec.param("forcing2_kx", 1.0)),
                          static_cast<int>(spec.param("forcing2_ky", 1.0))};
                forcing.emplace_back(kf2, amp2);
            }
            return std::make_shared<NSETorusModel>(static_cast<int>(spec.param("modes", 0)),
                                                   spec.param("nu", 0.0), forcing,
                                                   spec.param("gamma", 0.5));
        }
    }
    throw StructuralError("build_model: unknown model kind");
}

}  // namespace maniforge
