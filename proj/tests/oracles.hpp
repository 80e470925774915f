// Test-only oracles: independent routes to values the library computes by
// other means. Direct convolution sums for the spectral quadratic terms and
// the closed-form Saddle2 map live here, away from the implementation paths
// they check.
#pragma once

#include "maniforge/models.hpp"

#include <complex>
#include <vector>

namespace oracles {

using maniforge::Cplx;
using maniforge::KuramotoSivashinskyModel;
using maniforge::Mode2;
using maniforge::NSETorusModel;
using maniforge::Vec;

// Galerkin_N[u u_x] by the direct convolution sum over retained modes.
inline Vec ks_quadratic_direct(const KuramotoSivashinskyModel& model, const Vec& u) {
    const int n = model.n_modes();
    std::vector<Cplx> uhat(static_cast<std::size_t>(2 * n + 1), Cplx(0, 0));
    auto at = [&](int k) -> Cplx& { return uhat[static_cast<std::size_t>(k + n)]; };
    for (int k = 1; k <= n; ++k) {
        Cplx c = KuramotoSivashinskyModel::complex_coeff(u, k);
        at(k) = c;
        at(-k) = std::conj(c);
    }
    Vec out(2 * n);
    for (int k = 1; k <= n; ++k) {
        Cplx conv(0, 0);
        for (int m = -n; m <= n; ++m) {
            int r = k - m;
            if (r < -n || r > n) continue;
            conv += at(m) * at(r);
        }
        Cplx bk = Cplx(0.0, model.wavenumber(k) * 0.5) * conv;
        out[2 * (k - 1)] = 2.0 * bk.real();
        out[2 * (k - 1) + 1] = -2.0 * bk.imag();
    }
    return out;
}

// u(alpha) . grad beta by the direct double sum over the full lattice.
inline Vec nse_advect_direct(const NSETorusModel& model, const Vec& alpha, const Vec& beta) {
    const int n = model.n_max();
    const auto& modes = model.modes();
    auto coeff = [&](const Vec& state, int kx, int ky) -> double {
        Mode2 m{kx, ky};
        if (kx == 0 && ky == 0) return 0.0;
        int idx = model.mode_index(m);
        return idx < 0 ? 0.0 : 0.5 * state[idx];  // e^{ik.z} coefficient (real, even)
    };
    Vec out(model.dim());
    for (std::size_t i = 0; i < modes.size(); ++i) {
        const Mode2& k = modes[i];
        double acc = 0.0;
        for (int mx = -n; mx <= n; ++mx) {
            for (int my = -n; my <= n; ++my) {
                if (mx == 0 && my == 0) continue;
                int nx = k.kx - mx, ny = k.ky - my;
                if (nx < -n || nx > n || ny < -n || ny > n) continue;
                if (nx == 0 && ny == 0) continue;
                double cross = static_cast<double>(mx) * ny - static_cast<double>(my) * nx;
                double m2 = static_cast<double>(mx) * mx + static_cast<double>(my) * my;
                acc += cross * (coeff(alpha, mx, my) / m2) * coeff(beta, nx, ny);
            }
        }
        out[static_cast<Eigen::Index>(i)] = 2.0 * acc;  // cosine coefficient
    }
    return out;
}

// Closed-form Saddle2 time-tau map, written out independently.
inline Vec saddle2_map(const Vec& v, double tau) {
    Vec out(2);
    out[0] = v[0] * std::exp(tau);
    out[1] = v[1] * std::exp(-tau) + v[0] * v[0] * (std::exp(2 * tau) - std::exp(-tau)) / 3.0;
    return out;
}

}  // namespace oracles
