#pragma once

#include "maniforge/common.hpp"

#include <complex>
#include <vector>

namespace maniforge {

using Cplx = std::complex<double>;

namespace detail {

inline bool is_pow2(std::size_t n) { return n != 0 && (n & (n - 1)) == 0; }

// In-place iterative radix-2 Cooley-Tukey. sign = -1 forward, +1 inverse
// (inverse is unnormalized; callers divide by n).
inline void fft_pow2(std::vector<Cplx>& a, int sign) {
    const std::size_t n = a.size();
    require(is_pow2(n), "fft: length must be a power of two");
    for (std::size_t i = 1, j = 0; i < n; ++i) {
        std::size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) std::swap(a[i], a[j]);
    }
    for (std::size_t len = 2; len <= n; len <<= 1) {
        double ang = sign * 2.0 * M_PI / static_cast<double>(len);
        Cplx wlen(std::cos(ang), std::sin(ang));
        for (std::size_t i = 0; i < n; i += len) {
            Cplx w(1.0, 0.0);
            for (std::size_t j = 0; j < len / 2; ++j) {
                Cplx u = a[i + j];
                Cplx v = a[i + j + len / 2] * w;
                a[i + j] = u + v;
                a[i + j + len / 2] = u - v;
                w *= wlen;
            }
        }
    }
}

}  // namespace detail

inline void fft_forward(std::vector<Cplx>& a) { detail::fft_pow2(a, -1); }

inline void fft_inverse(std::vector<Cplx>& a) {
    detail::fft_pow2(a, +1);
    const double scale = 1.0 / static_cast<double>(a.size());
    for (Cplx& z : a) z *= scale;
}

// 2D transforms on row-major m x m data.
inline void fft2_forward(std::vector<Cplx>& a, std::size_t m) {
    require(a.size() == m * m, "fft2: size mismatch");
    std::vector<Cplx> buf(m);
    for (std::size_t r = 0; r < m; ++r) {
        std::copy(a.begin() + static_cast<long>(r * m), a.begin() + static_cast<long>((r + 1) * m), buf.begin());
        detail::fft_pow2(buf, -1);
        std::copy(buf.begin(), buf.end(), a.begin() + static_cast<long>(r * m));
    }
    for (std::size_t c = 0; c < m; ++c) {
        for (std::size_t r = 0; r < m; ++r) buf[r] = a[r * m + c];
        detail::fft_pow2(buf, -1);
        for (std::size_t r = 0; r < m; ++r) a[r * m + c] = buf[r];
    }
}

inline void fft2_inverse(std::vector<Cplx>& a, std::size_t m) {
    require(a.size() == m * m, "fft2: size mismatch");
    std::vector<Cplx> buf(m);
    for (std::size_t r = 0; r < m; ++r) {
        std::copy(a.begin() + static_cast<long>(r * m), a.begin() + static_cast<long>((r + 1) * m), buf.begin());
        detail::fft_pow2(buf, +1);
        std::copy(buf.begin(), buf.end(), a.begin() + static_cast<long>(r * m));
    }
    for (std::size_t c = 0; c < m; ++c) {
        for (std::size_t r = 0; r < m; ++r) buf[r] = a[r * m + c];
        detail::fft_pow2(buf, +1);
        for (std::size_t r = 0; r < m; ++r) a[r * m + c] = buf[r];
    }
    const double scale = 1.0 / static_cast<double>(m * m);
    for (Cplx& z : a) z *= scale;
}

}  // namespace maniforge
