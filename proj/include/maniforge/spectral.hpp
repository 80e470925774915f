#pragma once

#include "maniforge/common.hpp"

#include <algorithm>
#include <cmath>
#include <vector>

namespace maniforge {

/// Diagonal sectorial operator stored by its eigenvalues, together with the
/// shift zeta that makes the spectrum of A + zeta*Id strictly positive.
/// Fractional powers and semigroup factors are exact componentwise.
class SpectralOperator {
public:
    SpectralOperator() = default;

    SpectralOperator(std::vector<double> eigenvalues, double shift)
        : eigenvalues_(std::move(eigenvalues)), shift_(shift) {
        require(!eigenvalues_.empty(), "SpectralOperator: empty eigenvalue list");
        require(shift_ >= 0.0, "SpectralOperator: shift must be nonnegative");
        for (std::size_t i = 0; i + 1 < eigenvalues_.size(); ++i)
            require(eigenvalues_[i] <= eigenvalues_[i + 1],
                    "SpectralOperator: eigenvalues must be nondecreasing");
        for (double lam : eigenvalues_)
            require(lam + shift_ > 0.0,
                    "SpectralOperator: lambda + zeta must be strictly positive");
    }

    // Shift chosen so min(lambda + zeta) >= 1; keeps |.|_alpha monotone in alpha.
    static SpectralOperator with_normalizing_shift(std::vector<double> eigenvalues) {
        require(!eigenvalues.empty(), "SpectralOperator: empty eigenvalue list");
        double lo = *std::min_element(eigenvalues.begin(), eigenvalues.end());
        double zeta = std::max(0.0, 1.0 - lo);
        return SpectralOperator(std::move(eigenvalues), zeta);
    }

    int dimension() const { return static_cast<int>(eigenvalues_.size()); }
    double shift() const { return shift_; }
    double eigenvalue(int i) const { return eigenvalues_[static_cast<std::size_t>(i)]; }
    const std::vector<double>& eigenvalues() const { return eigenvalues_; }
    double shifted_eigenvalue(int i) const {
        return eigenvalues_[static_cast<std::size_t>(i)] + shift_;
    }

private:
    std::vector<double> eigenvalues_;
    double shift_ = 0.0;
};

/// Index-set realization of the spectral projectors P, Q. Indices are
/// 0-based positions into the coefficient vector.
struct Splitting {
    std::vector<int> p_indices;
    std::vector<int> q_indices;
    double gap_width = 0.0;

    static Splitting leading(int m, int n) {
        require(m >= 0 && m <= n, "Splitting::leading: bad sizes");
        Splitting s;
        s.p_indices.reserve(static_cast<std::size_t>(m));
        s.q_indices.reserve(static_cast<std::size_t>(n - m));
        for (int i = 0; i < m; ++i) s.p_indices.push_back(i);
        for (int i = m; i < n; ++i) s.q_indices.push_back(i);
        return s;
    }

    int dimension() const {
        return static_cast<int>(p_indices.size() + q_indices.size());
    }

    void validate(int n) const {
        std::vector<char> seen(static_cast<std::size_t>(n), 0);
        auto mark = [&](const std::vector<int>& idx) {
            for (int i : idx) {
                require(i >= 0 && i < n, "Splitting: index out of range");
                require(!seen[static_cast<std::size_t>(i)], "Splitting: duplicate index");
                seen[static_cast<std::size_t>(i)] = 1;
            }
        };
        mark(p_indices);
        mark(q_indices);
        for (char c : seen) require(c, "Splitting: indices do not cover 1..n");
    }
};

enum class Projector { P, Q };

inline Vec fractional_power_apply(const SpectralOperator& op, double alpha, const Vec& v) {
    require(alpha >= 0.0, "fractional_power_apply: alpha must be nonnegative");
    require(v.size() == op.dimension(), "fractional_power_apply: dimension mismatch");
    if (alpha == 0.0) return v;  // A~^0 = Id
    Vec out(v.size());
    for (int i = 0; i < v.size(); ++i) {
        // Extended precision keeps the power-composition law tight (a few ulp).
        long double factor = powl(static_cast<long double>(op.shifted_eigenvalue(i)),
                                  static_cast<long double>(alpha));
        out[i] = static_cast<double>(factor * static_cast<long double>(v[i]));
    }
    return out;
}

inline double graph_norm(const SpectralOperator& op, double gamma, const Vec& v) {
    return fractional_power_apply(op, gamma, v).norm();
}

inline Vec project(const Splitting& split, Projector which, const Vec& v) {
    Vec out = Vec::Zero(v.size());
    const std::vector<int>& idx = (which == Projector::P) ? split.p_indices : split.q_indices;
    for (int i : idx) {
        require(i >= 0 && i < v.size(), "project: index out of range");
        out[i] = v[i];
    }
    return out;
}

}  // namespace maniforge
