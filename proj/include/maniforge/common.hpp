#pragma once

#include <Eigen/Dense>

#include <cmath>
#include <cstdint>
#include <functional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace maniforge {

using Vec = Eigen::VectorXd;
using Mat = Eigen::MatrixXd;
using CVec = Eigen::VectorXcd;
using CMat = Eigen::MatrixXcd;

inline constexpr const char* kArtifactVersion = "0.1.0";

// Structural misuse: wrong dimensions, empty inputs, invalid arguments.
struct StructuralError : std::runtime_error {
    explicit StructuralError(const std::string& what) : std::runtime_error(what) {}
};

// Config-file problems: unknown keys, bad types, out-of-range values.
struct ConfigError : std::runtime_error {
    explicit ConfigError(const std::string& what) : std::runtime_error(what) {}
};

// Numerical failure with a diagnosis the caller may want to report:
// blow-up, singular Jacobian, preimage escape, non-convergence.
struct NumericalError : std::runtime_error {
    explicit NumericalError(const std::string& what) : std::runtime_error(what) {}
};

inline bool all_finite(const Vec& v) {
    for (Eigen::Index i = 0; i < v.size(); ++i)
        if (!std::isfinite(v[i])) return false;
    return true;
}

inline void require(bool cond, const std::string& msg) {
    if (!cond) throw StructuralError(msg);
}

// Deterministic generator; every sampling site seeds its own instance so
// results do not depend on call order.
inline std::mt19937_64 make_rng(std::uint64_t seed) { return std::mt19937_64(seed); }

inline Vec random_unit_vector(std::mt19937_64& rng, int dim) {
    std::normal_distribution<double> gauss(0.0, 1.0);
    Vec v(dim);
    do {
        for (int i = 0; i < dim; ++i) v[i] = gauss(rng);
    } while (v.norm() < 1e-12);
    return v / v.norm();
}

// Largest singular value by power iteration on A^T A; 50 iterations or
// 1e-12 relative stagnation, whichever comes first.
inline double operator_two_norm(const Mat& a, int max_iter = 50, double stall = 1e-12) {
    if (a.size() == 0) return 0.0;
    std::mt19937_64 rng = make_rng(0x5eed5eedULL + static_cast<std::uint64_t>(a.rows()) * 131 +
                                   static_cast<std::uint64_t>(a.cols()));
    Vec v = random_unit_vector(rng, static_cast<int>(a.cols()));
    double sigma = 0.0;
    for (int it = 0; it < max_iter; ++it) {
        Vec w = a.transpose() * (a * v);
        double nw = w.norm();
        if (nw == 0.0) return 0.0;
        v = w / nw;
        double next = std::sqrt(nw);
        if (it > 0 && std::abs(next - sigma) <= stall * std::max(1.0, next)) {
            sigma = next;
            break;
        }
        sigma = next;
    }
    return sigma;
}

// Materialize a linear operator from its action on basis vectors.
inline Mat materialize(const std::function<Vec(const Vec&)>& apply, int domain_dim) {
    require(domain_dim > 0, "materialize: empty domain");
    Vec e = Vec::Zero(domain_dim);
    e[0] = 1.0;
    Vec first = apply(e);
    Mat a(first.size(), domain_dim);
    a.col(0) = first;
    for (int j = 1; j < domain_dim; ++j) {
        e[j - 1] = 0.0;
        e[j] = 1.0;
        a.col(j) = apply(e);
    }
    return a;
}

// Least-squares slope of y against x.
inline double fit_slope(const std::vector<double>& x, const std::vector<double>& y) {
    require(x.size() == y.size() && x.size() >= 2, "fit_slope: need at least two points");
    double n = static_cast<double>(x.size());
    double sx = 0, sy = 0, sxx = 0, sxy = 0;
    for (std::size_t i = 0; i < x.size(); ++i) {
        sx += x[i];
        sy += y[i];
        sxx += x[i] * x[i];
        sxy += x[i] * y[i];
    }
    double denom = n * sxx - sx * sx;
    require(std::abs(denom) > 0, "fit_slope: degenerate abscissae");
    return (n * sxy - sx * sy) / denom;
}

}  // namespace maniforge
