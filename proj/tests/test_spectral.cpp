#include "doctest.h"

#include "maniforge/spectral.hpp"

#include <cmath>
#include <random>

using namespace maniforge;

namespace {

Vec make_vec(std::initializer_list<double> v) {
    Vec out(static_cast<Eigen::Index>(v.size()));
    Eigen::Index i = 0;
    for (double x : v) out[i++] = x;
    return out;
}

}  // namespace

TEST_CASE("fractional power application, componentwise") {
    SpectralOperator op({1.0, 4.0}, 0.0);

    CHECK(fractional_power_apply(op, 0.0, make_vec({3, 2})) == make_vec({3, 2}));

    Vec half = fractional_power_apply(op, 0.5, make_vec({3, 2}));
    CHECK(half[0] == doctest::Approx(3.0).epsilon(1e-15));
    CHECK(half[1] == doctest::Approx(4.0).epsilon(1e-15));

    Vec one = fractional_power_apply(op, 1.0, make_vec({1, 1}));
    CHECK(one[0] == doctest::Approx(1.0));
    CHECK(one[1] == doctest::Approx(4.0));

    CHECK_THROWS_AS(fractional_power_apply(op, 1.0, Vec::Zero(3)), StructuralError);
}

TEST_CASE("graph norm") {
    SpectralOperator op({1.0, 4.0}, 0.0);
    CHECK(graph_norm(op, 0.0, make_vec({3, 4})) == doctest::Approx(5.0));
    CHECK(graph_norm(op, 0.5, make_vec({3, 2})) == doctest::Approx(5.0));
    CHECK(graph_norm(op, 0.7, Vec::Zero(2)) == 0.0);
}

TEST_CASE("projectors mask components exactly") {
    Splitting split;
    split.p_indices = {0};
    split.q_indices = {1};
    Vec v = make_vec({7, 9});
    CHECK(project(split, Projector::P, v) == make_vec({7, 0}));
    CHECK(project(split, Projector::Q, v) == make_vec({0, 9}));
    CHECK(project(split, Projector::P, Vec::Zero(2)) == Vec::Zero(2));
}

TEST_CASE("projector algebra is exact in floating point") {
    std::mt19937_64 rng(7);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 50; ++trial) {
        int n = 2 + static_cast<int>(rng() % 9);
        Splitting split;
        for (int i = 0; i < n; ++i)
            (rng() % 2 ? split.p_indices : split.q_indices).push_back(i);
        Vec v(n);
        for (int i = 0; i < n; ++i) v[i] = gauss(rng);
        Vec p = project(split, Projector::P, v);
        Vec q = project(split, Projector::Q, v);
        CHECK(project(split, Projector::P, p) == p);  // idempotent, bitwise
        CHECK(project(split, Projector::Q, q) == q);
        CHECK(Vec(p + q) == v);  // complementarity, bitwise
    }
}

TEST_CASE("norm monotonicity when the shifted spectrum is >= 1") {
    std::mt19937_64 rng(11);
    std::uniform_real_distribution<double> lam(1.0, 50.0);
    std::uniform_real_distribution<double> expo(0.0, 2.0);
    std::normal_distribution<double> gauss;
    for (int trial = 0; trial < 50; ++trial) {
        std::vector<double> eigs = {lam(rng), lam(rng), lam(rng)};
        std::sort(eigs.begin(), eigs.end());
        SpectralOperator op(eigs, 0.0);
        Vec v(3);
        for (int i = 0; i < 3; ++i) v[i] = gauss(rng);
        double a = expo(rng), b = expo(rng);
        if (a > b) std::swap(a, b);
        CHECK(graph_norm(op, a, v) <= graph_norm(op, b, v) * (1 + 1e-14));
    }
}

TEST_CASE("semigroup of fractional powers to 4 ulp per component") {
    std::mt19937_64 rng(13);
    std::uniform_real_distribution<double> lam(0.5, 80.0);
    std::normal_distribution<double> gauss;
    // Dyadic exponents keep a+b exactly representable, so the check measures
    // the operator's rounding, not the test harness's.
    auto dyadic = [&rng]() {
        return static_cast<double>(rng() % (1u << 17)) * std::ldexp(1.0, -16);
    };
    for (int trial = 0; trial < 100; ++trial) {
        std::vector<double> eigs = {lam(rng), lam(rng), lam(rng), lam(rng)};
        std::sort(eigs.begin(), eigs.end());
        SpectralOperator op(eigs, 0.25);
        Vec v(4);
        for (int i = 0; i < 4; ++i) v[i] = gauss(rng);
        double a = dyadic(), b = dyadic();
        Vec lhs = fractional_power_apply(op, a, fractional_power_apply(op, b, v));
        Vec rhs = fractional_power_apply(op, a + b, v);
        for (int i = 0; i < 4; ++i) {
            double scale = std::max(std::abs(lhs[i]), std::abs(rhs[i]));
            CHECK(std::abs(lhs[i] - rhs[i]) <=
                  4.0 * std::numeric_limits<double>::epsilon() * scale);
        }
    }
}

TEST_CASE("normalizing shift brings the spectrum to >= 1") {
    SpectralOperator op = SpectralOperator::with_normalizing_shift({-0.25, 2.0, 15.75});
    CHECK(op.shift() == doctest::Approx(1.25));
    CHECK(op.shifted_eigenvalue(0) == doctest::Approx(1.0));

    SpectralOperator pos = SpectralOperator::with_normalizing_shift({3.0, 5.0});
    CHECK(pos.shift() == 0.0);
}

TEST_CASE("operator invariants are enforced") {
    CHECK_THROWS_AS(SpectralOperator({2.0, 1.0}, 0.0), StructuralError);   // not sorted
    CHECK_THROWS_AS(SpectralOperator({-1.0, 1.0}, 0.5), StructuralError);  // lambda+zeta <= 0
    CHECK_THROWS_AS(SpectralOperator({}, 0.0), StructuralError);
}
