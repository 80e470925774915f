#include "doctest.h"

#include "maniforge/hyperbolicity.hpp"
#include "maniforge/maps.hpp"
#include "maniforge/models.hpp"
#include "maniforge/schemes.hpp"

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

ModelSpec spec_of(ModelKind kind, std::map<std::string, double> params, double tau) {
    ModelSpec s;
    s.kind = kind;
    s.parameters = std::move(params);
    s.tau = tau;
    return s;
}

TimeTauMap matrix_map(const Mat& m, double tau) {
    TimeTauMap map;
    map.dim = static_cast<int>(m.rows());
    map.tau = tau;
    map.apply = [m](const Vec& v) { return Vec(m * v); };
    map.tangent = [m](const Vec&, const Vec& w) { return Vec(m * w); };
    map.norm = [](const Vec& v) { return v.norm(); };
    map.gamma_weight = Vec::Ones(map.dim);
    return map;
}

// Exact chart of the Saddle2 unstable manifold y = x^2/3.
ManifoldChart saddle2_chart() {
    ManifoldChart c;
    c.base_dim = 1;
    c.fiber_dim = 1;
    c.value = [](const Vec& x) { return Vec(Vec::Constant(1, x[0] * x[0] / 3.0)); };
    c.derivative = [](const Vec& x) { return Mat(Mat::Constant(1, 1, 2.0 * x[0] / 3.0)); };
    return c;
}

}  // namespace

TEST_CASE("linearize Saddle2 at the origin: diag(2, 1/2)") {
    auto model = build_model(spec_of(ModelKind::Saddle2, {}, std::log(2.0)));
    TimeStepScheme scheme = TimeStepScheme::exact(std::log(2.0));
    LinearizationReport rep = linearize_map(*model, scheme, Vec::Zero(2));
    CHECK(rep.matrix(0, 0) == doctest::Approx(2.0));
    CHECK(rep.matrix(1, 1) == doctest::Approx(0.5));
    CHECK(rep.hyperbolic);
    CHECK(rep.unstable_count == 1);
    std::vector<double> mods = {std::abs(rep.eigenvalues[0]), std::abs(rep.eigenvalues[1])};
    std::sort(mods.begin(), mods.end());
    CHECK(mods[0] == doctest::Approx(0.5));
    CHECK(mods[1] == doctest::Approx(2.0));
}

TEST_CASE("AppendixPolar generator Jacobians at the two stationary points") {
    auto model = build_model(spec_of(ModelKind::AppendixPolar, {{"h", 0.0}}, 0.25));

    LinearizationReport at0 = linearize_generator(*model, polar_to_cartesian(1.0, 0.0));
    std::vector<double> re = {at0.eigenvalues[0].real(), at0.eigenvalues[1].real()};
    std::sort(re.begin(), re.end());
    CHECK(re[0] == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(re[1] == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(at0.hyperbolic);

    LinearizationReport atpi = linearize_generator(*model, polar_to_cartesian(1.0, M_PI));
    re = {atpi.eigenvalues[0].real(), atpi.eigenvalues[1].real()};
    std::sort(re.begin(), re.end());
    CHECK(re[0] == doctest::Approx(-1.0).epsilon(1e-9));
    CHECK(std::abs(re[1]) < 1e-9);
    CHECK_FALSE(atpi.hyperbolic);
}

TEST_CASE("spectral_split on diagonal and conjugated matrices") {
    SUBCASE("diag(2, 0.5): P = span e1") {
        Mat m = Mat::Zero(2, 2);
        m(0, 0) = 2.0;
        m(1, 1) = 0.5;
        LinearizationReport rep = detail::analyze_matrix(m, true, 1.0, 1e-9);
        SpectralSplitResult split = spectral_split(rep, SplitMode::MapUnitCircle);
        CHECK(split.unstable_dim == 1);
        CHECK(split.projector_defect <= 1e-10);
        CHECK(std::abs(split.frame.basis()(0, 0)) == doctest::Approx(1.0));
        CHECK(std::abs(split.frame.basis()(1, 0)) < 1e-12);
    }
    SUBCASE("projector algebra and dimension under random orthogonal conjugation") {
        std::mt19937_64 rng(31);
        std::normal_distribution<double> gauss;
        Mat d = Mat::Zero(4, 4);
        d.diagonal() << 3.0, 1.7, 0.4, 0.1;
        for (int trial = 0; trial < 10; ++trial) {
            Mat a(4, 4);
            for (int i = 0; i < 4; ++i)
                for (int j = 0; j < 4; ++j) a(i, j) = gauss(rng);
            Eigen::HouseholderQR<Mat> qr(a);
            Mat q = qr.householderQ();
            Mat m = q * d * q.transpose();
            LinearizationReport rep = detail::analyze_matrix(m, true, 1.0, 1e-9);
            SpectralSplitResult split = spectral_split(rep, SplitMode::MapUnitCircle);
            CHECK(split.unstable_dim == 2);  // conjugation-invariant
            CHECK(split.projector_defect <= 1e-10);
            // Self-adjoint case: projectors orthogonal.
            CHECK(operator_two_norm(Mat(split.projector_p - split.projector_p.transpose())) <=
                  1e-12);
        }
    }
}

TEST_CASE("dichotomy constants on diagonal generators") {
    SUBCASE("C = diag(-1, 1), P = unstable: a = e^{-tau}") {
        // Vector-field Jacobian J = diag(1, -1): e1 expanding.
        Mat j = Mat::Zero(2, 2);
        j(0, 0) = 1.0;
        j(1, 1) = -1.0;
        LinearizationReport rep = detail::analyze_matrix(j, false, 0.0, 1e-9);
        SpectralSplitResult split = spectral_split(rep, SplitMode::GeneratorImagAxis);
        double tau = 0.8;
        DichotomyReport d = dichotomy_constants(rep, split, tau);
        CHECK(d.contraction_achieved);
        CHECK(d.a == doctest::Approx(std::exp(-tau)).epsilon(1e-8));
        CHECK(d.tau == doctest::Approx(tau));
    }
    SUBCASE("slow diagonal rates contract at the first tau") {
        Mat j = Mat::Zero(2, 2);
        j(0, 0) = 0.1;
        j(1, 1) = -0.1;
        LinearizationReport rep = detail::analyze_matrix(j, false, 0.0, 1e-9);
        SpectralSplitResult split = spectral_split(rep, SplitMode::GeneratorImagAxis);
        DichotomyReport d = dichotomy_constants(rep, split, 0.5);
        CHECK(d.contraction_achieved);
        CHECK(d.a == doctest::Approx(std::exp(-0.1 * d.tau)).epsilon(1e-6));
        CHECK(d.a < 1.0);
    }
    SUBCASE("transient growth is beaten by doubling tau") {
        // Non-normal stable block: |e^{J t}| > 1 until the decay wins.
        Mat j = Mat::Zero(3, 3);
        j(0, 0) = 0.1;
        j(1, 1) = -0.1;
        j(1, 2) = 2.0;
        j(2, 2) = -0.1;
        LinearizationReport rep = detail::analyze_matrix(j, false, 0.0, 1e-9);
        SpectralSplitResult split = spectral_split(rep, SplitMode::GeneratorImagAxis);
        DichotomyReport d = dichotomy_constants(rep, split, 0.5);
        CHECK(d.contraction_achieved);
        CHECK(d.doublings > 0);
        CHECK(d.a < 1.0);
    }
    SUBCASE("orthogonal conjugation leaves a unchanged") {
        Mat j = Mat::Zero(3, 3);
        j.diagonal() << 0.7, -0.5, -2.0;
        std::mt19937_64 rng(37);
        std::normal_distribution<double> gauss;
        Mat a(3, 3);
        for (int i = 0; i < 3; ++i)
            for (int k = 0; k < 3; ++k) a(i, k) = gauss(rng);
        Mat q = Eigen::HouseholderQR<Mat>(a).householderQ();
        Mat jc = q * j * q.transpose();

        LinearizationReport r1 = detail::analyze_matrix(j, false, 0.0, 1e-9);
        LinearizationReport r2 = detail::analyze_matrix(jc, false, 0.0, 1e-9);
        SpectralSplitResult s1 = spectral_split(r1, SplitMode::GeneratorImagAxis);
        SpectralSplitResult s2 = spectral_split(r2, SplitMode::GeneratorImagAxis);
        DichotomyReport d1 = dichotomy_constants(r1, s1, 1.0);
        DichotomyReport d2 = dichotomy_constants(r2, s2, 1.0);
        CHECK(d1.a == doctest::Approx(d2.a).epsilon(1e-10));
    }
}

TEST_CASE("Lyapunov-type numbers") {
    SUBCASE("Saddle2 at the origin: nu = e^{-1}, theta = -1") {
        auto model = build_model(spec_of(ModelKind::Saddle2, {}, std::log(2.0)));
        TimeStepScheme scheme = TimeStepScheme::exact(std::log(2.0));
        TimeTauMap map = make_map(model, scheme);
        for (double horizon : {std::log(2.0), 4 * std::log(2.0), 10 * std::log(2.0)}) {
            LyapunovNumbers ln =
                lyapunov_type_numbers(map, saddle2_chart(), Vec::Zero(1), horizon);
            CHECK(ln.nu == doctest::Approx(std::exp(-1.0)).epsilon(1e-10));
            CHECK(ln.theta_defined);
            CHECK(ln.theta == doctest::Approx(-1.0).epsilon(1e-10));
        }
    }
    SUBCASE("constant diagonal cocycle diag(mu_p, mu_q)") {
        double tau = 0.5, mu_p = 3.0, mu_q = 0.25;
        Mat m = Mat::Zero(2, 2);
        m(0, 0) = mu_p;
        m(1, 1) = mu_q;
        TimeTauMap map = matrix_map(m, tau);
        ManifoldChart flat;
        flat.base_dim = 1;
        flat.fiber_dim = 1;
        flat.value = [](const Vec&) { return Vec(Vec::Zero(1)); };
        flat.derivative = [](const Vec&) { return Mat(Mat::Zero(1, 1)); };
        LyapunovNumbers a = lyapunov_type_numbers(map, flat, Vec::Zero(1), 2.0);
        LyapunovNumbers b = lyapunov_type_numbers(map, flat, Vec::Zero(1), 6.0);
        CHECK(a.nu == doctest::Approx(std::pow(mu_q, 1.0 / tau)).epsilon(1e-10));
        CHECK(a.nu == doctest::Approx(b.nu).epsilon(1e-10));  // T-independent
        CHECK(a.theta == doctest::Approx(std::log(1.0 / mu_p) / (-std::log(mu_q))).epsilon(1e-10));
        CHECK(a.theta == doctest::Approx(b.theta).epsilon(1e-10));
    }
    SUBCASE("nu >= 1 leaves theta undefined") {
        Mat m = Mat::Zero(2, 2);
        m(0, 0) = 2.0;
        m(1, 1) = 1.5;  // no normal contraction
        TimeTauMap map = matrix_map(m, 1.0);
        ManifoldChart flat;
        flat.base_dim = 1;
        flat.fiber_dim = 1;
        flat.value = [](const Vec&) { return Vec(Vec::Zero(1)); };
        flat.derivative = [](const Vec&) { return Mat(Mat::Zero(1, 1)); };
        LyapunovNumbers ln = lyapunov_type_numbers(map, flat, Vec::Zero(1), 3.0);
        CHECK_FALSE(ln.theta_defined);
    }
}

TEST_CASE("check_conditions on Saddle2 along y = x^2/3") {
    auto model = build_model(spec_of(ModelKind::Saddle2, {}, std::log(2.0)));
    TimeStepScheme scheme = TimeStepScheme::exact(std::log(2.0));
    TimeTauMap map = make_map(model, scheme);

    std::vector<Vec> samples;
    for (double x = -0.5; x <= 0.5 + 1e-12; x += 0.125) samples.push_back(make_vec({x}));

    ConditionCheck cc = check_conditions(map, saddle2_chart(), samples, 0.6);
    CHECK(cc.stability_lhs == doctest::Approx(0.5).epsilon(0.04));
    CHECK(cc.smoothing_lhs == doctest::Approx(0.25).epsilon(0.08));
    CHECK(cc.pass);

    // Threshold below the stability bound flips the gate.
    ConditionCheck fail = check_conditions(map, saddle2_chart(), samples, 0.4);
    CHECK_FALSE(fail.pass);

    // Smoothing shrinks as tau grows (more smoothing, e^{-3 tau} products).
    auto model2 = build_model(spec_of(ModelKind::Saddle2, {}, 2.0));
    TimeTauMap map2 = make_map(model2, TimeStepScheme::exact(2.0));
    ConditionCheck cc2 = check_conditions(map2, saddle2_chart(), samples, 0.6);
    CHECK(cc2.smoothing_lhs < cc.smoothing_lhs);
}

TEST_CASE("check_conditions on a pure linear map reports |Q L|_Q|") {
    Mat m = Mat::Zero(3, 3);
    m(0, 0) = 2.5;
    m(1, 1) = 0.3;
    m(2, 2) = 0.6;
    m(1, 2) = 0.1;
    TimeTauMap map = matrix_map(m, 1.0);
    ManifoldChart flat;
    flat.base_dim = 1;
    flat.fiber_dim = 2;
    flat.value = [](const Vec&) { return Vec(Vec::Zero(2)); };
    flat.derivative = [](const Vec&) { return Mat(Mat::Zero(2, 1)); };
    std::vector<Vec> samples = {make_vec({0.0}), make_vec({0.4})};
    ConditionCheck cc = check_conditions(map, flat, samples, 0.9);
    double expected = operator_two_norm(Mat(m.bottomRightCorner(2, 2)));
    CHECK(cc.stability_lhs == doctest::Approx(expected).epsilon(1e-8));
}

TEST_CASE("spectral gap check") {
    SUBCASE("KS symbol on [0, 2 pi]: k^4 - k^2") {
        std::vector<double> eigs;
        for (int k = 1; k <= 6; ++k)
            eigs.push_back(static_cast<double>(k) * k * k * k - static_cast<double>(k) * k);
        SpectralOperator op = SpectralOperator::with_normalizing_shift(eigs);
        GapCheckResult gap = spectral_gap_check(op, 2, 1.0, 1.0, 0.5);
        CHECK(gap.pass);
        CHECK(gap.gap == doctest::Approx(60.0));
    }
    SUBCASE("arithmetic spectrum fails for beta = 1 at large m") {
        std::vector<double> eigs;
        for (int k = 1; k <= 40; ++k) eigs.push_back(static_cast<double>(k));
        SpectralOperator op(eigs, 0.0);
        CHECK_FALSE(spectral_gap_check(op, 30, 1.0, 1.0, 1.0).pass);
        CHECK(spectral_gap_check(op, 39, 1.0, 1.0, 0.0).pass);  // m = n-1 evaluable
    }
    SUBCASE("auto selection on the sqrt(2) KS operator keeps conjugate pairs") {
        double L = 2.0 * M_PI * std::sqrt(2.0);
        std::vector<double> eigs;
        for (int k = 1; k <= 8; ++k) {
            double q = 2.0 * M_PI * k / L;
            double lam = q * q * q * q - q * q;
            eigs.push_back(lam);
            eigs.push_back(lam);
        }
        SpectralOperator op = SpectralOperator::with_normalizing_shift(eigs);
        int m = select_gap_dimension(op, 1.0, 1.0, 0.5, 6);
        CHECK(m == 2);  // the k=1 pair; m=1 would split it and has zero gap
    }
}
