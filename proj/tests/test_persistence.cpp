#include "doctest.h"

#include "maniforge/graph_transform.hpp"
#include "maniforge/maps.hpp"
#include "maniforge/models.hpp"
#include "maniforge/persistence.hpp"
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

PointCloud cloud_of(std::initializer_list<std::initializer_list<double>> pts) {
    PointCloud c;
    for (auto p : pts) c.add(make_vec(p), "trajectorySample");
    return c;
}

ModelSpec spec_of(ModelKind kind, std::map<std::string, double> params, double tau) {
    ModelSpec s;
    s.kind = kind;
    s.parameters = std::move(params);
    s.tau = tau;
    return s;
}

}  // namespace

TEST_CASE("hausdorff semidistance basics") {
    PointCloud a = cloud_of({{0, 0}, {1, 0}});
    PointCloud b = cloud_of({{0, 0}});
    CHECK(hausdorff_semidistance(a, b) == doctest::Approx(1.0));
    CHECK(hausdorff_semidistance(b, a) == 0.0);  // asymmetric
    CHECK(hausdorff_semidistance(a, a) == 0.0);
    PointCloud empty;
    CHECK_THROWS_AS(hausdorff_semidistance(empty, a), StructuralError);
}

TEST_CASE("hausdorff axioms on random clouds") {
    std::mt19937_64 rng(41);
    std::normal_distribution<double> gauss;
    auto random_cloud = [&](int n) {
        PointCloud c;
        for (int i = 0; i < n; ++i) c.add(make_vec({gauss(rng), gauss(rng)}), "trajectorySample");
        return c;
    };
    for (int trial = 0; trial < 20; ++trial) {
        PointCloud a = random_cloud(8), b = random_cloud(12), c = random_cloud(5);
        // Containment characterization of zero distance (finite clouds).
        PointCloud sub;
        sub.add(a.points[2], "trajectorySample");
        sub.add(a.points[5], "trajectorySample");
        CHECK(hausdorff_semidistance(sub, a) == 0.0);
        CHECK(hausdorff_semidistance(a, sub) >= 0.0);
        // Triangle-style bound.
        double ac = hausdorff_semidistance(a, c);
        double ab = hausdorff_semidistance(a, b);
        double bc = hausdorff_semidistance(b, c);
        CHECK(ac <= ab + bc + 1e-12);
    }
}

TEST_CASE("section distances") {
    Section phi = Section::zero(1, 1, 1.0, 33, Interpolation::Cubic, 2.0, 1.0);
    Section psi = phi;
    phi.ensure_derivative();
    psi.ensure_derivative();
    for (int node = 0; node < phi.node_count(); ++node) {
        double xi = phi.node_point(node)[0];
        phi.value(node)[0] = xi * xi / 3.0;
        phi.derivative(node)(0, 0) = 2.0 * xi / 3.0;
    }
    SectionDistance same = section_distances(phi, phi);
    CHECK(same.c0 == 0.0);
    CHECK(same.c1 == 0.0);

    SectionDistance d = section_distances(phi, psi);
    CHECK(d.c0 == doctest::Approx(1.0 / 3.0));
    CHECK(d.c1 == doctest::Approx(2.0 / 3.0));

    // Constant offset: c0 = |c|, c1 = 0.
    Section shifted = phi;
    for (int node = 0; node < shifted.node_count(); ++node) shifted.value(node)[0] += 0.25;
    SectionDistance off = section_distances(phi, shifted);
    CHECK(off.c0 == doctest::Approx(0.25));
    CHECK(off.c1 == 0.0);

    // Different grids resample through interpolation.
    Section fine = Section::zero(1, 1, 1.0, 65, Interpolation::Cubic, 2.0, 1.0);
    for (int node = 0; node < fine.node_count(); ++node) {
        double xi = fine.node_point(node)[0];
        fine.value(node)[0] = xi * xi / 3.0;
    }
    SectionDistance re = section_distances(fine, phi);
    CHECK(re.resampled);
    CHECK(re.c0 < 1e-9);
}

TEST_CASE("global unstable cloud on the exact Saddle2 manifold") {
    auto model = build_model(spec_of(ModelKind::Saddle2, {}, std::log(2.0)));
    TimeTauMap map = make_map(model, TimeStepScheme::exact(std::log(2.0)));

    Section phi = Section::zero(1, 1, 0.5, 17, Interpolation::Cubic, 1.0, 1.0);
    for (int node = 0; node < phi.node_count(); ++node) {
        double xi = phi.node_point(node)[0];
        phi.value(node)[0] = xi * xi / 3.0;
    }

    GlobalCloudResult k0 = global_unstable_cloud(phi, map, 0, 100.0);
    CHECK(k0.cloud.size() == static_cast<std::size_t>(phi.node_count()));
    for (std::size_t i = 0; i < k0.cloud.size(); ++i)
        CHECK(k0.cloud.provenance[i] == "localManifold");

    GlobalCloudResult k3 = global_unstable_cloud(phi, map, 3, 100.0);
    // Nesting: the k=0 cloud is a prefix of the k=3 cloud.
    CHECK(k3.cloud.size() > k0.cloud.size());
    for (const Vec& p : k3.cloud.points)
        CHECK(std::abs(p[1] - p[0] * p[0] / 3.0) < 1e-10);  // stays on y = x^2/3
}

TEST_CASE("escaping points are discarded and flagged") {
    auto model = build_model(spec_of(ModelKind::Saddle2, {}, std::log(2.0)));
    TimeTauMap map = make_map(model, TimeStepScheme::exact(std::log(2.0)));
    Section phi = Section::zero(1, 1, 1.0, 9, Interpolation::Multilinear, 2.0, 1.0);
    GlobalCloudResult res = global_unstable_cloud(phi, map, 6, 3.0);
    CHECK(res.discarded > 0);
}

TEST_CASE("convergence slope fitting uses only the asymptotic rows") {
    ConvergenceTable t;
    for (double h : {0.5, 1e-1, 1e-2, 1e-3, 1e-4}) {
        ConvergenceRow r;
        r.h = h;
        r.c0 = 2.0 * h;
        r.c1 = 3.0 * h;
        t.rows.push_back(r);
    }
    t.rows[0].c0 = 17.0;  // pre-asymptotic junk at h = 0.5 must be ignored
    fit_convergence_slopes(t);
    CHECK(t.fit_points == 4);
    CHECK(t.fit_slope_c0 == doctest::Approx(1.0).epsilon(1e-9));
    CHECK(t.fit_slope_c1 == doctest::Approx(1.0).epsilon(1e-9));
}
