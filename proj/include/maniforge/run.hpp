#pragma once

#include "maniforge/common.hpp"
#include "maniforge/config.hpp"
#include "maniforge/graph_transform.hpp"
#include "maniforge/hyperbolicity.hpp"
#include "maniforge/io.hpp"
#include "maniforge/maps.hpp"
#include "maniforge/models.hpp"
#include "maniforge/persistence.hpp"
#include "maniforge/schemes.hpp"
#include "maniforge/section.hpp"
#include "maniforge/spectral.hpp"

#include <chrono>
#include <cstdlib>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <memory>
#include <optional>
#include <string>
#include <vector>

namespace maniforge {

// ---------------------------------------------------------------------------
// Run context: collects emitted files and stage statuses, writes the manifest
// atomically at run end. Timestamps live only in the manifest; every other
// output is a deterministic function of the config.
// ---------------------------------------------------------------------------
class RunContext {
public:
    RunContext(RunConfig cfg, std::filesystem::path out_dir, std::string subcommand)
        : cfg_(std::move(cfg)), out_dir_(std::move(out_dir)), subcommand_(std::move(subcommand)) {
        started_at_ = now_iso();
    }

    const RunConfig& cfg() const { return cfg_; }
    const std::filesystem::path& out_dir() const { return out_dir_; }

    void emit(const std::string& name, const std::string& content) {
        write_file_atomic(out_dir_ / name, content);
        emitted_.push_back(name);
    }

    void emit_json(const std::string& name, const Json& j) { emit(name, j.dump(2) + "\n"); }

    void stage(const std::string& name, const std::string& status) {
        stages_.emplace_back(name, status);
    }

    void write_manifest() {
        Json j;
        char buf[32];
        std::snprintf(buf, sizeof(buf), "%016llx",
                      static_cast<unsigned long long>(cfg_.hash()));
        j["config_hash"] = buf;
        j["artifact_version"] = kArtifactVersion;
        j["subcommand"] = subcommand_;
        j["started_at"] = started_at_;
        j["finished_at"] = now_iso();
        Json st = Json::array();
        for (const auto& [name, status] : stages_) st.push_back({{"stage", name}, {"status", status}});
        j["stages"] = st;
        j["files"] = emitted_;
        j["config"] = cfg_.render();
        write_file_atomic(out_dir_ / "manifest.json", j.dump(2) + "\n");
    }

private:
    static std::string now_iso() {
        std::time_t t = std::time(nullptr);
        char buf[32];
        std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&t));
        return buf;
    }

    RunConfig cfg_;
    std::filesystem::path out_dir_;
    std::string subcommand_;
    std::string started_at_;
    std::vector<std::string> emitted_;
    std::vector<std::pair<std::string, std::string>> stages_;
};

// ---------------------------------------------------------------------------
// Config -> model/scheme plumbing.
// ---------------------------------------------------------------------------
inline ModelSpec model_spec_from_config(const RunConfig& cfg) {
    ModelSpec spec;
    spec.kind = model_kind_from_string(cfg.model_name);
    spec.tau = cfg.tau;
    spec.parameters = cfg.model_params;
    spec.parameters["gamma"] = cfg.gamma;
    return spec;
}

inline TimeStepScheme scheme_from_config(const RunConfig& cfg) {
    SchemeKind kind = scheme_kind_from_string(cfg.scheme_kind);
    if (kind == SchemeKind::ExactDuhamel) return TimeStepScheme::exact(cfg.tau);
    if (cfg.scheme_substeps > 0)
        return TimeStepScheme::with_substeps(kind, cfg.tau, cfg.scheme_substeps);
    return TimeStepScheme::with_dt(kind, cfg.tau, cfg.scheme_dt);
}

/// The perturbed map G_h for a given size h (interpreted per kind).
inline TimeTauMap perturbed_map(const TimeTauMap& base, std::shared_ptr<const Model> model,
                                const RunConfig& cfg, const std::string& kind, double h) {
    if (kind == "None" || h == 0.0) return base;
    if (kind == "AnalyticE") return analytic_perturbation(base, h, cfg.analytic_form);
    if (kind == "ModeTruncation") {
        int retained = static_cast<int>(std::llround(h));
        require(std::abs(h - retained) < 1e-9 && retained >= 1 && retained < model->dim(),
                "ModeTruncation: perturbation size must be an integer mode count below the "
                "full dimension");
        return mode_truncation(base, leading_mode_mask(model->dim(), retained));
    }
    if (kind == "TimeDiscretization") {
        TimeStepScheme coarse = TimeStepScheme::with_dt(SchemeKind::IMEXEuler, cfg.tau, h);
        return make_map(model, coarse);
    }
    throw ConfigError("unknown perturbation kind '" + kind + "'");
}

/// Reported h per perturbation kind: max{dt, lambda_{N+1}^{-1/2}} for the
/// discretization-type perturbations, h itself for analytic ones.
inline double reported_h(const Model& model, const TimeStepScheme& scheme,
                         const std::string& kind, double h) {
    if (kind == "ModeTruncation") {
        int retained = static_cast<int>(std::llround(h));
        double lam = std::max(1.0, model.symbol()[retained]);  // first dropped eigenvalue
        return std::max(scheme.dt, 1.0 / std::sqrt(lam));
    }
    return h;
}

// ---------------------------------------------------------------------------
// Unstable-manifold setup: fixed point, splitting frame, reports.
// splitting.mode selects the dense route (map / generator: full differential,
// eigenvalues, sign-function projectors) or the matrix-free power route for
// large systems with a single expanding direction.
// ---------------------------------------------------------------------------
struct PowerSplitInfo {
    double lambda1 = 0.0;
    double lambda2 = 0.0;
    int iterations = 0;
};

struct UnstableSetup {
    Vec ubar;
    FixedPointResult fixed_point;
    SplitFrame frame;
    int base_dim = 0;
    std::optional<LinearizationReport> map_report;
    std::optional<SpectralSplitResult> split;
    std::optional<PowerSplitInfo> power;
};

inline UnstableSetup setup_unstable(std::shared_ptr<const Model> model,
                                    const TimeStepScheme& scheme, const RunConfig& cfg) {
    UnstableSetup out;
    Vec guess;
    if (!cfg.fp_guess.empty()) {
        require(static_cast<int>(cfg.fp_guess.size()) == model->dim(),
                "fixed_point.guess: dimension mismatch");
        guess = Eigen::Map<const Vec>(cfg.fp_guess.data(),
                                      static_cast<Eigen::Index>(cfg.fp_guess.size()));
    } else {
        guess = Vec::Zero(model->dim());
    }
    out.fixed_point = newton_fixed_point(*model, scheme, guess, cfg.fp_tol, cfg.fp_max_iter);
    out.ubar = out.fixed_point.point;

    TimeTauMap map = make_map(model, scheme);
    if (cfg.split_mode == "power") {
        // Dominant multiplier by power iteration, then an orthogonal
        // complement frame via a Householder reflector.
        const int n = model->dim();
        std::mt19937_64 rng = make_rng(cfg.seed ^ 0x9e3779b97f4a7c15ULL);
        Vec v = random_unit_vector(rng, n);
        PowerSplitInfo info;
        double lambda = 0.0;
        for (int it = 0; it < 400; ++it) {
            Vec w = map.tangent(out.ubar, v);
            double rayleigh = v.dot(w);
            double nw = w.norm();
            require(nw > 0, "power split: tangent annihilated the iterate");
            v = w / nw;
            info.iterations = it + 1;
            if (it > 4 && std::abs(rayleigh - lambda) <= 1e-11 * std::max(1.0, std::abs(rayleigh))) {
                lambda = rayleigh;
                break;
            }
            lambda = rayleigh;
        }
        info.lambda1 = lambda;
        // Deterministic sign.
        int imax = 0;
        v.cwiseAbs().maxCoeff(&imax);
        if (v[imax] < 0) v = -v;
        // Second multiplier from a deflated iteration.
        Vec u = random_unit_vector(rng, n);
        u -= v * v.dot(u);
        u.normalize();
        double lam2 = 0.0;
        for (int it = 0; it < 60; ++it) {
            Vec w = map.tangent(out.ubar, u);
            w -= v * v.dot(w);
            double nw = w.norm();
            if (nw == 0) break;
            lam2 = nw;
            u = w / nw;
            if (it > 10 && std::abs(nw - lam2) < 1e-9) break;
        }
        info.lambda2 = lam2;
        require(std::abs(info.lambda1) > 1.0,
                "power split: dominant multiplier is not expanding; not an unstable manifold");
        require(info.lambda2 < 1.0,
                "power split: second multiplier not contracting; more than one unstable mode");

        Vec w = v;
        w[0] -= 1.0;
        Mat basis;
        if (w.norm() < 1e-13) {
            basis = Mat::Identity(n, n);
        } else {
            w.normalize();
            basis = Mat::Identity(n, n) - 2.0 * w * w.transpose();  // maps e1 -> v
        }
        out.frame = SplitFrame(std::move(basis), 1);
        out.base_dim = 1;
        out.power = info;
        return out;
    }

    if (cfg.split_mode == "generator") {
        LinearizationReport gen = linearize_generator(*model, out.ubar, cfg.margin_threshold);
        if (!gen.hyperbolic)
            throw NumericalError("setup: generator spectrum within margin of the imaginary axis");
        SpectralSplitResult split = spectral_split(gen, SplitMode::GeneratorImagAxis);
        out.map_report = linearize_map(*model, scheme, out.ubar, cfg.margin_threshold);
        out.base_dim = split.unstable_dim;
        out.frame = split.frame;
        out.split = std::move(split);
        return out;
    }

    LinearizationReport rep = linearize_map(*model, scheme, out.ubar, cfg.margin_threshold);
    if (!rep.hyperbolic)
        throw NumericalError("setup: map spectrum within margin of the unit circle (margin " +
                             std::to_string(rep.margin) + ")");
    SpectralSplitResult split = spectral_split(rep, SplitMode::MapUnitCircle);
    out.base_dim = split.unstable_dim;
    out.frame = split.frame;
    out.split = std::move(split);
    out.map_report = std::move(rep);
    return out;
}

// ---------------------------------------------------------------------------
// Manifold computation in working coordinates.
// ---------------------------------------------------------------------------
struct ManifoldRun {
    Section section;  // in frame coordinates over the P-ball
    TransformReport report;
    std::function<double(const Vec&)> fiber_norm;
    TimeTauMap working;
};

inline TransformConfig transform_config_from(const RunConfig& cfg,
                                             std::function<double(const Vec&)> fiber_norm,
                                             bool allow_far = false) {
    TransformConfig tc;
    tc.tol_c0 = cfg.tol_c0;
    tc.tol_c1 = cfg.tol_c1;
    tc.max_iter = cfg.max_iter;
    tc.rho_ext_factor = cfg.rho_ext_factor;
    tc.track_derivative = cfg.track_derivative;
    tc.fiber_norm = std::move(fiber_norm);
    tc.allow_far_preimages = allow_far;
    return tc;
}

inline std::function<double(const Vec&)> make_fiber_norm(std::shared_ptr<const Model> model,
                                                         const SplitFrame& frame) {
    int dim = frame.dim();
    int m = frame.base_dim();
    return [model, frame, dim, m](const Vec& q) {
        Vec coords = Vec::Zero(dim);
        coords.tail(dim - m) = q;
        return model->gamma_norm(frame.from_frame(coords));
    };
}

inline ManifoldRun run_manifold_core(std::shared_ptr<const Model> model, const TimeTauMap& map_h,
                                     const UnstableSetup& setup, const RunConfig& cfg,
                                     bool allow_far = false) {
    ManifoldRun run;
    run.working = conjugate(recenter(map_h, setup.ubar), setup.frame);
    run.fiber_norm = make_fiber_norm(model, setup.frame);
    require(setup.base_dim >= 1 && setup.base_dim <= 3,
            "manifold: base dimension " + std::to_string(setup.base_dim) +
                " outside the supported range 1..3");
    Section phi0 = Section::zero(setup.base_dim, model->dim() - setup.base_dim, cfg.rho, cfg.grid,
                                 interpolation_from_string(cfg.interpolation), cfg.epsilon,
                                 cfg.delta);
    TransformConfig tc = transform_config_from(cfg, run.fiber_norm, allow_far);
    auto [section, report] = iterate_to_fixed_point(phi0, run.working, tc);
    run.section = std::move(section);
    run.report = std::move(report);
    return run;
}

// ---------------------------------------------------------------------------
// Subcommand pipelines. Each returns the process exit code.
// ---------------------------------------------------------------------------

inline Json fixed_point_json(const Model& model, const FixedPointResult& fp,
                             const LinearizationReport* map_rep,
                             const LinearizationReport* gen_rep) {
    Json j;
    j["point"] = std::vector<double>(fp.point.data(), fp.point.data() + fp.point.size());
    j["residual"] = fp.residual;
    j["iterations"] = fp.iterations;
    j["jacobian_singular"] = fp.jacobian_singular;
    if (model.kind() == ModelKind::AppendixPolar) {
        double r, theta;
        cartesian_to_polar(fp.point, r, theta);
        j["polar"] = {{"r", r}, {"theta", theta}};
    }
    auto eig_json = [](const LinearizationReport& rep) {
        Json e = Json::array();
        for (Eigen::Index i = 0; i < rep.eigenvalues.size(); ++i)
            e.push_back({{"re", rep.eigenvalues[i].real()}, {"im", rep.eigenvalues[i].imag()}});
        Json out;
        out["eigenvalues"] = e;
        out["margin"] = rep.margin;
        out["hyperbolic"] = rep.hyperbolic;
        out["unstable_count"] = rep.unstable_count;
        return out;
    };
    if (map_rep) j["map"] = eig_json(*map_rep);
    if (gen_rep) j["generator"] = eig_json(*gen_rep);
    return j;
}

inline int run_fixed_point(RunContext& ctx) {
    const RunConfig& cfg = ctx.cfg();
    auto model = build_model(model_spec_from_config(cfg));
    TimeStepScheme scheme = scheme_from_config(cfg);
    Vec guess = cfg.fp_guess.empty()
                    ? Vec(Vec::Zero(model->dim()))
                    : Vec(Eigen::Map<const Vec>(cfg.fp_guess.data(),
                                                static_cast<Eigen::Index>(cfg.fp_guess.size())));
    require(guess.size() == model->dim(), "fixed_point.guess: dimension mismatch");
    FixedPointResult fp = newton_fixed_point(*model, scheme, guess, cfg.fp_tol, cfg.fp_max_iter);
    ctx.stage("newton", "ok");
    std::optional<LinearizationReport> map_rep, gen_rep;
    if (model->dim() <= 256) {
        map_rep = linearize_map(*model, scheme, fp.point, cfg.margin_threshold);
        gen_rep = linearize_generator(*model, fp.point, cfg.margin_threshold);
        ctx.stage("linearize", "ok");
    }
    ctx.emit_json("fixed_point.json",
                  fixed_point_json(*model, fp, map_rep ? &*map_rep : nullptr,
                                   gen_rep ? &*gen_rep : nullptr));
    return 0;
}

inline int run_manifold(RunContext& ctx) {
    const RunConfig& cfg = ctx.cfg();
    auto model = build_model(model_spec_from_config(cfg));
    TimeStepScheme scheme = scheme_from_config(cfg);
    UnstableSetup setup = setup_unstable(model, scheme, cfg);
    ctx.stage("setup", "ok");

    TimeTauMap base = make_map(model, scheme);
    TimeTauMap map_h = perturbed_map(base, model, cfg, cfg.pert_kind,
                                     cfg.pert_kind == "ModeTruncation"
                                         ? static_cast<double>(cfg.truncation_modes)
                                         : (cfg.pert_kind == "TimeDiscretization" ? cfg.pert_dt
                                                                                  : cfg.pert_h));
    ManifoldRun run = run_manifold_core(model, map_h, setup, cfg);
    ctx.stage("transform", run.report.converged ? "ok" : "non-convergent");

    ctx.emit("section.csv", section_to_csv(run.section));
    ctx.emit_json("section.json", section_sidecar(run.section));
    ctx.emit_json("transform_report.json", transform_report_json(run.report));
    Json fpj = fixed_point_json(*model, setup.fixed_point,
                                setup.map_report ? &*setup.map_report : nullptr, nullptr);
    if (setup.power) {
        fpj["power_split"] = {{"lambda1", setup.power->lambda1},
                              {"lambda2", setup.power->lambda2},
                              {"iterations", setup.power->iterations}};
    }
    ctx.emit_json("fixed_point.json", fpj);
    return run.report.converged ? 0 : 3;
}

inline int run_check_conditions(RunContext& ctx) {
    const RunConfig& cfg = ctx.cfg();
    auto model = build_model(model_spec_from_config(cfg));
    TimeStepScheme scheme = scheme_from_config(cfg);
    UnstableSetup setup = setup_unstable(model, scheme, cfg);
    ctx.stage("setup", "ok");

    TimeTauMap working = conjugate(recenter(make_map(model, scheme), setup.ubar), setup.frame);
    const int m = setup.base_dim;
    const int k = model->dim() - m;

    // A-priori gate on the zero section (the flat candidate through the
    // fixed point), sampled on the inner half of the ball.
    ManifoldChart flat;
    flat.base_dim = m;
    flat.fiber_dim = k;
    flat.value = [k](const Vec&) { return Vec(Vec::Zero(k)); };
    flat.derivative = [k, m](const Vec&) { return Mat(Mat::Zero(k, m)); };
    std::vector<Vec> samples;
    std::mt19937_64 rng = make_rng(cfg.seed);
    for (int s = 0; s < cfg.samples; ++s) {
        Vec x = 0.5 * cfg.rho * random_unit_vector(rng, m) *
                std::pow(static_cast<double>(s + 1) / cfg.samples, 1.0 / m);
        samples.push_back(x);
    }
    ConditionCheck gate = check_conditions(working, flat, samples, cfg.theta1);
    ctx.stage("conditions", gate.pass ? "pass" : "fail");

    std::optional<DichotomyReport> dich;
    if (setup.map_report && setup.split)
        dich = dichotomy_constants(*setup.map_report, *setup.split, cfg.tau, cfg.samples);

    // Posterior: run the transform and measure Lyapunov numbers on the result.
    ManifoldRun run = run_manifold_core(model, make_map(model, scheme), setup, cfg);
    ctx.stage("transform", run.report.converged ? "ok" : "non-convergent");
    std::optional<LyapunovNumbers> lyap;
    if (run.report.converged) {
        lyap = lyapunov_type_numbers(run.working, run.section.chart(), Vec::Zero(m), cfg.horizon);
    }

    Json j;
    j["stability_lhs"] = gate.stability_lhs;
    j["smoothing_lhs"] = gate.smoothing_lhs;
    j["theta1"] = gate.theta1;
    j["pass"] = gate.pass;
    j["marginal"] = gate.marginal;
    if (dich) {
        j["a"] = dich->a;
        j["tau"] = dich->tau;
        j["dichotomy_achieved"] = dich->contraction_achieved;
    } else {
        j["tau"] = cfg.tau;
    }
    if (lyap) {
        j["nu"] = lyap->nu;
        if (lyap->theta_defined) j["theta"] = lyap->theta;
    }
    j["transform_converged"] = run.report.converged;
    j["contraction_ratio"] = run.report.contraction_ratio;
    ctx.emit_json("conditions.json", j);
    ctx.emit_json("transform_report.json", transform_report_json(run.report));
    return run.report.converged || gate.pass ? 0 : 3;
}

// Exact diagonal semigroup map e^{-tau nu A} for the prepared far field.
inline TimeTauMap linear_semigroup_map(std::shared_ptr<const Model> model, double tau) {
    TimeTauMap map;
    map.dim = model->dim();
    map.tau = tau;
    map.gamma_weight = model->gamma_weights();
    Vec factor(model->dim());
    for (int i = 0; i < model->dim(); ++i)
        factor[i] = std::exp(-tau * model->viscosity() * model->symbol()[i]);
    map.apply = [factor](const Vec& v) { return Vec(factor.cwiseProduct(v)); };
    map.tangent = [factor](const Vec&, const Vec& w) { return Vec(factor.cwiseProduct(w)); };
    map.norm = [model](const Vec& v) { return model->gamma_norm(v); };
    return map;
}

inline int run_inertial(RunContext& ctx) {
    const RunConfig& cfg = ctx.cfg();
    auto model = build_model(model_spec_from_config(cfg));
    TimeStepScheme scheme = scheme_from_config(cfg);
    require(cfg.split_mode == "lowmodes",
            "inertial: splitting.mode must be 'lowmodes' (spectral index splitting)");
    const Vec& sym = model->symbol();
    bool sorted = std::is_sorted(sym.data(), sym.data() + sym.size());
    require(sorted, "inertial: model symbol must be ascending for a leading-mode splitting");

    // Gap-selected dimension (with multiplicities; pairs stay together).
    SpectralOperator op = model->sorted_operator();
    int m = cfg.split_m;
    GapCheckResult gap;
    if (m == 0) {
        m = select_gap_dimension(op, cfg.gap_k3, cfg.gap_k4, cfg.gap_beta, 3);
        require(m >= 1, "inertial: no m in 1..3 satisfies the spectral gap condition");
    }
    gap = spectral_gap_check(op, m, cfg.gap_k3, cfg.gap_k4, cfg.gap_beta);
    ctx.stage("gap", gap.pass ? "pass" : "fail");

    // Dissipativity radius: configured, or measured from a seeded trajectory.
    double r0 = cfg.r0;
    TimeTauMap g_h = make_map(model, scheme);
    std::mt19937_64 rng = make_rng(cfg.seed);
    if (r0 <= 0.0) {
        double sup = 0.0;
        Vec u = 0.5 * random_unit_vector(rng, model->dim());
        int transient_steps = static_cast<int>(cfg.transient / cfg.tau);
        int window_steps = static_cast<int>(0.5 * cfg.sim_time / cfg.tau);
        for (int s = 0; s < transient_steps; ++s) u = g_h.apply(u);
        for (int s = 0; s < window_steps; ++s) {
            u = g_h.apply(u);
            sup = std::max(sup, model->gamma_norm(u));
        }
        r0 = 1.5 * sup;
        require(r0 > 0.0, "inertial: measured dissipativity radius is zero");
    }
    ctx.stage("radius", "ok");

    // Truncated map: the discrete semigroup inside, the bare linear
    // semigroup outside; globally invertible base far field.
    CutoffSpec cutoff{r0};
    TimeTauMap g_lin = linear_semigroup_map(model, cfg.tau);
    TimeTauMap truncated = truncate_map(g_lin, g_h, cutoff);

    SplitFrame frame = SplitFrame::identity(model->dim(), m);
    auto fiber_norm = make_fiber_norm(model, frame);
    Section phi0 = Section::zero(m, model->dim() - m, cfg.rho, cfg.grid,
                                 interpolation_from_string(cfg.interpolation), cfg.epsilon,
                                 cfg.delta);
    TransformConfig tc = transform_config_from(cfg, fiber_norm, /*allow_far=*/true);
    auto [section, report] = iterate_to_fixed_point(phi0, truncated, tc);
    ctx.stage("transform", report.converged ? "ok" : "non-convergent");

    // Exponential attraction: long trajectories end near the graph.
    Json traj = Json::array();
    double worst = 0.0;
    int inside = 0;
    std::vector<double> sample_times;
    std::vector<Vec> sample_states;
    for (int t = 0; t < cfg.trajectories; ++t) {
        Vec u = 0.75 * r0 * random_unit_vector(rng, model->dim());
        int steps = static_cast<int>((cfg.transient + cfg.sim_time) / cfg.tau);
        for (int s = 0; s < steps; ++s) {
            u = g_h.apply(u);
            if (t == 0 && s % 8 == 0) {
                sample_times.push_back((s + 1) * cfg.tau);
                sample_states.push_back(u);
            }
        }
        Vec base = u.head(m);
        Vec fiber = u.tail(model->dim() - m);
        bool in_domain = section.in_domain(base);
        double dist = fiber_norm(fiber - section.value_at(base));
        if (in_domain) {
            worst = std::max(worst, dist);
            ++inside;
        }
        traj.push_back({{"distance", dist}, {"inside_domain", in_domain}});
    }
    ctx.stage("attraction", "ok");

    ctx.emit("section.csv", section_to_csv(section));
    ctx.emit_json("section.json", section_sidecar(section));
    ctx.emit_json("transform_report.json", transform_report_json(report));
    Json gj;
    gj["m"] = m;
    gj["pass"] = gap.pass;
    gj["lambda_m"] = gap.lambda_m;
    gj["lambda_m1"] = gap.lambda_m1;
    gj["gap"] = gap.gap;
    gj["required_gap"] = gap.required_gap;
    gj["r0"] = r0;
    ctx.emit_json("gap_report.json", gj);
    Json aj;
    aj["epsilon"] = cfg.epsilon;
    aj["worst_distance"] = worst;
    aj["inside_domain"] = inside;
    aj["trajectories"] = traj;
    ctx.emit_json("attraction.json", aj);
    if (!sample_states.empty()) ctx.emit("trajectory.csv", trajectory_to_csv(sample_times, sample_states));
    return report.converged ? 0 : 3;
}

inline int run_converge(RunContext& ctx) {
    const RunConfig& cfg = ctx.cfg();
    require(!cfg.h_values.empty(), "converge: experiment.h_values is required");
    auto model = build_model(model_spec_from_config(cfg));
    TimeStepScheme scheme = scheme_from_config(cfg);
    UnstableSetup setup = setup_unstable(model, scheme, cfg);
    ctx.stage("setup", "ok");

    TimeTauMap base = make_map(model, scheme);
    ManifoldRun ref = run_manifold_core(model, base, setup, cfg);
    if (!ref.report.converged)
        throw NumericalError("converge: unperturbed manifold run did not converge: " +
                             ref.report.failure);
    ctx.stage("reference", "ok");
    GlobalCloudResult ref_cloud =
        global_unstable_cloud(ref.section, ref.working, cfg.iterations, cfg.bound_box);

    std::vector<double> sweep = cfg.h_values;
    std::stable_sort(sweep.begin(), sweep.end(), std::greater<double>());
    ConvergenceTable table;
    for (double h : sweep) {
        ConvergenceRow row;
        row.h = reported_h(*model, scheme, cfg.pert_kind, h);
        try {
            TimeTauMap map_h = perturbed_map(base, model, cfg, cfg.pert_kind, h);
            ManifoldRun run = run_manifold_core(model, map_h, setup, cfg);
            row.converged = run.report.converged;
            if (row.converged) {
                SectionDistance d = section_distances(run.section, ref.section, ref.fiber_norm);
                row.c0 = d.c0;
                row.c1 = d.c1_available ? d.c1 : 0.0;
                GlobalCloudResult ch =
                    global_unstable_cloud(run.section, run.working, cfg.iterations, cfg.bound_box);
                row.dist_fwd = hausdorff_semidistance(ref_cloud.cloud, ch.cloud);
                row.dist_bwd = hausdorff_semidistance(ch.cloud, ref_cloud.cloud);
            }
        } catch (const NumericalError&) {
            row.converged = false;
        }
        table.rows.push_back(row);
        ctx.stage("h=" + g17(row.h), row.converged ? "ok" : "non-convergent");
    }
    fit_convergence_slopes(table);

    ctx.emit("convergence.csv", convergence_to_csv(table));
    Json j;
    j["fit_slope"] = table.fit_slope_c0;
    j["fit_slope_c1"] = table.fit_slope_c1;
    j["fit_points"] = table.fit_points;
    Json rows = Json::array();
    for (const ConvergenceRow& r : table.rows)
        rows.push_back({{"h", r.h},
                        {"c0", r.c0},
                        {"c1", r.c1},
                        {"dist_fwd", r.dist_fwd},
                        {"dist_bwd", r.dist_bwd},
                        {"converged", r.converged}});
    j["rows"] = rows;
    ctx.emit_json("convergence.json", j);
    bool all_ok = true;
    for (const ConvergenceRow& r : table.rows) all_ok = all_ok && r.converged;
    return all_ok ? 0 : 3;
}

inline int run_appendix_demo(RunContext& ctx) {
    const RunConfig& cfg = ctx.cfg();
    require(cfg.model_name == "AppendixPolar", "appendix-demo: model must be AppendixPolar");
    require(!cfg.h_values.empty(), "appendix-demo: experiment.h_values is required");
    TimeStepScheme scheme = scheme_from_config(cfg);

    // Classify the two stationary points of the unperturbed field.
    ModelSpec spec0 = model_spec_from_config(cfg);
    spec0.parameters["h"] = 0.0;
    auto model0 = build_model(spec0);
    FixedPointResult fp_hyp =
        newton_fixed_point(*model0, scheme, polar_to_cartesian(0.97, 0.05), cfg.fp_tol);
    LinearizationReport gen_hyp = linearize_generator(*model0, fp_hyp.point);
    FixedPointResult fp_non =
        newton_fixed_point(*model0, scheme, polar_to_cartesian(1.01, M_PI - 0.02), cfg.fp_tol, 80);
    LinearizationReport gen_non = linearize_generator(*model0, fp_non.point);
    ctx.stage("classify", "ok");

    struct AppendixRun {
        Section section;
        PointCloud cloud;
        int discarded = 0;
    };
    auto manifold_for = [&](double h) {
        ModelSpec spec = model_spec_from_config(cfg);
        spec.parameters["h"] = h;
        auto model = build_model(spec);
        RunConfig local = cfg;
        local.fp_guess = {fp_hyp.point[0], fp_hyp.point[1]};
        UnstableSetup setup = setup_unstable(model, scheme, local);
        ManifoldRun run = run_manifold_core(model, make_map(model, scheme), setup, local);
        if (!run.report.converged)
            throw NumericalError("appendix-demo: manifold run (h=" + g17(h) +
                                 ") did not converge: " + run.report.failure);
        // Clouds accumulate in the original state coordinates.
        GlobalCloudResult cloud =
            global_unstable_cloud(run.section, run.working, cfg.iterations, cfg.bound_box);
        for (Vec& p : cloud.cloud.points) p = setup.ubar + setup.frame.from_frame(p);
        return AppendixRun{std::move(run.section), std::move(cloud.cloud), cloud.discarded};
    };

    AppendixRun w0 = manifold_for(0.0);
    ctx.emit("cloud_unperturbed.csv", cloud_to_csv(w0.cloud));
    ctx.stage("unperturbed", "ok");

    std::vector<double> sweep_h = cfg.h_values;
    std::stable_sort(sweep_h.begin(), sweep_h.end(), std::greater<double>());
    ConvergenceTable table;
    Json rows = Json::array();
    int idx = 0;
    for (double h : sweep_h) {
        AppendixRun wh = manifold_for(h);
        SectionDistance d = section_distances(wh.section, w0.section);
        ConvergenceRow row;
        row.h = h;
        row.c0 = d.c0;
        row.c1 = d.c1_available ? d.c1 : 0.0;
        row.dist_fwd = hausdorff_semidistance(w0.cloud, wh.cloud);
        row.dist_bwd = hausdorff_semidistance(wh.cloud, w0.cloud);
        table.rows.push_back(row);
        std::string name = "cloud_h" + std::to_string(idx++) + ".csv";
        ctx.emit(name, cloud_to_csv(wh.cloud));
        rows.push_back({{"h", h},
                        {"c0", row.c0},
                        {"c1", row.c1},
                        {"dist_unperturbed_to_perturbed", row.dist_fwd},
                        {"dist_perturbed_to_unperturbed", row.dist_bwd},
                        {"points", wh.cloud.size()},
                        {"discarded", wh.discarded},
                        {"file", name}});
        ctx.stage("h=" + g17(h), "ok");
    }
    fit_convergence_slopes(table);
    ctx.emit("convergence.csv", convergence_to_csv(table));

    Json j;
    j["hyperbolic_point"] = fixed_point_json(*model0, fp_hyp, nullptr, &gen_hyp);
    j["nonhyperbolic_point"] = fixed_point_json(*model0, fp_non, nullptr, &gen_non);
    j["fit_slope"] = table.fit_slope_c0;
    j["sweep"] = rows;
    ctx.emit_json("appendix_report.json", j);
    return 0;
}

// ---------------------------------------------------------------------------
// CLI dispatch.
// ---------------------------------------------------------------------------
inline int cli_dispatch(const std::vector<std::string>& args) {
    auto usage = []() {
        std::cerr << "usage: maniforge <fixed-point|manifold|inertial|converge|appendix-demo|"
                     "check-conditions> --config PATH [--out DIR]\n";
    };
    if (args.empty()) {
        usage();
        return 2;
    }
    const std::string sub = args[0];
    std::string config_path, out_override;
    for (std::size_t i = 1; i < args.size(); ++i) {
        if (args[i] == "--config" && i + 1 < args.size()) {
            config_path = args[++i];
        } else if (args[i] == "--out" && i + 1 < args.size()) {
            out_override = args[++i];
        } else {
            std::cerr << "unknown argument: " << args[i] << "\n";
            usage();
            return 2;
        }
    }

    auto emit_error = [&](const std::filesystem::path* dir, const std::string& type,
                          const std::string& what, int code) {
        Json j;
        j["error"] = what;
        j["type"] = type;
        j["subcommand"] = sub;
        j["exit"] = code;
        std::cerr << j.dump() << "\n";
        if (dir) {
            try {
                write_file_atomic(*dir / "error.json", j.dump(2) + "\n");
            } catch (...) {
            }
        }
        return code;
    };

    bool known = sub == "fixed-point" || sub == "manifold" || sub == "inertial" ||
                 sub == "converge" || sub == "appendix-demo" || sub == "check-conditions";
    if (!known) {
        usage();
        return 2;
    }
    if (config_path.empty()) return emit_error(nullptr, "config", "--config PATH is required", 2);

    RunConfig cfg;
    std::filesystem::path out_dir;
    try {
        std::ifstream in(config_path);
        if (!in) throw ConfigError("cannot read config file: " + config_path);
        std::ostringstream buf;
        buf << in.rdbuf();
        cfg = config_parse(buf.str());
        // Output dir priority: --out flag, then config, then MANIFORGE_OUT.
        if (!out_override.empty()) {
            out_dir = out_override;
        } else if (cfg.out_dir != "out") {
            out_dir = cfg.out_dir;
        } else if (const char* env = std::getenv("MANIFORGE_OUT"); env && *env) {
            out_dir = env;
        } else {
            out_dir = cfg.out_dir;
        }
        std::filesystem::create_directories(out_dir);
    } catch (const ConfigError& e) {
        return emit_error(nullptr, "config", e.what(), 2);
    } catch (const std::exception& e) {
        return emit_error(nullptr, "internal", e.what(), 4);
    }

    RunContext ctx(cfg, out_dir, sub);
    try {
        int code = 0;
        if (sub == "fixed-point") code = run_fixed_point(ctx);
        else if (sub == "manifold") code = run_manifold(ctx);
        else if (sub == "inertial") code = run_inertial(ctx);
        else if (sub == "converge") code = run_converge(ctx);
        else if (sub == "appendix-demo") code = run_appendix_demo(ctx);
        else code = run_check_conditions(ctx);
        ctx.write_manifest();
        return code;
    } catch (const ConfigError& e) {
        ctx.stage("error", e.what());
        ctx.write_manifest();
        return emit_error(&out_dir, "config", e.what(), 2);
    } catch (const StructuralError& e) {
        ctx.stage("error", e.what());
        ctx.write_manifest();
        return emit_error(&out_dir, "config", e.what(), 2);
    } catch (const NumericalError& e) {
        ctx.stage("error", e.what());
        ctx.write_manifest();
        return emit_error(&out_dir, "numerical", e.what(), 3);
    } catch (const std::exception& e) {
        return emit_error(&out_dir, "internal", e.what(), 4);
    }
}

}  // namespace maniforge
