#pragma once

#include "maniforge/common.hpp"

#include <algorithm>
#include <cctype>
#include <cstdint>
#include <cstdio>
#include <map>
#include <sstream>
#include <string>
#include <vector>

namespace maniforge {

// ---------------------------------------------------------------------------
// Config grammar: line-oriented. `[section]` opens a section; `key = value`
// binds section.key; fully qualified `section.key = value` works anywhere.
// `#` starts a comment. Lists are comma separated. Duplicate keys are errors
// naming both lines.
// ---------------------------------------------------------------------------

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t b = s.find_first_not_of(" \t\r\n");
    if (b == std::string::npos) return {};
    std::size_t e = s.find_last_not_of(" \t\r\n");
    return s.substr(b, e - b + 1);
}

inline std::string format_double(double v) {
    char buf[40];
    std::snprintf(buf, sizeof(buf), "%.17g", v);
    return buf;
}

}  // namespace detail

struct RawEntry {
    std::string value;
    int line = 0;
};

class RawConfig {
public:
    static RawConfig parse(const std::string& text) {
        RawConfig rc;
        std::istringstream in(text);
        std::string line;
        std::string section;
        int lineno = 0;
        while (std::getline(in, line)) {
            ++lineno;
            std::size_t hash = line.find('#');
            if (hash != std::string::npos) line = line.substr(0, hash);
            line = detail::trim(line);
            if (line.empty()) continue;
            if (line.front() == '[') {
                if (line.back() != ']')
                    throw ConfigError("line " + std::to_string(lineno) + ": unterminated section header");
                section = detail::trim(line.substr(1, line.size() - 2));
                if (section.empty())
                    throw ConfigError("line " + std::to_string(lineno) + ": empty section name");
                continue;
            }
            std::size_t eq = line.find('=');
            if (eq == std::string::npos)
                throw ConfigError("line " + std::to_string(lineno) + ": expected key = value");
            std::string key = detail::trim(line.substr(0, eq));
            std::string value = detail::trim(line.substr(eq + 1));
            if (key.empty())
                throw ConfigError("line " + std::to_string(lineno) + ": empty key");
            std::string full = key.find('.') != std::string::npos
                                   ? key
                                   : (section.empty() ? key : section + "." + key);
            auto it = rc.entries_.find(full);
            if (it != rc.entries_.end())
                throw ConfigError("duplicate key '" + full + "' on line " + std::to_string(lineno) +
                                  " (first set on line " + std::to_string(it->second.line) + ")");
            rc.entries_[full] = RawEntry{value, lineno};
        }
        return rc;
    }

    const std::map<std::string, RawEntry>& entries() const { return entries_; }

    bool has(const std::string& key) const { return entries_.count(key) > 0; }

    const RawEntry* find(const std::string& key) const {
        auto it = entries_.find(key);
        return it == entries_.end() ? nullptr : &it->second;
    }

    void mark_consumed(const std::string& key) const { consumed_.insert(consumed_.end(), key); }

    std::vector<std::string> unconsumed() const {
        std::vector<std::string> out;
        for (const auto& [k, v] : entries_)
            if (std::find(consumed_.begin(), consumed_.end(), k) == consumed_.end())
                out.push_back(k + " (line " + std::to_string(v.line) + ")");
        return out;
    }

private:
    std::map<std::string, RawEntry> entries_;
    mutable std::vector<std::string> consumed_;
};

namespace detail {

inline double to_double(const std::string& key, const RawEntry& e) {
    try {
        std::size_t pos = 0;
        double v = std::stod(e.value, &pos);
        if (pos != e.value.size()) throw std::invalid_argument("trailing");
        return v;
    } catch (...) {
        throw ConfigError("line " + std::to_string(e.line) + ": key '" + key +
                          "' expects a number, got '" + e.value + "'");
    }
}

inline int to_int(const std::string& key, const RawEntry& e) {
    double v = to_double(key, e);
    int i = static_cast<int>(std::llround(v));
    if (std::abs(v - i) > 1e-9)
        throw ConfigError("line " + std::to_string(e.line) + ": key '" + key +
                          "' expects an integer, got '" + e.value + "'");
    return i;
}

inline bool to_bool(const std::string& key, const RawEntry& e) {
    if (e.value == "true" || e.value == "1") return true;
    if (e.value == "false" || e.value == "0") return false;
    throw ConfigError("line " + std::to_string(e.line) + ": key '" + key +
                      "' expects true/false, got '" + e.value + "'");
}

inline std::vector<double> to_list(const std::string& key, const RawEntry& e) {
    std::vector<double> out;
    std::istringstream in(e.value);
    std::string item;
    while (std::getline(in, item, ',')) {
        item = trim(item);
        if (item.empty()) continue;
        RawEntry sub{item, e.line};
        out.push_back(to_double(key, sub));
    }
    if (out.empty())
        throw ConfigError("line " + std::to_string(e.line) + ": key '" + key +
                          "' expects a comma list of numbers");
    return out;
}

}  // namespace detail

// ---------------------------------------------------------------------------
// RunConfig: fully resolved configuration with every default filled in.
// render() emits the canonical sorted form; the config hash is the FNV-1a of
// that text, so it is stable under key reordering in the source file.
// ---------------------------------------------------------------------------
struct RunConfig {
    // model
    std::string model_name;
    double tau = 0.0;
    double gamma = 0.0;
    std::map<std::string, double> model_params;  // h, modes, L, nu, forcing_*

    // scheme
    std::string scheme_kind;
    double scheme_dt = 0.0;
    int scheme_substeps = 0;  // 0: derive from dt

    // splitting
    std::string split_mode = "map";  // map | generator | lowmodes
    int split_m = 0;                 // 0 = auto
    double gap_k3 = 1.0;
    double gap_k4 = 1.0;
    double gap_beta = 0.5;
    double margin_threshold = 1e-9;

    // manifold
    double rho = 1.0;
    double delta = 0.5;
    double epsilon = 0.0;  // 0 = 2 rho delta
    int grid = 33;
    std::string interpolation = "multilinear";
    double tol_c0 = 1e-10;
    double tol_c1 = 1e-8;
    int max_iter = 80;
    double rho_ext_factor = 1.25;
    bool track_derivative = true;

    // perturbation
    std::string pert_kind = "None";  // None | ModeTruncation | TimeDiscretization | AnalyticE
    double pert_h = 0.0;
    std::string analytic_form = "trig";
    int truncation_modes = 0;
    double pert_dt = 0.0;

    // experiment
    std::uint64_t seed = 12345;
    std::vector<double> h_values;
    int iterations = 20;
    double bound_box = 4.0;
    int samples = 9;
    double horizon = 5.0;
    double theta1 = 0.9;
    int trajectories = 20;
    double transient = 50.0;
    double sim_time = 200.0;
    double r0 = 0.0;  // truncation radius; 0 = measure from a trajectory

    // fixed point
    std::vector<double> fp_guess;
    double fp_tol = 1e-12;
    int fp_max_iter = 50;

    // output
    std::string out_dir = "out";
    std::string formats = "csv,json";

    std::string render() const;
    std::uint64_t hash() const;
    bool operator==(const RunConfig& other) const { return render() == other.render(); }
};

namespace detail {

inline void require_range(bool ok, const std::string& key, const std::string& what) {
    if (!ok) throw ConfigError("key '" + key + "': " + what);
}

}  // namespace detail

inline RunConfig config_parse(const std::string& text) {
    RawConfig raw = RawConfig::parse(text);
    RunConfig c;

    auto get_d = [&](const std::string& key, double fallback, bool* seen = nullptr) {
        const RawEntry* e = raw.find(key);
        if (!e) {
            if (seen) *seen = false;
            return fallback;
        }
        raw.mark_consumed(key);
        if (seen) *seen = true;
        return detail::to_double(key, *e);
    };
    auto get_i = [&](const std::string& key, int fallback) {
        const RawEntry* e = raw.find(key);
        if (!e) return fallback;
        raw.mark_consumed(key);
        return detail::to_int(key, *e);
    };
    auto get_b = [&](const std::string& key, bool fallback) {
        const RawEntry* e = raw.find(key);
        if (!e) return fallback;
        raw.mark_consumed(key);
        return detail::to_bool(key, *e);
    };
    auto get_s = [&](const std::string& key, const std::string& fallback) {
        const RawEntry* e = raw.find(key);
        if (!e) return fallback;
        raw.mark_consumed(key);
        return e->value;
    };
    auto get_list = [&](const std::string& key, std::vector<double> fallback) {
        const RawEntry* e = raw.find(key);
        if (!e) return fallback;
        raw.mark_consumed(key);
        return detail::to_list(key, *e);
    };

    // --- model ---
    c.model_name = get_s("model.name", "");
    if (c.model_name.empty()) throw ConfigError("key 'model.name' is required");
    bool is_saddle = c.model_name == "Saddle2";
    bool is_polar = c.model_name == "AppendixPolar";
    bool is_ks = c.model_name == "KuramotoSivashinsky";
    bool is_nse = c.model_name == "NSETorus";
    if (!is_saddle && !is_polar && !is_ks && !is_nse)
        throw ConfigError("key 'model.name': unknown model '" + c.model_name + "'");

    bool tau_seen = false;
    c.tau = get_d("model.tau", 0.0, &tau_seen);
    if (!tau_seen) throw ConfigError("key 'model.tau' is required");
    detail::require_range(c.tau > 0.0, "model.tau", "must be positive");

    double gamma_default = is_ks ? 0.25 : (is_nse ? 0.5 : 0.0);
    c.gamma = get_d("model.gamma", gamma_default);
    detail::require_range(c.gamma >= 0.0 && c.gamma <= 1.0, "model.gamma", "must lie in [0, 1]");

    for (const char* key : {"h", "modes", "L", "nu", "forcing_amplitude", "forcing_kx",
                            "forcing_ky", "forcing2_amplitude", "forcing2_kx", "forcing2_ky"}) {
        std::string full = std::string("model.") + key;
        bool seen = false;
        double v = get_d(full, 0.0, &seen);
        if (seen) c.model_params[key] = v;
    }
    if (c.model_params.count("h"))
        detail::require_range(c.model_params["h"] >= 0.0, "model.h", "must be nonnegative");
    if (is_ks || is_nse) {
        detail::require_range(c.model_params.count("modes") && c.model_params["modes"] >= 1,
                              "model.modes", "required and must be >= 1 for this model");
    }
    if (is_ks)
        detail::require_range(c.model_params.count("L") && c.model_params["L"] > 0.0, "model.L",
                              "required and must be positive for KuramotoSivashinsky");
    if (is_nse)
        detail::require_range(c.model_params.count("nu") && c.model_params["nu"] > 0.0, "model.nu",
                              "required and must be positive for NSETorus");

    // --- scheme ---
    std::string scheme_default = is_saddle ? "ExactDuhamel" : (is_polar ? "RK4" : "IMEXEuler");
    c.scheme_kind = get_s("scheme.kind", scheme_default);
    if (c.scheme_kind != "ExactDuhamel" && c.scheme_kind != "RK4" && c.scheme_kind != "IMEXEuler")
        throw ConfigError("key 'scheme.kind': unknown scheme '" + c.scheme_kind + "'");
    double dt_default = is_polar ? 1e-3 : 1e-2;
    c.scheme_dt = get_d("scheme.dt", c.scheme_kind == "ExactDuhamel" ? c.tau : dt_default);
    detail::require_range(c.scheme_dt > 0.0, "scheme.dt", "must be positive");
    c.scheme_substeps = get_i("scheme.substeps", 0);
    detail::require_range(c.scheme_substeps >= 0, "scheme.substeps", "must be nonnegative");

    // --- splitting ---
    c.split_mode = get_s("splitting.mode", is_ks || is_nse ? (is_ks ? "lowmodes" : "map") : "map");
    if (c.split_mode != "map" && c.split_mode != "generator" && c.split_mode != "lowmodes" &&
        c.split_mode != "power")
        throw ConfigError("key 'splitting.mode': expected map | generator | lowmodes | power");
    std::string m_raw = get_s("splitting.m", "auto");
    if (m_raw == "auto") {
        c.split_m = 0;
    } else {
        RawEntry fake{m_raw, raw.find("splitting.m") ? raw.find("splitting.m")->line : 0};
        c.split_m = detail::to_int("splitting.m", fake);
        detail::require_range(c.split_m >= 1, "splitting.m", "must be >= 1 or 'auto'");
    }
    c.gap_k3 = get_d("splitting.K3", 1.0);
    c.gap_k4 = get_d("splitting.K4", 1.0);
    c.gap_beta = get_d("splitting.beta", 0.5);
    detail::require_range(c.gap_beta >= 0.0 && c.gap_beta < 1.0, "splitting.beta",
                          "must lie in [0, 1)");
    c.margin_threshold = get_d("splitting.margin", 1e-9);

    // --- manifold ---
    c.rho = get_d("manifold.rho", 1.0);
    detail::require_range(c.rho > 0.0, "manifold.rho", "must be positive");
    c.delta = get_d("manifold.delta", 0.5);
    detail::require_range(c.delta > 0.0 && c.delta <= 1.0, "manifold.delta",
                          "must lie in (0, 1]");
    c.epsilon = get_d("manifold.epsilon", 0.0);
    if (c.epsilon == 0.0) c.epsilon = 2.0 * c.rho * c.delta;  // heuristic default
    detail::require_range(c.epsilon > 0.0, "manifold.epsilon", "must be positive");
    c.grid = get_i("manifold.grid", 33);
    detail::require_range(c.grid >= 2, "manifold.grid", "must be >= 2");
    c.interpolation = get_s("manifold.interpolation", "multilinear");
    if (c.interpolation != "multilinear" && c.interpolation != "cubic")
        throw ConfigError("key 'manifold.interpolation': expected multilinear | cubic");
    detail::require_range(!(c.interpolation == "cubic" && c.grid < 3), "manifold.grid",
                          "cubic interpolation needs at least 3 nodes per axis");
    c.tol_c0 = get_d("manifold.tol_c0", 1e-10);
    c.tol_c1 = get_d("manifold.tol_c1", 1e-8);
    detail::require_range(c.tol_c0 > 0.0 && c.tol_c1 > 0.0, "manifold.tol_c0/tol_c1",
                          "must be positive");
    c.max_iter = get_i("manifold.max_iter", 80);
    detail::require_range(c.max_iter >= 1, "manifold.max_iter", "must be >= 1");
    c.rho_ext_factor = get_d("manifold.rho_ext_factor", 1.25);
    detail::require_range(c.rho_ext_factor >= 1.0, "manifold.rho_ext_factor", "must be >= 1");
    c.track_derivative = get_b("manifold.track_derivative", true);

    // --- perturbation ---
    c.pert_kind = get_s("perturbation.kind", "None");
    if (c.pert_kind != "None" && c.pert_kind != "ModeTruncation" &&
        c.pert_kind != "TimeDiscretization" && c.pert_kind != "AnalyticE")
        throw ConfigError(
            "key 'perturbation.kind': expected None | ModeTruncation | TimeDiscretization | "
            "AnalyticE");
    c.pert_h = get_d("perturbation.h", 0.0);
    detail::require_range(c.pert_h >= 0.0, "perturbation.h", "must be nonnegative");
    c.analytic_form = get_s("perturbation.analytic_form", "trig");
    c.truncation_modes = get_i("perturbation.truncation_modes", 0);
    c.pert_dt = get_d("perturbation.dt", 0.0);

    // --- experiment ---
    c.seed = static_cast<std::uint64_t>(get_i("experiment.seed", 12345));
    c.h_values = get_list("experiment.h_values", {});
    c.iterations = get_i("experiment.iterations", 20);
    detail::require_range(c.iterations >= 0, "experiment.iterations", "must be nonnegative");
    c.bound_box = get_d("experiment.bound_box", 4.0);
    detail::require_range(c.bound_box > 0.0, "experiment.bound_box", "must be positive");
    c.samples = get_i("experiment.samples", 9);
    detail::require_range(c.samples >= 1, "experiment.samples", "must be >= 1");
    c.horizon = get_d("experiment.horizon", 5.0);
    c.theta1 = get_d("experiment.theta1", 0.9);
    detail::require_range(c.theta1 > 0.0 && c.theta1 < 1.0, "experiment.theta1",
                          "must lie in (0, 1)");
    c.trajectories = get_i("experiment.trajectories", 20);
    c.transient = get_d("experiment.transient", 50.0);
    c.sim_time = get_d("experiment.sim_time", 200.0);
    c.r0 = get_d("experiment.r0", 0.0);

    // --- fixed point ---
    c.fp_guess = get_list("fixed_point.guess", {});
    c.fp_tol = get_d("fixed_point.tol", 1e-12);
    detail::require_range(c.fp_tol > 0.0, "fixed_point.tol", "must be positive");
    c.fp_max_iter = get_i("fixed_point.max_iter", 50);

    // --- output ---
    c.out_dir = get_s("output.dir", "out");
    c.formats = get_s("output.formats", "csv,json");

    std::vector<std::string> leftovers = raw.unconsumed();
    if (!leftovers.empty()) {
        std::string msg = "unknown key(s): ";
        for (std::size_t i = 0; i < leftovers.size(); ++i)
            msg += (i ? ", " : "") + leftovers[i];
        throw ConfigError(msg);
    }
    return c;
}

inline std::string RunConfig::render() const {
    std::ostringstream out;
    auto emit = [&](const std::string& key, const std::string& val) {
        out << key << " = " << val << "\n";
    };
    out << "[experiment]\n";
    emit("bound_box", detail::format_double(bound_box));
    if (!h_values.empty()) {
        std::string list;
        for (std::size_t i = 0; i < h_values.size(); ++i)
            list += (i ? ", " : "") + detail::format_double(h_values[i]);
        emit("h_values", list);
    }
    emit("horizon", detail::format_double(horizon));
    emit("iterations", std::to_string(iterations));
    emit("r0", detail::format_double(r0));
    emit("samples", std::to_string(samples));
    emit("seed", std::to_string(seed));
    emit("sim_time", detail::format_double(sim_time));
    emit("theta1", detail::format_double(theta1));
    emit("trajectories", std::to_string(trajectories));
    emit("transient", detail::format_double(transient));
    out << "[fixed_point]\n";
    if (!fp_guess.empty()) {
        std::string list;
        for (std::size_t i = 0; i < fp_guess.size(); ++i)
            list += (i ? ", " : "") + detail::format_double(fp_guess[i]);
        emit("guess", list);
    }
    emit("max_iter", std::to_string(fp_max_iter));
    emit("tol", detail::format_double(fp_tol));
    out << "[manifold]\n";
    emit("delta", detail::format_double(delta));
    emit("epsilon", detail::format_double(epsilon));
    emit("grid", std::to_string(grid));
    emit("interpolation", interpolation);
    emit("max_iter", std::to_string(max_iter));
    emit("rho", detail::format_double(rho));
    emit("rho_ext_factor", detail::format_double(rho_ext_factor));
    emit("tol_c0", detail::format_double(tol_c0));
    emit("tol_c1", detail::format_double(tol_c1));
    emit("track_derivative", track_derivative ? "true" : "false");
    out << "[model]\n";
    emit("gamma", detail::format_double(gamma));
    for (const auto& [k, v] : model_params) emit(k, detail::format_double(v));
    emit("name", model_name);
    emit("tau", detail::format_double(tau));
    out << "[output]\n";
    emit("dir", out_dir);
    emit("formats", formats);
    out << "[perturbation]\n";
    emit("analytic_form", analytic_form);
    emit("dt", detail::format_double(pert_dt));
    emit("h", detail::format_double(pert_h));
    emit("kind", pert_kind);
    emit("truncation_modes", std::to_string(truncation_modes));
    out << "[scheme]\n";
    emit("dt", detail::format_double(scheme_dt));
    emit("kind", scheme_kind);
    emit("substeps", std::to_string(scheme_substeps));
    out << "[splitting]\n";
    emit("K3", detail::format_double(gap_k3));
    emit("K4", detail::format_double(gap_k4));
    emit("beta", detail::format_double(gap_beta));
    emit("m", split_m == 0 ? std::string("auto") : std::to_string(split_m));
    emit("margin", detail::format_double(margin_threshold));
    emit("mode", split_mode);
    return out.str();
}

inline std::uint64_t RunConfig::hash() const {
    std::string text = render();
    std::uint64_t h = 1469598103934665603ULL;  // FNV-1a
    for (unsigned char ch : text) {
        h ^= ch;
        h *= 1099511628211ULL;
    }
    return h;
}

}  // namespace maniforge
