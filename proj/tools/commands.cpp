#include "commands.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <initializer_list>
#include <limits>
#include <functional>
#include <iostream>
#include <optional>
#include <sstream>
#include <string>
#include <system_error>
#include <utility>
#include <vector>

#include <json.hpp>

#include "spherealign/asymptotics.hpp"
#include "spherealign/errors.hpp"
#include "spherealign/kinetic.hpp"
#include "spherealign/particles.hpp"
#include "spherealign/shooting.hpp"
#include "spherealign/sphere.hpp"
#include "spherealign/transport.hpp"

namespace spherealign::cli {
namespace {

using nlohmann::json;

// ---------------------------------------------------------------------------
// Config access. Every lookup threads a dotted-path context string so the
// error names the offending entry; unknown keys are rejected outright, which
// catches typos that would otherwise silently fall back to defaults.

json load_config(const std::filesystem::path& path) {
    std::ifstream is(path);
    if (!is) throw ConfigError("cannot open config " + path.string());
    json cfg;
    try {
        cfg = json::parse(is);
    } catch (const json::parse_error& e) {
        throw ConfigError("config " + path.string() + ": " + e.what());
    }
    if (!cfg.is_object()) {
        throw ConfigError("config " + path.string() + ": top level must be an object");
    }
    return cfg;
}

void check_keys(const json& obj, const std::string& ctx,
                std::initializer_list<const char*> allowed) {
    for (const auto& item : obj.items()) {
        const bool known = std::any_of(allowed.begin(), allowed.end(),
                                       [&](const char* k) { return item.key() == k; });
        if (!known) throw ConfigError(ctx + ": unknown key \"" + item.key() + "\"");
    }
}

const json& require(const json& obj, const char* key, const std::string& ctx) {
    const auto it = obj.find(key);
    if (it == obj.end()) throw ConfigError(ctx + ": missing required key \"" + key + "\"");
    return *it;
}

double as_num(const json& v, const std::string& ctx) {
    if (!v.is_number()) throw ConfigError(ctx + ": expected a number");
    return v.get<double>();
}

double get_num(const json& obj, const char* key, const std::string& ctx) {
    return as_num(require(obj, key, ctx), ctx + "." + key);
}

double get_num_or(const json& obj, const char* key, double fallback, const std::string& ctx) {
    const auto it = obj.find(key);
    return it == obj.end() ? fallback : as_num(*it, ctx + "." + key);
}

std::uint64_t as_uint(const json& v, const std::string& ctx) {
    if (!v.is_number_unsigned()) throw ConfigError(ctx + ": expected a nonnegative integer");
    return v.get<std::uint64_t>();
}

std::uint64_t get_uint_or(const json& obj, const char* key, std::uint64_t fallback,
                          const std::string& ctx) {
    const auto it = obj.find(key);
    return it == obj.end() ? fallback : as_uint(*it, ctx + "." + key);
}

std::string get_str(const json& obj, const char* key, const std::string& ctx) {
    const json& v = require(obj, key, ctx);
    if (!v.is_string()) throw ConfigError(ctx + "." + key + ": expected a string");
    return v.get<std::string>();
}

std::vector<double> as_num_array(const json& v, const std::string& ctx, std::size_t min_len) {
    if (!v.is_array() || v.size() < min_len) {
        throw ConfigError(ctx + ": expected an array of at least " + std::to_string(min_len) +
                          " numbers");
    }
    std::vector<double> out;
    out.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        out.push_back(as_num(v[i], ctx + "[" + std::to_string(i) + "]"));
    }
    return out;
}

double positive(double x, const std::string& ctx) {
    if (!std::isfinite(x) || !(x > 0.0)) {
        throw ConfigError(ctx + ": expected a positive finite number");
    }
    return x;
}

UnitVector parse_unit_vector(const json& v, const std::string& ctx) {
    std::vector<double> coords = as_num_array(v, ctx, 2);
    try {
        return UnitVector(std::move(coords));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(ctx + ": " + e.what());
    }
}

// { "masses": [...], "points": [[...], ...] } -> validated configuration.
WeightedConfiguration parse_system(const json& sys, const std::string& ctx) {
    if (!sys.is_object()) throw ConfigError(ctx + ": expected an object");
    check_keys(sys, ctx, {"masses", "points"});
    const std::vector<double> masses = as_num_array(require(sys, "masses", ctx), ctx + ".masses", 1);
    const json& pts = require(sys, "points", ctx);
    if (!pts.is_array() || pts.size() != masses.size()) {
        throw ConfigError(ctx + ".points: expected an array matching masses in length");
    }
    std::vector<UnitVector> points;
    points.reserve(pts.size());
    for (std::size_t i = 0; i < pts.size(); ++i) {
        points.push_back(parse_unit_vector(pts[i], ctx + ".points[" + std::to_string(i) + "]"));
    }
    try {
        return WeightedConfiguration(masses, points);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(ctx + ": " + e.what());
    }
}

// ---------------------------------------------------------------------------
// Output files. Everything is computed before anything is written; each file
// lands via temp + rename so no reader ever sees a half-written artifact, and
// the set rolls itself back unless commit() runs -- a run that dies mid-write
// leaves the output directory as it found it.

class OutputSet {
public:
    explicit OutputSet(const std::filesystem::path& dir) : dir_(dir) {
        std::error_code ec;
        std::filesystem::create_directories(dir_, ec);
        if (!std::filesystem::is_directory(dir_)) {
            throw ConfigError("cannot create output directory " + dir_.string());
        }
    }

    OutputSet(const OutputSet&) = delete;
    OutputSet& operator=(const OutputSet&) = delete;

    ~OutputSet() {
        for (const auto& p : written_) {
            std::error_code ec;
            std::filesystem::remove(p, ec);
        }
    }

    void write(const std::string& name, const std::string& content) {
        const std::filesystem::path final_path = dir_ / name;
        const std::filesystem::path tmp_path = dir_ / (name + ".tmp");
        {
            std::ofstream os(tmp_path, std::ios::binary | std::ios::trunc);
            os << content;
            os.flush();
            if (!os) {
                std::error_code ec;
                std::filesystem::remove(tmp_path, ec);
                throw std::runtime_error("failed writing " + tmp_path.string());
            }
        }
        std::filesystem::rename(tmp_path, final_path);
        written_.push_back(final_path);
    }

    void commit() { written_.clear(); }

private:
    std::filesystem::path dir_;
    std::vector<std::filesystem::path> written_;
};

// Shortest round-trip decimal form, same convention as the trajectory writer.
std::string fmt(double x) {
    char buf[32];
    std::snprintf(buf, sizeof buf, "%.17g", x);
    return buf;
}

std::string dump_report(const json& doc) { return doc.dump(2) + "\n"; }

const char* regime_name(Regime r) {
    switch (r) {
        case Regime::Aligned: return "aligned";
        case Regime::OneBack: return "one_back";
        default: return "inconclusive";
    }
}

// ---------------------------------------------------------------------------
// particles: integrate a finite system and audit its limit behaviour.

int run_particles_impl(const CommonArgs& args) {
    const json cfg = load_config(args.config_path);
    check_keys(cfg, "config", {"system", "t_end", "dt"});
    const WeightedConfiguration system = parse_system(require(cfg, "system", "config"), "system");
    const double t_end = positive(get_num(cfg, "t_end", "config"), "config.t_end");
    IntegrateOptions opts;
    opts.dt = positive(get_num_or(cfg, "dt", opts.dt, "config"), "config.dt");

    const Trajectory traj = integrate(system, t_end, opts);
    const AsymptoticsReport report = verify_alignment_asymptotics(traj);

    std::ostringstream csv;
    traj.write_csv(csv);

    OutputSet out(args.out_dir);
    out.write("trajectory.csv", csv.str());
    out.write("regime_report.json", to_json_string(report));
    out.commit();

    if (!args.quiet) {
        std::size_t passed = 0;
        for (const auto& c : report.checks) passed += c.pass ? 1 : 0;
        std::cout << "regime: " << regime_name(report.regime.regime);
        if (report.regime.back_index) std::cout << " (back particle " << *report.regime.back_index << ")";
        std::cout << "; final |J| = " << report.regime.lambda << "; checks passed: " << passed
                  << "/" << report.checks.size() << "\n";
    }
    if (report.regime.regime == Regime::Inconclusive) return 3;
    return report.all_pass ? 0 : 4;
}

// ---------------------------------------------------------------------------
// vback: reconstruct the unique backward trajectory of a mean-field record
// and verify the exactly-one-back dichotomy around it.

int run_vback_impl(const CommonArgs& args) {
    const json cfg = load_config(args.config_path);
    check_keys(cfg, "config", {"system", "t_end", "dt", "verify_t_end", "mesh_t_end"});
    const WeightedConfiguration system = parse_system(require(cfg, "system", "config"), "system");
    const double t_end = positive(get_num(cfg, "t_end", "config"), "config.t_end");
    IntegrateOptions opts;
    opts.dt = positive(get_num_or(cfg, "dt", opts.dt, "config"), "config.dt");
    const double verify_t_end =
        positive(get_num_or(cfg, "verify_t_end", t_end, "config"), "config.verify_t_end");
    const double mesh_t_end =
        positive(get_num_or(cfg, "mesh_t_end", verify_t_end, "config"), "config.mesh_t_end");

    const Trajectory traj = integrate(system, t_end, opts);
    const FieldRecord field = FieldRecord::from_trajectory(traj);
    const UnitVector omega_inf = traj.omega(traj.snapshots() - 1);

    const VbackResult result = compute_vback(field, omega_inf, opts.dt);
    const VbackCheck verify = verify_vback(field, result.v_back, omega_inf, verify_t_end, opts.dt);
    const MeshCheck mesh =
        exactly_one_back_mesh(field, result.v_back, omega_inf, mesh_t_end, 1e-4, 32, opts.dt);
    const bool all_pass = verify.all_pass && mesh.all_pass;

    json doc;
    doc["result"] = json::parse(to_json_string(result));
    doc["verify"] = json::parse(to_json_string(verify));
    doc["mesh"] = json::parse(to_json_string(mesh));
    doc["all_pass"] = all_pass;

    OutputSet out(args.out_dir);
    out.write("vback_report.json", dump_report(doc));
    out.commit();

    if (!args.quiet) {
        std::cout << "v_back = [";
        for (std::size_t c = 0; c < result.v_back.dim(); ++c) {
            std::cout << (c ? ", " : "") << result.v_back[c];
        }
        std::cout << "]; lambda = " << result.lambda << "; flow checks "
                  << (verify.all_pass ? "passed" : "FAILED") << "; mesh escapes: " << mesh.escaped
                  << "/" << mesh.points << "\n";
    }
    return all_pass ? 0 : 4;
}

// ---------------------------------------------------------------------------
// kinetic: solve the axisymmetric mean-field ODE and check that the
// transport distances to the aligned state track their decay envelopes.

RadialDensity parse_density(const json& d, const std::string& ctx) {
    if (!d.is_object()) throw ConfigError(ctx + ": expected an object");
    const std::string kind = get_str(d, "kind", ctx);
    const std::size_t n = as_uint(require(d, "dim", ctx), ctx + ".dim");
    try {
        if (kind == "tilted") {
            check_keys(d, ctx, {"kind", "dim", "beta"});
            return RadialDensity::tilted(n, get_num(d, "beta", ctx));
        }
        if (kind == "uniform") {
            check_keys(d, ctx, {"kind", "dim"});
            return RadialDensity::uniform(n);
        }
        if (kind == "table") {
            check_keys(d, ctx, {"kind", "dim", "r", "h"});
            return RadialDensity::from_table(n, as_num_array(require(d, "r", ctx), ctx + ".r", 2),
                                             as_num_array(require(d, "h", ctx), ctx + ".h", 2));
        }
    } catch (const std::invalid_argument& e) {
        throw ConfigError(ctx + ": " + e.what());
    }
    throw ConfigError(ctx + ".kind: expected \"tilted\", \"uniform\", or \"table\"");
}

struct Envelope {
    const char* label;
    double (*value)(double);
};

Envelope w1_envelope(std::size_t n) {
    if (n == 2) return {"(1+t) exp(-t)", [](double t) { return (1.0 + t) * std::exp(-t); }};
    return {"exp(-t)", [](double t) { return std::exp(-t); }};
}

Envelope w2_envelope(std::size_t n) {
    if (n == 2) return {"exp(-t/2)", [](double t) { return std::exp(-0.5 * t); }};
    if (n == 3) {
        return {"sqrt(1+t) exp(-t)", [](double t) { return std::sqrt(1.0 + t) * std::exp(-t); }};
    }
    return {"exp(-t)", [](double t) { return std::exp(-t); }};
}

// max/min of series(t)/envelope(t) over samples with t >= window_lo.
double envelope_spread(const std::vector<double>& times, const std::vector<double>& series,
                       const Envelope& env, double window_lo) {
    double lo = std::numeric_limits<double>::infinity();
    double hi = 0.0;
    for (std::size_t k = 0; k < times.size(); ++k) {
        if (times[k] < window_lo) continue;
        const double ratio = series[k] / env.value(times[k]);
        lo = std::min(lo, ratio);
        hi = std::max(hi, ratio);
    }
    if (!(lo > 0.0) || !std::isfinite(hi)) {
        return std::numeric_limits<double>::infinity();
    }
    return hi / lo;
}

constexpr double kRateWindowStart = 15.0;
constexpr double kSpreadThreshold = 1.15;

int run_kinetic_impl(const CommonArgs& args) {
    const json cfg = load_config(args.config_path);
    check_keys(cfg, "config", {"density", "t_end", "dt"});
    const RadialDensity density = parse_density(require(cfg, "density", "config"), "density");
    const double t_end = positive(get_num_or(cfg, "t_end", 30.0, "config"), "config.t_end");
    if (t_end < 20.0) {
        throw ConfigError("config.t_end: need at least 20 to judge the decay window");
    }
    const double dt = positive(get_num_or(cfg, "dt", 0.02, "config"), "config.dt");

    const AxisymSolution sol = solve_lambda(density, t_end, dt);

    const std::vector<double>& times = sol.times();
    std::vector<double> w1(times.size()), w2(times.size());
    std::ostringstream csv;
    csv << "t,lambda,alpha,w1,w2\n";
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double lam = sol.lambda_series()[k];
        w1[k] = w1_to_dirac(density, lam);
        w2[k] = std::sqrt(w2sq_to_dirac(density, lam));
        csv << fmt(times[k]) << ',' << fmt(lam) << ',' << fmt(sol.alpha_series()[k]) << ','
            << fmt(w1[k]) << ',' << fmt(w2[k]) << '\n';
    }

    const Envelope e1 = w1_envelope(density.dim());
    const Envelope e2 = w2_envelope(density.dim());
    const double spread1 = envelope_spread(times, w1, e1, kRateWindowStart);
    const double spread2 = envelope_spread(times, w2, e2, kRateWindowStart);
    const bool stable1 = spread1 < kSpreadThreshold;
    const bool stable2 = spread2 < kSpreadThreshold;

    json doc;
    doc["dim"] = density.dim();
    doc["window"] = {kRateWindowStart, t_end};
    doc["threshold"] = kSpreadThreshold;
    doc["w1"] = {{"envelope", e1.label}, {"spread", spread1}, {"stable", stable1}};
    doc["w2"] = {{"envelope", e2.label}, {"spread", spread2}, {"stable", stable2}};
    doc["all_pass"] = stable1 && stable2;

    OutputSet out(args.out_dir);
    out.write("kinetic.csv", csv.str());
    out.write("rates_report.json", dump_report(doc));
    out.commit();

    if (!args.quiet) {
        std::cout << "n = " << density.dim() << ": W1/" << e1.label << " spread " << spread1
                  << ", W2/" << e2.label << " spread " << spread2 << " over t in ["
                  << kRateWindowStart << ", " << t_end << "]\n";
    }
    return (stable1 && stable2) ? 0 : 4;
}

// ---------------------------------------------------------------------------
// slowdecay: build a density whose alignment deficit dominates a prescribed
// slow envelope g and confirm the ordering g <= 1 - alpha <= W1 along the run.

int run_slowdecay_impl(const CommonArgs& args) {
    const json cfg = load_config(args.config_path);
    check_keys(cfg, "config", {"g", "eps", "dim", "t_end", "dt"});
    const json& gspec = require(cfg, "g", "config");
    if (!gspec.is_object()) throw ConfigError("g: expected an object");
    const std::string kind = get_str(gspec, "kind", "g");
    std::function<double(double)> g, g_prime;
    if (kind == "exp") {
        check_keys(gspec, "g", {"kind", "c", "tau"});
        const double c = get_num(gspec, "c", "g");
        const double tau = positive(get_num(gspec, "tau", "g"), "g.tau");
        g = [c, tau](double t) { return c * std::exp(-t / tau); };
        g_prime = [c, tau](double t) { return -c / tau * std::exp(-t / tau); };
    } else if (kind == "const") {
        check_keys(gspec, "g", {"kind", "c"});
        const double c = get_num(gspec, "c", "g");
        g = [c](double) { return c; };
        g_prime = [](double) { return 0.0; };
    } else {
        throw ConfigError("g.kind: expected \"exp\" or \"const\"");
    }
    const double eps = positive(get_num(cfg, "eps", "config"), "config.eps");
    const std::size_t dim = get_uint_or(cfg, "dim", 2, "config");
    const double t_end = positive(get_num_or(cfg, "t_end", 40.0, "config"), "config.t_end");
    const double dt = positive(get_num_or(cfg, "dt", 0.1, "config"), "config.dt");

    const RadialDensity density = slow_decay_density(g, g_prime, eps, dim);
    const AxisymSolution sol = solve_lambda(density, t_end, dt);

    const std::vector<double>& times = sol.times();
    double min_deficit_margin = std::numeric_limits<double>::infinity();
    double min_w1_margin = std::numeric_limits<double>::infinity();
    std::ostringstream csv;
    csv << "t,g,one_minus_alpha,w1\n";
    for (std::size_t k = 0; k < times.size(); ++k) {
        const double lam = sol.lambda_series()[k];
        const double gt = g(times[k]);
        // 2(1 - alpha) keeps full relative accuracy where 1 - alpha itself
        // would round away against 1.
        const double deficit = 0.5 * w2sq_to_dirac(density, lam);
        const double w1 = w1_to_dirac(density, lam);
        min_deficit_margin = std::min(min_deficit_margin, deficit - gt);
        min_w1_margin = std::min(min_w1_margin, w1 - deficit);
        csv << fmt(times[k]) << ',' << fmt(gt) << ',' << fmt(deficit) << ',' << fmt(w1) << '\n';
    }
    const bool deficit_dominates = min_deficit_margin >= -1e-8;
    const bool w1_dominates = min_w1_margin >= -1e-8;

    json doc;
    doc["dim"] = dim;
    doc["eps"] = eps;
    doc["t_end"] = t_end;
    doc["alpha0"] = sol.alpha_series().front();
    doc["min_deficit_margin"] = min_deficit_margin;
    doc["min_w1_margin"] = min_w1_margin;
    doc["deficit_dominates"] = deficit_dominates;
    doc["w1_dominates"] = w1_dominates;
    doc["all_pass"] = deficit_dominates && w1_dominates;

    OutputSet out(args.out_dir);
    out.write("slowdecay.csv", csv.str());
    out.write("slowdecay_report.json", dump_report(doc));
    out.commit();

    if (!args.quiet) {
        std::cout << "alpha(0) = " << sol.alpha_series().front()
                  << "; min margins: deficit-above-g " << min_deficit_margin
                  << ", w1-above-deficit " << min_w1_margin << "\n";
    }
    return (deficit_dominates && w1_dominates) ? 0 : 4;
}

// ---------------------------------------------------------------------------
// measure: sample an initial measure, evolve it, and audit the weak limit
// (aligned Dirac, or a two-atom state with mass on the backward point).

MeasureSpec parse_measure_spec(const json& s) {
    if (!s.is_object()) throw ConfigError("spec: expected an object");
    check_keys(s, "spec", {"density", "atoms"});

    std::vector<MeasureSpec::Atom> atoms;
    if (const auto it = s.find("atoms"); it != s.end()) {
        if (!it->is_array()) throw ConfigError("spec.atoms: expected an array");
        for (std::size_t i = 0; i < it->size(); ++i) {
            const json& a = (*it)[i];
            const std::string ctx = "spec.atoms[" + std::to_string(i) + "]";
            if (!a.is_object()) throw ConfigError(ctx + ": expected an object");
            check_keys(a, ctx, {"point", "mass"});
            atoms.push_back({parse_unit_vector(require(a, "point", ctx), ctx + ".point"),
                             get_num(a, "mass", ctx)});
        }
    }

    const json* density = nullptr;
    if (const auto it = s.find("density"); it != s.end() && !it->is_null()) density = &*it;

    try {
        if (density == nullptr) {
            if (atoms.empty()) throw ConfigError("spec: needs a density, atoms, or both");
            return MeasureSpec::atoms_only(std::move(atoms));
        }
        if (!density->is_object()) throw ConfigError("spec.density: expected an object or null");
        check_keys(*density, "spec.density", {"kind", "dim", "beta", "mass"});
        const std::string kind = get_str(*density, "kind", "spec.density");
        if (kind != "tilted") {
            throw ConfigError("spec.density.kind: only \"tilted\" densities are supported");
        }
        const std::size_t dim = as_uint(require(*density, "dim", "spec.density"), "spec.density.dim");
        const double beta = get_num(*density, "beta", "spec.density");
        const double mass = get_num_or(*density, "mass", 1.0, "spec.density");
        return MeasureSpec::tilted(dim, beta, mass, std::move(atoms));
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("spec: ") + e.what());
    }
}

int run_measure_impl(const CommonArgs& args) {
    const json cfg = load_config(args.config_path);
    check_keys(cfg, "config", {"seed", "spec", "count", "horizon", "w1_tol", "dt"});
    const MeasureSpec spec = parse_measure_spec(require(cfg, "spec", "config"));
    const std::uint64_t seed =
        args.seed ? *args.seed : get_uint_or(cfg, "seed", 0, "config");
    const auto count = static_cast<std::size_t>(get_uint_or(cfg, "count", 0, "config"));
    const double horizon = positive(get_num(cfg, "horizon", "config"), "config.horizon");
    const double w1_tol = positive(get_num_or(cfg, "w1_tol", 1e-2, "config"), "config.w1_tol");
    const double dt = positive(get_num_or(cfg, "dt", 1e-3, "config"), "config.dt");

    TwoAtomReport report;
    try {
        report = verify_two_atom_limit(spec, count, seed, horizon, w1_tol, dt);
    } catch (const std::invalid_argument& e) {
        throw ConfigError(std::string("config: ") + e.what());
    }

    std::ostringstream csv;
    csv << "t,j_norm,w1,mass_plus,mass_minus,mass_undecided\n";
    for (std::size_t k = 0; k < report.times.size(); ++k) {
        const MassSplit& split = report.split_series[k];
        csv << fmt(report.times[k]) << ',' << fmt(report.j_norm_series[k]) << ','
            << fmt(report.w1_series[k]) << ',' << fmt(split.plus) << ',' << fmt(split.minus)
            << ',' << fmt(split.undecided) << '\n';
    }

    OutputSet out(args.out_dir);
    out.write("measure.csv", csv.str());
    out.write("two_atom_report.json", to_json_string(report));
    out.commit();

    if (!args.quiet) {
        if (report.back_index) {
            std::cout << "back atom: particle " << *report.back_index << " with mass "
                      << report.back_mass;
        } else {
            std::cout << "no back atom";
        }
        std::cout << "; final |J| = " << report.final_j_norm << "; final W1 = " << report.final_w1
                  << " (tol " << report.w1_tol << ")\n";
    }
    return report.all_pass ? 0 : 4;
}

} // namespace

int run_particles(const CommonArgs& args) { return run_particles_impl(args); }
int run_vback(const CommonArgs& args) { return run_vback_impl(args); }
int run_kinetic(const CommonArgs& args) { return run_kinetic_impl(args); }
int run_slowdecay(const CommonArgs& args) { return run_slowdecay_impl(args); }
int run_measure(const CommonArgs& args) { return run_measure_impl(args); }

} // namespace spherealign::cli
