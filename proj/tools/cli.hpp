#pragma once

// Command-line front end: compile, eval, cost, simulate, verify.
// Exit codes: 0 success, 1 domain error, 2 usage error.

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <iomanip>
#include <ostream>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <json.hpp>

#include "dualcbf/dualcbf.hpp"

namespace dualcbf::cli {

namespace fs = std::filesystem;

struct UsageError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

inline std::vector<double> parse_vector(const std::string& text, const char* what) {
    std::vector<double> out;
    std::stringstream ss(text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        double v = 0.0;
        const char* b = item.data();
        const char* e = item.data() + item.size();
        while (b < e && *b == ' ') ++b;
        if (b < e && *b == '+') ++b;
        const auto res = std::from_chars(b, e, v);
        if (res.ec != std::errc{} || res.ptr != e) throw UsageError(std::string("bad number '") + item + "' in " + what);
        out.push_back(v);
    }
    if (out.empty()) throw UsageError(std::string(what) + " is empty");
    return out;
}

inline std::string num(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

inline std::string list(const std::vector<double>& v) {
    std::string s = "[";
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? ", " : "") + num(v[i]);
    return s + "]";
}

inline std::string sanitize_identifier(const std::string& raw) {
    std::string s;
    for (char c : raw) s += std::isalnum(static_cast<unsigned char>(c)) ? c : '_';
    if (s.empty() || std::isdigit(static_cast<unsigned char>(s[0]))) s = "cbf_" + s;
    return s;
}

inline DynamicsId resolve_dynamics(const std::string& flag, const ModelFile& model) {
    if (!flag.empty()) return parse_dynamics_id(flag);
    if (model.metadata.dynamics) return parse_dynamics_id(*model.metadata.dynamics);
    throw UsageError("no --dynamics given and the model metadata names none");
}

// ---------------------------------------------------------------------------

inline int cmd_compile(const std::string& model_path, std::string prefix, bool f64, int order,
                       const std::string& with_dynamics, const std::string& out_path, std::ostream& out) {
    const ModelFile model = load_model(model_path);
    CodegenConfig cfg;
    if (prefix.empty())
        prefix = sanitize_identifier(model.metadata.name.empty() ? fs::path(model_path).stem().string()
                                                                 : model.metadata.name);
    cfg.symbol_prefix = prefix;
    cfg.scalar_width = f64 ? 64 : 32;
    cfg.order = order;
    if (!with_dynamics.empty()) cfg.include_dynamics = parse_dynamics_id(with_dynamics);
    const GeneratedUnit unit = emit(model.net, cfg);
    const ZeroAllocReport check = check_zero_alloc(unit);
    if (!check.passed()) throw Error("emitted source failed the zero-allocation check");

    fs::path header;
    const bool to_dir = out_path.empty() || out_path.back() == '/' || fs::is_directory(out_path);
    if (to_dir) {
        const fs::path dir = out_path.empty() ? fs::path(".") : fs::path(out_path);
        fs::create_directories(dir);
        header = dir / (prefix + ".h");
    } else {
        header = out_path;
        if (header.has_parent_path()) fs::create_directories(header.parent_path());
    }
    fs::path manifest = header;
    manifest.replace_extension(".manifest.json");
    std::ofstream(header, std::ios::binary) << unit.source;
    std::ofstream(manifest, std::ios::binary) << unit.manifest.to_json();
    if (!fs::exists(header) || !fs::exists(manifest)) throw IoError("could not write " + header.string());
    out << "wrote " << header.string() << " (" << unit.manifest.scalar << ", order " << order << ", scratch "
        << unit.manifest.scratch_scalars << " scalars, digest fnv1a64:" << unit.manifest.digest << ")\n"
        << "wrote " << manifest.string() << "\n";
    return 0;
}

inline int cmd_eval(const std::string& model_path, const std::string& x_text, const std::string& v_text,
                    const std::string& dynamics, int order, bool json, std::ostream& out) {
    const ModelFile model = load_model(model_path);
    const std::vector<double> x = parse_vector(x_text, "--x");
    if (!v_text.empty()) {
        const std::vector<double> v = parse_vector(v_text, "--v");
        const Dual<double> d = dual_forward<double>(model.net, x, v);
        if (json) {
            out << nlohmann::json{{"h", d.re}, {"directional", d.du}}.dump(2) << "\n";
        } else {
            out << "h = " << num(d.re) << "\ndirectional = " << num(d.du) << "\n";
        }
        return 0;
    }
    const DynamicsModel dyn = make_dynamics(resolve_dynamics(dynamics, model));
    const CbfConstraint c = order == 2 ? assemble_second_order(model.net, dyn, x) : assemble(model.net, dyn, x);
    if (json) {
        nlohmann::json j{{"h", c.h}, {"Lf", c.Lf}, {"LG", c.LG}, {"order", c.order()}};
        if (c.second) {
            j["Lf2"] = c.second->Lf2;
            j["LGLf"] = c.second->LGLf;
        }
        out << j.dump(2) << "\n";
    } else {
        out << "h = " << num(c.h) << "\nLf = " << num(c.Lf) << "\nLG = " << list(c.LG) << "\n";
        if (c.second) out << "Lf2 = " << num(c.second->Lf2) << "\nLGLf = " << list(c.second->LGLf) << "\n";
    }
    return 0;
}

inline int cmd_cost(const std::string& widths_text, const std::string& act_text, std::size_t m,
                    const std::string& format, std::ostream& out) {
    std::vector<std::size_t> widths;
    for (double w : parse_vector(widths_text, "--widths")) {
        if (w < 1 || w != std::floor(w)) throw UsageError("--widths must be positive integers");
        widths.push_back(static_cast<std::size_t>(w));
    }
    std::vector<Activation> acts;
    std::stringstream ss(act_text);
    std::string item;
    while (std::getline(ss, item, ',')) {
        const auto kind = parse_activation(item);
        if (!kind) throw UsageError("unknown activation '" + item + "'");
        acts.push_back(*kind);
    }
    const std::size_t hidden = widths.size() >= 2 ? widths.size() - 2 : 0;
    if (acts.size() == 1 && hidden != 1) acts.assign(hidden, acts.front());
    const CostReport r = closed_form(widths, acts, m);

    std::string arch;
    for (std::size_t i = 0; i < widths.size(); ++i) arch += (i ? "-" : "") + std::to_string(widths[i]);
    auto ledger_json = [](const TranscendentalLedger& l) {
        nlohmann::json j = nlohmann::json::object();
        for (Activation k : kAllActivations)
            if (l[index_of(k)]) j[std::string(name_of(k))] = l[index_of(k)];
        return j;
    };
    if (format == "json") {
        std::vector<std::string> names;
        for (Activation a : acts) names.emplace_back(name_of(a));
        nlohmann::json j{{"widths", widths},
                         {"activations", names},
                         {"m", m},
                         {"C_f", r.C_f},
                         {"C_df", r.C_df},
                         {"C_ad", r.C_ad},
                         {"constraint_total_dual", r.constraint_total_dual},
                         {"constraint_total_reverse", r.constraint_total_reverse},
                         {"n_theta", r.n_theta},
                         {"m_df", r.m_df},
                         {"m_ad", r.m_ad},
                         {"m_df_bytes_f32", r.m_df_bytes_f32()},
                         {"m_ad_bytes_f32", r.m_ad_bytes_f32()},
                         {"transcendentals_forward", ledger_json(r.ledger_forward)},
                         {"transcendentals_dual", ledger_json(r.ledger_dual)},
                         {"transcendentals_reverse", ledger_json(r.ledger_reverse)},
                         {"notes", r.notes}};
        out << j.dump(2) << "\n";
        return 0;
    }
    if (format != "table") throw UsageError("--format must be table or json");
    auto row = [&](const std::string& k, const std::string& v) { out << k << "=" << v << "\n"; };
    std::string act_names;
    for (std::size_t i = 0; i < acts.size(); ++i) act_names += (i ? "," : "") + std::string(name_of(acts[i]));
    row("architecture", arch + " (" + (act_names.empty() ? "affine" : act_names) + "), m = " + std::to_string(m));
    row("C_f", std::to_string(r.C_f));
    row("C_df", std::to_string(r.C_df));
    row("C_ad", std::to_string(r.C_ad));
    row("dual total", std::to_string(r.constraint_total_dual) + "  ((m+1) C_df)");
    row("reverse total", std::to_string(r.constraint_total_reverse) + "  (C_ad + (m+1)(2 n0 - 1))");
    row("n_theta", std::to_string(r.n_theta));
    row("m_df", std::to_string(r.m_df) + " floats (" + std::to_string(r.m_df_bytes_f32()) + " bytes f32)");
    row("m_ad", std::to_string(r.m_ad) + " floats (" + std::to_string(r.m_ad_bytes_f32()) + " bytes f32)");
    std::string led;
    for (Activation k : kAllActivations)
        if (r.ledger_dual[index_of(k)])
            led += (led.empty() ? "" : ", ") + std::string(name_of(k)) + " " + std::to_string(r.ledger_dual[index_of(k)]);
    row("transcendental", (led.empty() ? std::string("none") : led) + " per dual pass");
    for (const auto& n : r.notes) row("note", n);
    return 0;
}

inline int cmd_simulate(const std::string& config_path, const std::string& out_dir, std::ostream& out) {
    SimConfig cfg = load_sim_config(config_path);
    fs::create_directories(out_dir);
    auto run_one = [&](bool filtered, const std::string& file) {
        SimConfig c = cfg;
        c.filter = filtered;
        const Trajectory t = simulate(c);
        export_csv(t, fs::path(out_dir) / file);
        double min_slack = std::numeric_limits<double>::infinity();
        std::size_t active = 0;
        for (const auto& r : t.rows) {
            min_slack = std::min(min_slack, r.slack);
            active += r.filter_active;
        }
        out << file << ": " << t.rows.size() << " rows, min h = " << num(t.min_h())
            << ", min slack = " << num(min_slack) << ", filter active at " << active << " instants\n";
    };
    run_one(cfg.filter, "trajectory.csv");
    if (cfg.compare_unfiltered) run_one(false, "trajectory_unfiltered.csv");
    return 0;
}

inline int cmd_verify(const std::string& model_path, const std::string& dynamics, std::size_t samples,
                      std::uint64_t seed, std::ostream& out) {
    const ModelFile model = load_model(model_path);
    const NetworkSpec& net = model.net;
    const DynamicsModel dyn = make_dynamics(resolve_dynamics(dynamics, model));
    detail::check_dynamics(net, dyn);
    std::mt19937_64 rng(seed);
    auto draw_state = [&] {
        std::vector<double> x(net.input_width());
        for (double& v : x) v = uniform(rng, -2.0, 2.0);
        return x;
    };

    bool ok = true;
    auto line = [&](const std::string& status, const std::string& what, const std::string& detail) {
        out << std::left << std::setw(7) << status << std::setw(40) << what << detail << "\n";
    };
    out << std::left << std::setw(7) << "status" << std::setw(40) << "check" << "detail\n";

    // Operation counts.
    try {
        const auto rec = verify_against_instrumentation(net, dyn, draw_state());
        line("PASS", "instrumented counts = closed form",
             "C_f " + std::to_string(rec.C_f) + ", C_df " + std::to_string(rec.C_df) + ", C_ad " +
                 std::to_string(rec.C_ad) + ", dual total " + std::to_string(rec.constraint_total_dual) +
                 ", reverse total " + std::to_string(rec.constraint_total_reverse));
        line(rec.cache_matches() ? "PASS" : "FAIL", "reverse cache = sum 2 n_i",
             std::to_string(rec.cache_scalars) + " scalars");
        if (!rec.cache_matches()) ok = false;
        line(rec.scratch_matches() ? "PASS" : "NOTE", "dual scratch vs 2 max n_i",
             std::to_string(rec.dual_scratch_scalars) + " scalars used, closed form " +
                 std::to_string(rec.expected.m_df - rec.expected.n_theta) +
                 " (a layer transition keeps its input alive while writing its output)");
        if (rec.hyper_pass) line("INFO", "hyper-dual pass (measured)", std::to_string(rec.hyper_pass) + " ops");
    } catch (const CountMismatch& e) {
        line("FAIL", "instrumented counts = closed form", e.what());
        ok = false;
    }

    // Dual vs reverse.
    std::uint64_t max_ulp = 0;
    double max_scaled = 0.0;
    std::size_t batched_mismatch = 0;
    for (std::size_t s = 0; s < samples; ++s) {
        const auto x = draw_state();
        const auto f = dyn.drift(x);
        const auto G = dyn.input_matrix(x);
        const CbfConstraint fwd = assemble(net, x, f, G, dyn.m);
        const CbfConstraint rev = assemble_constraint_reverse(net, x, f, G, dyn.m);
        auto compare = [&](double a, double b, std::span<const double> dir) {
            max_ulp = std::max(max_ulp, ulp_distance(a, b));
            const double scale = condition_scale<double>(net, x, dir);
            if (scale > 0) max_scaled = std::max(max_scaled, std::abs(a - b) / (scale * 0x1.0p-52));
            else if (a != b) max_scaled = std::numeric_limits<double>::infinity();
        };
        compare(fwd.Lf, rev.Lf, f);
        for (std::size_t j = 0; j < dyn.m; ++j) {
            std::vector<double> col(net.input_width());
            for (std::size_t k = 0; k < col.size(); ++k) col[k] = G[k * dyn.m + j];
            compare(fwd.LG[j], rev.LG[j], col);
            const Dual<double> seq = dual_forward<double>(net, x, col);
            if (seq.du != fwd.LG[j] || seq.re != fwd.h) ++batched_mismatch;
        }
        if (fwd.h != rev.h) max_ulp = std::max(max_ulp, ulp_distance(fwd.h, rev.h));
    }
    const bool eq_ok = max_scaled <= 8.0;
    ok = ok && eq_ok;
    line(eq_ok ? "PASS" : "FAIL", "dual = reverse (Lf, LG)",
         std::to_string(samples) + " states, max |diff| " + num(max_scaled) +
             " eps x condition scale (bound 8); max raw ULP " + std::to_string(max_ulp));
    line(batched_mismatch == 0 ? "PASS" : "FAIL", "batched = sequential (bitwise)",
         std::to_string(batched_mismatch) + " mismatches");
    ok = ok && batched_mismatch == 0;

    // Generated code.
    CodegenConfig cg;
    cg.symbol_prefix = "verify";
    const GeneratedUnit unit = emit(net, cg);
    const auto alloc = check_zero_alloc(unit);
    line(alloc.passed() ? "PASS" : "FAIL", "generated code allocation-free",
         std::to_string(alloc.violations.size()) + " violations");
    ok = ok && alloc.passed();
    std::vector<std::pair<std::vector<double>, std::vector<double>>> probes;
    for (std::size_t s = 0; s < std::min<std::size_t>(samples, 200); ++s) probes.emplace_back(draw_state(), draw_state());
    const auto eq = interpretive_equivalence(net, unit, probes);
    line(eq.passed() ? "PASS" : "FAIL", "generated float code = library float",
         "max ULP value " + std::to_string(eq.max_ulp_value) + ", derivative " +
             std::to_string(eq.max_ulp_derivative) + " (bound " + std::to_string(eq.tolerance_ulp) + ")");
    ok = ok && eq.passed();

    out << (ok ? "verify: all checks passed\n" : "verify: FAILED\n");
    return ok ? 0 : 1;
}

// ---------------------------------------------------------------------------

/// Runs the tool on `args` (without the program name).
inline int run(std::vector<std::string> args, std::ostream& out, std::ostream& err) {
    CLI::App app{"dualcbf: forward-mode Lie derivatives and code generation for neural CBFs", "dualcbf"};
    app.require_subcommand(1);

    std::string model, prefix, with_dynamics, out_path, x_text, v_text, dynamics, widths, act = "relu",
                format = "table", config, out_dir = ".";
    bool f32 = false, f64 = false, json = false;
    int order = 1;
    std::size_t m = 1, samples = 1000;
    std::uint64_t seed = 1;

    auto* compile = app.add_subcommand("compile", "emit a self-contained header");
    compile->add_option("model", model, "model file")->required();
    compile->add_option("--prefix", prefix, "symbol prefix");
    auto* f32_flag = compile->add_flag("--f32", f32, "float scalars (default)");
    compile->add_flag("--f64", f64, "double scalars")->excludes(f32_flag);
    compile->add_option("--order", order, "1 or 2")->check(CLI::IsMember({1, 2}));
    compile->add_option("--with-dynamics", with_dynamics, "bundled dynamics to embed");
    compile->add_option("--out", out_path, "output file or directory");

    auto* eval = app.add_subcommand("eval", "evaluate h and its Lie derivatives");
    eval->add_option("model", model, "model file")->required();
    eval->add_option("--x", x_text, "state, comma separated")->required();
    eval->add_option("--v", v_text, "direction; prints the single directional derivative");
    eval->add_option("--dynamics", dynamics, "bicycle | vanderpol[:mu=..] | pendulum[:g=..,L=..,mass=..]");
    eval->add_option("--order", order, "1 or 2")->check(CLI::IsMember({1, 2}));
    eval->add_flag("--json", json, "machine-readable output");

    auto* cost = app.add_subcommand("cost", "closed-form operation and storage counts");
    cost->add_option("--widths", widths, "n0,...,nd")->required();
    cost->add_option("--act", act, "activation, or one per hidden layer");
    cost->add_option("--m", m, "input dimension")->check(CLI::PositiveNumber);
    cost->add_option("--format", format, "table | json")->check(CLI::IsMember({"table", "json"}));

    auto* sim = app.add_subcommand("simulate", "closed-loop run to CSV");
    sim->add_option("--config", config, "simulation config (JSON)")->required();
    sim->add_option("--out-dir", out_dir, "directory for CSV output");

    auto* verify = app.add_subcommand("verify", "equivalence and count checks on a model");
    verify->add_option("model", model, "model file")->required();
    verify->add_option("--dynamics", dynamics, "dynamics id (default: model metadata)");
    verify->add_option("--samples", samples, "random states")->check(CLI::PositiveNumber);
    verify->add_option("--seed", seed, "sampling seed");

    std::reverse(args.begin(), args.end());
    try {
        app.parse(args);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e, out, err);
        return code == 0 ? 0 : 2;
    }

    try {
        if (*compile) return cmd_compile(model, prefix, f64, order, with_dynamics, out_path, out);
        if (*eval) return cmd_eval(model, x_text, v_text, dynamics, order, json, out);
        if (*cost) return cmd_cost(widths, act, m, format, out);
        if (*sim) return cmd_simulate(config, out_dir, out);
        if (*verify) return cmd_verify(model, dynamics, samples, seed, out);
    } catch (const UsageError& e) {
        err << "error: " << e.what() << "\n";
        return 2;
    } catch (const ModelError& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const Error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    } catch (const std::filesystem::filesystem_error& e) {
        err << "error: " << e.what() << "\n";
        return 1;
    }
    return 2;
}

}  // namespace dualcbf::cli
