#pragma once

/**
 * @file simulator.hpp
 * @brief Fixed-step closed loop: RK4 at dt, control held over control_dt.
 *
 * At every control instant the constraint is assembled from the network,
 * the nominal input is filtered, and one trajectory row is recorded.
 */

#include <charconv>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <optional>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "dualcbf/dynamics.hpp"
#include "dualcbf/filter.hpp"
#include "dualcbf/lie.hpp"
#include "dualcbf/model_io.hpp"
#include "dualcbf/network.hpp"

namespace dualcbf {

enum class NominalKind { constant, proportional, scripted };

/// u_nom(t, x). Proportional: u = -K (x - target), K row-major m x n.
/// Scripted: piecewise constant, each entry active from its time on.
struct NominalPolicy {
    NominalKind kind = NominalKind::constant;
    std::vector<double> constant;
    std::vector<double> gain;
    std::vector<double> target;
    std::vector<std::pair<double, std::vector<double>>> schedule;

    std::vector<double> operator()(double t, std::span<const double> x, std::size_t m) const {
        switch (kind) {
            case NominalKind::constant:
                if (constant.empty()) return std::vector<double>(m, 0.0);
                if (constant.size() != m) throw DimensionMismatch("constant policy has wrong input dimension");
                return constant;
            case NominalKind::proportional: {
                const std::size_t n = x.size();
                if (gain.size() != m * n) throw DimensionMismatch("proportional gain must be m x n");
                std::vector<double> u(m, 0.0);
                for (std::size_t j = 0; j < m; ++j) {
                    double acc = 0.0;
                    for (std::size_t k = 0; k < n; ++k) acc -= gain[j * n + k] * (x[k] - (target.empty() ? 0.0 : target[k]));
                    u[j] = acc;
                }
                return u;
            }
            case NominalKind::scripted: {
                std::vector<double> u(m, 0.0);
                for (const auto& [start, value] : schedule) {
                    if (start > t + 1e-12) break;
                    if (value.size() != m) throw DimensionMismatch("scripted policy has wrong input dimension");
                    u = value;
                }
                return u;
            }
        }
        return std::vector<double>(m, 0.0);
    }
};

struct SimConfig {
    DynamicsId dynamics;
    NetworkSpec net;
    double t_final = 20.0;
    double dt = 1e-3;
    double control_dt = 1e-2;
    std::vector<double> x0;
    NominalPolicy nominal;
    ClassK alpha{1.0};
    HighOrderGains gains;
    int order = 1;
    std::optional<Box> bounds;
    bool filter = true;
    bool compare_unfiltered = false;
    std::uint64_t seed = 0;
    double noise_std = 0.0;  ///< Gaussian noise added to the nominal input

    /// Control instants after t = 0.
    std::size_t steps() const { return static_cast<std::size_t>(std::llround(t_final / control_dt)); }
    std::size_t substeps() const { return static_cast<std::size_t>(std::llround(control_dt / dt)); }

    void validate() const {
        if (!(dt > 0.0)) throw InvalidParameter("dt must be positive");
        if (!(control_dt >= dt)) throw InvalidParameter("control_dt must be at least dt");
        if (!(t_final >= control_dt)) throw InvalidParameter("t_final must be at least control_dt");
        if (std::abs(substeps() * dt - control_dt) > 1e-9 * control_dt)
            throw InvalidParameter("control_dt must be an integer multiple of dt");
        if (std::abs(steps() * control_dt - t_final) > 1e-9 * t_final)
            throw InvalidParameter("t_final must be an integer multiple of control_dt");
        if (order != 1 && order != 2) throw InvalidParameter("order must be 1 or 2");
        if (noise_std < 0.0) throw InvalidParameter("noise_std must be non-negative");
    }
};

struct TrajectoryRow {
    double t = 0.0;
    std::vector<double> x;
    std::vector<double> u;
    double h = 0.0;
    double Lf = 0.0;
    std::vector<double> LG;
    double slack = 0.0;
    bool filter_active = false;
    std::optional<SecondOrderTerms> second;

    bool operator==(const TrajectoryRow& o) const {
        const bool s = second.has_value() == o.second.has_value() &&
                       (!second || (second->Lf2 == o.second->Lf2 && second->LGLf == o.second->LGLf));
        return t == o.t && x == o.x && u == o.u && h == o.h && Lf == o.Lf && LG == o.LG && slack == o.slack &&
               filter_active == o.filter_active && s;
    }
};

struct Trajectory {
    std::size_t n = 0;
    std::size_t m = 0;
    int order = 1;
    std::vector<TrajectoryRow> rows;

    double min_h() const {
        double v = rows.empty() ? 0.0 : rows.front().h;
        for (const auto& r : rows) v = std::min(v, r.h);
        return v;
    }
    bool operator==(const Trajectory&) const = default;
};

namespace detail {

inline std::vector<double> closed_loop_rhs(const DynamicsModel& dyn, std::span<const double> x,
                                           std::span<const double> u) {
    auto dx = dyn.drift(x);
    const auto G = dyn.input_matrix(x);
    for (std::size_t i = 0; i < dyn.n; ++i)
        for (std::size_t j = 0; j < dyn.m; ++j) dx[i] += G[i * dyn.m + j] * u[j];
    return dx;
}

inline void rk4_step(const DynamicsModel& dyn, std::vector<double>& x, std::span<const double> u, double h) {
    const std::size_t n = x.size();
    std::vector<double> tmp(n);
    const auto k1 = closed_loop_rhs(dyn, x, u);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k1[i];
    const auto k2 = closed_loop_rhs(dyn, tmp, u);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + 0.5 * h * k2[i];
    const auto k3 = closed_loop_rhs(dyn, tmp, u);
    for (std::size_t i = 0; i < n; ++i) tmp[i] = x[i] + h * k3[i];
    const auto k4 = closed_loop_rhs(dyn, tmp, u);
    for (std::size_t i = 0; i < n; ++i) x[i] += h / 6.0 * (k1[i] + 2.0 * k2[i] + 2.0 * k3[i] + k4[i]);
}

}  // namespace detail

/// Runs the closed loop. Throws NumericalBlowup when ‖x‖ exceeds 1e6 and
/// Infeasible (with the control instant) when the filter has no solution.
inline Trajectory simulate(const SimConfig& cfg) {
    cfg.validate();
    const DynamicsModel dyn = make_dynamics(cfg.dynamics);
    detail::check_dynamics(cfg.net, dyn);
    if (cfg.x0.size() != dyn.n) throw DimensionMismatch("x0 has wrong dimension");
    if (cfg.order == 2 && !cfg.net.is_smooth())
        throw NonSmoothActivation("order 2 simulation needs twice differentiable activations");
    if (cfg.bounds) cfg.bounds->validate(dyn.m);

    Trajectory traj;
    traj.n = dyn.n;
    traj.m = dyn.m;
    traj.order = cfg.order;
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> noise(0.0, 1.0);

    std::vector<double> x = cfg.x0;
    const std::size_t steps = cfg.steps();
    const std::size_t sub = cfg.substeps();
    traj.rows.reserve(steps + 1);
    for (std::size_t k = 0; k <= steps; ++k) {
        const double t = static_cast<double>(k) * cfg.control_dt;
        TrajectoryRow row;
        row.t = t;
        row.x = x;
        const CbfConstraint c = cfg.order == 2 ? assemble_second_order(cfg.net, dyn, x) : assemble(cfg.net, dyn, x);
        std::vector<double> u_nom = cfg.nominal(t, x, dyn.m);
        if (cfg.noise_std > 0.0)
            for (double& v : u_nom) v += cfg.noise_std * noise(rng);

        if (cfg.filter) {
            try {
                const FilterResult r = cfg.order == 2 ? filter_second_order(c, u_nom, cfg.gains, cfg.bounds)
                                                      : filter(c, u_nom, cfg.alpha, cfg.bounds);
                row.u = r.u_star;
                row.filter_active = r.active;
            } catch (const Infeasible& e) {
                throw Infeasible(std::string(e.what()) + " at t = " + std::to_string(t), t);
            }
        } else {
            row.u = u_nom;
            if (cfg.bounds)
                for (std::size_t j = 0; j < dyn.m; ++j) row.u[j] = cfg.bounds->clamp(j, row.u[j]);
        }
        row.h = c.h;
        row.Lf = c.Lf;
        row.LG = c.LG;
        if (cfg.order == 2) {
            const auto [a, b] = second_order_row(c, cfg.gains);
            double g = 0.0;
            for (std::size_t j = 0; j < a.size(); ++j) g += a[j] * row.u[j];
            row.slack = g - b;
            row.second = c.second;
        } else {
            row.slack = c.hdot(row.u) + cfg.alpha(c.h);
        }
        traj.rows.push_back(row);

        if (k == steps) break;
        for (std::size_t s = 0; s < sub; ++s) {
            detail::rk4_step(dyn, x, row.u, cfg.dt);
            double norm = 0.0;
            for (double v : x) norm += v * v;
            if (!(std::sqrt(norm) <= 1e6)) {
                const double when = t + static_cast<double>(s + 1) * cfg.dt;
                throw NumericalBlowup("state norm exceeded 1e6 at t = " + std::to_string(when), when);
            }
        }
    }
    return traj;
}

// ---------------------------------------------------------------------------
// CSV
// ---------------------------------------------------------------------------

namespace detail {

inline std::string format_number(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, res.ptr);
}

}  // namespace detail

/// Column names in file order:
/// t, x0..x{n-1}, u0..u{m-1}, h, Lf, LG0..LG{m-1}, slack, filter_active,
/// and for order 2: Lf2, LGLf0..LGLf{m-1}.
inline std::vector<std::string> csv_columns(std::size_t n, std::size_t m, int order) {
    std::vector<std::string> cols{"t"};
    for (std::size_t i = 0; i < n; ++i) cols.push_back("x" + std::to_string(i));
    for (std::size_t j = 0; j < m; ++j) cols.push_back("u" + std::to_string(j));
    cols.push_back("h");
    cols.push_back("Lf");
    for (std::size_t j = 0; j < m; ++j) cols.push_back("LG" + std::to_string(j));
    cols.push_back("slack");
    cols.push_back("filter_active");
    if (order == 2) {
        cols.push_back("Lf2");
        for (std::size_t j = 0; j < m; ++j) cols.push_back("LGLf" + std::to_string(j));
    }
    return cols;
}

inline std::string to_csv(const Trajectory& traj) {
    std::string out;
    const auto cols = csv_columns(traj.n, traj.m, traj.order);
    for (std::size_t i = 0; i < cols.size(); ++i) out += (i ? "," : "") + cols[i];
    out += '\n';
    for (const auto& r : traj.rows) {
        std::vector<std::string> cells{detail::format_number(r.t)};
        for (double v : r.x) cells.push_back(detail::format_number(v));
        for (double v : r.u) cells.push_back(detail::format_number(v));
        cells.push_back(detail::format_number(r.h));
        cells.push_back(detail::format_number(r.Lf));
        for (double v : r.LG) cells.push_back(detail::format_number(v));
        cells.push_back(detail::format_number(r.slack));
        cells.push_back(r.filter_active ? "1" : "0");
        if (traj.order == 2) {
            cells.push_back(detail::format_number(r.second ? r.second->Lf2 : 0.0));
            for (std::size_t j = 0; j < traj.m; ++j)
                cells.push_back(detail::format_number(r.second ? r.second->LGLf[j] : 0.0));
        }
        for (std::size_t i = 0; i < cells.size(); ++i) out += (i ? "," : "") + cells[i];
        out += '\n';
    }
    return out;
}

inline void export_csv(const Trajectory& traj, const std::filesystem::path& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write " + path.string());
    out << to_csv(traj);
    if (!out) throw IoError("write failed for " + path.string());
}

/// Parses a CSV written by to_csv. Dimensions are recovered from the header.
inline Trajectory parse_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    if (!std::getline(in, line)) throw IoError("empty trajectory file");
    std::vector<std::string> header;
    {
        std::istringstream h(line);
        std::string cell;
        while (std::getline(h, cell, ',')) header.push_back(cell);
    }
    Trajectory traj;
    for (const auto& c : header) {
        if (c.size() > 1 && c[0] == 'x') ++traj.n;
        if (c.size() > 1 && c[0] == 'u') ++traj.m;
    }
    traj.order = std::find(header.begin(), header.end(), "Lf2") != header.end() ? 2 : 1;
    if (header != csv_columns(traj.n, traj.m, traj.order)) throw IoError("unexpected trajectory header");
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        std::vector<double> v;
        std::istringstream row(line);
        std::string cell;
        while (std::getline(row, cell, ',')) {
            double d = 0.0;
            const auto res = std::from_chars(cell.data(), cell.data() + cell.size(), d);
            if (res.ec != std::errc{}) throw IoError("bad number '" + cell + "' in trajectory");
            v.push_back(d);
        }
        if (v.size() != header.size()) throw IoError("trajectory row has wrong column count");
        TrajectoryRow r;
        std::size_t i = 0;
        r.t = v[i++];
        r.x.assign(v.begin() + static_cast<long>(i), v.begin() + static_cast<long>(i + traj.n));
        i += traj.n;
        r.u.assign(v.begin() + static_cast<long>(i), v.begin() + static_cast<long>(i + traj.m));
        i += traj.m;
        r.h = v[i++];
        r.Lf = v[i++];
        r.LG.assign(v.begin() + static_cast<long>(i), v.begin() + static_cast<long>(i + traj.m));
        i += traj.m;
        r.slack = v[i++];
        r.filter_active = v[i++] != 0.0;
        if (traj.order == 2) {
            SecondOrderTerms s;
            s.Lf2 = v[i++];
            s.LGLf.assign(v.begin() + static_cast<long>(i), v.begin() + static_cast<long>(i + traj.m));
            r.second = std::move(s);
        }
        traj.rows.push_back(std::move(r));
    }
    return traj;
}

inline Trajectory read_csv(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_csv(buf.str());
}

// ---------------------------------------------------------------------------
// Config files
// ---------------------------------------------------------------------------

/// Reads a JSON simulation config. `model` is resolved against `base_dir`.
/// Missing alpha / bounds fall back to the model metadata.
inline SimConfig parse_sim_config(const std::string& text, const std::filesystem::path& base_dir) {
    nlohmann::json doc;
    try {
        doc = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        const auto [line, column] = detail::line_column(text, e.byte > 0 ? e.byte - 1 : 0);
        throw SyntaxError(std::string("config: ") + e.what(), line, column);
    }
    try {
        SimConfig cfg;
        const std::filesystem::path model_path = base_dir / doc.at("model").get<std::string>();
        const ModelFile model = load_model(model_path);
        cfg.net = model.net;
        if (doc.contains("dynamics")) {
            cfg.dynamics = parse_dynamics_id(doc.at("dynamics").get<std::string>());
        } else if (model.metadata.dynamics) {
            cfg.dynamics = parse_dynamics_id(*model.metadata.dynamics);
        } else {
            throw InvalidParameter("config names no dynamics and the model metadata has none");
        }
        cfg.t_final = doc.value("t_final", cfg.t_final);
        cfg.dt = doc.value("dt", cfg.dt);
        cfg.control_dt = doc.value("control_dt", cfg.control_dt);
        cfg.x0 = doc.at("x0").get<std::vector<double>>();
        cfg.order = doc.value("order", 1);
        cfg.filter = doc.value("filter", true);
        cfg.compare_unfiltered = doc.value("compare_unfiltered", false);
        cfg.seed = doc.value("seed", std::uint64_t{0});
        cfg.noise_std = doc.value("noise_std", 0.0);
        cfg.alpha = ClassK(doc.value("alpha", model.metadata.alpha_gain.value_or(1.0)));
        cfg.gains.gamma1 = doc.value("gamma1", 1.0);
        cfg.gains.gamma2 = doc.value("gamma2", 1.0);

        std::vector<std::pair<double, double>> bounds = model.metadata.input_bounds;
        if (doc.contains("bounds")) {
            bounds.clear();
            if (!doc["bounds"].is_null())
                for (const auto& p : doc["bounds"]) bounds.emplace_back(p.at(0).get<double>(), p.at(1).get<double>());
        }
        if (!bounds.empty()) {
            Box box;
            for (const auto& [lo, hi] : bounds) {
                box.lower.push_back(lo);
                box.upper.push_back(hi);
            }
            cfg.bounds = std::move(box);
        }

        if (doc.contains("nominal")) {
            const auto& nom = doc["nominal"];
            const std::string kind = nom.value("kind", "constant");
            if (kind == "constant") {
                cfg.nominal.kind = NominalKind::constant;
                cfg.nominal.constant = nom.value("u", std::vector<double>{});
            } else if (kind == "proportional") {
                cfg.nominal.kind = NominalKind::proportional;
                for (const auto& row : nom.at("gain"))
                    for (const auto& v : row) cfg.nominal.gain.push_back(v.get<double>());
                cfg.nominal.target = nom.value("target", std::vector<double>{});
            } else if (kind == "scripted") {
                cfg.nominal.kind = NominalKind::scripted;
                for (const auto& step : nom.at("schedule"))
                    cfg.nominal.schedule.emplace_back(step.at("t").get<double>(),
                                                      step.at("u").get<std::vector<double>>());
            } else {
                throw InvalidParameter("unknown nominal policy '" + kind + "'");
            }
        }
        cfg.validate();
        return cfg;
    } catch (const nlohmann::json::exception& e) {
        throw ShapeError(std::string("config: ") + e.what());
    }
}

inline SimConfig load_sim_config(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open config " + path.string());
    std::ostringstream buf;
    buf << in.rdbuf();
    return parse_sim_config(buf.str(), path.parent_path());
}

}  // namespace dualcbf
