#pragma once

/**
 * @file dynamics.hpp
 * @brief Control-affine systems ẋ = f(x) + G(x)u and the bundled registry
 *        (kinematic bicycle, controlled Van der Pol, inverted pendulum).
 */

#include <cmath>
#include <cstdio>
#include <functional>
#include <iostream>
#include <map>
#include <span>
#include <string>
#include <vector>

#include "dualcbf/error.hpp"

namespace dualcbf {

using VectorField = std::function<std::vector<double>(std::span<const double>)>;

/// f, G and the Jacobian f' of a control-affine system. G and f' are returned
/// row-major (n x m and n x n). `jacobian` may be empty.
struct DynamicsModel {
    std::string name;
    std::size_t n = 0;
    std::size_t m = 0;
    VectorField drift;
    VectorField input_matrix;
    VectorField jacobian;
    bool jacobian_is_approximate = false;

    bool has_jacobian() const { return static_cast<bool>(jacobian); }
};

enum class SystemKind { bicycle, vanderpol, pendulum };

/// Bundled system plus its physical parameters. Only the fields of the chosen
/// kind are used.
struct DynamicsId {
    SystemKind kind = SystemKind::vanderpol;
    double wheelbase = 2.5;  ///< bicycle ℓ_w
    double mu = 1.0;         ///< Van der Pol damping
    double gravity = 9.81;   ///< pendulum g
    double length = 1.0;     ///< pendulum L
    double mass = 1.0;       ///< pendulum mass

    bool operator==(const DynamicsId&) const = default;
};

inline std::string system_name(SystemKind kind) {
    switch (kind) {
        case SystemKind::bicycle: return "bicycle";
        case SystemKind::vanderpol: return "vanderpol";
        case SystemKind::pendulum: return "pendulum";
    }
    return "?";
}

/// Parameter names and values of `id`, in a fixed order.
inline std::vector<std::pair<std::string, double>> parameters_of(const DynamicsId& id) {
    switch (id.kind) {
        case SystemKind::bicycle: return {{"wheelbase", id.wheelbase}};
        case SystemKind::vanderpol: return {{"mu", id.mu}};
        case SystemKind::pendulum: return {{"g", id.gravity}, {"L", id.length}, {"mass", id.mass}};
    }
    return {};
}

inline void validate(const DynamicsId& id) {
    for (const auto& [key, value] : parameters_of(id)) {
        if (!(value > 0.0) || !std::isfinite(value))
            throw InvalidParameter(system_name(id.kind) + " parameter " + key + " must be positive and finite");
    }
}

/// Sets one named parameter on `id`.
inline void set_parameter(DynamicsId& id, const std::string& key, double value) {
    switch (id.kind) {
        case SystemKind::bicycle:
            if (key == "wheelbase" || key == "lw") return void(id.wheelbase = value);
            break;
        case SystemKind::vanderpol:
            if (key == "mu") return void(id.mu = value);
            break;
        case SystemKind::pendulum:
            if (key == "g" || key == "gravity") return void(id.gravity = value);
            if (key == "L" || key == "length") return void(id.length = value);
            if (key == "mass" || key == "m") return void(id.mass = value);
            break;
    }
    throw InvalidParameter("unknown parameter '" + key + "' for " + system_name(id.kind));
}

/// Parses "bicycle", "vanderpol:mu=2", "pendulum:g=9.81,L=0.5,mass=2".
inline DynamicsId parse_dynamics_id(const std::string& text) {
    const auto colon = text.find(':');
    const std::string head = text.substr(0, colon);
    DynamicsId id;
    if (head == "bicycle") {
        id.kind = SystemKind::bicycle;
    } else if (head == "vanderpol" || head == "vdp") {
        id.kind = SystemKind::vanderpol;
    } else if (head == "pendulum") {
        id.kind = SystemKind::pendulum;
    } else {
        throw InvalidParameter("unknown dynamics '" + head + "' (expected bicycle, vanderpol or pendulum)");
    }
    if (colon != std::string::npos) {
        std::string rest = text.substr(colon + 1);
        std::size_t start = 0;
        while (start <= rest.size()) {
            const auto comma = rest.find(',', start);
            const std::string item = rest.substr(start, comma == std::string::npos ? std::string::npos : comma - start);
            if (!item.empty()) {
                const auto eq = item.find('=');
                if (eq == std::string::npos) throw InvalidParameter("expected key=value, got '" + item + "'");
                double value = 0.0;
                try {
                    std::size_t used = 0;
                    value = std::stod(item.substr(eq + 1), &used);
                    if (used != item.size() - eq - 1) throw std::invalid_argument(item);
                } catch (const std::exception&) {
                    throw InvalidParameter("bad number in '" + item + "'");
                }
                set_parameter(id, item.substr(0, eq), value);
            }
            if (comma == std::string::npos) break;
            start = comma + 1;
        }
    }
    validate(id);
    return id;
}

inline std::string to_string(const DynamicsId& id) {
    std::string out = system_name(id.kind);
    char sep = ':';
    for (const auto& [key, value] : parameters_of(id)) {
        char buf[64];
        std::snprintf(buf, sizeof buf, "%c%s=%.17g", sep, key.c_str(), value);
        out += buf;
        sep = ',';
    }
    return out;
}

namespace detail {

inline void check_state(std::span<const double> x, std::size_t n, const std::string& name) {
    if (x.size() != n)
        throw DimensionMismatch(name + " expects a state of dimension " + std::to_string(n) + ", got " +
                                std::to_string(x.size()));
}

}  // namespace detail

/// Builds f, G and f' for a bundled system.
///
///   bicycle   x = [p_x, p_y, ψ, v], u = [a, δ]
///             f = [v cos ψ, v sin ψ, 0, 0],  G = [[0,0],[0,0],[0, v/ℓ_w],[1,0]]
///   vanderpol f = [x₂, μ(1 - x₁²)x₂ - x₁],  G = [0, 1]ᵀ
///   pendulum  f = [x₂, (g/L) sin x₁],        G = [0, 1/(mass L²)]ᵀ
inline DynamicsModel make_dynamics(const DynamicsId& id) {
    validate(id);
    DynamicsModel model;
    model.name = system_name(id.kind);
    switch (id.kind) {
        case SystemKind::bicycle: {
            const double lw = id.wheelbase;
            model.n = 4;
            model.m = 2;
            model.drift = [](std::span<const double> x) {
                detail::check_state(x, 4, "bicycle");
                return std::vector<double>{x[3] * std::cos(x[2]), x[3] * std::sin(x[2]), 0.0, 0.0};
            };
            model.input_matrix = [lw](std::span<const double> x) {
                detail::check_state(x, 4, "bicycle");
                return std::vector<double>{0.0, 0.0, 0.0, 0.0, 0.0, x[3] / lw, 1.0, 0.0};
            };
            model.jacobian = [](std::span<const double> x) {
                detail::check_state(x, 4, "bicycle");
                const double c = std::cos(x[2]);
                const double s = std::sin(x[2]);
                return std::vector<double>{0.0, 0.0, -x[3] * s, c,  //
                                           0.0, 0.0, x[3] * c,  s,  //
                                           0.0, 0.0, 0.0,       0.0,  //
                                           0.0, 0.0, 0.0,       0.0};
            };
            break;
        }
        case SystemKind::vanderpol: {
            const double mu = id.mu;
            model.n = 2;
            model.m = 1;
            model.drift = [mu](std::span<const double> x) {
                detail::check_state(x, 2, "vanderpol");
                return std::vector<double>{x[1], mu * (1.0 - x[0] * x[0]) * x[1] - x[0]};
            };
            model.input_matrix = [](std::span<const double> x) {
                detail::check_state(x, 2, "vanderpol");
                return std::vector<double>{0.0, 1.0};
            };
            model.jacobian = [mu](std::span<const double> x) {
                detail::check_state(x, 2, "vanderpol");
                return std::vector<double>{0.0, 1.0, -2.0 * mu * x[0] * x[1] - 1.0, mu * (1.0 - x[0] * x[0])};
            };
            break;
        }
        case SystemKind::pendulum: {
            const double gl = id.gravity / id.length;
            const double b = 1.0 / (id.mass * id.length * id.length);
            model.n = 2;
            model.m = 1;
            model.drift = [gl](std::span<const double> x) {
                detail::check_state(x, 2, "pendulum");
                return std::vector<double>{x[1], gl * std::sin(x[0])};
            };
            model.input_matrix = [b](std::span<const double> x) {
                detail::check_state(x, 2, "pendulum");
                return std::vector<double>{0.0, b};
            };
            model.jacobian = [gl](std::span<const double> x) {
                detail::check_state(x, 2, "pendulum");
                return std::vector<double>{0.0, 1.0, gl * std::cos(x[0]), 0.0};
            };
            break;
        }
    }
    return model;
}

/// Central-difference Jacobian of f at x, row-major n x n.
inline std::vector<double> central_difference_jacobian(const VectorField& drift, std::span<const double> x,
                                                       double step) {
    const std::size_t n = x.size();
    std::vector<double> jac(n * n);
    std::vector<double> probe(x.begin(), x.end());
    for (std::size_t k = 0; k < n; ++k) {
        probe[k] = x[k] + step;
        const auto plus = drift(probe);
        probe[k] = x[k] - step;
        const auto minus = drift(probe);
        probe[k] = x[k];
        for (std::size_t i = 0; i < n; ++i) jac[i * n + k] = (plus[i] - minus[i]) / (2.0 * step);
    }
    return jac;
}

/// Returns `model` with f' replaced by central differences. Second-order Lie
/// derivatives computed from it are only as accurate as the difference quotient,
/// so a warning is written to `warn` (if non-null).
inline DynamicsModel with_finite_difference_jacobian(DynamicsModel model, double step = 1e-6,
                                                     std::ostream* warn = &std::cerr) {
    if (warn) {
        *warn << "warning: " << model.name
              << ": using a finite-difference Jacobian; second-order Lie derivatives are no longer exact\n";
    }
    VectorField drift = model.drift;
    model.jacobian = [drift, step](std::span<const double> x) {
        return central_difference_jacobian(drift, x, step);
    };
    model.jacobian_is_approximate = true;
    return model;
}

}  // namespace dualcbf
