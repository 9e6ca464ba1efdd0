#pragma once

/**
 * @file lie.hpp
 * @brief CBF constraint assembly from forward passes only.
 *
 * First order: one dual pass on x + f(x)ε gives (h, L_f h); one batched pass on
 * x 1ᵀ + G(x)ε gives L_G h. The real path is recomputed in every pass, so the
 * cost is exactly (m + 1) single-pass costs.
 *
 * Second order: hyper-dual passes on
 *   x_ff  = x + f ε₁ + f ε₂ + f'f ε₁₂
 *   x_fGj = x + f ε₁ + G_j ε₂ + f'G_j ε₁₂
 * put L_f²h and L_{G_j}L_f h in the ε₁₂ coefficient.
 */

#include <optional>
#include <span>
#include <vector>

#include "dualcbf/dynamics.hpp"
#include "dualcbf/network.hpp"

namespace dualcbf {

/// Second-order terms of a relative-degree-two constraint.
struct SecondOrderTerms {
    double Lf2 = 0.0;
    std::vector<double> LGLf;
};

/// Assembled safety inequality L_f h + L_G h·u ≥ -α(h), plus the second-order
/// terms when present.
struct CbfConstraint {
    double h = 0.0;
    double Lf = 0.0;
    std::vector<double> LG;
    std::optional<SecondOrderTerms> second;

    int order() const { return second ? 2 : 1; }
    std::size_t inputs() const { return LG.size(); }

    /// L_f h + L_G h·u.
    double hdot(std::span<const double> u) const {
        if (u.size() != LG.size()) throw DimensionMismatch("input has wrong dimension for constraint");
        double acc = Lf;
        for (std::size_t j = 0; j < u.size(); ++j) acc += LG[j] * u[j];
        return acc;
    }
};

namespace detail {

inline void check_dynamics(const NetworkSpec& net, const DynamicsModel& dyn) {
    if (dyn.n != net.input_width())
        throw DimensionMismatch(dyn.name + " has state dimension " + std::to_string(dyn.n) +
                                ", network input width is " + std::to_string(net.input_width()));
}

inline std::vector<double> column(std::span<const double> matrix, std::size_t rows, std::size_t cols,
                                  std::size_t j) {
    std::vector<double> out(rows);
    for (std::size_t i = 0; i < rows; ++i) out[i] = matrix[i * cols + j];
    return out;
}

/// y = A v for row-major A (rows x cols).
inline std::vector<double> matvec(std::span<const double> a, std::size_t rows, std::size_t cols,
                                  std::span<const double> v) {
    std::vector<double> out(rows, 0.0);
    for (std::size_t i = 0; i < rows; ++i) {
        double acc = 0.0;
        for (std::size_t k = 0; k < cols; ++k) acc += a[i * cols + k] * v[k];
        out[i] = acc;
    }
    return out;
}

}  // namespace detail

/// Algorithm: drift pass, then the batched input pass. `G` is row-major n x m.
inline CbfConstraint assemble(const NetworkSpec& net, std::span<const double> x, std::span<const double> f,
                              std::span<const double> G, std::size_t m, OpCounter* ops = nullptr) {
    detail::check_input(net, f.size(), "drift");
    if (m == 0) throw DimensionMismatch("input dimension must be positive");
    if (G.size() != net.input_width() * m) throw DimensionMismatch("input matrix must be n x m");
    CbfConstraint out;
    const Dual<double> drift = dual_forward(net, x, f, ops);
    out.h = drift.re;
    out.Lf = drift.du;
    out.LG = dual_forward_batched(net, x, G, m, ops).tangents;
    return out;
}

inline CbfConstraint assemble(const NetworkSpec& net, const DynamicsModel& dyn, std::span<const double> x,
                              OpCounter* ops = nullptr) {
    detail::check_dynamics(net, dyn);
    detail::check_input(net, x.size(), "state");
    const auto f = dyn.drift(x);
    const auto G = dyn.input_matrix(x);
    return assemble(net, x, f, G, dyn.m, ops);
}

/// Relative-degree-two assembly. `jac` is f'(x), row-major n x n.
/// h and L_f h come from the drift seed's (re, ε₁) parts and L_G h from the ε₂
/// parts of the input seeds.
inline CbfConstraint assemble_second_order(const NetworkSpec& net, std::span<const double> x,
                                           std::span<const double> f, std::span<const double> G,
                                           std::size_t m, std::span<const double> jac,
                                           OpCounter* ops = nullptr) {
    const std::size_t n = net.input_width();
    detail::check_input(net, x.size(), "state");
    detail::check_input(net, f.size(), "drift");
    if (m == 0) throw DimensionMismatch("input dimension must be positive");
    if (G.size() != n * m) throw DimensionMismatch("input matrix must be n x m");
    if (jac.size() != n * n) throw DimensionMismatch("drift Jacobian must be n x n");
    if (!net.is_smooth())
        throw NonSmoothActivation("second-order Lie derivatives need twice differentiable activations");

    std::vector<double> scratch(hyper_scratch_size(net));
    CbfConstraint out;
    SecondOrderTerms second;

    const auto jf = detail::matvec(jac, n, n, f);
    const auto seed_ff = make_hyper_seed<double>(x, f, f, jf);
    const HyperDual<double> ff = hyper_forward<double>(net, seed_ff, scratch, ops);
    out.h = ff.re;
    out.Lf = ff.d1;
    second.Lf2 = ff.d12;

    out.LG.resize(m);
    second.LGLf.resize(m);
    for (std::size_t j = 0; j < m; ++j) {
        const auto g = detail::column(G, n, m, j);
        const auto jg = detail::matvec(jac, n, n, g);
        const auto seed = make_hyper_seed<double>(x, f, g, jg);
        const HyperDual<double> fg = hyper_forward<double>(net, seed, scratch, ops);
        out.LG[j] = fg.d2;
        second.LGLf[j] = fg.d12;
    }
    out.second = std::move(second);
    return out;
}

inline CbfConstraint assemble_second_order(const NetworkSpec& net, const DynamicsModel& dyn,
                                           std::span<const double> x, OpCounter* ops = nullptr) {
    detail::check_dynamics(net, dyn);
    detail::check_input(net, x.size(), "state");
    if (!net.is_smooth())
        throw NonSmoothActivation("second-order Lie derivatives need twice differentiable activations");
    if (!dyn.has_jacobian())
        throw MissingJacobian(dyn.name + " provides no drift Jacobian; second-order seeds need f'(x)");
    const auto f = dyn.drift(x);
    const auto G = dyn.input_matrix(x);
    const auto jac = dyn.jacobian(x);
    return assemble_second_order(net, x, f, G, dyn.m, jac, ops);
}

}  // namespace dualcbf
