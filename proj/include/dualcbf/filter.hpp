#pragma once

/**
 * @file filter.hpp
 * @brief Closed-form CBF-QP safety filter
 *
 *   u* = argmin ‖u - u_nom‖²  s.t.  aᵀu ≥ b,  lo ≤ u ≤ hi
 *
 * with a = L_G h, b = -α(h) - L_f h. Without a box the answer is the projection
 * onto the half-space. With a box the KKT point is u(λ) = clamp(u_nom + λa) for
 * the smallest λ ≥ 0 with aᵀu(λ) ≥ b; aᵀu(λ) is piecewise linear and
 * nondecreasing in λ, so λ is found exactly by walking its breakpoints.
 */

#include <algorithm>
#include <cmath>
#include <optional>
#include <span>
#include <vector>

#include "dualcbf/error.hpp"
#include "dualcbf/lie.hpp"

namespace dualcbf {

/// Linear extended class-K function α(h) = γh.
struct ClassK {
    double gamma = 1.0;

    explicit ClassK(double g = 1.0) : gamma(g) {
        if (!(g > 0.0) || !std::isfinite(g)) throw InvalidParameter("class-K gain must be positive and finite");
    }
    double operator()(double h) const { return gamma * h; }
};

struct Box {
    std::vector<double> lower;
    std::vector<double> upper;

    std::size_t size() const { return lower.size(); }
    void validate(std::size_t m) const {
        if (lower.size() != m || upper.size() != m) throw DimensionMismatch("box bounds must have one entry per input");
        for (std::size_t j = 0; j < m; ++j)
            if (!(lower[j] <= upper[j])) throw InvalidParameter("box bound has lower > upper");
    }
    double clamp(std::size_t j, double v) const { return std::min(std::max(v, lower[j]), upper[j]); }
};

struct FilterResult {
    std::vector<double> u_star;
    bool active = false;      ///< the CBF constraint moved the input
    bool degenerate = false;  ///< ‖a‖ < 1e-12 with b ≤ 0: no control authority but already safe
    double slack = 0.0;       ///< constraint value at u*: aᵀu* - b
};

/// Gains of the relative-degree-two composition ψ = L_f h + γ₁h, ψ̇ + γ₂ψ ≥ 0.
struct HighOrderGains {
    double gamma1 = 1.0;
    double gamma2 = 1.0;
};

inline constexpr double kDegenerateNorm = 1e-12;

/// Solves min ‖u - u_nom‖² s.t. aᵀu ≥ b and the optional box.
inline FilterResult solve_halfspace_qp(std::span<const double> a, double b, std::span<const double> u_nom,
                                       const std::optional<Box>& box = std::nullopt) {
    const std::size_t m = a.size();
    if (u_nom.size() != m) throw DimensionMismatch("nominal input and constraint row differ in length");
    if (box) box->validate(m);

    FilterResult out;
    double norm2 = 0.0;
    for (double v : a) norm2 += v * v;
    auto dot_a = [&](const std::vector<double>& u) {
        double acc = 0.0;
        for (std::size_t j = 0; j < m; ++j) acc += a[j] * u[j];
        return acc;
    };
    auto at = [&](double lambda) {
        std::vector<double> u(m);
        for (std::size_t j = 0; j < m; ++j) {
            const double v = u_nom[j] + lambda * a[j];
            u[j] = box ? box->clamp(j, v) : v;
        }
        return u;
    };

    if (std::sqrt(norm2) < kDegenerateNorm) {
        if (b > 0.0) throw Infeasible("constraint has no control authority (L_G h = 0) and is violated");
        out.u_star = at(0.0);
        out.degenerate = true;
        out.slack = dot_a(out.u_star) - b;
        return out;
    }

    std::vector<double> u0 = at(0.0);
    if (dot_a(u0) >= b) {
        out.u_star = std::move(u0);
        out.slack = dot_a(out.u_star) - b;
        return out;
    }

    double lambda = 0.0;
    if (!box) {
        lambda = (b - dot_a(u0)) / norm2;
    } else {
        // Breakpoints where a coordinate enters its bound.
        std::vector<double> breaks;
        for (std::size_t j = 0; j < m; ++j) {
            if (a[j] == 0.0) continue;
            for (double bound : {box->lower[j], box->upper[j]}) {
                const double t = (bound - u_nom[j]) / a[j];
                if (t > 0.0) breaks.push_back(t);
            }
        }
        std::sort(breaks.begin(), breaks.end());
        double lo = 0.0;
        double g_lo = dot_a(u0);
        bool found = false;
        for (double t : breaks) {
            const double g_t = dot_a(at(t));
            if (g_t >= b) {
                lambda = g_t > g_lo ? lo + (b - g_lo) * (t - lo) / (g_t - g_lo) : t;
                found = true;
                break;
            }
            lo = t;
            g_lo = g_t;
        }
        if (!found) {
            // Beyond the last breakpoint the free coordinates still move with slope Σ a_j² over them.
            double slope = 0.0;
            const std::vector<double> u_far = at(lo * 2.0 + 1.0);
            const std::vector<double> u_lo = at(lo);
            for (std::size_t j = 0; j < m; ++j)
                if (u_far[j] != u_lo[j]) slope += a[j] * a[j];
            if (slope <= 0.0) throw Infeasible("input bounds exclude the safe half-space");
            lambda = lo + (b - g_lo) / slope;
        }
    }
    out.u_star = at(lambda);
    double g = dot_a(out.u_star);
    if (g < b) {
        // Nudge against rounding in the interpolation.
        const double fix = (b - g) / norm2;
        out.u_star = at(lambda + 2.0 * fix);
        g = dot_a(out.u_star);
        if (box && g < b - 1e-9) throw Infeasible("input bounds exclude the safe half-space");
    }
    out.active = true;
    out.slack = g - b;
    return out;
}

/// First-order filter: L_f h + L_G h·u + α(h) ≥ 0. `slack` is that left-hand side at u*.
inline FilterResult filter(const CbfConstraint& c, std::span<const double> u_nom, const ClassK& alpha,
                           const std::optional<Box>& bounds = std::nullopt) {
    const double b = -alpha(c.h) - c.Lf;
    FilterResult r = solve_halfspace_qp(c.LG, b, u_nom, bounds);
    r.slack = c.hdot(r.u_star) + alpha(c.h);
    return r;
}

/// Row a and offset b of the relative-degree-two constraint
///   L_f²h + (L_G L_f h + γ₁ L_G h)·u + γ₁ L_f h + γ₂(L_f h + γ₁ h) ≥ 0.
inline std::pair<std::vector<double>, double> second_order_row(const CbfConstraint& c, const HighOrderGains& k) {
    if (!c.second) throw InvalidParameter("constraint carries no second-order terms");
    std::vector<double> a(c.LG.size());
    for (std::size_t j = 0; j < a.size(); ++j) a[j] = c.second->LGLf[j] + k.gamma1 * c.LG[j];
    const double b = -(c.second->Lf2 + k.gamma1 * c.Lf + k.gamma2 * (c.Lf + k.gamma1 * c.h));
    return {std::move(a), b};
}

inline FilterResult filter_second_order(const CbfConstraint& c, std::span<const double> u_nom,
                                        const HighOrderGains& gains, const std::optional<Box>& bounds = std::nullopt) {
    if (!(gains.gamma1 > 0.0) || !(gains.gamma2 > 0.0)) throw InvalidParameter("high-order gains must be positive");
    const auto [a, b] = second_order_row(c, gains);
    return solve_halfspace_qp(a, b, u_nom, bounds);
}

}  // namespace dualcbf
