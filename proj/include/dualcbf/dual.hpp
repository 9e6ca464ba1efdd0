#pragma once

/**
 * @file dual.hpp
 * @brief Dual and hyper-dual scalars, scalar activation rules, and the
 *        operation counter used to check the closed-form cost model.
 *
 * A dual scalar is a + b·ε with ε² = 0, so
 *   (a₁ + b₁ε)(a₂ + b₂ε) = a₁a₂ + (a₁b₂ + a₂b₁)ε
 * and evaluating φ at a + bε yields φ(a) + φ'(a)b·ε.
 *
 * A hyper-dual scalar adjoins two nilpotents, ε₁² = ε₂² = (ε₁ε₂)² = 0, and
 * carries the mixed second derivative in its ε₁ε₂ coefficient.
 */

#include <array>
#include <cmath>
#include <cstdint>
#include <optional>
#include <string>
#include <string_view>
#include <vector>

#include "dualcbf/error.hpp"

namespace dualcbf {

// ---------------------------------------------------------------------------
// Activations
// ---------------------------------------------------------------------------

enum class Activation { relu, tanh, sigmoid, softplus, identity };

inline constexpr std::size_t kActivationKinds = 5;

inline constexpr std::array<Activation, kActivationKinds> kAllActivations = {
    Activation::relu, Activation::tanh, Activation::sigmoid, Activation::softplus,
    Activation::identity};

constexpr std::size_t index_of(Activation kind) { return static_cast<std::size_t>(kind); }

constexpr std::string_view name_of(Activation kind) {
    switch (kind) {
        case Activation::relu: return "relu";
        case Activation::tanh: return "tanh";
        case Activation::sigmoid: return "sigmoid";
        case Activation::softplus: return "softplus";
        case Activation::identity: return "identity";
    }
    return "?";
}

inline std::optional<Activation> parse_activation(std::string_view name) {
    for (Activation kind : kAllActivations) {
        if (name_of(kind) == name) return kind;
    }
    return std::nullopt;
}

/// Supplemental FLOPs needed for σ' once σ(a) is known (c_σ).
/// Softplus needs a logistic evaluation instead, which is booked as a
/// transcendental and contributes no FLOPs here.
constexpr std::uint64_t derivative_flops(Activation kind) {
    switch (kind) {
        case Activation::tanh: return 2;     // 1 - t*t
        case Activation::sigmoid: return 2;  // s*(1 - s)
        default: return 0;
    }
}

/// Transcendental evaluations per neuron for σ(a) and for σ'(a), respectively.
constexpr std::uint64_t value_transcendentals(Activation kind) {
    return (kind == Activation::tanh || kind == Activation::sigmoid || kind == Activation::softplus)
               ? 1
               : 0;
}
constexpr std::uint64_t derivative_transcendentals(Activation kind) {
    return kind == Activation::softplus ? 1 : 0;
}

constexpr bool is_twice_differentiable(Activation kind) { return kind != Activation::relu; }

namespace detail {

template <class T>
T logistic(T a) {
    using std::exp;
    const T one(1);
    if (a >= T(0)) return one / (one + exp(-a));
    const T e = exp(a);
    return e / (one + e);
}

template <class T>
T softplus(T a) {
    using std::abs;
    using std::exp;
    using std::log1p;
    const T zero(0);
    return (a > zero ? a : zero) + log1p(exp(-abs(a)));
}

}  // namespace detail

/// σ(a).
template <class T>
T activate(Activation kind, T a) {
    switch (kind) {
        case Activation::relu: return a > T(0) ? a : T(0);
        case Activation::tanh: {
            using std::tanh;
            return tanh(a);
        }
        case Activation::sigmoid: return detail::logistic(a);
        case Activation::softplus: return detail::softplus(a);
        case Activation::identity: return a;
    }
    return a;
}

/// σ'(a), reusing the already computed value σ(a) where the kind allows it.
/// ReLU follows relu'(0) = 0.
template <class T>
T activation_derivative(Activation kind, T a, T value) {
    const T one(1);
    switch (kind) {
        case Activation::relu: return a > T(0) ? one : T(0);
        case Activation::tanh: return one - value * value;
        case Activation::sigmoid: return value * (one - value);
        case Activation::softplus: return detail::logistic(a);
        case Activation::identity: return one;
    }
    return one;
}

/// σ''(a) given σ(a) and σ'(a). ReLU reports 0, but hyper-dual passes reject it.
template <class T>
T activation_second_derivative(Activation kind, T /*a*/, T value, T first) {
    const T one(1);
    const T two(2);
    switch (kind) {
        case Activation::tanh: return -two * value * first;
        case Activation::sigmoid: return first * (one - two * value);
        case Activation::softplus: return first * (one - first);
        default: return T(0);
    }
}

// ---------------------------------------------------------------------------
// Operation counter
// ---------------------------------------------------------------------------

/// Per-pass accumulator of arithmetic work. The caller owns it and passes a
/// pointer into each routine that should be measured; a null pointer disables
/// counting.
///
/// `activation_ops` counts base activation applications (one per neuron).
/// Transcendental calls are tallied per kind and never enter `total()`.
struct OpCounter {
    std::uint64_t adds = 0;
    std::uint64_t muls = 0;
    std::uint64_t activation_ops = 0;
    std::array<std::uint64_t, kActivationKinds> transcendentals{};
    /// Cumulative `total()` at the end of each layer, appended by the passes.
    std::vector<std::uint64_t> layer_marks;

    std::uint64_t total() const { return adds + muls + activation_ops; }

    std::uint64_t transcendental_total() const {
        std::uint64_t sum = 0;
        for (auto c : transcendentals) sum += c;
        return sum;
    }

    void mark_layer() { layer_marks.push_back(total()); }

    void reset() { *this = OpCounter{}; }

    OpCounter& operator+=(const OpCounter& other) {
        adds += other.adds;
        muls += other.muls;
        activation_ops += other.activation_ops;
        for (std::size_t k = 0; k < kActivationKinds; ++k)
            transcendentals[k] += other.transcendentals[k];
        return *this;
    }
};

namespace detail {

inline void count_adds(OpCounter* ops, std::uint64_t n) {
    if (ops) ops->adds += n;
}
inline void count_muls(OpCounter* ops, std::uint64_t n) {
    if (ops) ops->muls += n;
}

/// Books σ(a) for `n` neurons.
inline void count_activation_value(OpCounter* ops, Activation kind, std::uint64_t n) {
    if (!ops) return;
    ops->activation_ops += n;
    ops->transcendentals[index_of(kind)] += value_transcendentals(kind) * n;
}

/// Books σ'(a) given σ(a) for `n` neurons (c_σ FLOPs plus any transcendental).
inline void count_activation_derivative(OpCounter* ops, Activation kind, std::uint64_t n) {
    if (!ops) return;
    switch (kind) {
        case Activation::tanh:
        case Activation::sigmoid:
            ops->adds += n;
            ops->muls += n;
            break;
        default: break;
    }
    ops->transcendentals[index_of(kind)] += derivative_transcendentals(kind) * n;
}

/// Books σ'' given σ and σ' for `n` neurons.
inline void count_second_derivative(OpCounter* ops, Activation kind, std::uint64_t n) {
    if (!ops) return;
    switch (kind) {
        case Activation::tanh: ops->muls += 2 * n; break;
        case Activation::sigmoid:
            ops->muls += 2 * n;
            ops->adds += n;
            break;
        case Activation::softplus:
            ops->muls += n;
            ops->adds += n;
            break;
        default: break;
    }
}

}  // namespace detail

// ---------------------------------------------------------------------------
// Dual scalars
// ---------------------------------------------------------------------------

template <class T = double>
struct Dual {
    T re{};  ///< function value
    T du{};  ///< coefficient of ε

    constexpr bool operator==(const Dual&) const = default;
};

using DualScalar = Dual<double>;

template <class T>
constexpr Dual<T> operator+(const Dual<T>& x, const Dual<T>& y) {
    return {x.re + y.re, x.du + y.du};
}

template <class T>
constexpr Dual<T> operator-(const Dual<T>& x, const Dual<T>& y) {
    return {x.re - y.re, x.du - y.du};
}

template <class T>
constexpr Dual<T> operator-(const Dual<T>& x) {
    return {-x.re, -x.du};
}

template <class T>
constexpr Dual<T> operator*(const Dual<T>& x, const Dual<T>& y) {
    return {x.re * y.re, x.re * y.du + y.re * x.du};
}

template <class T>
Dual<T> dual_add(const Dual<T>& x, const Dual<T>& y, OpCounter* ops = nullptr) {
    detail::count_adds(ops, 2);
    return x + y;
}

/// Product rule; three multiplications and one addition.
template <class T>
Dual<T> dual_mul(const Dual<T>& x, const Dual<T>& y, OpCounter* ops = nullptr) {
    detail::count_muls(ops, 3);
    detail::count_adds(ops, 1);
    return x * y;
}

/// (φ(a), φ'(a)·b). The ReLU gate looks at the real part only.
template <class T>
Dual<T> dual_activate(Activation kind, const Dual<T>& z, OpCounter* ops = nullptr) {
    detail::count_activation_value(ops, kind, 1);
    detail::count_activation_derivative(ops, kind, 1);
    detail::count_muls(ops, 1);
    if (kind == Activation::relu) {
        return z.re > T(0) ? z : Dual<T>{T(0), T(0)};
    }
    const T value = activate(kind, z.re);
    const T slope = activation_derivative(kind, z.re, value);
    return {value, slope * z.du};
}

// ---------------------------------------------------------------------------
// Hyper-dual scalars
// ---------------------------------------------------------------------------

template <class T = double>
struct HyperDual {
    T re{};
    T d1{};   ///< ε₁
    T d2{};   ///< ε₂
    T d12{};  ///< ε₁ε₂

    constexpr bool operator==(const HyperDual&) const = default;
};

using HyperDualScalar = HyperDual<double>;

template <class T>
constexpr HyperDual<T> operator+(const HyperDual<T>& x, const HyperDual<T>& y) {
    return {x.re + y.re, x.d1 + y.d1, x.d2 + y.d2, x.d12 + y.d12};
}

template <class T>
constexpr HyperDual<T> operator*(const HyperDual<T>& x, const HyperDual<T>& y) {
    return {x.re * y.re, x.re * y.d1 + y.re * x.d1, x.re * y.d2 + y.re * x.d2,
            x.re * y.d12 + y.re * x.d12 + x.d1 * y.d2 + y.d1 * x.d2};
}

template <class T>
HyperDual<T> hyper_mul(const HyperDual<T>& x, const HyperDual<T>& y, OpCounter* ops = nullptr) {
    detail::count_muls(ops, 9);
    detail::count_adds(ops, 5);
    return x * y;
}

/// (φ(a), φ'(a)b, φ'(a)c, φ''(a)bc + φ'(a)d). Throws NonSmoothActivation for ReLU.
template <class T>
HyperDual<T> hyper_activate(Activation kind, const HyperDual<T>& z, OpCounter* ops = nullptr) {
    if (!is_twice_differentiable(kind)) {
        throw NonSmoothActivation("hyper-dual evaluation needs a twice differentiable activation, got " +
                                  std::string(name_of(kind)));
    }
    detail::count_activation_value(ops, kind, 1);
    detail::count_activation_derivative(ops, kind, 1);
    detail::count_second_derivative(ops, kind, 1);
    const T value = activate(kind, z.re);
    const T first = activation_derivative(kind, z.re, value);
    const T second = activation_second_derivative(kind, z.re, value, first);
    detail::count_muls(ops, 5);
    detail::count_adds(ops, 1);
    return {value, first * z.d1, first * z.d2, second * z.d1 * z.d2 + first * z.d12};
}

}  // namespace dualcbf
