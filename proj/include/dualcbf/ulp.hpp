#pragma once

/**
 * @file ulp.hpp
 * @brief Floating-point distance measures used by the equivalence checks.
 */

#include <cmath>
#include <cstdint>
#include <cstring>
#include <limits>
#include <span>
#include <type_traits>
#include <vector>

#include "dualcbf/network.hpp"

namespace dualcbf {

/// Number of representable values between a and b (0 when equal, max on NaN).
template <class T>
std::uint64_t ulp_distance(T a, T b) {
    static_assert(std::is_floating_point_v<T>);
    if (std::isnan(a) || std::isnan(b)) return std::numeric_limits<std::uint64_t>::max();
    if (a == b) return 0;
    using Bits = std::conditional_t<sizeof(T) == 4, std::int32_t, std::int64_t>;
    auto ordered = [](T v) {
        Bits i;
        std::memcpy(&i, &v, sizeof v);
        // Map sign-magnitude onto a monotone integer line.
        return i < 0 ? static_cast<long double>(std::numeric_limits<Bits>::min()) - static_cast<long double>(i)
                     : static_cast<long double>(i);
    };
    const long double d = std::fabs(ordered(a) - ordered(b));
    return d >= 1.8e19L ? std::numeric_limits<std::uint64_t>::max() : static_cast<std::uint64_t>(d);
}

/// Σ over all paths of |products| in ∇h(x)ᵀv: the dual pass run with |W| and
/// |σ'|. Both forward and reverse evaluation sum these same path products, so
/// rounding error in either is a small multiple of eps times this value.
template <class T>
T condition_scale(const BasicNetwork<T>& net, std::span<const T> x, std::span<const T> v) {
    detail::check_input(net, x.size(), "state");
    detail::check_input(net, v.size(), "direction");
    std::vector<T> real(x.begin(), x.end());
    std::vector<T> mag(v.size());
    for (std::size_t k = 0; k < v.size(); ++k) mag[k] = std::abs(v[k]);
    for (const auto& layer : net.layers()) {
        std::vector<T> pre(layer.rows);
        std::vector<T> next(layer.rows);
        detail::affine(layer, real.data(), pre.data(), nullptr);
        for (std::size_t j = 0; j < layer.rows; ++j) {
            T acc(0);
            for (std::size_t k = 0; k < layer.cols; ++k) acc += std::abs(layer.w(j, k)) * mag[k];
            next[j] = acc;
        }
        if (layer.activation) {
            for (std::size_t j = 0; j < layer.rows; ++j) {
                const T s = activate(*layer.activation, pre[j]);
                next[j] *= std::abs(activation_derivative(*layer.activation, pre[j], s));
                pre[j] = s;
            }
        }
        real = std::move(pre);
        mag = std::move(next);
    }
    return mag[0];
}

}  // namespace dualcbf
