#pragma once

/**
 * @file reverse.hpp
 * @brief Hand-written reverse-mode baseline: forward pass with an activation
 *        cache, then δ_{i-1} = W_iᵀ diag(σ_i'(a_i)) δ_i from δ_d = 1.
 *
 * Serves as the correctness oracle for the dual engine and as the comparison
 * point of the cost model. The cache is heap-allocated on every call, the way
 * a general-purpose AD runtime would.
 */

#include <span>
#include <vector>

#include "dualcbf/lie.hpp"
#include "dualcbf/network.hpp"

namespace dualcbf {

/// Pre- and post-activation vectors of every hidden layer.
template <class T>
struct ActivationCache {
    std::vector<std::vector<T>> pre;
    std::vector<std::vector<T>> post;

    std::size_t scalar_count() const {
        std::size_t n = 0;
        for (const auto& a : pre) n += a.size();
        for (const auto& a : post) n += a.size();
        return n;
    }
};

/// Runs the cached forward pass. Returns h(x).
template <class T>
T forward_with_cache(const BasicNetwork<T>& net, std::span<const T> x, ActivationCache<T>& cache,
                     OpCounter* ops = nullptr) {
    detail::check_input(net, x.size(), "state");
    cache.pre.clear();
    cache.post.clear();
    std::vector<T> in(x.begin(), x.end());
    std::vector<T> out;
    for (const auto& layer : net.layers()) {
        out.assign(layer.rows, T(0));
        detail::affine(layer, in.data(), out.data(), ops);
        if (layer.activation) {
            cache.pre.push_back(out);
            detail::activate_real(*layer.activation, out.data(), layer.rows, ops);
            cache.post.push_back(out);
        }
        in.swap(out);
        if (ops) ops->mark_layer();
    }
    return in[0];
}

/// ∇h(x) by backpropagation. The output convention σ_d' = 1 means the terminal
/// layer is not scaled.
template <class T>
std::vector<T> gradient(const BasicNetwork<T>& net, std::span<const T> x, OpCounter* ops = nullptr,
                        ActivationCache<T>* cache_out = nullptr, T* value_out = nullptr) {
    ActivationCache<T> cache;
    const T value = forward_with_cache(net, x, cache, ops);
    std::vector<T> delta{T(1)};
    std::vector<T> next;
    for (std::size_t i = net.depth(); i-- > 0;) {
        const Layer<T>& layer = net.layer(i);
        if (layer.activation) {
            const Activation kind = *layer.activation;
            const auto& pre = cache.pre[i];
            const auto& post = cache.post[i];
            for (std::size_t j = 0; j < layer.rows; ++j)
                delta[j] = activation_derivative(kind, pre[j], post[j]) * delta[j];
            detail::count_activation_derivative(ops, kind, layer.rows);
            detail::count_muls(ops, layer.rows);
        }
        next.assign(layer.cols, T(0));
        for (std::size_t k = 0; k < layer.cols; ++k) {
            T acc = layer.w(0, k) * delta[0];
            for (std::size_t j = 1; j < layer.rows; ++j) acc += layer.w(j, k) * delta[j];
            next[k] = acc;
        }
        detail::count_muls(ops, layer.rows * layer.cols);
        detail::count_adds(ops, (layer.rows - 1) * layer.cols);
        delta.swap(next);
    }
    if (cache_out) *cache_out = std::move(cache);
    if (value_out) *value_out = value;
    return delta;
}

template <class T>
T dot(std::span<const T> a, std::span<const T> b, OpCounter* ops = nullptr) {
    if (a.size() != b.size() || a.empty()) throw DimensionMismatch("dot product of mismatched vectors");
    T acc = a[0] * b[0];
    for (std::size_t k = 1; k < a.size(); ++k) acc += a[k] * b[k];
    detail::count_muls(ops, a.size());
    detail::count_adds(ops, a.size() - 1);
    return acc;
}

/// (h, ∇hᵀf, ∇hᵀG) from one gradient and m + 1 explicit inner products.
/// `G` is row-major n x m.
inline CbfConstraint assemble_constraint_reverse(const NetworkSpec& net, std::span<const double> x,
                                                 std::span<const double> f, std::span<const double> G,
                                                 std::size_t m, OpCounter* ops = nullptr) {
    const std::size_t n = net.input_width();
    detail::check_input(net, x.size(), "state");
    detail::check_input(net, f.size(), "drift");
    if (G.size() != n * m) throw DimensionMismatch("input matrix must be n x m");
    CbfConstraint out;
    const std::vector<double> grad = gradient<double>(net, x, ops, nullptr, &out.h);
    const std::span<const double> g(grad);
    out.Lf = dot(g, f, ops);
    out.LG.resize(m);
    std::vector<double> column(n);
    for (std::size_t j = 0; j < m; ++j) {
        for (std::size_t k = 0; k < n; ++k) column[k] = G[k * m + j];
        out.LG[j] = dot(g, std::span<const double>(column), ops);
    }
    return out;
}

}  // namespace dualcbf
