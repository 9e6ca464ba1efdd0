#pragma once

/**
 * @file network.hpp
 * @brief Feedforward network h = ℓ_d ∘ σ_{d-1} ∘ ℓ_{d-1} ∘ ... ∘ σ_1 ∘ ℓ_1 and
 *        its real, dual, batched-dual and hyper-dual forward passes.
 *
 * Every pass walks the layers with a fixed arithmetic order:
 *
 *   real affine row j:  acc = b_j;  acc += W_jk * a_k  for k = 0..cols-1
 *   dual projection j:  acc = W_j0 * c_0;  acc += W_jk * c_k  for k = 1..cols-1
 *
 * so the batched pass, the per-column passes, the real slice of the hyper-dual
 * pass and the layer trace all agree bit for bit.
 *
 * Scratch layout of a dual pass (3 * max width scalars): a real state buffer,
 * a dual state buffer and one staging buffer. Each layer writes its real
 * pre-activation into the staging buffer, projects the dual state into the
 * freed real buffer, applies the activation in place and rotates the three
 * roles. The real/dual state alone never exceeds 2 * max width; the staging
 * buffer holds the layer output while the input is still being read.
 */

#include <algorithm>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include "dualcbf/dual.hpp"
#include "dualcbf/error.hpp"

namespace dualcbf {

/// Affine layer W z + b, optionally followed by a componentwise activation.
template <class T>
struct Layer {
    std::size_t rows = 0;  ///< n_i
    std::size_t cols = 0;  ///< n_{i-1}
    std::vector<T> weights;  ///< row-major rows x cols
    std::vector<T> bias;
    std::optional<Activation> activation;  ///< empty on the terminal layer

    const T& w(std::size_t row, std::size_t col) const { return weights[row * cols + col]; }
};

/// Validated feedforward architecture. Immutable after construction.
template <class T>
class BasicNetwork {
public:
    using value_type = T;

    /// Builds and validates a network. `weights[i]` is row-major n_{i+1} x n_i,
    /// `activations` has one entry per hidden layer.
    static BasicNetwork create(std::vector<std::size_t> widths, std::vector<std::vector<T>> weights,
                               std::vector<std::vector<T>> biases, std::vector<Activation> activations) {
        if (widths.size() < 2) throw InvalidArchitecture("network needs at least an input and an output width");
        for (std::size_t i = 0; i < widths.size(); ++i) {
            if (widths[i] == 0)
                throw InvalidArchitecture("width " + std::to_string(i) + " must be positive");
        }
        if (widths.back() != 1) throw InvalidArchitecture("terminal width must be 1");
        const std::size_t depth = widths.size() - 1;
        if (weights.size() != depth || biases.size() != depth)
            throw DimensionMismatch("expected " + std::to_string(depth) + " weight and bias blocks");
        if (activations.size() != depth - 1)
            throw InvalidArchitecture("expected " + std::to_string(depth - 1) +
                                      " hidden activations, got " + std::to_string(activations.size()));
        BasicNetwork net;
        net.widths_ = std::move(widths);
        net.layers_.reserve(depth);
        for (std::size_t i = 0; i < depth; ++i) {
            Layer<T> layer;
            layer.cols = net.widths_[i];
            layer.rows = net.widths_[i + 1];
            if (weights[i].size() != layer.rows * layer.cols)
                throw DimensionMismatch("layer " + std::to_string(i + 1) + ": weight block has " +
                                        std::to_string(weights[i].size()) + " entries, expected " +
                                        std::to_string(layer.rows * layer.cols));
            if (biases[i].size() != layer.rows)
                throw DimensionMismatch("layer " + std::to_string(i + 1) + ": bias has " +
                                        std::to_string(biases[i].size()) + " entries, expected " +
                                        std::to_string(layer.rows));
            layer.weights = std::move(weights[i]);
            layer.bias = std::move(biases[i]);
            if (i + 1 < depth) layer.activation = activations[i];
            net.layers_.push_back(std::move(layer));
        }
        return net;
    }

    std::size_t depth() const { return layers_.size(); }
    std::size_t input_width() const { return widths_.front(); }
    const std::vector<std::size_t>& widths() const { return widths_; }
    const std::vector<Layer<T>>& layers() const { return layers_; }
    const Layer<T>& layer(std::size_t i) const { return layers_[i]; }

    /// max over i = 1..d of n_i (the input width is not included).
    std::size_t max_width() const {
        std::size_t m = 0;
        for (std::size_t i = 1; i < widths_.size(); ++i) m = std::max(m, widths_[i]);
        return m;
    }

    /// max over i = 0..d of n_i, the buffer width a pass actually needs.
    std::size_t buffer_width() const { return std::max(max_width(), input_width()); }

    std::vector<Activation> hidden_activations() const {
        std::vector<Activation> out;
        for (const auto& layer : layers_)
            if (layer.activation) out.push_back(*layer.activation);
        return out;
    }

    bool is_smooth() const {
        for (const auto& layer : layers_)
            if (layer.activation && !is_twice_differentiable(*layer.activation)) return false;
        return true;
    }

    /// n_θ = Σ (n_i n_{i-1} + n_i).
    std::size_t parameter_count() const {
        std::size_t n = 0;
        for (const auto& layer : layers_) n += layer.weights.size() + layer.bias.size();
        return n;
    }

    /// Same architecture with every parameter converted to U.
    template <class U>
    BasicNetwork<U> cast() const {
        std::vector<std::vector<U>> w, b;
        for (const auto& layer : layers_) {
            w.emplace_back(layer.weights.begin(), layer.weights.end());
            b.emplace_back(layer.bias.begin(), layer.bias.end());
        }
        return BasicNetwork<U>::create(widths_, std::move(w), std::move(b), hidden_activations());
    }

    bool operator==(const BasicNetwork& other) const {
        if (widths_ != other.widths_) return false;
        for (std::size_t i = 0; i < layers_.size(); ++i) {
            const auto& a = layers_[i];
            const auto& b = other.layers_[i];
            if (a.weights != b.weights || a.bias != b.bias || a.activation != b.activation) return false;
        }
        return true;
    }

private:
    std::vector<std::size_t> widths_;
    std::vector<Layer<T>> layers_;
};

using NetworkSpec = BasicNetwork<double>;

template <class T>
using DualVector = std::vector<Dual<T>>;
template <class T>
using HyperDualVector = std::vector<HyperDual<T>>;

/// Scratch scalars used by one dual pass.
template <class T>
std::size_t dual_scratch_size(const BasicNetwork<T>& net) {
    return 3 * net.buffer_width();
}

/// Scratch scalars used by one hyper-dual pass (four channels plus staging).
template <class T>
std::size_t hyper_scratch_size(const BasicNetwork<T>& net) {
    return 5 * net.buffer_width();
}

/// Scratch scalars used by the real-only pass.
template <class T>
std::size_t forward_scratch_size(const BasicNetwork<T>& net) {
    return 2 * net.buffer_width();
}

/// Pre- and post-activation values plus affine and activation dual parts of
/// every layer. Entry i describes layer i + 1; the terminal entry carries
/// empty post-activation vectors.
template <class T>
struct LayerTrace {
    std::vector<std::vector<T>> pre;        ///< a_i
    std::vector<std::vector<T>> post;       ///< â_i
    std::vector<std::vector<T>> dual_pre;   ///< c_i
    std::vector<std::vector<T>> dual_post;  ///< ĉ_i
};

namespace detail {

inline void require(bool ok, const char* what) {
    if (!ok) throw DimensionMismatch(what);
}

template <class T>
void check_input(const BasicNetwork<T>& net, std::size_t size, const char* name) {
    if (size != net.input_width())
        throw DimensionMismatch(std::string(name) + " has " + std::to_string(size) +
                                " entries, network input width is " + std::to_string(net.input_width()));
}

/// out = W in + b.
template <class T>
void affine(const Layer<T>& layer, const T* in, T* out, OpCounter* ops) {
    for (std::size_t j = 0; j < layer.rows; ++j) {
        const T* row = layer.weights.data() + j * layer.cols;
        T acc = layer.bias[j];
        for (std::size_t k = 0; k < layer.cols; ++k) acc += row[k] * in[k];
        out[j] = acc;
    }
    count_muls(ops, layer.rows * layer.cols);
    count_adds(ops, layer.rows * layer.cols);
}

/// out = W in (no bias).
template <class T>
void project(const Layer<T>& layer, const T* in, T* out, OpCounter* ops) {
    for (std::size_t j = 0; j < layer.rows; ++j) {
        const T* row = layer.weights.data() + j * layer.cols;
        T acc = row[0] * in[0];
        for (std::size_t k = 1; k < layer.cols; ++k) acc += row[k] * in[k];
        out[j] = acc;
    }
    count_muls(ops, layer.rows * layer.cols);
    count_adds(ops, layer.rows * (layer.cols - 1));
}

/// value[j] = σ(value[j]) in place.
template <class T>
void activate_real(Activation kind, T* value, std::size_t n, OpCounter* ops) {
    for (std::size_t j = 0; j < n; ++j) value[j] = activate(kind, value[j]);
    count_activation_value(ops, kind, n);
}

/// Dual activation: on entry `value` holds a_i and `tangent_in` holds c_i; on exit
/// `value` holds σ(a_i) and `tangent_out` holds diag(σ'(a_i)) c_i.
template <class T>
void activate_dual(Activation kind, T* value, const T* tangent_in, T* tangent_out, std::size_t n,
                   OpCounter* ops) {
    if (kind == Activation::relu) {
        for (std::size_t j = 0; j < n; ++j) {
            if (value[j] > T(0)) {
                tangent_out[j] = tangent_in[j];
            } else {
                value[j] = T(0);
                tangent_out[j] = T(0);
            }
        }
    } else {
        for (std::size_t j = 0; j < n; ++j) {
            const T a = value[j];
            const T s = activate(kind, a);
            const T slope = activation_derivative(kind, a, s);
            tangent_out[j] = slope * tangent_in[j];
            value[j] = s;
        }
    }
    count_activation_value(ops, kind, n);
    count_activation_derivative(ops, kind, n);
    count_muls(ops, n);
}

/// One dual pass over caller-owned scratch of at least dual_scratch_size(net).
template <class T>
Dual<T> dual_pass(const BasicNetwork<T>& net, const T* x, const T* v, T* scratch, OpCounter* ops) {
    const std::size_t width = net.buffer_width();
    T* real = scratch;
    T* tangent = scratch + width;
    T* stage = scratch + 2 * width;
    std::copy(x, x + net.input_width(), real);
    std::copy(v, v + net.input_width(), tangent);
    for (const auto& layer : net.layers()) {
        affine(layer, real, stage, ops);
        project(layer, tangent, real, ops);
        if (layer.activation) {
            activate_dual(*layer.activation, stage, real, tangent, layer.rows, ops);
        } else {
            std::swap(real, tangent);
        }
        // stage now holds the real state; the old real buffer is free.
        std::swap(real, stage);
        if (ops) ops->mark_layer();
    }
    return {real[0], tangent[0]};
}

}  // namespace detail

/// h(x).
template <class T>
T forward(const BasicNetwork<T>& net, std::span<const T> x, std::span<T> scratch,
          OpCounter* ops = nullptr) {
    detail::check_input(net, x.size(), "state");
    detail::require(scratch.size() >= forward_scratch_size(net), "forward scratch too small");
    const std::size_t width = net.buffer_width();
    T* in = scratch.data();
    T* out = scratch.data() + width;
    std::copy(x.begin(), x.end(), in);
    for (const auto& layer : net.layers()) {
        detail::affine(layer, in, out, ops);
        if (layer.activation) detail::activate_real(*layer.activation, out, layer.rows, ops);
        std::swap(in, out);
        if (ops) ops->mark_layer();
    }
    return in[0];
}

template <class T>
T forward(const BasicNetwork<T>& net, std::span<const T> x, OpCounter* ops = nullptr) {
    std::vector<T> scratch(forward_scratch_size(net));
    return forward(net, x, std::span<T>(scratch), ops);
}

/// (h(x), ∇h(x)ᵀv) through caller-owned scratch; performs no allocation.
template <class T>
Dual<T> dual_forward(const BasicNetwork<T>& net, std::span<const T> x, std::span<const T> v,
                     std::span<T> scratch, OpCounter* ops = nullptr) {
    detail::check_input(net, x.size(), "state");
    detail::check_input(net, v.size(), "direction");
    detail::require(scratch.size() >= dual_scratch_size(net), "dual scratch too small");
    return detail::dual_pass(net, x.data(), v.data(), scratch.data(), ops);
}

/// (h(x), ∇h(x)ᵀv). Allocates exactly dual_scratch_size(net) scalars.
template <class T>
Dual<T> dual_forward(const BasicNetwork<T>& net, std::span<const T> x, std::span<const T> v,
                     OpCounter* ops = nullptr) {
    std::vector<T> scratch(dual_scratch_size(net));
    return dual_forward(net, x, v, std::span<T>(scratch), ops);
}

/// Result of the batched pass: h(x) once, and one directional derivative per column.
template <class T>
struct BatchedDual {
    T value{};
    std::vector<T> tangents;
};

/// Evaluates the network on X = x 1ᵀ + V ε, V given row-major n₀ x m.
///
/// Columns are carried as an n_i x m block through every layer; each column
/// follows the same operation order as dual_forward, so column j equals
/// dual_forward(x, V[:, j]) bit for bit.
template <class T>
BatchedDual<T> dual_forward_batched(const BasicNetwork<T>& net, std::span<const T> x,
                                    std::span<const T> directions, std::size_t columns,
                                    OpCounter* ops = nullptr) {
    detail::check_input(net, x.size(), "state");
    if (columns == 0) throw DimensionMismatch("batched pass needs at least one column");
    if (directions.size() != net.input_width() * columns)
        throw DimensionMismatch("direction matrix has " + std::to_string(directions.size()) +
                                " entries, expected " + std::to_string(net.input_width() * columns));
    const std::size_t width = net.buffer_width();
    const std::size_t block = width * columns;
    std::vector<T> scratch(3 * block);
    // Column q of each buffer lives at [q * width, (q + 1) * width).
    T* real = scratch.data();
    T* tangent = scratch.data() + block;
    T* stage = scratch.data() + 2 * block;
    for (std::size_t q = 0; q < columns; ++q) {
        for (std::size_t k = 0; k < net.input_width(); ++k) {
            real[q * width + k] = x[k];
            tangent[q * width + k] = directions[k * columns + q];
        }
    }
    for (const auto& layer : net.layers()) {
        for (std::size_t q = 0; q < columns; ++q) {
            T* r = real + q * width;
            T* t = tangent + q * width;
            T* s = stage + q * width;
            detail::affine(layer, r, s, ops);
            detail::project(layer, t, r, ops);
            if (layer.activation) {
                detail::activate_dual(*layer.activation, s, r, t, layer.rows, ops);
            } else {
                std::copy(r, r + layer.rows, t);
            }
        }
        std::swap(real, stage);
        if (ops) ops->mark_layer();
    }
    BatchedDual<T> out;
    out.value = real[0];
    out.tangents.resize(columns);
    for (std::size_t q = 0; q < columns; ++q) out.tangents[q] = tangent[q * width];
    return out;
}

/// Builds the hyper-dual seed y + vε₁ + wε₂ + uε₁₂.
template <class T>
HyperDualVector<T> make_hyper_seed(std::span<const T> y, std::span<const T> v, std::span<const T> w,
                                   std::span<const T> u) {
    if (v.size() != y.size() || w.size() != y.size() || u.size() != y.size())
        throw DimensionMismatch("hyper-dual seed components differ in length");
    HyperDualVector<T> seed(y.size());
    for (std::size_t k = 0; k < y.size(); ++k) seed[k] = {y[k], v[k], w[k], u[k]};
    return seed;
}

/// (h, ∇hᵀv, ∇hᵀw, vᵀ∇²h w + ∇hᵀu). All hidden activations must be twice
/// differentiable. The (re, d1) slice repeats dual_forward's arithmetic exactly.
template <class T>
HyperDual<T> hyper_forward(const BasicNetwork<T>& net, std::span<const HyperDual<T>> seed,
                           std::span<T> scratch, OpCounter* ops = nullptr) {
    detail::check_input(net, seed.size(), "hyper-dual seed");
    detail::require(scratch.size() >= hyper_scratch_size(net), "hyper-dual scratch too small");
    for (const auto& layer : net.layers()) {
        if (layer.activation && !is_twice_differentiable(*layer.activation))
            throw NonSmoothActivation("hyper-dual pass needs twice differentiable activations, network uses " +
                                      std::string(name_of(*layer.activation)));
    }
    const std::size_t width = net.buffer_width();
    T* real = scratch.data();
    T* c1 = real + width;
    T* c2 = c1 + width;
    T* c12 = c2 + width;
    T* stage = c12 + width;
    for (std::size_t k = 0; k < seed.size(); ++k) {
        real[k] = seed[k].re;
        c1[k] = seed[k].d1;
        c2[k] = seed[k].d2;
        c12[k] = seed[k].d12;
    }
    for (const auto& layer : net.layers()) {
        detail::affine(layer, real, stage, ops);
        detail::project(layer, c1, real, ops);
        detail::project(layer, c2, c1, ops);
        detail::project(layer, c12, c2, ops);
        // real, c1, c2 now hold the projected ε₁, ε₂, ε₁₂ parts; c12 is free.
        T* p1 = real;
        T* p2 = c1;
        T* p12 = c2;
        T* freed = c12;
        if (layer.activation) {
            const Activation kind = *layer.activation;
            for (std::size_t j = 0; j < layer.rows; ++j) {
                const T a = stage[j];
                const T s = activate(kind, a);
                const T first = activation_derivative(kind, a, s);
                const T second = activation_second_derivative(kind, a, s, first);
                const T b = p1[j];
                const T c = p2[j];
                p1[j] = first * b;
                p2[j] = first * c;
                p12[j] = second * b * c + first * p12[j];
                stage[j] = s;
            }
            detail::count_activation_value(ops, kind, layer.rows);
            detail::count_activation_derivative(ops, kind, layer.rows);
            detail::count_second_derivative(ops, kind, layer.rows);
            detail::count_muls(ops, 5 * layer.rows);
            detail::count_adds(ops, layer.rows);
        }
        real = stage;
        c1 = p1;
        c2 = p2;
        c12 = p12;
        stage = freed;
        if (ops) ops->mark_layer();
    }
    return {real[0], c1[0], c2[0], c12[0]};
}

template <class T>
HyperDual<T> hyper_forward(const BasicNetwork<T>& net, std::span<const HyperDual<T>> seed,
                           OpCounter* ops = nullptr) {
    std::vector<T> scratch(hyper_scratch_size(net));
    return hyper_forward(net, seed, std::span<T>(scratch), ops);
}

/// Dual pass that records every layer. Separate from dual_forward so the hot
/// path keeps no history.
template <class T>
LayerTrace<T> dual_trace(const BasicNetwork<T>& net, std::span<const T> x, std::span<const T> v) {
    detail::check_input(net, x.size(), "state");
    detail::check_input(net, v.size(), "direction");
    LayerTrace<T> trace;
    std::vector<T> real(x.begin(), x.end());
    std::vector<T> tangent(v.begin(), v.end());
    for (const auto& layer : net.layers()) {
        std::vector<T> pre(layer.rows);
        std::vector<T> dual_pre(layer.rows);
        detail::affine(layer, real.data(), pre.data(), nullptr);
        detail::project(layer, tangent.data(), dual_pre.data(), nullptr);
        trace.pre.push_back(pre);
        trace.dual_pre.push_back(dual_pre);
        if (layer.activation) {
            std::vector<T> post = pre;
            std::vector<T> dual_post(layer.rows);
            detail::activate_dual(*layer.activation, post.data(), dual_pre.data(), dual_post.data(),
                                  layer.rows, nullptr);
            trace.post.push_back(post);
            trace.dual_post.push_back(dual_post);
            real = std::move(post);
            tangent = std::move(dual_post);
        } else {
            trace.post.emplace_back();
            trace.dual_post.emplace_back();
        }
    }
    return trace;
}

}  // namespace dualcbf
