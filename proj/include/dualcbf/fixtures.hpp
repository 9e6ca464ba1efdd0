#pragma once

/**
 * @file fixtures.hpp
 * @brief Seeded network construction and the hand-built diamond barrier.
 *
 * Random weights are drawn from std::mt19937_64, whose output sequence is fixed
 * by the standard, and mapped to [0, 1) from the top 53 bits, so fixtures are
 * reproducible across standard libraries.
 */

#include <cmath>
#include <cstdint>
#include <random>
#include <vector>

#include "dualcbf/network.hpp"

namespace dualcbf {

/// Portable uniform draw on [lo, hi).
inline double uniform(std::mt19937_64& rng, double lo, double hi) {
    const double unit = static_cast<double>(rng() >> 11) * 0x1.0p-53;
    return lo + (hi - lo) * unit;
}

/// Weights U(±√(6/fan_in)), biases U(±0.1).
inline NetworkSpec random_network(const std::vector<std::size_t>& widths, const std::vector<Activation>& activations,
                                  std::uint64_t seed) {
    std::mt19937_64 rng(seed);
    std::vector<std::vector<double>> weights;
    std::vector<std::vector<double>> biases;
    for (std::size_t i = 1; i < widths.size(); ++i) {
        const double limit = std::sqrt(6.0 / static_cast<double>(widths[i - 1]));
        std::vector<double> w(widths[i] * widths[i - 1]);
        for (double& v : w) v = uniform(rng, -limit, limit);
        std::vector<double> b(widths[i]);
        for (double& v : b) v = uniform(rng, -0.1, 0.1);
        weights.push_back(std::move(w));
        biases.push_back(std::move(b));
    }
    return NetworkSpec::create(widths, std::move(weights), std::move(biases), activations);
}

/// Same activation on every hidden layer.
inline NetworkSpec random_network(const std::vector<std::size_t>& widths, Activation kind, std::uint64_t seed) {
    return random_network(widths, std::vector<Activation>(widths.size() - 2, kind), seed);
}

/// h(x) = c - max(|x₁ + x₂|, |x₁ - x₂|) = c - |x₁| - |x₂| as an exact 2-4-2-1 ReLU net,
/// using |a| = relu(a) + relu(-a) and max(A, B) = B + relu(A - B) with B ≥ 0.
inline NetworkSpec diamond_barrier(double c) {
    return NetworkSpec::create({2, 4, 2, 1},
                               {{1, 1, -1, -1, 1, -1, -1, 1},  // relu(±(x₁+x₂)), relu(±(x₁-x₂))
                                {1, 1, -1, -1, 0, 0, 1, 1},    // relu(A - B), relu(B)
                                {-1, -1}},
                               {{0, 0, 0, 0}, {0, 0}, {c}}, {Activation::relu, Activation::relu});
}

}  // namespace dualcbf
