#pragma once

#include <cmath>
#include <random>
#include <string>
#include <vector>

#include "dualcbf/dualcbf.hpp"

namespace testing_support {

inline std::string fixture(const std::string& name) { return std::string(DUALCBF_FIXTURES) + "/" + name; }

inline std::vector<double> random_vector(std::mt19937_64& rng, std::size_t n, double lo = -1.0, double hi = 1.0) {
    std::vector<double> v(n);
    for (double& x : v) x = dualcbf::uniform(rng, lo, hi);
    return v;
}

/// Smallest |pre-activation| over all hidden ReLU units at x; large values mean
/// finite differences will not straddle a kink.
inline double relu_margin(const dualcbf::NetworkSpec& net, const std::vector<double>& x) {
    dualcbf::ActivationCache<double> cache;
    dualcbf::forward_with_cache<double>(net, x, cache);
    double margin = INFINITY;
    for (std::size_t i = 0; i < cache.pre.size(); ++i)
        if (net.layer(i).activation == dualcbf::Activation::relu)
            for (double a : cache.pre[i]) margin = std::min(margin, std::abs(a));
    return margin;
}

/// Central difference of h along v.
inline double fd_directional(const dualcbf::NetworkSpec& net, const std::vector<double>& x,
                             const std::vector<double>& v, double step) {
    std::vector<double> xp = x, xm = x;
    for (std::size_t k = 0; k < x.size(); ++k) {
        xp[k] += step * v[k];
        xm[k] -= step * v[k];
    }
    return (dualcbf::forward<double>(net, xp) - dualcbf::forward<double>(net, xm)) / (2 * step);
}

inline bool close_rel(double a, double b, double rel, double abs_floor = 1e-12) {
    return std::abs(a - b) <= rel * std::max({std::abs(a), std::abs(b), abs_floor});
}

// Hessian of h by reverse-gradient differences is too coarse for 1e-10, so the
// Hessian columns come from hyper-dual probes (v = a, w = e_j, u = 0) instead.
inline std::vector<double> hessian_times(const dualcbf::NetworkSpec& net, const std::vector<double>& x,
                                         const std::vector<double>& a) {
    const std::size_t n = x.size();
    std::vector<double> out(n);
    const std::vector<double> zero(n, 0.0);
    for (std::size_t j = 0; j < n; ++j) {
        std::vector<double> e(n, 0.0);
        e[j] = 1.0;
        out[j] = dualcbf::hyper_forward<double>(net, dualcbf::make_hyper_seed<double>(x, a, e, zero)).d12;
    }
    return out;
}

}  // namespace testing_support
