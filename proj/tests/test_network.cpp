#include <gtest/gtest.h>

#include <random>

#include "alloc_hook.hpp"
#include "support.hpp"

using namespace dualcbf;
using testing_support::random_vector;

namespace {

NetworkSpec affine_1d(double w, double b) { return NetworkSpec::create({1, 1}, {{w}}, {{b}}, {}); }

const std::vector<std::vector<std::size_t>> kArchitectures = {{4, 32, 32, 1}, {2, 64, 64, 1}, {3, 5, 1}, {6, 3, 9, 4, 1}};

}  // namespace

TEST(Network, RejectsBadShapes) {
    EXPECT_THROW(NetworkSpec::create({2, 1}, {{1.0}}, {{0.0}}, {}), DimensionMismatch);
    EXPECT_THROW(NetworkSpec::create({2, 2}, {{1, 0, 0, 1}}, {{0, 0}}, {}), InvalidArchitecture);
    EXPECT_THROW(NetworkSpec::create({2, 0, 1}, {{}, {}}, {{}, {0}}, {Activation::relu}), InvalidArchitecture);
    EXPECT_THROW(NetworkSpec::create({1, 1, 1}, {{1}, {1}}, {{0}, {0}}, {}), InvalidArchitecture);
}

TEST(Network, ParameterCount) {
    EXPECT_EQ(random_network({4, 32, 32, 1}, Activation::relu, 1).parameter_count(), 1249u);
    EXPECT_EQ(random_network({2, 64, 64, 1}, Activation::relu, 1).parameter_count(), 4417u);
}

TEST(Forward, AffineAndRelu) {
    EXPECT_EQ(forward<double>(affine_1d(2, 1), std::vector<double>{3}), 7.0);
    const auto relu = NetworkSpec::create({1, 1, 1}, {{1}, {1}}, {{0}, {0}}, {Activation::relu});
    EXPECT_EQ(forward<double>(relu, std::vector<double>{-5}), 0.0);
    EXPECT_EQ(forward<double>(relu, std::vector<double>{5}), 5.0);
}

TEST(Forward, RejectsWrongInputLength) {
    const auto net = random_network({4, 8, 1}, Activation::relu, 2);
    EXPECT_THROW(forward<double>(net, std::vector<double>{1, 2}), DimensionMismatch);
    EXPECT_THROW(dual_forward<double>(net, std::vector<double>(4), std::vector<double>(3)), DimensionMismatch);
}

TEST(Forward, InstrumentedCountMatchesClosedForm) {
    std::mt19937_64 rng(1);
    for (const auto& w : kArchitectures) {
        for (Activation kind : {Activation::relu, Activation::tanh, Activation::sigmoid, Activation::softplus}) {
            const auto net = random_network(w, kind, 5);
            const auto x = random_vector(rng, w[0]);
            OpCounter f, d;
            forward<double>(net, x, &f);
            dual_forward<double>(net, x, random_vector(rng, w[0]), &d);
            const auto r = closed_form(net, 1);
            EXPECT_EQ(f.total(), r.C_f);
            EXPECT_EQ(d.total(), r.C_df);
        }
    }
    const auto bike = random_network({4, 32, 32, 1}, Activation::relu, 7);
    OpCounter ops;
    forward<double>(bike, std::vector<double>(4, 0.3), &ops);
    EXPECT_EQ(ops.total(), 2432u);
    const auto vdp = random_network({2, 64, 64, 1}, Activation::relu, 7);
    ops.reset();
    dual_forward<double>(vdp, std::vector<double>{0.1, 0.2}, std::vector<double>{1, -1}, &ops);
    EXPECT_EQ(ops.total(), 17279u);
}

TEST(DualForward, AffineNet) {
    const auto d = dual_forward<double>(affine_1d(2, 1), std::vector<double>{3}, std::vector<double>{10});
    EXPECT_EQ(d, (Dual<>{7, 20}));
}

TEST(DualForward, ZeroDirection) {
    std::mt19937_64 rng(2);
    for (Activation kind : {Activation::relu, Activation::tanh, Activation::softplus}) {
        const auto net = random_network({3, 16, 16, 1}, kind, 9);
        const auto x = random_vector(rng, 3);
        const auto d = dual_forward<double>(net, x, std::vector<double>(3, 0.0));
        EXPECT_EQ(d.du, 0.0);
        EXPECT_EQ(d.re, forward<double>(net, x));
    }
}

TEST(DualForward, MatchesReverseGradient) {
    std::mt19937_64 rng(3);
    for (const auto& w : kArchitectures) {
        for (Activation kind : {Activation::relu, Activation::tanh, Activation::softplus}) {
            for (int s = 0; s < 50; ++s) {
                const auto net = random_network(w, kind, 100 + s);
                const auto x = random_vector(rng, w[0], -2, 2);
                const auto v = random_vector(rng, w[0], -2, 2);
                const double expect = dot<double>(gradient<double>(net, x), v);
                const double got = dual_forward<double>(net, x, v).du;
                const double scale = condition_scale<double>(net, x, v);
                EXPECT_LE(std::abs(got - expect), 8 * 0x1p-52 * scale) << "arch depth " << w.size();
            }
        }
    }
}

TEST(DualForward, LinearInDirection) {
    std::mt19937_64 rng(4);
    for (Activation kind : {Activation::relu, Activation::tanh}) {
        for (int s = 0; s < 100; ++s) {
            const auto net = random_network({4, 32, 32, 1}, kind, 200 + s);
            const auto x = random_vector(rng, 4);
            const auto v = random_vector(rng, 4), w = random_vector(rng, 4);
            const double alpha = uniform(rng, -2, 2), beta = uniform(rng, -2, 2);
            std::vector<double> mix(4);
            for (int k = 0; k < 4; ++k) mix[k] = alpha * v[k] + beta * w[k];
            const double lhs = dual_forward<double>(net, x, mix).du;
            const double rhs = alpha * dual_forward<double>(net, x, v).du + beta * dual_forward<double>(net, x, w).du;
            const double scale = condition_scale<double>(net, x, mix) + std::abs(alpha) * condition_scale<double>(net, x, v) +
                                 std::abs(beta) * condition_scale<double>(net, x, w);
            EXPECT_LE(std::abs(lhs - rhs), 8 * 0x1p-52 * scale);
        }
    }
}

TEST(DualForward, CallerScratchAllocatesNothing) {
    const auto net = random_network({4, 32, 32, 1}, Activation::tanh, 5);
    std::vector<double> scratch(dual_scratch_size(net));
    const std::vector<double> x{0.1, 0.2, 0.3, 0.4}, v{1, 0, 0, 0};
    Dual<> d;
    {
        alloc_hook::Scope scope;
        d = dual_forward<double>(net, x, v, std::span<double>(scratch));
    }
    EXPECT_EQ(alloc_hook::calls.load(), 0u);
    EXPECT_EQ(d, dual_forward<double>(net, x, v));
}

TEST(DualForward, AllocatingOverloadUsesOneBufferOfThreeWidths) {
    const auto net = random_network({4, 32, 32, 1}, Activation::relu, 5);
    const std::vector<double> x{0.1, 0.2, 0.3, 0.4}, v{1, 0, 0, 0};
    {
        alloc_hook::Scope scope;
        dual_forward<double>(net, x, v);
    }
    EXPECT_EQ(alloc_hook::calls.load(), 1u);
    EXPECT_EQ(alloc_hook::bytes.load(), 3 * 32 * sizeof(double));
}

TEST(DualForward, ScratchTooSmallIsRejected) {
    const auto net = random_network({4, 32, 1}, Activation::relu, 5);
    std::vector<double> scratch(dual_scratch_size(net) - 1);
    EXPECT_THROW(dual_forward<double>(net, std::vector<double>(4), std::vector<double>(4), std::span<double>(scratch)),
                 DimensionMismatch);
}

TEST(Batched, DuplicatedColumnsAgree) {
    const auto net = random_network({3, 16, 16, 1}, Activation::tanh, 6);
    const std::vector<double> x{0.3, -0.2, 0.9};
    const std::vector<double> V{1, 1, 2, 2, -1, -1};  // 3 x 2, both columns (1, 2, -1)
    const auto b = dual_forward_batched<double>(net, x, V, 2);
    EXPECT_EQ(b.tangents[0], b.tangents[1]);
}

TEST(Batched, IdentityColumnsGiveGradient) {
    std::mt19937_64 rng(7);
    const auto net = random_network({4, 32, 32, 1}, Activation::softplus, 8);
    const auto x = random_vector(rng, 4);
    std::vector<double> I(16, 0.0);
    for (int k = 0; k < 4; ++k) I[k * 4 + k] = 1.0;
    const auto b = dual_forward_batched<double>(net, x, I, 4);
    const auto g = gradient<double>(net, x);
    for (int k = 0; k < 4; ++k) EXPECT_LE(std::abs(b.tangents[k] - g[k]), 1e-14 * (1 + std::abs(g[k])));
}

TEST(Batched, BitwiseEqualsSequential) {
    std::mt19937_64 rng(8);
    for (const auto& w : kArchitectures) {
        for (Activation kind : {Activation::relu, Activation::tanh, Activation::sigmoid}) {
            const auto net = random_network(w, kind, 300);
            for (int s = 0; s < 20; ++s) {
                const std::size_t m = 1 + rng() % 4;
                const auto x = random_vector(rng, w[0], -2, 2);
                const auto V = random_vector(rng, w[0] * m, -2, 2);
                const auto b = dual_forward_batched<double>(net, x, V, m);
                for (std::size_t j = 0; j < m; ++j) {
                    std::vector<double> col(w[0]);
                    for (std::size_t k = 0; k < w[0]; ++k) col[k] = V[k * m + j];
                    const auto d = dual_forward<double>(net, x, col);
                    EXPECT_EQ(b.tangents[j], d.du);
                    EXPECT_EQ(b.value, d.re);
                }
            }
        }
    }
}

TEST(Batched, BicycleInputMatrix) {
    const auto net = load_model(testing_support::fixture("bicycle.model")).net;
    const auto dyn = make_dynamics(parse_dynamics_id("bicycle:wheelbase=2.5"));
    const std::vector<double> x{0, 0, 0, 1};
    const auto G = dyn.input_matrix(x);
    const auto b = dual_forward_batched<double>(net, x, G, 2);
    for (std::size_t j = 0; j < 2; ++j) {
        const auto col = std::vector<double>{G[j], G[2 + j], G[4 + j], G[6 + j]};
        EXPECT_EQ(b.tangents[j], dual_forward<double>(net, x, col).du);
    }
}

TEST(Hyper, SlicesMatchDualPasses) {
    std::mt19937_64 rng(9);
    for (Activation kind : {Activation::tanh, Activation::sigmoid, Activation::softplus}) {
        for (int s = 0; s < 30; ++s) {
            const auto net = random_network({3, 12, 12, 1}, kind, 400 + s);
            const auto x = random_vector(rng, 3), v = random_vector(rng, 3), w = random_vector(rng, 3),
                       u = random_vector(rng, 3);
            const auto seed = make_hyper_seed<double>(x, v, w, u);
            const auto h = hyper_forward<double>(net, seed);
            const auto dv = dual_forward<double>(net, x, v);
            const auto dw = dual_forward<double>(net, x, w);
            EXPECT_EQ(h.re, dv.re);
            EXPECT_EQ(h.d1, dv.du);
            EXPECT_EQ(h.d2, dw.du);
        }
    }
}

TEST(Hyper, ZeroDirectionsReduceToGradient) {
    const auto net = random_network({3, 10, 1}, Activation::tanh, 10);
    const std::vector<double> x{0.2, -0.4, 0.6}, zero(3, 0.0);
    const auto g = gradient<double>(net, x);
    for (int j = 0; j < 3; ++j) {
        std::vector<double> e(3, 0.0);
        e[j] = 1.0;
        const auto h = hyper_forward<double>(net, make_hyper_seed<double>(x, zero, zero, e));
        EXPECT_NEAR(h.d12, g[j], 1e-15);
    }
}

TEST(Hyper, SoftplusMicroNet) {
    const auto net = NetworkSpec::create({1, 1, 1}, {{1}, {1}}, {{0}, {0}}, {Activation::softplus});
    const std::vector<double> x{0}, one{1}, zero{0};
    const auto h = hyper_forward<double>(net, make_hyper_seed<double>(x, one, one, zero));
    EXPECT_DOUBLE_EQ(h.d12, 0.25);
}

TEST(Hyper, RejectsRelu) {
    const auto net = random_network({2, 4, 1}, Activation::relu, 11);
    const std::vector<double> x{1, 1};
    EXPECT_THROW(hyper_forward<double>(net, make_hyper_seed<double>(x, x, x, x)), NonSmoothActivation);
}

TEST(Trace, AffineBaseCase) {
    const auto net = NetworkSpec::create({2, 1}, {{3, -2}}, {{0.5}}, {});
    const auto t = dual_trace<double>(net, std::vector<double>{1, 1}, std::vector<double>{2, 5});
    ASSERT_EQ(t.dual_pre.size(), 1u);
    EXPECT_EQ(t.dual_pre[0], std::vector<double>{3 * 2 - 2 * 5});
}

TEST(Trace, RecurrenceReproducesStoredTrace) {
    std::mt19937_64 rng(12);
    for (Activation kind : {Activation::relu, Activation::tanh}) {
        for (int s = 0; s < 50; ++s) {
            const std::size_t depth = 1 + rng() % 5;
            std::vector<std::size_t> widths{1 + rng() % 5};
            for (std::size_t i = 1; i < depth; ++i) widths.push_back(1 + rng() % 12);
            widths.push_back(1);
            const auto net = random_network(widths, kind, 500 + s);
            const auto x = random_vector(rng, widths[0]), v = random_vector(rng, widths[0]);
            const auto t = dual_trace<double>(net, x, v);
            std::vector<double> c = v;
            for (std::size_t i = 0; i < net.depth(); ++i) {
                const auto& layer = net.layer(i);
                std::vector<double> next(layer.rows);
                for (std::size_t r = 0; r < layer.rows; ++r) {
                    double acc = layer.w(r, 0) * c[0];
                    for (std::size_t k = 1; k < layer.cols; ++k) acc += layer.w(r, k) * c[k];
                    next[r] = acc;
                }
                ASSERT_EQ(next, t.dual_pre[i]);
                if (layer.activation) {
                    for (std::size_t r = 0; r < layer.rows; ++r) {
                        const double a = t.pre[i][r];
                        next[r] = activation_derivative(*layer.activation, a, activate(*layer.activation, a)) * next[r];
                    }
                    ASSERT_EQ(next, t.dual_post[i]);
                }
                c = next;
            }
            EXPECT_EQ(c[0], dual_forward<double>(net, x, v).du);
        }
    }
}
