#include <gtest/gtest.h>

#include <cmath>
#include <random>

#include "support.hpp"

using namespace dualcbf;

TEST(DualAdd, AddsComponentwise) {
    EXPECT_EQ(dual_add(Dual<>{1, 2}, Dual<>{3, 4}), (Dual<>{4, 6}));
    EXPECT_EQ(dual_add(Dual<>{0, 0}, Dual<>{-7.25, 3.5}), (Dual<>{-7.25, 3.5}));
    EXPECT_EQ(dual_add(Dual<>{1.5, -0.5}, Dual<>{-1.5, 0.5}), (Dual<>{0, 0}));
}

TEST(DualMul, ProductRule) {
    EXPECT_EQ(dual_mul(Dual<>{1, 2}, Dual<>{3, 4}), (Dual<>{3, 10}));
    EXPECT_EQ(dual_mul(Dual<>{0, 1}, Dual<>{0, 1}), (Dual<>{0, 0}));
    EXPECT_EQ(dual_mul(Dual<>{1, 0}, Dual<>{-2.5, 6}), (Dual<>{-2.5, 6}));
}

TEST(DualMul, CountsThreeMultipliesOneAdd) {
    OpCounter ops;
    dual_mul(Dual<>{1.25, 2}, Dual<>{3, -4}, &ops);
    EXPECT_EQ(ops.muls, 3u);
    EXPECT_EQ(ops.adds, 1u);
    EXPECT_EQ(ops.total(), 4u);
}

TEST(DualActivate, ReluGates) {
    EXPECT_EQ(dual_activate(Activation::relu, Dual<>{2, 5}), (Dual<>{2, 5}));
    EXPECT_EQ(dual_activate(Activation::relu, Dual<>{-2, 5}), (Dual<>{0, 0}));
    EXPECT_EQ(dual_activate(Activation::relu, Dual<>{0, 5}), (Dual<>{0, 0}));
}

TEST(DualActivate, SmoothKindsAtZero) {
    EXPECT_EQ(dual_activate(Activation::tanh, Dual<>{0, 3}), (Dual<>{0, 3}));
    const auto s = dual_activate(Activation::softplus, Dual<>{0, 1});
    EXPECT_DOUBLE_EQ(s.re, std::log(2.0));
    EXPECT_DOUBLE_EQ(s.du, 0.5);
    const auto g = dual_activate(Activation::sigmoid, Dual<>{0, 2});
    EXPECT_DOUBLE_EQ(g.re, 0.5);
    EXPECT_DOUBLE_EQ(g.du, 0.5);
}

TEST(DualActivate, MatchesClosedFormDerivatives) {
    std::mt19937_64 rng(11);
    for (int i = 0; i < 2000; ++i) {
        const double a = uniform(rng, -6, 6);
        const double b = uniform(rng, -3, 3);
        const double th = std::tanh(a);
        const double sg = 1 / (1 + std::exp(-a));
        struct Case {
            Activation kind;
            double value, slope;
        } cases[] = {{Activation::tanh, th, 1 / (std::cosh(a) * std::cosh(a))},
                     {Activation::sigmoid, sg, std::exp(-a) / ((1 + std::exp(-a)) * (1 + std::exp(-a)))},
                     {Activation::softplus, std::log1p(std::exp(a)), sg}};
        for (const auto& c : cases) {
            const auto d = dual_activate(c.kind, Dual<>{a, b});
            EXPECT_LE(ulp_distance(d.re, c.value), 4u) << name_of(c.kind) << " a=" << a;
            // 1 - tanh² and s(1 - s) cancel near saturation, so the slope error is
            // measured against |b| rather than against the (tiny) product.
            EXPECT_LE(std::abs(d.du - c.slope * b), 4 * 0x1p-52 * std::abs(b))
                << name_of(c.kind) << " a=" << a;
        }
    }
}

TEST(DualActivate, AgreesWithCentralDifferences) {
    std::mt19937_64 rng(12);
    for (Activation kind : {Activation::tanh, Activation::sigmoid, Activation::softplus}) {
        for (int i = 0; i < 500; ++i) {
            const double a = uniform(rng, -4, 4);
            const double h = 1e-6;
            const double fd = (activate(kind, a + h) - activate(kind, a - h)) / (2 * h);
            const auto d = dual_activate(kind, Dual<>{a, 1.0});
            EXPECT_TRUE(testing_support::close_rel(d.du, fd, 1e-6, 1e-6)) << name_of(kind) << " a=" << a;
        }
    }
}

TEST(DualRing, AxiomsHoldExactlyOnDyadics) {
    std::mt19937_64 rng(13);
    auto dyadic = [&] { return static_cast<double>(static_cast<int>(rng() % 257) - 128) / 16.0; };
    for (int i = 0; i < 1000; ++i) {
        const Dual<> x{dyadic(), dyadic()}, y{dyadic(), dyadic()}, z{dyadic(), dyadic()};
        EXPECT_EQ(dual_add(x, y), dual_add(y, x));
        EXPECT_EQ(dual_mul(x, y), dual_mul(y, x));
        EXPECT_EQ(dual_add(dual_add(x, y), z), dual_add(x, dual_add(y, z)));
        EXPECT_EQ(dual_mul(dual_mul(x, y), z), dual_mul(x, dual_mul(y, z)));
        EXPECT_EQ(dual_mul(x, dual_add(y, z)), dual_add(dual_mul(x, y), dual_mul(x, z)));
    }
}

TEST(HyperMul, ExpandsWithNilpotents) {
    const double a = 1.5, b = -2, c = 0.25;
    EXPECT_EQ(hyper_mul(HyperDual<>{a, b, 0, 0}, HyperDual<>{a, 0, c, 0}), (HyperDual<>{a * a, a * b, a * c, b * c}));
    const HyperDual<> e{0, 1, 1, 0};
    EXPECT_EQ(hyper_mul(e, e), (HyperDual<>{0, 0, 0, 2}));
    const HyperDual<> z{3, -1, 0.5, 7};
    EXPECT_EQ(hyper_mul(HyperDual<>{1, 0, 0, 0}, z), z);
}

TEST(HyperMul, RingAxiomsOnDyadics) {
    std::mt19937_64 rng(14);
    auto dyadic = [&] { return static_cast<double>(static_cast<int>(rng() % 129) - 64) / 8.0; };
    auto draw = [&] { return HyperDual<>{dyadic(), dyadic(), dyadic(), dyadic()}; };
    for (int i = 0; i < 500; ++i) {
        const auto x = draw(), y = draw(), z = draw();
        EXPECT_EQ(hyper_mul(x, y), hyper_mul(y, x));
        EXPECT_EQ(hyper_mul(hyper_mul(x, y), z), hyper_mul(x, hyper_mul(y, z)));
        EXPECT_EQ(hyper_mul(x, y + z), hyper_mul(x, y) + hyper_mul(x, z));
    }
}

TEST(HyperActivate, SoftplusSecondDerivativeAtZero) {
    const auto r = hyper_activate(Activation::softplus, HyperDual<>{0, 1, 1, 0});
    EXPECT_DOUBLE_EQ(r.re, std::log(2.0));
    EXPECT_DOUBLE_EQ(r.d1, 0.5);
    EXPECT_DOUBLE_EQ(r.d2, 0.5);
    EXPECT_DOUBLE_EQ(r.d12, 0.25);
}

TEST(HyperActivate, TanhAtZeroHasNoCurvature) {
    EXPECT_EQ(hyper_activate(Activation::tanh, HyperDual<>{0, 2, 3, 0}), (HyperDual<>{0, 2, 3, 0}));
}

TEST(HyperActivate, DegenerateSeedReducesToFirstOrder) {
    for (Activation kind : {Activation::tanh, Activation::sigmoid, Activation::softplus, Activation::identity}) {
        for (double a : {-1.3, 0.0, 0.7, 2.4}) {
            const auto r = hyper_activate(kind, HyperDual<>{a, 0, 0, 1});
            const double value = activate(kind, a);
            EXPECT_EQ(r.d12, activation_derivative(kind, a, value)) << name_of(kind);
        }
    }
}

TEST(HyperActivate, FirstOrderSliceMatchesDual) {
    std::mt19937_64 rng(15);
    for (Activation kind : {Activation::tanh, Activation::sigmoid, Activation::softplus}) {
        for (int i = 0; i < 200; ++i) {
            const double a = uniform(rng, -5, 5), b = uniform(rng, -2, 2);
            const auto h = hyper_activate(kind, HyperDual<>{a, b, 0, 0});
            const auto d = dual_activate(kind, Dual<>{a, b});
            EXPECT_EQ(h.re, d.re);
            EXPECT_EQ(h.d1, d.du);
        }
    }
}

TEST(HyperActivate, RejectsRelu) {
    EXPECT_THROW(hyper_activate(Activation::relu, HyperDual<>{1, 1, 1, 0}), NonSmoothActivation);
}

TEST(OpCounter, MonotoneDuringPass) {
    const auto net = random_network({3, 8, 8, 1}, Activation::tanh, 3);
    OpCounter ops;
    const std::vector<double> x{0.1, 0.2, 0.3}, v{1, 0, -1};
    dual_forward<double>(net, x, v, &ops);
    ASSERT_EQ(ops.layer_marks.size(), net.depth());
    for (std::size_t i = 1; i < ops.layer_marks.size(); ++i) EXPECT_GE(ops.layer_marks[i], ops.layer_marks[i - 1]);
    EXPECT_EQ(ops.layer_marks.back(), ops.total());
    EXPECT_EQ(ops.total(), ops.adds + ops.muls + ops.activation_ops);
}

TEST(Activation, NamesRoundTrip) {
    for (Activation k : kAllActivations) EXPECT_EQ(parse_activation(name_of(k)), k);
    EXPECT_FALSE(parse_activation("gelu").has_value());
}
