#include <gtest/gtest.h>

#include <random>

#include "support.hpp"

using namespace dualcbf;

namespace {

const char* kMinimal = R"({"format_version": 1, "widths": [1, 1], "weights": [[[2.0]]], "biases": [[1.0]]})";

}  // namespace

TEST(ParseModel, MinimalFile) {
    const auto net = parse_model(kMinimal);
    EXPECT_EQ(forward<double>(net, std::vector<double>{3}), 7.0);
    EXPECT_EQ(net.depth(), 1u);
}

TEST(ParseModel, ShapeErrorNamesLayer) {
    const char* bad = R"({"format_version": 1, "widths": [2, 3, 1], "activations": ["relu"],
        "weights": [[[1, 2], [3, 4], [5, 6]], [[1, 2]]], "biases": [[0, 0, 0], [0]]})";
    try {
        parse_model(bad);
        FAIL() << "expected ShapeError";
    } catch (const ShapeError& e) {
        EXPECT_NE(std::string(e.what()).find("layer 2"), std::string::npos) << e.what();
    }
}

TEST(ParseModel, SyntaxErrorCarriesPosition) {
    const std::string text = "{\n  \"format_version\": 1,\n  \"widths\": [1, 1],,\n}";
    try {
        parse_model(text);
        FAIL() << "expected SyntaxError";
    } catch (const SyntaxError& e) {
        EXPECT_EQ(e.line(), 3u);
        EXPECT_GT(e.column(), 1u);
    }
}

TEST(ParseModel, RejectsUnknownActivationAndNonFinite) {
    EXPECT_THROW(parse_model(R"({"format_version": 1, "widths": [1, 1, 1], "activations": ["gelu"],
        "weights": [[[1]], [[1]]], "biases": [[0], [0]]})"),
                 UnknownActivation);
    EXPECT_THROW(parse_model(R"({"format_version": 1, "widths": [1, 1], "weights": [[[1e999]]], "biases": [[0]]})"),
                 ModelError);
    EXPECT_THROW(parse_model(R"({"format_version": 2, "widths": [1, 1], "weights": [[[1]]], "biases": [[0]]})"),
                 ShapeError);
    EXPECT_THROW(parse_model(R"({"format_version": 1, "widths": [1, 2], "weights": [[[1], [1]]], "biases": [[0, 0]]})"),
                 ShapeError);
    EXPECT_THROW(parse_model(R"({"format_version": 1, "widths": [1, 1], "weights": [[["x"]]], "biases": [[0]]})"),
                 ShapeError);
}

TEST(ParseModel, BicycleFixture) {
    const auto file = load_model(testing_support::fixture("bicycle.model"));
    EXPECT_EQ(file.net.parameter_count(), 1249u);
    EXPECT_EQ(file.metadata.name, "bicycle_relu_4_32_32_1");
    ASSERT_TRUE(file.metadata.dynamics);
    EXPECT_EQ(parse_dynamics_id(*file.metadata.dynamics).wheelbase, 2.5);
    EXPECT_EQ(file.metadata.input_bounds.size(), 2u);
}

TEST(ParseModel, MissingFileIsIoError) { EXPECT_THROW(load_model("/nonexistent/x.model"), IoError); }

TEST(RoundTrip, SerializeThenParseIsIdentical) {
    for (const char* name : {"bicycle.model", "vdp.model", "vdp_tanh.model", "pendulum.model", "tiny_affine.model",
                             "vdp_box_barrier.model"}) {
        const auto file = load_model(testing_support::fixture(name));
        const auto again = parse_model_file(serialize_model(file.net, file.metadata));
        EXPECT_TRUE(again.net == file.net) << name;
        EXPECT_EQ(again.metadata, file.metadata) << name;
    }
    std::mt19937_64 rng(51);
    for (int s = 0; s < 20; ++s) {
        const auto net = random_network({3, 7, 5, 1}, {Activation::sigmoid, Activation::softplus}, 900 + s);
        EXPECT_TRUE(parse_model(serialize_model(net)) == net);
    }
}

TEST(Fixtures, RegenerationIsDeterministic) {
    // The bundled fixtures are reproducible from their documented seeds.
    const auto bike = load_model(testing_support::fixture("bicycle.model")).net;
    EXPECT_TRUE(random_network({4, 32, 32, 1}, Activation::relu, 0x5eed0001) == bike);
    const auto vdp = load_model(testing_support::fixture("vdp.model")).net;
    EXPECT_TRUE(random_network({2, 64, 64, 1}, Activation::relu, 0x5eed0002) == vdp);
    EXPECT_TRUE(load_model(testing_support::fixture("vdp_box_barrier.model")).net == diamond_barrier(1.5));
}

TEST(Dynamics, BicycleAtRest) {
    const auto dyn = make_dynamics(parse_dynamics_id("bicycle:wheelbase=2.5"));
    const std::vector<double> x{0, 0, 0, 1};
    EXPECT_EQ(dyn.drift(x), (std::vector<double>{1, 0, 0, 0}));
    const auto G = dyn.input_matrix(x);
    ASSERT_EQ(G.size(), 8u);
    EXPECT_EQ((std::vector<double>{G[1], G[3], G[5], G[7]}), (std::vector<double>{0, 0, 0.4, 0}));
}

TEST(Dynamics, PendulumAndVanDerPol) {
    const auto pend = make_dynamics(parse_dynamics_id("pendulum:g=9.81,L=1,mass=1"));
    EXPECT_EQ(pend.drift(std::vector<double>{0, 0.7}), (std::vector<double>{0.7, 0}));
    EXPECT_EQ(pend.jacobian(std::vector<double>{0, 0.7}), (std::vector<double>{0, 1, 9.81, 0}));
    const auto vdp = make_dynamics(parse_dynamics_id("vanderpol"));
    EXPECT_EQ(vdp.drift(std::vector<double>{0, 0}), (std::vector<double>{0, 0}));
    EXPECT_EQ(vdp.input_matrix(std::vector<double>{0.3, 0.2}), (std::vector<double>{0, 1}));
}

TEST(Dynamics, JacobiansMatchCentralDifferences) {
    std::mt19937_64 rng(52);
    for (const char* id : {"bicycle", "vanderpol:mu=1.5", "pendulum"}) {
        const auto dyn = make_dynamics(parse_dynamics_id(id));
        for (int s = 0; s < 100; ++s) {
            const auto x = testing_support::random_vector(rng, dyn.n);
            const auto exact = dyn.jacobian(x);
            const auto fd = central_difference_jacobian(dyn.drift, x, 1e-6);
            for (std::size_t k = 0; k < exact.size(); ++k)
                EXPECT_TRUE(testing_support::close_rel(exact[k], fd[k], 1e-5, 1e-5)) << id << " entry " << k;
        }
    }
}

TEST(Dynamics, IdParsingAndValidation) {
    const auto id = parse_dynamics_id("pendulum:g=3.5,L=2");
    EXPECT_EQ(id.kind, SystemKind::pendulum);
    EXPECT_EQ(id.gravity, 3.5);
    EXPECT_EQ(id.length, 2.0);
    EXPECT_EQ(parse_dynamics_id(to_string(id)), id);
    EXPECT_THROW(parse_dynamics_id("bicycle:wheelbase=-1"), InvalidParameter);
    EXPECT_THROW(parse_dynamics_id("quadrotor"), InvalidParameter);
    EXPECT_THROW(parse_dynamics_id("vanderpol:gain=2"), InvalidParameter);
}

TEST(Dynamics, StateLengthChecked) {
    const auto dyn = make_dynamics(parse_dynamics_id("bicycle"));
    EXPECT_THROW(dyn.drift(std::vector<double>{1, 2}), DimensionMismatch);
}
