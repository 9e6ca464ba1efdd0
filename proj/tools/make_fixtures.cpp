// Regenerates the bundled model files and the closed-loop config.
//
//   make_fixtures <out-dir>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>

#include "dualcbf/fixtures.hpp"
#include "dualcbf/model_io.hpp"

namespace fs = std::filesystem;
using namespace dualcbf;

namespace {

constexpr std::uint64_t kBicycleSeed = 0x5eed0001;
constexpr std::uint64_t kVdpSeed = 0x5eed0002;
constexpr std::uint64_t kVdpTanhSeed = 0x5eed0003;
constexpr std::uint64_t kPendulumSeed = 0x5eed0004;

constexpr const char* kVdpSimConfig = R"({
  "model": "vdp_box_barrier.model",
  "dynamics": "vanderpol:mu=1",
  "t_final": 20.0,
  "dt": 0.001,
  "control_dt": 0.01,
  "x0": [0.5, 0.0],
  "nominal": {"kind": "proportional", "gain": [[2.0, 1.0]], "target": [2.5, 0.0]},
  "alpha": 10.0,
  "bounds": [[-10.0, 10.0]],
  "filter": true,
  "compare_unfiltered": true,
  "seed": 0
}
)";

}  // namespace

int main(int argc, char** argv) {
    if (argc != 2) {
        std::cerr << "usage: make_fixtures <out-dir>\n";
        return 2;
    }
    const fs::path dir = argv[1];
    fs::create_directories(dir);

    ModelMetadata bicycle;
    bicycle.name = "bicycle_relu_4_32_32_1";
    bicycle.note = "seeded random weights (seed 0x5eed0001), U(+-sqrt(6/fan_in)) weights, U(+-0.1) biases";
    bicycle.alpha_gain = 1.0;
    bicycle.dynamics = "bicycle:wheelbase=2.5";
    bicycle.input_bounds = {{-3.0, 3.0}, {-0.5, 0.5}};
    save_model(dir / "bicycle.model", random_network({4, 32, 32, 1}, Activation::relu, kBicycleSeed), bicycle);

    ModelMetadata vdp;
    vdp.name = "vanderpol_relu_2_64_64_1";
    vdp.note = "seeded random weights (seed 0x5eed0002); f = [x2, mu(1 - x1^2)x2 - x1], G = [0, 1]^T, mu = 1";
    vdp.alpha_gain = 1.0;
    vdp.dynamics = "vanderpol:mu=1";
    vdp.input_bounds = {{-10.0, 10.0}};
    save_model(dir / "vdp.model", random_network({2, 64, 64, 1}, Activation::relu, kVdpSeed), vdp);

    ModelMetadata vdp_tanh = vdp;
    vdp_tanh.name = "vanderpol_tanh_2_64_64_1";
    vdp_tanh.note = "seeded random weights (seed 0x5eed0003), tanh hidden layers";
    save_model(dir / "vdp_tanh.model", random_network({2, 64, 64, 1}, Activation::tanh, kVdpTanhSeed), vdp_tanh);

    ModelMetadata pendulum;
    pendulum.name = "pendulum_softplus_2_32_32_1";
    pendulum.note = "seeded random weights (seed 0x5eed0004), softplus hidden layers, relative degree two use";
    pendulum.alpha_gain = 1.0;
    pendulum.dynamics = "pendulum:g=9.81,L=1,mass=1";
    pendulum.input_bounds = {{-20.0, 20.0}};
    save_model(dir / "pendulum.model", random_network({2, 32, 32, 1}, Activation::softplus, kPendulumSeed),
               pendulum);

    ModelMetadata tiny;
    tiny.name = "tiny_affine";
    tiny.note = "h(x) = 2x + 1";
    save_model(dir / "tiny_affine.model", NetworkSpec::create({1, 1}, {{2.0}}, {{1.0}}, {}), tiny);

    ModelMetadata box;
    box.name = "vdp_box_barrier";
    box.note = "h = 1.5 - max(|x1 + x2|, |x1 - x2|), exact ReLU encoding";
    box.alpha_gain = 10.0;
    box.dynamics = "vanderpol:mu=1";
    box.input_bounds = {{-10.0, 10.0}};
    save_model(dir / "vdp_box_barrier.model", diamond_barrier(1.5), box);

    std::ofstream(dir / "vdp_box_sim.json", std::ios::binary) << kVdpSimConfig;
    std::cout << "fixtures written to " << dir.string() << "\n";
    return 0;
}
