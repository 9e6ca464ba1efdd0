#include <gtest/gtest.h>

#include <filesystem>
#include <regex>
#include <sstream>

#include "cli.hpp"
#include "support.hpp"

using namespace dualcbf;
namespace fs = std::filesystem;

namespace {

struct Result {
    int code;
    std::string out, err;
};

Result run(std::vector<std::string> args) {
    std::ostringstream out, err;
    const int code = cli::run(std::move(args), out, err);
    return {code, out.str(), err.str()};
}

fs::path temp_dir(const std::string& name) {
    const auto dir = fs::temp_directory_path() / ("dualcbf_cli_" + name);
    fs::remove_all(dir);
    return dir;
}

double value_after(const std::string& text, const std::string& key) {
    std::smatch m;
    const std::regex re("(^|\n)" + key + " = ([^\n]+)");
    if (!std::regex_search(text, m, re)) return NAN;
    return std::stod(m[2].str());
}

}  // namespace

TEST(Cli, CostBicycle) {
    const auto r = run({"cost", "--widths", "4,32,32,1", "--act", "relu", "--m", "2"});
    EXPECT_EQ(r.code, 0);
    EXPECT_NE(r.out.find("C_f=2432"), std::string::npos) << r.out;
    EXPECT_NE(r.out.find("dual total=14397"), std::string::npos);
    EXPECT_NE(r.out.find("reverse total=4817"), std::string::npos);
}

TEST(Cli, CostJson) {
    const auto r = run({"cost", "--widths", "2,64,64,1", "--act", "relu", "--m", "1", "--format", "json"});
    ASSERT_EQ(r.code, 0);
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["C_f"], 8704);
    EXPECT_EQ(j["C_df"], 17279);
    EXPECT_EQ(j["constraint_total_dual"], 34558);
    EXPECT_EQ(j["constraint_total_reverse"], 17284);
}

TEST(Cli, CostPerLayerActivations) {
    const auto r = run({"cost", "--widths", "2,8,4,1", "--act", "tanh,softplus", "--format", "json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    EXPECT_EQ(j["activations"], nlohmann::json({"tanh", "softplus"}));
}

TEST(Cli, CompileWritesHeaderAndManifest) {
    const auto dir = temp_dir("compile");
    const auto r = run({"compile", testing_support::fixture("bicycle.model"), "--f32", "--out", dir.string() + "/"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto header = dir / "bicycle_relu_4_32_32_1.h";
    const auto manifest = dir / "bicycle_relu_4_32_32_1.manifest.json";
    ASSERT_TRUE(fs::exists(header));
    ASSERT_TRUE(fs::exists(manifest));
    std::ifstream in(manifest);
    const auto j = nlohmann::json::parse(in);
    EXPECT_EQ(j["scalar"], "float");
    EXPECT_EQ(j["parameter_scalars"], 1249);
    fs::remove_all(dir);
}

TEST(Cli, CompileOrderTwoToFile) {
    const auto dir = temp_dir("compile2");
    const auto r = run({"compile", testing_support::fixture("pendulum.model"), "--prefix", "pend", "--f64", "--order",
                        "2", "--with-dynamics", "pendulum", "--out", (dir / "p.h").string()});
    ASSERT_EQ(r.code, 0) << r.err;
    EXPECT_TRUE(fs::exists(dir / "p.h"));
    EXPECT_TRUE(fs::exists(dir / "p.manifest.json"));
    fs::remove_all(dir);
}

TEST(Cli, CompileErrors) {
    EXPECT_EQ(run({"compile", testing_support::fixture("bicycle.model"), "--order", "2"}).code, 1);
    EXPECT_EQ(run({"compile", testing_support::fixture("bicycle.model"), "--prefix", "1bad"}).code, 1);
    EXPECT_EQ(run({"compile", testing_support::fixture("bicycle.model"), "--f32", "--f64"}).code, 2);
    EXPECT_EQ(run({"compile", testing_support::fixture("bicycle.model"), "--order", "3"}).code, 2);
}

TEST(Cli, EvalMatchesLibrary) {
    const auto r = run({"eval", testing_support::fixture("vdp.model"), "--x", "0.5,0.1", "--dynamics", "vanderpol"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto net = load_model(testing_support::fixture("vdp.model")).net;
    const auto c = assemble(net, make_dynamics(parse_dynamics_id("vanderpol")), std::vector<double>{0.5, 0.1});
    EXPECT_EQ(value_after(r.out, "h"), c.h);
    EXPECT_EQ(value_after(r.out, "Lf"), c.Lf);
    EXPECT_NE(r.out.find("LG = [" + cli::num(c.LG[0]) + "]"), std::string::npos) << r.out;
}

TEST(Cli, EvalJsonOrderTwoUsesMetadataDynamics) {
    const auto r = run({"eval", testing_support::fixture("pendulum.model"), "--x", "0.3,-0.2", "--order", "2", "--json"});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto j = nlohmann::json::parse(r.out);
    const auto net = load_model(testing_support::fixture("pendulum.model")).net;
    const auto c = assemble_second_order(net, make_dynamics(parse_dynamics_id("pendulum")), std::vector<double>{0.3, -0.2});
    EXPECT_EQ(j["Lf2"].get<double>(), c.second->Lf2);
    EXPECT_EQ(j["order"], 2);
}

TEST(Cli, EvalDirection) {
    const auto r = run({"eval", testing_support::fixture("tiny_affine.model"), "--x", "3", "--v", "10"});
    ASSERT_EQ(r.code, 0);
    EXPECT_EQ(value_after(r.out, "h"), 7.0);
    EXPECT_EQ(value_after(r.out, "directional"), 20.0);
}

TEST(Cli, EvalErrors) {
    EXPECT_EQ(run({"eval", testing_support::fixture("vdp.model"), "--x", "0.5,abc", "--dynamics", "vanderpol"}).code, 2);
    EXPECT_EQ(run({"eval", testing_support::fixture("vdp.model"), "--x", "0.5", "--dynamics", "vanderpol"}).code, 1);
    EXPECT_EQ(run({"eval", testing_support::fixture("tiny_affine.model"), "--x", "1"}).code, 2);
    EXPECT_EQ(run({"eval", "/nonexistent.model", "--x", "1"}).code, 1);
    EXPECT_EQ(run({"eval", testing_support::fixture("vdp.model"), "--x", "1,1", "--dynamics", "warp"}).code, 1);
}

TEST(Cli, SimulateWritesBothRuns) {
    const auto dir = temp_dir("sim");
    const auto r = run({"simulate", "--config", testing_support::fixture("vdp_box_sim.json"), "--out-dir", dir.string()});
    ASSERT_EQ(r.code, 0) << r.err;
    const auto on = read_csv(dir / "trajectory.csv");
    const auto off = read_csv(dir / "trajectory_unfiltered.csv");
    EXPECT_EQ(on.rows.size(), 2001u);
    EXPECT_GE(on.min_h(), -1e-3);
    EXPECT_LT(off.min_h(), 0.0);
    fs::remove_all(dir);
}

TEST(Cli, VerifyPasses) {
    const auto r = run({"verify", testing_support::fixture("bicycle.model"), "--samples", "200"});
    EXPECT_EQ(r.code, 0) << r.out << r.err;
    EXPECT_NE(r.out.find("verify: all checks passed"), std::string::npos);
    EXPECT_EQ(r.out.find("FAIL"), std::string::npos);
}

TEST(Cli, UsageErrors) {
    EXPECT_EQ(run({}).code, 2);
    EXPECT_EQ(run({"frobnicate"}).code, 2);
    EXPECT_EQ(run({"cost", "--widths", "4,32,1", "--bogus"}).code, 2);
    EXPECT_EQ(run({"cost"}).code, 2);
    EXPECT_EQ(run({"cost", "--widths", "4,32,1", "--act", "gelu"}).code, 2);
    EXPECT_EQ(run({"--help"}).code, 0);
}
