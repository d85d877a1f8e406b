#include <gtest/gtest.h>

#include <cmath>
#include <filesystem>

#include "helpers.hpp"
#include "spikecal/calibration.hpp"
#include "spikecal/error.hpp"
#include "spikecal/snn.hpp"

using namespace spikecal;

namespace {

NetworkDef single_neuron(double b0, double b1)
{
    NetworkDef net;
    net.input_shape = {1};
    net.num_classes = 1;
    auto a = LayerSpec::linear(1, 1, true);
    a.weight = Tensor({1, 1}, {1});
    a.bias = Tensor({1}, {b0});
    auto b = LayerSpec::linear(1, 1, false);
    b.weight = Tensor({1, 1}, {1});
    b.bias = Tensor({1}, {b1});
    net.layers = {a, b};
    return net;
}

}  // namespace

TEST(ThresholdObjective, HandValues)
{
    const std::vector<double> a{0.2, 0.8, 1.6};
    EXPECT_NEAR(threshold_objective(a, 4, 1.6, 1), 0.04 / 3, 1e-15);
    EXPECT_NEAR(threshold_objective(a, 4, 0.8, 2), 0.0, 1e-15);
    EXPECT_THROW(threshold_objective(a, 4, 0.0, 1), ParameterError);
}

// Frozen from a 10001-point dense scan over [1e-3 max, max].
TEST(OptimizeThreshold, MatchesDenseScan)
{
    const std::vector<double> a{0.2, 0.8, 1.6};
    const auto r1 = optimize_threshold(a, 4, 1);
    EXPECT_NEAR(r1.v_th, 1.6, 1e-6);
    EXPECT_NEAR(r1.objective, 0.04 / 3, 1e-15);
    EXPECT_FALSE(r1.degenerate);

    const auto r2 = optimize_threshold(a, 4, 2);
    EXPECT_NEAR(r2.v_th, 0.8, 1e-3);
    EXPECT_LE(r2.objective, 1e-6);
}

TEST(OptimizeThreshold, ConstantActivations)
{
    const std::vector<double> a(50, 1.0);
    const auto r = optimize_threshold(a, 8, 1);
    EXPECT_DOUBLE_EQ(r.v_th, 1.0);
    EXPECT_EQ(r.objective, 0.0);
}

TEST(OptimizeThreshold, DegenerateInput)
{
    const std::vector<double> a{0.0, 0.0, 0.0};
    const auto r = optimize_threshold(a, 8, 1);
    EXPECT_TRUE(r.degenerate);
    EXPECT_FALSE(r.diagnostic.empty());
    EXPECT_NEAR(r.v_th, 1e-3, 1e-15);
    EXPECT_EQ(r.objective, 0.0);
}

TEST(OptimizeThreshold, BadArguments)
{
    const std::vector<double> a{0.5};
    EXPECT_THROW(optimize_threshold(a, 8, 1, 0), ParameterError);
    EXPECT_THROW(optimize_threshold(a, 0, 1), ParameterError);
    EXPECT_THROW(optimize_threshold({}, 8, 1), ParameterError);
}

TEST(ThresholdCandidates, SortedUniqueAndSpanning)
{
    const std::vector<double> a{0.0, 0.1, 0.5, 2.0};
    const auto c = threshold_candidates(a, 128);
    EXPECT_TRUE(std::is_sorted(c.begin(), c.end()));
    EXPECT_EQ(std::adjacent_find(c.begin(), c.end()), c.end());
    EXPECT_NEAR(c.front(), 2e-3, 1e-15);
    EXPECT_EQ(c.back(), 2.0);
    EXPECT_GE(c.size(), 128u);
}

TEST(OptimizeThreshold, NeverWorseThanAnyCandidate)
{
    Rng rng(31);
    for (int trial = 0; trial < 60; ++trial) {
        std::vector<double> a(200);
        for (auto& x : a) x = std::max(0.0, rng.normal() * rng.uniform(0.2, 3.0));
        const std::size_t T = 1 + rng.below(16);
        const int phi = 1 << rng.below(3);
        const auto r = optimize_threshold(a, T, phi, 32);
        ASSERT_NEAR(r.objective, threshold_objective(a, T, r.v_th, phi), 1e-15);
        for (double v : threshold_candidates(a, 32)) ASSERT_LE(r.objective, threshold_objective(a, T, v, phi));
    }
}

TEST(OptimizeThreshold, LargerPhiNeverHurts)
{
    Rng rng(32);
    for (int trial = 0; trial < 40; ++trial) {
        std::vector<double> a(300);
        for (auto& x : a) x = std::max(0.0, rng.normal() + rng.uniform(-0.5, 1.0));
        const std::size_t T = 1 + rng.below(8);
        double prev = INFINITY;
        for (int phi : {1, 2, 4, 8}) {
            // Best grid objective is monotone because the feasible error set only grows with phi.
            double best = INFINITY;
            for (double v : threshold_candidates(a, 64)) best = std::min(best, threshold_objective(a, T, v, phi));
            ASSERT_LE(best, prev + 1e-15);
            ASSERT_LE(optimize_threshold(a, T, phi, 64).objective, best);
            prev = best;
        }
    }
}

TEST(CalibrationPlan, Checks)
{
    auto p = CalibrationPlan::uniform(8, 2, 1);
    EXPECT_NO_THROW(p.check(2));
    EXPECT_THROW(p.check(3), ParameterError);
    p.grid_points = 0;
    EXPECT_THROW(p.check(2), ParameterError);
    p = CalibrationPlan::uniform(0, 2, 1);
    EXPECT_THROW(p.check(2), ParameterError);
    p = CalibrationPlan::uniform(4, 2, 1, 0.5);
    EXPECT_THROW(p.check(2), ParameterError);
}

TEST(CalibrateBias, ConstantErrorShiftsBiasExactly)
{
    // Exactly representable rates: the only mismatch is the bias offset.
    const NetworkDef ann = single_neuron(0.0, 0.3);
    ConvertedSNN snn{single_neuron(-0.25, 0.3 - 0.125), {{1.0, 1.0, 1}}};
    Dataset calib;
    calib.inputs = {Tensor({1}, {0.5})};
    calib.labels = {0};
    const auto r = calibrate_bias(ann, snn, calib, 4);
    ASSERT_EQ(r.delta_norms.size(), 2u);
    EXPECT_DOUBLE_EQ(r.delta_norms[0], 0.25);
    EXPECT_DOUBLE_EQ(r.snn.net.layers[0].bias[0], 0.0);
    EXPECT_DOUBLE_EQ(r.delta_norms[1], 0.125);
    EXPECT_DOUBLE_EQ(r.snn.net.layers[1].bias[0], 0.3);
    EXPECT_EQ(r.snn.configs, snn.configs);
}

TEST(Convert, HeadMeanGapVanishes)
{
    for (std::uint64_t seed = 40; seed < 45; ++seed) {
        const NetworkDef net = fixture::random_mlp(seed, {6, 20, 12, 4});
        const Dataset calib = fixture::random_inputs(seed + 100, {6}, 64, 4);
        const auto r = convert(net, CalibrationPlan::uniform(6, 2, 2), calib);
        const auto ann = forward(net, calib.batch());
        const auto snn = run(r.snn.net, r.snn.configs, calib.batch(), 6);
        for (std::size_t c = 0; c < 4; ++c) {
            double gap = 0.0;
            for (std::size_t i = 0; i < calib.size(); ++i) gap += ann.logits[i * 4 + c] - snn.logits[i * 4 + c];
            EXPECT_LE(std::abs(gap / static_cast<double>(calib.size())), 1e-9);
        }
        EXPECT_LE(r.report.logit_mse_after, r.report.logit_mse_before);
        EXPECT_EQ(r.report.layers.size(), 2u);
        EXPECT_EQ(r.report.calibration_samples, 64u);
    }
}

TEST(Convert, SecondPassChangesLess)
{
    for (std::uint64_t seed = 50; seed < 55; ++seed) {
        const NetworkDef net = fixture::random_mlp(seed, {5, 16, 3});
        const Dataset calib = fixture::random_inputs(seed + 1, {5}, 64, 3);
        const auto first = convert(net, CalibrationPlan::uniform(4, 1, 1), calib);
        const auto second = calibrate_bias(net, first.snn, calib, 4);
        const double before = first.report.layers[0].bias_delta_norm + first.report.head_bias_delta_norm;
        EXPECT_LT(second.delta_norms[0] + second.delta_norms[1], before);
    }
}

TEST(Convert, HigherPhiImprovesSurrogateFit)
{
    for (std::uint64_t seed = 60; seed < 65; ++seed) {
        const NetworkDef net = fixture::random_mlp(seed, {6, 24, 3}, 0.5);
        const Dataset calib = fixture::random_inputs(seed + 7, {6}, 128, 3, -1, 2);
        const auto a = convert(net, CalibrationPlan::uniform(4, 1, 1), calib);
        const auto b = convert(net, CalibrationPlan::uniform(4, 1, 4), calib);
        EXPECT_LE(b.report.layers[0].objective, a.report.layers[0].objective);
    }
}

TEST(Convert, DeterministicAcrossWorkers)
{
    const NetworkDef net = fixture::random_mlp(70, {6, 20, 12, 4});
    const Dataset calib = fixture::random_inputs(71, {6}, 40, 4);
    const auto plan = CalibrationPlan::uniform(8, 2, 2);
    EXPECT_EQ(convert(net, plan, calib, 1).snn, convert(net, plan, calib, 8).snn);
}

TEST(SnnFile, RoundTripAndErrors)
{
    // Model files store float32 weights, so start from storage precision.
    const NetworkDef net = round_to_storage(fixture::random_mlp(80, {4, 8, 6, 3}));
    const auto r = convert(net, CalibrationPlan::uniform(8, 2, 2, 2.0), fixture::random_inputs(81, {4}, 32, 3));
    const std::string text = serialize_snn(r.snn);
    EXPECT_EQ(parse_snn(text), r.snn);
    EXPECT_EQ(serialize_snn(parse_snn(text)), text);

    const auto path = std::filesystem::temp_directory_path() / "spikecal_test_snn.json";
    save_snn(r.snn, path);
    EXPECT_EQ(load_snn(path), r.snn);
    std::filesystem::remove(path);

    EXPECT_THROW(parse_snn("{"), FormatError);
    EXPECT_THROW(parse_snn("{\"model\": {}}"), FormatError);
    EXPECT_THROW(load_snn("/nonexistent/snn.json"), IoError);
    ConvertedSNN bad = r.snn;
    bad.configs[0].v_th = 0.0;
    EXPECT_THROW(serialize_snn(bad), ParameterError);
}
