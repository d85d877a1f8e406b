#pragma once

#include <array>
#include <cstdint>
#include <span>
#include <vector>

#include "spikecal/model_ir.hpp"
#include "spikecal/neuron_config.hpp"
#include "spikecal/tensor.hpp"

namespace spikecal {

struct Dataset {
    std::vector<Tensor> inputs;
    std::vector<std::size_t> labels;

    std::size_t size() const noexcept { return inputs.size(); }
    bool empty() const noexcept { return inputs.empty(); }
    /// Throws DataError on length mismatch, inconsistent sample shapes or labels >= num_classes.
    void check(std::size_t num_classes) const;
    Dataset subset(std::size_t begin, std::size_t end) const;
    Tensor batch() const;
};

/// Percentile grid recorded per activation layer, in percent.
inline constexpr std::array<double, 4> kPercentileGrid{90.0, 99.0, 99.9, 100.0};

/// Linear-interpolated percentile (numpy "linear" method) of unsorted values.
double percentile(std::vector<double> values, double pct);

struct ActivationSummary {
    std::size_t layer = 0;
    double max = 0.0;
    std::vector<double> channel_max;
    std::vector<double> percentiles;  // aligned with kPercentileGrid
};

/// Post-ReLU activations of every relu_after layer, batch-major.
struct ActivationTrace {
    std::vector<std::size_t> layers;
    std::vector<Tensor> activations;  // [batch, ...layer output shape]
    std::vector<ActivationSummary> summaries;
};

struct ForwardResult {
    Tensor logits;  // [batch, num_classes]
    ActivationTrace trace;
};

/// Exact ReLU forward pass over a batch [N, ...input_shape].
ForwardResult forward(const NetworkDef& net, const Tensor& batch);
/// Logits of one sample.
Tensor forward_sample(const NetworkDef& net, const Tensor& input);

/// (v_th / T) * clip(floor(T x / v_th), 0, T phi), elementwise.
double clipfloor(double x, std::size_t T, double v_th, int phi);
Tensor clipfloor(const Tensor& x, std::size_t T, double v_th, int phi);

/// Forward pass where each spiking layer with a config replaces its ReLU by
/// clipfloor at the effective threshold rho * v_th; other layers stay ReLU.
Tensor mixed_forward_sample(const NetworkDef& net, const Tensor& input, const LayerModes& modes, std::size_t T);

/// All spiking layers in surrogate mode; one config per relu_after layer.
Tensor surrogate_forward(const NetworkDef& net, const Tensor& batch, std::span<const NeuronConfig> configs,
                         std::size_t T);

// --- training -------------------------------------------------------------

/// He-normal weights and zero biases for every parameterised layer.
void initialize_weights(NetworkDef& net, std::uint64_t seed);

/// Plain sequential MLP: input_dim -> hidden... -> classes, ReLU between layers.
NetworkDef make_mlp(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t classes);

struct Gradients {
    std::vector<Tensor> weight;
    std::vector<Tensor> bias;
};

/// Mean softmax cross-entropy over the batch and its exact gradients.
double loss_and_gradients(const NetworkDef& net, std::span<const Tensor> inputs,
                          std::span<const std::size_t> labels, Gradients* grads);

struct TrainOptions {
    std::size_t epochs = 50;
    double learning_rate = 0.1;
    std::size_t batch_size = 32;
    std::uint64_t seed = 0;
};

struct TrainResult {
    NetworkDef net;
    double final_loss = 0.0;
    double train_accuracy = 0.0;
};

/// Mini-batch gradient descent, no momentum. Deterministic for a fixed seed.
TrainResult train_tiny(const NetworkDef& net, const Dataset& data, const TrainOptions& options);

double accuracy(const NetworkDef& net, const Dataset& data);

}  // namespace spikecal
