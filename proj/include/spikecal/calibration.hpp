#pragma once

#include <filesystem>
#include <span>
#include <string>
#include <vector>

#include "spikecal/ann.hpp"
#include "spikecal/model_ir.hpp"
#include "spikecal/neuron_config.hpp"

namespace spikecal {

inline constexpr std::size_t kDefaultGridPoints = 128;
inline constexpr std::size_t kDefaultCalibrationSize = 128;

/// Mean of (clipfloor(a, T, v, phi) - relu(a))^2 over the activations.
double threshold_objective(std::span<const double> activations, std::size_t T, double v_th, int phi);

/// Candidate thresholds: `grid_points` log-spaced values from 1e-3 * max to max
/// plus the positive kPercentileGrid percentiles; sorted, duplicates removed.
std::vector<double> threshold_candidates(std::span<const double> activations, std::size_t grid_points);

struct ThresholdResult {
    double v_th = 0.0;
    double objective = 0.0;
    bool degenerate = false;  // all activations <= 0
    std::string diagnostic;
};

/// Minimises threshold_objective over the candidate grid, then runs one
/// golden-section refinement between the grid neighbours of the best point.
/// Ties go to the smaller threshold. The result is never worse than any
/// grid candidate.
ThresholdResult optimize_threshold(std::span<const double> activations, std::size_t T, int phi,
                                   std::size_t grid_points = kDefaultGridPoints);

struct CalibrationPlan {
    std::size_t T = 8;
    std::vector<int> phi;     // per spiking layer
    std::vector<double> rho;  // per spiking layer
    std::size_t grid_points = kDefaultGridPoints;

    static CalibrationPlan uniform(std::size_t T, std::size_t spiking_layers, int phi, double rho = 1.0);
    /// Throws ParameterError on T == 0, empty grid, or per-layer lists of the wrong length.
    void check(std::size_t spiking_layers) const;
};

struct ConvertedSNN {
    NetworkDef net;                     // biases corrected
    std::vector<NeuronConfig> configs;  // one per relu_after layer

    bool operator==(const ConvertedSNN&) const = default;
};

struct LayerCalibration {
    std::size_t layer = 0;
    NeuronConfig config;
    double objective = 0.0;
    double bias_delta_norm = 0.0;
    bool degenerate = false;
};

struct ConversionReport {
    std::size_t T = 0;
    std::size_t calibration_samples = 0;
    std::vector<LayerCalibration> layers;
    double head_bias_delta_norm = 0.0;
    double logit_mse_before = 0.0;  // SNN vs ANN logits before bias correction
    double logit_mse_after = 0.0;
};

struct ConversionResult {
    ConvertedSNN snn;
    ConversionReport report;
};

struct BiasCalibration {
    ConvertedSNN snn;
    std::vector<double> delta_norms;  // per spiking layer, then the head
};

/// Layer-wise bias correction, front to back. For each spiking layer (and the
/// output head) the per-channel mean of ANN output minus T-step SNN average
/// output, measured with all earlier layers already corrected, is added to
/// the bias.
BiasCalibration calibrate_bias(const NetworkDef& ann, const ConvertedSNN& snn, const Dataset& calib, std::size_t T,
                               std::size_t workers = 1);

/// Threshold optimisation for every spiking layer followed by bias calibration.
ConversionResult convert(const NetworkDef& net, const CalibrationPlan& plan, const Dataset& calib,
                         std::size_t workers = 1);

/// Per-layer ANN outputs (post-ReLU where applicable) for one sample.
std::vector<Tensor> ann_layer_outputs(const NetworkDef& net, const Tensor& input);

inline constexpr int kSnnFormatVersion = 1;
std::string serialize_snn(const ConvertedSNN& snn);
ConvertedSNN parse_snn(const std::string& text);
ConvertedSNN load_snn(const std::filesystem::path& path);
void save_snn(const ConvertedSNN& snn, const std::filesystem::path& path);

}  // namespace spikecal
