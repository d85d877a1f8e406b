#pragma once

#include <cstdint>
#include <span>
#include <vector>

#include "spikecal/model_ir.hpp"
#include "spikecal/neuron_config.hpp"
#include "spikecal/tensor.hpp"

namespace spikecal {

/// Integrate-and-fire update of one population for a single timestep:
///   u = v + z;  m = clamp(floor(u / theta), 0, phi);  out = m * theta;  v = u - m * theta
/// with theta = rho * v_th. Returns the number of spikes (sum of m).
std::uint64_t fire(std::span<double> membrane, std::span<const double> current, const NeuronConfig& cfg,
                   std::span<double> emitted, std::span<double> pre_spike = {});

struct SimState {
    std::vector<Tensor> u;        // pre-spike potential of each spiking layer
    std::vector<Tensor> v;        // post-reset potential
    std::vector<Tensor> emitted;  // cumulative emitted amplitude
    std::vector<std::uint64_t> spikes;
    Tensor head;                  // accumulated output-head current
    std::size_t t = 0;
};

struct SpikeReport {
    std::vector<std::size_t> layers;     // network layer index of each spiking population
    std::vector<std::uint64_t> spikes;   // spikes per population, summed over samples
    std::size_t samples = 0;
    std::size_t timesteps = 0;

    std::uint64_t total() const;
    /// Concatenation of disjoint batches: spikes and samples add.
    SpikeReport& operator+=(const SpikeReport& other);
};

struct EnergyModel {
    double energy_per_spike = 1e-9;  // joules
    double timestep_duration = 1e-3;  // seconds
};

struct EnergyEstimate {
    double watts = 0.0;   // total spikes / timestep_duration * energy_per_spike
    double joules = 0.0;  // total spikes * energy_per_spike
};

EnergyEstimate energy(const SpikeReport& report, const EnergyModel& model);

/// Time-stepped simulation of one sample. The input is injected as a constant
/// current every timestep, biases likewise; hidden ReLU layers become IF
/// populations and the final layer only integrates current.
class Simulator {
public:
    Simulator(const NetworkDef& net, std::vector<NeuronConfig> configs);

    void reset();
    /// Advances one timestep; returns the emitted amplitudes of every spiking layer.
    const std::vector<Tensor>& step(const Tensor& input);

    std::size_t elapsed() const noexcept { return state_.t; }
    const SimState& state() const noexcept { return state_; }
    const std::vector<NeuronConfig>& configs() const noexcept { return configs_; }
    /// Running logit estimate: accumulated head current / elapsed timesteps.
    Tensor logits() const;
    Tensor average_output(std::size_t spiking_ordinal) const;
    std::uint64_t total_spikes() const;

private:
    const NetworkDef* net_;
    std::vector<NeuronConfig> configs_;
    std::vector<int> ordinal_;          // layer index -> spiking ordinal or -1
    std::vector<Tensor> buffers_;       // per-layer output scratch
    std::vector<Tensor> step_emitted_;
    SimState state_;
};

/// Free-function form of Simulator::step for callers that own the state.
std::vector<Tensor> step(SimState& state, const NetworkDef& net, std::span<const NeuronConfig> configs,
                         const Tensor& input);
SimState make_state(const NetworkDef& net);

struct RunResult {
    Tensor logits;                       // [N, num_classes], accumulated head current / T
    std::vector<Tensor> average_outputs; // per spiking layer, [N, ...shape], sum of amplitudes / T
    SpikeReport report;
};

/// Simulates every row of `batch` for T timesteps. Deterministic in `workers`.
RunResult run(const NetworkDef& net, std::span<const NeuronConfig> configs, const Tensor& batch, std::size_t T,
              std::size_t workers = 1);

}  // namespace spikecal
