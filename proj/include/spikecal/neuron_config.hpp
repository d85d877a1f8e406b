#pragma once

#include <optional>
#include <vector>

namespace spikecal {

/// Spiking parameters of one population. The neuron fires against the
/// effective threshold rho * v_th and may emit up to phi spikes per timestep.
struct NeuronConfig {
    double v_th = 1.0;
    double rho = 1.0;
    int phi = 1;

    double threshold() const noexcept { return rho * v_th; }
    bool operator==(const NeuronConfig&) const = default;
};

/// Throws ParameterError unless v_th > 0, rho >= 1 and phi >= 1.
void check_config(const NeuronConfig& cfg);

/// Per spiking layer (by ordinal among relu_after layers): a config puts the
/// layer in spiking mode, nullopt keeps it as an exact ReLU.
using LayerModes = std::vector<std::optional<NeuronConfig>>;

}  // namespace spikecal
