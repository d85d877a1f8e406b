#pragma once

#include <cstdint>
#include <span>
#include <string>
#include <vector>

#include "spikecal/ann.hpp"
#include "spikecal/calibration.hpp"
#include "spikecal/snn.hpp"

namespace spikecal {

inline constexpr std::size_t kDefaultBins = 4096;
inline constexpr std::uint64_t kBruteForceLimit = 1'000'000;

/// S[i][k] and E[i][k] for spiking layer i under candidate k (legend[k]).
struct SensitivityTable {
    std::vector<double> legend;
    std::vector<std::vector<double>> S;
    std::vector<std::vector<double>> E;

    std::size_t layers() const noexcept { return S.size(); }
    std::size_t options() const noexcept { return legend.size(); }
    /// Throws ParameterError on shape mismatch, negative S, negative E or non-finite entries.
    void check() const;
};

/// Phi: minimise sum S subject to sum E <= budget.
/// Rho: minimise sum E subject to sum S <= budget.
enum class SearchMode { Phi, Rho };

struct FrontierPoint {
    double E = 0.0;
    double S = 0.0;
    std::vector<std::size_t> choice;
};

struct ParetoAssignment {
    std::vector<std::size_t> choice;  // index into the legend, per layer
    double S_sum = 0.0;
    double E_sum = 0.0;
    std::vector<FrontierPoint> frontier;  // sorted by the constrained quantity
};

/// Sum of per-layer minima of the constrained quantity, accumulated in layer order.
double min_achievable(const SensitivityTable& table, SearchMode mode);

/// Pareto-frontier dynamic programme. After each layer the partial frontier is
/// merged into `bins` buckets of the constrained quantity; each bucket keeps its
/// best-objective point and its cheapest point, then dominated points are dropped.
/// Totals are carried exactly. Ties: lower constrained total, then the
/// lexicographically smaller choice vector.
ParetoAssignment pareto_search(const SensitivityTable& table, double budget, SearchMode mode,
                               std::size_t bins = kDefaultBins);
ParetoAssignment pareto_phi_search(const SensitivityTable& table, double E_target, std::size_t bins = kDefaultBins);
ParetoAssignment pareto_rho_search(const SensitivityTable& table, double S_target, std::size_t bins = kDefaultBins);

/// Exhaustive optimum with the same tie rules; the frontier is the exact one.
/// Throws SizeError when options^layers exceeds kBruteForceLimit.
ParetoAssignment brute_force_search(const SensitivityTable& table, double budget, SearchMode mode);

/// Largest possible shortfall of the DP relative to the exhaustive optimum:
/// the DP objective never exceeds the exact optimum at budget - bin_slack.
double bin_slack(const SensitivityTable& table, SearchMode mode, std::size_t bins = kDefaultBins);

// --- table construction ------------------------------------------------------

/// Mean KL(softmax(ANN logits) || softmax(logits with only spiking layer
/// `ordinal` replaced by its clipfloor surrogate at `cfg`)).
double sensitivity(const NetworkDef& ann, std::size_t ordinal, const NeuronConfig& cfg, const Dataset& samples,
                   std::size_t T, std::size_t workers = 1);

/// Mean spikes per sample emitted by spiking layer `ordinal` when it runs at
/// `cfg` and every other layer at its converted config, times energy_per_spike.
double estimate_layer_energy(const ConvertedSNN& snn, std::size_t ordinal, const NeuronConfig& cfg,
                             const Dataset& samples, std::size_t T, const EnergyModel& model,
                             std::size_t workers = 1);

struct TableOptions {
    std::size_t T = 8;
    EnergyModel energy;
    std::size_t grid_points = kDefaultGridPoints;
    std::size_t workers = 1;
};

/// Candidate k of layer i uses the threshold optimised for phi = legend[k]
/// and the layer's converted rho.
SensitivityTable build_phi_table(const NetworkDef& ann, const ConvertedSNN& snn, std::span<const int> phis,
                                 const Dataset& samples, const TableOptions& options);

/// Candidate k of layer i keeps the converted v_th and phi; Theta = legend[k] * v_th.
SensitivityTable build_rho_table(const NetworkDef& ann, const ConvertedSNN& snn, std::span<const double> rhos,
                                 const Dataset& samples, const TableOptions& options);

}  // namespace spikecal
