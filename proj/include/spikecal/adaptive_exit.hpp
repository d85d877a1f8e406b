#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "spikecal/ann.hpp"
#include "spikecal/calibration.hpp"

namespace spikecal {

inline constexpr std::size_t kAlphaGridPoints = 41;
inline constexpr double kAlphaGridLow = 0.5;
inline constexpr double kAlphaGridHigh = 1.0;

/// Per-timestep exit thresholds
///   alpha_t = alpha_base + beta * exp(-(mean_entropy[t] - entropy_min) / delta)
/// where mean_entropy[t] is the average Shannon entropy of the running-logit
/// softmax after t + 1 steps and entropy_min its minimum over t.
struct ExitPolicy {
    double alpha_base = 0.0;
    double beta = 0.0;
    double delta = 1.0;
    std::size_t T_max = 0;
    std::vector<double> mean_entropy;
    double entropy_min = 0.0;
    std::vector<double> schedule;

    /// Builds the schedule from the given entropies. Throws ParameterError on
    /// delta <= 0 or an empty entropy profile.
    static ExitPolicy make(double alpha_base, double beta, double delta, std::vector<double> mean_entropy);
    /// Throws ParameterError unless the stored fields are consistent.
    void check() const;

    bool operator==(const ExitPolicy&) const = default;
};

/// Confidence, prediction and cumulative spikes of every sample at every
/// timestep of an uninterrupted T_max-step simulation.
struct ExitTrajectories {
    std::size_t T_max = 0;
    std::vector<std::vector<double>> confidence;     // [sample][t]
    std::vector<std::vector<std::size_t>> prediction;
    std::vector<std::vector<std::uint64_t>> spikes;  // cumulative
    std::vector<double> mean_entropy;                // [t]
    std::vector<std::size_t> labels;
};

ExitTrajectories compute_trajectories(const ConvertedSNN& snn, const Dataset& data, std::size_t T_max,
                                      std::size_t workers = 1);

struct ExitDecision {
    std::size_t prediction = 0;
    std::size_t exit_t = 0;  // 1-based
    double confidence = 0.0;
    std::uint64_t spikes = 0;
};

struct ExitTrace {
    std::vector<ExitDecision> samples;
    std::vector<bool> correct;
    double mean_exit = 0.0;
    double accuracy = 0.0;
    std::uint64_t total_spikes = 0;
};

/// First timestep whose confidence reaches the threshold, else T_max.
ExitDecision decide_exit(const std::vector<double>& confidence, const std::vector<std::size_t>& prediction,
                         const std::vector<std::uint64_t>& spikes, const ExitPolicy& policy);
ExitTrace evaluate_policy(const ExitTrajectories& traj, const ExitPolicy& policy);

/// Runs the simulation and stops at the exit timestep.
ExitDecision adaptive_infer(const ConvertedSNN& snn, const Tensor& input, const ExitPolicy& policy);
ExitTrace adaptive_evaluate(const ConvertedSNN& snn, const Dataset& data, const ExitPolicy& policy,
                            std::size_t workers = 1);

ExitPolicy fit_schedule(const ConvertedSNN& snn, const Dataset& calib, std::size_t T_max, double alpha_base,
                        double beta, double delta, std::size_t workers = 1);

std::vector<double> alpha_grid();

struct TuneCandidate {
    double alpha_base = 0.0;
    double accuracy = 0.0;
    double mean_exit = 0.0;
};

struct TuneResult {
    ExitPolicy policy;
    double accuracy = 0.0;
    double mean_exit = 0.0;
    bool feasible = true;
    std::string warning;
    std::vector<TuneCandidate> grid;
};

/// Highest-accuracy policy over alpha_grid() with mean exit <= latency_target
/// (ties: lower latency, then lower alpha_base). When none qualifies the
/// lowest-latency policy is returned with feasible = false.
TuneResult tune_exit_policy(const ExitTrajectories& traj, double latency_target, double beta, double delta);
TuneResult tune_exit_policy(const ConvertedSNN& snn, const Dataset& valid, std::size_t T_max, double latency_target,
                            double beta, double delta, std::size_t workers = 1);

inline constexpr int kPolicyFormatVersion = 1;
std::string serialize_policy(const ExitPolicy& policy);
ExitPolicy parse_policy(const std::string& text);

}  // namespace spikecal
