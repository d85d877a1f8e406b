#pragma once

#include <span>
#include <vector>

namespace spikecal {

inline constexpr double kProbabilityFloor = 1e-12;

std::vector<double> softmax(std::span<const double> logits);

/// KL(p || q) in nats; both arguments floored at kProbabilityFloor.
double kl_divergence(std::span<const double> p, std::span<const double> q);

/// Sum of p_y ln p_y, i.e. the negative of the usual Shannon entropy (<= 0).
/// 0 ln 0 is taken as 0. Throws ParameterError unless p is a distribution
/// (entries >= 0, sum within 1e-9 of 1).
double entropy(std::span<const double> p);

/// Shannon entropy -sum p ln p (>= 0), same preconditions as entropy().
double standard_entropy(std::span<const double> p);

/// 1 - H(p)/ln K in [0, 1]; 1 for one-hot, 0 for uniform. K = p.size() >= 2.
double confidence(std::span<const double> p);

std::size_t argmax(std::span<const double> values);

}  // namespace spikecal
