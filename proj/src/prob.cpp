#include "spikecal/prob.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spikecal/error.hpp"

namespace spikecal {

std::vector<double> softmax(std::span<const double> logits)
{
    std::vector<double> p(logits.size());
    if (logits.empty()) return p;
    const double m = *std::max_element(logits.begin(), logits.end());
    double sum = 0.0;
    for (std::size_t i = 0; i < logits.size(); ++i) {
        p[i] = std::exp(logits[i] - m);
        sum += p[i];
    }
    for (auto& x : p) x /= sum;
    return p;
}

double kl_divergence(std::span<const double> p, std::span<const double> q)
{
    if (p.size() != q.size()) throw ParameterError("kl_divergence: distributions differ in length");
    double kl = 0.0;
    for (std::size_t i = 0; i < p.size(); ++i) {
        const double pi = std::max(p[i], kProbabilityFloor);
        const double qi = std::max(q[i], kProbabilityFloor);
        kl += pi * std::log(pi / qi);
    }
    return std::max(kl, 0.0);
}

namespace {

void require_distribution(std::span<const double> p)
{
    if (p.empty()) throw ParameterError("entropy: empty distribution");
    double sum = 0.0;
    for (double x : p) {
        if (!(x >= 0.0)) throw ParameterError("entropy: negative or NaN probability");
        sum += x;
    }
    if (std::abs(sum - 1.0) > 1e-9) throw ParameterError("entropy: probabilities sum to " + std::to_string(sum));
}

}  // namespace

double entropy(std::span<const double> p)
{
    require_distribution(p);
    double h = 0.0;
    for (double x : p)
        if (x > 0.0) h += x * std::log(x);
    return h;
}

double standard_entropy(std::span<const double> p)
{
    return -entropy(p);
}

double confidence(std::span<const double> p)
{
    if (p.size() < 2) throw ParameterError("confidence: need at least two classes");
    const double c = 1.0 + entropy(p) / std::log(static_cast<double>(p.size()));
    return std::clamp(c, 0.0, 1.0);
}

std::size_t argmax(std::span<const double> values)
{
    return static_cast<std::size_t>(std::max_element(values.begin(), values.end()) - values.begin());
}

}  // namespace spikecal
