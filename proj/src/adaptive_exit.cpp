#include "spikecal/adaptive_exit.hpp"

#include <algorithm>
#include <cmath>

#include <nlohmann/json.hpp>

#include "spikecal/error.hpp"
#include "spikecal/parallel.hpp"
#include "spikecal/prob.hpp"
#include "spikecal/snn.hpp"

namespace spikecal {

ExitPolicy ExitPolicy::make(double alpha_base, double beta, double delta, std::vector<double> mean_entropy)
{
    if (!(delta > 0.0)) throw ParameterError("exit policy: delta must be positive");
    if (mean_entropy.empty()) throw ParameterError("exit policy: T_max must be >= 1");
    ExitPolicy p;
    p.alpha_base = alpha_base;
    p.beta = beta;
    p.delta = delta;
    p.T_max = mean_entropy.size();
    p.entropy_min = *std::min_element(mean_entropy.begin(), mean_entropy.end());
    p.mean_entropy = std::move(mean_entropy);
    for (double e : p.mean_entropy) p.schedule.push_back(alpha_base + beta * std::exp(-(e - p.entropy_min) / delta));
    return p;
}

void ExitPolicy::check() const
{
    if (!(delta > 0.0)) throw ParameterError("exit policy: delta must be positive");
    if (T_max < 1 || mean_entropy.size() != T_max || schedule.size() != T_max)
        throw ParameterError("exit policy: schedule length must equal T_max");
    if (entropy_min != *std::min_element(mean_entropy.begin(), mean_entropy.end()))
        throw ParameterError("exit policy: entropy_min is not the minimum of the entropy profile");
    for (std::size_t t = 0; t < T_max; ++t) {
        const double expect = alpha_base + beta * std::exp(-(mean_entropy[t] - entropy_min) / delta);
        if (!(std::abs(schedule[t] - expect) <= 1e-12))
            throw ParameterError("exit policy: schedule entry " + std::to_string(t + 1) + " is inconsistent");
    }
}

ExitTrajectories compute_trajectories(const ConvertedSNN& snn, const Dataset& data, std::size_t T_max,
                                      std::size_t workers)
{
    if (T_max < 1) throw ParameterError("T_max must be >= 1");
    if (data.empty()) throw ParameterError("exit trajectories: dataset is empty");
    const std::size_t n = data.size();
    ExitTrajectories tr;
    tr.T_max = T_max;
    tr.confidence.assign(n, {});
    tr.prediction.assign(n, {});
    tr.spikes.assign(n, {});
    tr.labels = data.labels;
    std::vector<std::vector<double>> entropy(n);
    parallel_for(n, workers, [&](std::size_t j) {
        Simulator sim(snn.net, snn.configs);
        for (std::size_t t = 0; t < T_max; ++t) {
            sim.step(data.inputs[j]);
            const Tensor logits = sim.logits();
            const auto p = softmax(logits.values());
            tr.confidence[j].push_back(confidence(p));
            tr.prediction[j].push_back(argmax(logits.values()));
            tr.spikes[j].push_back(sim.total_spikes());
            entropy[j].push_back(standard_entropy(p));
        }
    });
    tr.mean_entropy.assign(T_max, 0.0);
    for (std::size_t j = 0; j < n; ++j)
        for (std::size_t t = 0; t < T_max; ++t) tr.mean_entropy[t] += entropy[j][t];
    for (auto& e : tr.mean_entropy) e /= static_cast<double>(n);
    return tr;
}

ExitDecision decide_exit(const std::vector<double>& confidence, const std::vector<std::size_t>& prediction,
                         const std::vector<std::uint64_t>& spikes, const ExitPolicy& policy)
{
    const std::size_t T = std::min(policy.T_max, confidence.size());
    if (T == 0) throw ParameterError("decide_exit: empty trajectory");
    std::size_t t = 0;
    while (t + 1 < T && !(confidence[t] >= policy.schedule[t])) ++t;
    return {prediction[t], t + 1, confidence[t], spikes[t]};
}

namespace {

ExitTrace summarize(std::vector<ExitDecision> decisions, const std::vector<std::size_t>& labels)
{
    ExitTrace trace;
    trace.samples = std::move(decisions);
    std::size_t hits = 0, steps = 0;
    for (std::size_t j = 0; j < trace.samples.size(); ++j) {
        const bool ok = trace.samples[j].prediction == labels[j];
        trace.correct.push_back(ok);
        hits += ok;
        steps += trace.samples[j].exit_t;
        trace.total_spikes += trace.samples[j].spikes;
    }
    const double n = static_cast<double>(trace.samples.size());
    trace.mean_exit = static_cast<double>(steps) / n;
    trace.accuracy = static_cast<double>(hits) / n;
    return trace;
}

}  // namespace

ExitTrace evaluate_policy(const ExitTrajectories& traj, const ExitPolicy& policy)
{
    if (policy.T_max > traj.T_max) throw ParameterError("policy T_max exceeds the recorded trajectories");
    std::vector<ExitDecision> d;
    for (std::size_t j = 0; j < traj.confidence.size(); ++j)
        d.push_back(decide_exit(traj.confidence[j], traj.prediction[j], traj.spikes[j], policy));
    return summarize(std::move(d), traj.labels);
}

ExitDecision adaptive_infer(const ConvertedSNN& snn, const Tensor& input, const ExitPolicy& policy)
{
    policy.check();
    Simulator sim(snn.net, snn.configs);
    ExitDecision d;
    for (std::size_t t = 0; t < policy.T_max; ++t) {
        sim.step(input);
        const Tensor logits = sim.logits();
        d = {argmax(logits.values()), t + 1, confidence(softmax(logits.values())), sim.total_spikes()};
        if (d.confidence >= policy.schedule[t]) break;
    }
    return d;
}

ExitTrace adaptive_evaluate(const ConvertedSNN& snn, const Dataset& data, const ExitPolicy& policy,
                            std::size_t workers)
{
    if (data.empty()) throw ParameterError("adaptive_evaluate: dataset is empty");
    std::vector<ExitDecision> d(data.size());
    parallel_for(data.size(), workers, [&](std::size_t j) { d[j] = adaptive_infer(snn, data.inputs[j], policy); });
    return summarize(std::move(d), data.labels);
}

ExitPolicy fit_schedule(const ConvertedSNN& snn, const Dataset& calib, std::size_t T_max, double alpha_base,
                        double beta, double delta, std::size_t workers)
{
    if (T_max < 1) throw ParameterError("fit_schedule: T_max must be >= 1");
    if (!(delta > 0.0)) throw ParameterError("fit_schedule: delta must be positive");
    return ExitPolicy::make(alpha_base, beta, delta, compute_trajectories(snn, calib, T_max, workers).mean_entropy);
}

std::vector<double> alpha_grid()
{
    std::vector<double> g;
    for (std::size_t i = 0; i < kAlphaGridPoints; ++i)
        g.push_back(kAlphaGridLow +
                    (kAlphaGridHigh - kAlphaGridLow) * static_cast<double>(i) / static_cast<double>(kAlphaGridPoints - 1));
    return g;
}

TuneResult tune_exit_policy(const ExitTrajectories& traj, double latency_target, double beta, double delta)
{
    if (!(latency_target >= 1.0 && latency_target <= static_cast<double>(traj.T_max)))
        throw ParameterError("latency target must lie in [1, T_max]");
    TuneResult best;
    bool have = false;
    const TuneCandidate* fastest = nullptr;
    std::vector<ExitPolicy> policies;
    for (double a : alpha_grid()) {
        policies.push_back(ExitPolicy::make(a, beta, delta, traj.mean_entropy));
        const ExitTrace tr = evaluate_policy(traj, policies.back());
        best.grid.push_back({a, tr.accuracy, tr.mean_exit});
    }
    std::size_t pick = 0;
    for (std::size_t i = 0; i < best.grid.size(); ++i) {
        const auto& c = best.grid[i];
        if (!fastest || c.mean_exit < fastest->mean_exit ||
            (c.mean_exit == fastest->mean_exit && c.accuracy > fastest->accuracy))
            fastest = &c;
        if (c.mean_exit > latency_target) continue;
        const auto& b = best.grid[pick];
        if (!have || c.accuracy > b.accuracy || (c.accuracy == b.accuracy && c.mean_exit < b.mean_exit)) {
            pick = i;
            have = true;
        }
    }
    if (!have) {
        pick = static_cast<std::size_t>(fastest - best.grid.data());
        best.feasible = false;
        best.warning = "no alpha_base meets the latency target " + std::to_string(latency_target) +
                       "; returning the lowest-latency policy";
    }
    best.policy = policies[pick];
    best.accuracy = best.grid[pick].accuracy;
    best.mean_exit = best.grid[pick].mean_exit;
    return best;
}

TuneResult tune_exit_policy(const ConvertedSNN& snn, const Dataset& valid, std::size_t T_max, double latency_target,
                            double beta, double delta, std::size_t workers)
{
    if (!(delta > 0.0)) throw ParameterError("tune_exit_policy: delta must be positive");
    return tune_exit_policy(compute_trajectories(snn, valid, T_max, workers), latency_target, beta, delta);
}

std::string serialize_policy(const ExitPolicy& policy)
{
    policy.check();
    nlohmann::ordered_json j;
    j["alpha_base"] = policy.alpha_base;
    j["beta"] = policy.beta;
    j["delta"] = policy.delta;
    j["entropy_min"] = policy.entropy_min;
    j["format_version"] = kPolicyFormatVersion;
    j["mean_entropy"] = policy.mean_entropy;
    j["schedule"] = policy.schedule;
    j["T_max"] = policy.T_max;
    return j.dump(2) + "\n";
}

ExitPolicy parse_policy(const std::string& text)
{
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(text);
    } catch (const nlohmann::json::parse_error& e) {
        throw FormatError(std::string("exit policy is not valid JSON: ") + e.what());
    }
    ExitPolicy p;
    try {
        if (j.at("format_version").get<int>() != kPolicyFormatVersion)
            throw FormatError("exit policy: unsupported format_version");
        p.alpha_base = j.at("alpha_base").get<double>();
        p.beta = j.at("beta").get<double>();
        p.delta = j.at("delta").get<double>();
        p.entropy_min = j.at("entropy_min").get<double>();
        p.mean_entropy = j.at("mean_entropy").get<std::vector<double>>();
        p.schedule = j.at("schedule").get<std::vector<double>>();
        p.T_max = j.at("T_max").get<std::size_t>();
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("exit policy: ") + e.what());
    }
    p.check();
    return p;
}

}  // namespace spikecal
