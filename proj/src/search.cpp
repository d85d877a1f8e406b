#include "spikecal/search.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <tuple>

#include "spikecal/error.hpp"
#include "spikecal/parallel.hpp"
#include "spikecal/prob.hpp"

namespace spikecal {

void SensitivityTable::check() const
{
    if (legend.empty()) throw ParameterError("sensitivity table has no candidates");
    if (S.empty()) throw ParameterError("sensitivity table has no layers");
    if (E.size() != S.size()) throw ParameterError("sensitivity table: S and E have different layer counts");
    for (std::size_t i = 0; i < S.size(); ++i) {
        if (S[i].size() != legend.size() || E[i].size() != legend.size())
            throw ParameterError("sensitivity table: layer " + std::to_string(i) + " does not match the legend");
        for (std::size_t k = 0; k < legend.size(); ++k) {
            if (!std::isfinite(S[i][k]) || !std::isfinite(E[i][k]))
                throw ParameterError("sensitivity table: non-finite entry");
            if (S[i][k] < 0.0 || E[i][k] < 0.0) throw ParameterError("sensitivity table: negative entry");
        }
    }
}

namespace {

struct View {
    const std::vector<std::vector<double>>& cost;
    const std::vector<std::vector<double>>& objective;
};

View view(const SensitivityTable& t, SearchMode mode)
{
    return mode == SearchMode::Phi ? View{t.E, t.S} : View{t.S, t.E};
}

struct Point {
    double cost;
    double objective;
    std::vector<std::size_t> choice;
};

bool better(const Point& a, const Point& b)
{
    return std::tie(a.objective, a.cost, a.choice) < std::tie(b.objective, b.cost, b.choice);
}

// Sorted by cost with strictly decreasing objective.
std::vector<Point> prune_dominated(std::vector<Point> pts)
{
    std::sort(pts.begin(), pts.end(), [](const Point& a, const Point& b) {
        return std::tie(a.cost, a.objective, a.choice) < std::tie(b.cost, b.objective, b.choice);
    });
    std::vector<Point> out;
    for (auto& p : pts)
        if (out.empty() || p.objective < out.back().objective) out.push_back(std::move(p));
    return out;
}

FrontierPoint to_frontier(const Point& p, SearchMode mode)
{
    return mode == SearchMode::Phi ? FrontierPoint{p.cost, p.objective, p.choice}
                                   : FrontierPoint{p.objective, p.cost, p.choice};
}

ParetoAssignment finish(const std::vector<Point>& frontier, double budget, SearchMode mode,
                        const SensitivityTable& table)
{
    const Point* pick = nullptr;
    for (const auto& p : frontier)
        if (p.cost <= budget && (!pick || better(p, *pick))) pick = &p;
    if (!pick) {
        const double m = min_achievable(table, mode);
        throw InfeasibleBudget(std::string(mode == SearchMode::Phi ? "energy" : "sensitivity") + " budget " +
                                   std::to_string(budget) + " is below the minimum achievable " + std::to_string(m),
                               m);
    }
    ParetoAssignment a;
    a.choice = pick->choice;
    for (std::size_t i = 0; i < a.choice.size(); ++i) {
        a.S_sum += table.S[i][a.choice[i]];
        a.E_sum += table.E[i][a.choice[i]];
    }
    for (const auto& p : frontier) a.frontier.push_back(to_frontier(p, mode));
    return a;
}

void check_budget(const SensitivityTable& table, double budget, SearchMode mode)
{
    if (!std::isfinite(budget)) throw ParameterError("search budget must be finite");
    const double m = min_achievable(table, mode);
    if (budget < m)
        throw InfeasibleBudget(std::string(mode == SearchMode::Phi ? "energy" : "sensitivity") + " budget " +
                                   std::to_string(budget) + " is below the minimum achievable " + std::to_string(m),
                               m);
}

}  // namespace

double min_achievable(const SensitivityTable& table, SearchMode mode)
{
    const View v = view(table, mode);
    double total = 0.0;
    for (const auto& row : v.cost) total += *std::min_element(row.begin(), row.end());
    return total;
}

double bin_slack(const SensitivityTable& table, SearchMode mode, std::size_t bins)
{
    const View v = view(table, mode);
    double lo = 0.0, hi = 0.0;
    for (const auto& row : v.cost) {
        lo += *std::min_element(row.begin(), row.end());
        hi += *std::max_element(row.begin(), row.end());
    }
    return static_cast<double>(table.layers()) * (hi - lo) / static_cast<double>(bins);
}

ParetoAssignment pareto_search(const SensitivityTable& table, double budget, SearchMode mode, std::size_t bins)
{
    table.check();
    if (bins == 0) throw ParameterError("pareto_search: bins must be >= 1");
    check_budget(table, budget, mode);
    const View v = view(table, mode);
    const std::size_t n = table.options();

    double span = 0.0;
    for (const auto& row : v.cost)
        span += *std::max_element(row.begin(), row.end()) - *std::min_element(row.begin(), row.end());
    const double width = span / static_cast<double>(bins);

    std::vector<Point> frontier{{0.0, 0.0, {}}};
    double partial_min = 0.0;
    for (std::size_t i = 0; i < table.layers(); ++i) {
        partial_min += *std::min_element(v.cost[i].begin(), v.cost[i].end());
        std::vector<std::pair<std::size_t, Point>> cand;
        cand.reserve(frontier.size() * n);
        for (const auto& p : frontier)
            for (std::size_t k = 0; k < n; ++k) {
                Point q{p.cost + v.cost[i][k], p.objective + v.objective[i][k], p.choice};
                q.choice.push_back(k);
                std::size_t bin = 0;
                if (width > 0.0)
                    bin = std::min(bins - 1, static_cast<std::size_t>(std::max(0.0, (q.cost - partial_min) / width)));
                cand.emplace_back(bin, std::move(q));
            }
        std::sort(cand.begin(), cand.end(), [](const auto& a, const auto& b) {
            if (a.first != b.first) return a.first < b.first;
            return better(a.second, b.second);
        });
        std::vector<Point> kept;
        for (std::size_t s = 0; s < cand.size();) {
            std::size_t e = s;
            std::size_t cheapest = s;
            while (e < cand.size() && cand[e].first == cand[s].first) {
                const Point& c = cand[e].second;
                const Point& b = cand[cheapest].second;
                if (std::tie(c.cost, c.objective, c.choice) < std::tie(b.cost, b.objective, b.choice)) cheapest = e;
                ++e;
            }
            kept.push_back(cand[s].second);
            if (cheapest != s) kept.push_back(cand[cheapest].second);
            s = e;
        }
        frontier = prune_dominated(std::move(kept));
    }
    return finish(frontier, budget, mode, table);
}

ParetoAssignment pareto_phi_search(const SensitivityTable& table, double E_target, std::size_t bins)
{
    return pareto_search(table, E_target, SearchMode::Phi, bins);
}

ParetoAssignment pareto_rho_search(const SensitivityTable& table, double S_target, std::size_t bins)
{
    return pareto_search(table, S_target, SearchMode::Rho, bins);
}

ParetoAssignment brute_force_search(const SensitivityTable& table, double budget, SearchMode mode)
{
    table.check();
    const std::size_t L = table.layers(), n = table.options();
    double combos = std::pow(static_cast<double>(n), static_cast<double>(L));
    if (combos > static_cast<double>(kBruteForceLimit))
        throw SizeError("brute force: " + std::to_string(n) + "^" + std::to_string(L) + " assignments exceed the limit");
    check_budget(table, budget, mode);
    const View v = view(table, mode);

    std::vector<Point> all;
    all.reserve(static_cast<std::size_t>(combos));
    std::vector<std::size_t> choice(L, 0);
    for (;;) {
        Point p{0.0, 0.0, choice};
        for (std::size_t i = 0; i < L; ++i) {
            p.cost += v.cost[i][choice[i]];
            p.objective += v.objective[i][choice[i]];
        }
        all.push_back(std::move(p));
        std::size_t i = L;
        while (i > 0 && ++choice[i - 1] == n) choice[--i] = 0;
        if (i == 0) break;
    }
    return finish(prune_dominated(std::move(all)), budget, mode, table);
}

// --- table construction ------------------------------------------------------

double sensitivity(const NetworkDef& ann, std::size_t ordinal, const NeuronConfig& cfg, const Dataset& samples,
                   std::size_t T, std::size_t workers)
{
    if (samples.empty()) throw ParameterError("sensitivity: samples are empty");
    const std::size_t L = ann.spiking_layers().size();
    if (ordinal >= L)
        throw ParameterError("sensitivity: layer " + std::to_string(ordinal) + " out of range (" + std::to_string(L) +
                             " spiking layers)");
    check_config(cfg);
    LayerModes modes(L);
    modes[ordinal] = cfg;
    std::vector<double> kl(samples.size());
    parallel_for(samples.size(), workers, [&](std::size_t j) {
        const Tensor ref = forward_sample(ann, samples.inputs[j]);
        const Tensor mix = mixed_forward_sample(ann, samples.inputs[j], modes, T);
        kl[j] = kl_divergence(softmax(ref.values()), softmax(mix.values()));
    });
    return std::accumulate(kl.begin(), kl.end(), 0.0) / static_cast<double>(kl.size());
}

double estimate_layer_energy(const ConvertedSNN& snn, std::size_t ordinal, const NeuronConfig& cfg,
                             const Dataset& samples, std::size_t T, const EnergyModel& model, std::size_t workers)
{
    if (samples.empty()) throw ParameterError("estimate_layer_energy: samples are empty");
    if (ordinal >= snn.configs.size())
        throw ParameterError("estimate_layer_energy: layer " + std::to_string(ordinal) + " out of range");
    std::vector<NeuronConfig> configs = snn.configs;
    configs[ordinal] = cfg;
    const RunResult r = run(snn.net, configs, samples.batch(), T, workers);
    return static_cast<double>(r.report.spikes[ordinal]) / static_cast<double>(samples.size()) *
           model.energy_per_spike;
}

namespace {

template <class Value, class MakeConfig>
SensitivityTable build_table(const NetworkDef& ann, const ConvertedSNN& snn, std::span<const Value> legend,
                             const Dataset& samples, const TableOptions& options, MakeConfig make_config)
{
    if (legend.empty()) throw ParameterError("no search candidates given");
    if (samples.empty()) throw ParameterError("search samples are empty");
    const std::size_t L = snn.configs.size();
    if (ann.spiking_layers().size() != L) throw ParameterError("ANN and converted network do not match");

    SensitivityTable table;
    for (auto v : legend) table.legend.push_back(static_cast<double>(v));
    table.S.assign(L, std::vector<double>(legend.size()));
    table.E.assign(L, std::vector<double>(legend.size()));
    parallel_for(L * legend.size(), options.workers, [&](std::size_t cell) {
        const std::size_t i = cell / legend.size(), k = cell % legend.size();
        const NeuronConfig cfg = make_config(i, legend[k]);
        table.S[i][k] = sensitivity(ann, i, cfg, samples, options.T);
        table.E[i][k] = estimate_layer_energy(snn, i, cfg, samples, options.T, options.energy);
    });
    return table;
}

}  // namespace

SensitivityTable build_phi_table(const NetworkDef& ann, const ConvertedSNN& snn, std::span<const int> phis,
                                 const Dataset& samples, const TableOptions& options)
{
    for (int p : phis)
        if (p < 1) throw ParameterError("phi candidates must be >= 1");
    const ForwardResult fw = forward(ann, samples.batch());
    return build_table<int>(ann, snn, phis, samples, options, [&](std::size_t i, int phi) {
        const auto th = optimize_threshold(fw.trace.activations[i].values(), options.T, phi, options.grid_points);
        return NeuronConfig{th.v_th, snn.configs[i].rho, phi};
    });
}

SensitivityTable build_rho_table(const NetworkDef& ann, const ConvertedSNN& snn, std::span<const double> rhos,
                                 const Dataset& samples, const TableOptions& options)
{
    for (double r : rhos)
        if (!(r >= 1.0)) throw ParameterError("rho candidates must be >= 1");
    return build_table<double>(ann, snn, rhos, samples, options, [&](std::size_t i, double rho) {
        return NeuronConfig{snn.configs[i].v_th, rho, snn.configs[i].phi};
    });
}

}  // namespace spikecal
