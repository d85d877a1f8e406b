// End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
// exits nonzero if any criterion fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "spikecal/pipeline.hpp"
#include "spikecal/prob.hpp"
#include "spikecal/rng.hpp"
#include "spikecal/snn.hpp"

using namespace spikecal;
namespace fs = std::filesystem;

namespace {

// Thresholds, pinned.
constexpr std::size_t kIdentityCases = 10000;
constexpr double kIdentityTol = 1e-9;
constexpr double kIdentitySeconds = 10;
constexpr std::size_t kEquivNets = 20;
constexpr double kEquivTol = 1e-9;
constexpr double kEquivSeconds = 60;
constexpr std::size_t kDpInstances = 200;
constexpr double kDpExactFraction = 0.99;
constexpr double kDpSeconds = 30;
constexpr double kAnnAccuracy = 0.95;
constexpr std::size_t kLongT = 512;
constexpr double kAgreement = 0.99;
constexpr double kConvergenceSeconds = 300;
constexpr double kGapShrink = 0.50;
constexpr double kSpikeReduction = 0.30;
constexpr double kAccuracyDrop = 0.01;
constexpr double kLatencyFraction = 0.6;
constexpr std::size_t kExitTmax = 16;
constexpr double kEntropyTol = 1e-9;
constexpr double kKlTol = 1e-6;
constexpr double kScheduleTol = 1e-12;
const std::vector<std::uint64_t> kSeeds{1, 2, 3};
const std::vector<std::size_t> kEvalT{2, 4, 8};

const char* kDesk =
    "data.source = synth\n"
    "data.classes = 10\n"
    "data.dim = 16\n"
    "data.spread = 0.7\n"
    "data.train_per_class = 200\n"
    "data.valid_per_class = 50\n"
    "data.test_per_class = 500\n"
    "train.hidden = 128\n"
    "train.epochs = 30\n"
    "T = 8\n";

struct Line {
    int id;
    bool pass;
    std::string detail;
    double seconds;
};

std::vector<Line> results;

std::string fmt(double x, int prec = 4)
{
    std::ostringstream ss;
    ss.precision(prec);
    ss << x;
    return ss.str();
}

void report(int id, bool pass, const std::string& detail, double seconds)
{
    results.push_back({id, pass, detail, seconds});
    std::printf("[%s] criterion %d: %s (%.2f s)\n", pass ? "PASS" : "FAIL", id, detail.c_str(), seconds);
    std::fflush(stdout);
}

template <class F>
double timed(F&& f)
{
    const auto t0 = std::chrono::steady_clock::now();
    f();
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

NetworkDef single_neuron()
{
    NetworkDef net;
    net.input_shape = {1};
    net.num_classes = 1;
    auto a = LayerSpec::linear(1, 1, true);
    a.weight = Tensor({1, 1}, {1});
    auto b = LayerSpec::linear(1, 1, false);
    b.weight = Tensor({1, 1}, {1});
    net.layers = {a, b};
    return net;
}

NetworkDef random_net(Rng& rng, const std::vector<std::size_t>& widths)
{
    NetworkDef net;
    net.input_shape = {widths.front()};
    net.num_classes = widths.back();
    for (std::size_t i = 1; i < widths.size(); ++i) {
        LayerSpec l = LayerSpec::linear(widths[i - 1], widths[i], i + 1 < widths.size());
        for (auto& w : l.weight.values()) w = rng.normal() / std::sqrt(static_cast<double>(widths[i - 1]));
        for (auto& b : l.bias.values()) b = 0.1 * rng.normal();
        net.layers.push_back(std::move(l));
    }
    return net;
}

// --- 1 ---------------------------------------------------------------------

void criterion_identity()
{
    double worst = 0.0;
    std::size_t bad = 0;
    const double secs = timed([&] {
        const NetworkDef net = single_neuron();
        Rng rng(1001);
        const int phis[] = {1, 2, 4, 8};
        const double rhos[] = {1, 2, 4};
        for (std::size_t i = 0; i < kIdentityCases; ++i) {
            const int phi = phis[rng.below(4)];
            const double rho = rhos[rng.below(3)];
            const std::size_t T = 1 + rng.below(64);
            const double v_th = rng.uniform(0.05, 3.0);
            const double theta = rho * v_th;
            const double z = rng.uniform(-theta, 1.5 * phi * theta);
            Simulator sim(net, {{v_th, rho, phi}});
            const Tensor in({1}, {z});
            for (std::size_t t = 0; t < T; ++t) sim.step(in);
            const double want =
                theta * std::clamp(std::floor(static_cast<double>(T) * z / theta), 0.0, static_cast<double>(T) * phi);
            const double err = std::abs(sim.state().emitted[0][0] - want);
            worst = std::max(worst, err);
            bad += err > kIdentityTol;
        }
    });
    report(1, bad == 0 && secs < kIdentitySeconds,
           std::to_string(kIdentityCases) + " cases, max error " + fmt(worst) + " (tol " + fmt(kIdentityTol) +
               "), runtime limit " + fmt(kIdentitySeconds) + " s",
           secs);
}

// --- 2 ---------------------------------------------------------------------

void criterion_equivalence()
{
    double worst_single = 0.0, worst_multi = 0.0;
    const double secs = timed([&] {
        Rng rng(1002);
        for (std::size_t n = 0; n < kEquivNets; ++n) {
            const bool deep = n % 2 == 1;  // 3 weighted layers, otherwise 2
            std::vector<std::size_t> widths{4 + rng.below(5), 6 + rng.below(10)};
            if (deep) widths.push_back(4 + rng.below(8));
            widths.push_back(2 + rng.below(4));
            const NetworkDef net = random_net(rng, widths);
            const std::size_t L = net.spiking_layers().size();
            std::vector<NeuronConfig> cfg;
            for (std::size_t k = 0; k < L; ++k)
                cfg.push_back({rng.uniform(0.2, 1.0), static_cast<double>(1u << rng.below(2)), 1 << rng.below(3)});
            Tensor batch({16, widths.front()});
            for (auto& x : batch.values()) x = rng.uniform(-1, 2);
            for (std::size_t T : {1, 4, 8, 32}) {
                const Tensor s = surrogate_forward(net, batch, cfg, T);
                const Tensor t = run(net, cfg, batch, T).logits;
                double err = 0.0;
                for (std::size_t i = 0; i < s.size(); ++i) err = std::max(err, std::abs(s[i] - t[i]));
                (deep ? worst_multi : worst_single) = std::max(deep ? worst_multi : worst_single, err);
            }
        }
    });
    const double worst = std::max(worst_single, worst_multi);
    report(2, worst <= kEquivTol && secs < kEquivSeconds,
           std::to_string(kEquivNets) + " nets, T in {1,4,8,32}: max logit error one spiking layer " +
               fmt(worst_single) + ", two spiking layers " + fmt(worst_multi) + " (tol " + fmt(kEquivTol) + ")",
           secs);
}

// --- 3 ---------------------------------------------------------------------

void criterion_dp()
{
    std::size_t exact[2] = {0, 0}, within[2] = {0, 0};
    const double secs = timed([&] {
        Rng rng(1003);
        for (int m = 0; m < 2; ++m) {
            const SearchMode mode = m ? SearchMode::Rho : SearchMode::Phi;
            for (std::size_t trial = 0; trial < kDpInstances; ++trial) {
                const std::size_t L = 1 + rng.below(4), n = 1 + rng.below(4);
                SensitivityTable t;
                for (std::size_t k = 0; k < n; ++k) t.legend.push_back(static_cast<double>(1u << k));
                t.S.assign(L, std::vector<double>(n));
                t.E.assign(L, std::vector<double>(n));
                for (std::size_t i = 0; i < L; ++i)
                    for (std::size_t k = 0; k < n; ++k) t.S[i][k] = rng.uniform(0, 1), t.E[i][k] = rng.uniform(0.1, 5);
                const double lo = min_achievable(t, mode);
                double hi = 0.0;
                for (const auto& row : mode == SearchMode::Phi ? t.E : t.S) hi += *std::max_element(row.begin(), row.end());
                const double budget = lo + rng.uniform(0, 1) * (hi - lo);
                const auto dp = pareto_search(t, budget, mode);
                const auto bf = brute_force_search(t, budget, mode);
                const double obj_dp = mode == SearchMode::Phi ? dp.S_sum : dp.E_sum;
                const double obj_bf = mode == SearchMode::Phi ? bf.S_sum : bf.E_sum;
                const double con = mode == SearchMode::Phi ? dp.E_sum : dp.S_sum;
                if (con > budget) continue;
                if (obj_dp == obj_bf) {
                    ++exact[m];
                    ++within[m];
                    continue;
                }
                const auto relaxed = brute_force_search(t, std::max(lo, budget - bin_slack(t, mode)), mode);
                within[m] += obj_dp <= (mode == SearchMode::Phi ? relaxed.S_sum : relaxed.E_sum);
            }
        }
    });
    const double need = kDpExactFraction * kDpInstances;
    const bool pass = exact[0] >= need && exact[1] >= need && within[0] == kDpInstances &&
                      within[1] == kDpInstances && secs < kDpSeconds;
    report(3, pass,
           "exact optimum phi " + std::to_string(exact[0]) + "/" + std::to_string(kDpInstances) + ", rho " +
               std::to_string(exact[1]) + "/" + std::to_string(kDpInstances) + " (need " + fmt(100 * kDpExactFraction) +
               "%); feasible and within slack phi " + std::to_string(within[0]) + ", rho " +
               std::to_string(within[1]),
           secs);
}

// --- desk experiments (4 to 7) ---------------------------------------------

struct Desk {
    RunConfig config;
    NetworkDef net;
    DataSplits data;
    Dataset calib;
    double ann_accuracy = 0.0;
};

Desk make_desk(std::uint64_t seed, const fs::path& workdir)
{
    Desk d;
    const fs::path out = workdir / ("desk_seed" + std::to_string(seed));
    d.config = parse_config(kDesk, {"seed=" + std::to_string(seed), "out_dir=" + out.string()}, "train");
    const RunOutcome o = run(d.config);
    if (o.exit_code != 0) throw std::runtime_error("desk training failed: " + o.report.dump());
    d.net = load_model(d.config.model);
    d.data = load_data(d.config);
    d.calib = calibration_set(d.config, d.data.train);
    d.ann_accuracy = accuracy(d.net, d.data.test);
    return d;
}

double agreement(const NetworkDef& net, const ConvertedSNN& snn, const Dataset& data, std::size_t T)
{
    const Tensor batch = data.batch();
    const Tensor a = forward(net, batch).logits;
    const Tensor s = run(snn.net, snn.configs, batch, T, 8).logits;
    std::size_t same = 0;
    for (std::size_t i = 0; i < data.size(); ++i) same += argmax(a.row(i).values()) == argmax(s.row(i).values());
    return static_cast<double>(same) / static_cast<double>(data.size());
}

ConversionResult convert_uniform(const Desk& d, std::size_t T, int phi)
{
    return convert(d.net, CalibrationPlan::uniform(T, d.net.spiking_layers().size(), phi), d.calib, 8);
}

TableOptions table_opts(std::size_t T)
{
    TableOptions o;
    o.T = T;
    o.workers = 8;
    return o;
}

// Searched per-layer phi with E_target = total energy of uniform phi = 2.
ConversionResult convert_searched(const Desk& d, std::size_t T, std::vector<int>* chosen)
{
    const std::vector<int> phis{1, 2, 4, 8};
    const ConversionResult base = convert_uniform(d, T, 1);
    const SensitivityTable table = build_phi_table(d.net, base.snn, phis, d.calib, table_opts(T));
    double budget = 0.0;
    for (std::size_t i = 0; i < table.layers(); ++i) budget += table.E[i][1];
    const ParetoAssignment a = pareto_phi_search(table, budget);
    CalibrationPlan plan = CalibrationPlan::uniform(T, table.layers(), 1);
    for (std::size_t i = 0; i < table.layers(); ++i) plan.phi[i] = phis[a.choice[i]];
    if (chosen) *chosen = plan.phi;
    return convert(d.net, plan, d.calib, 8);
}

struct DeskResults {
    std::vector<double> ann_acc, agree;
    std::vector<std::vector<double>> acc_phi1, acc_search;  // [T][seed]
    std::vector<std::string> phi_choices;
    double spikes_before = 0, spikes_after = 0, acc_before = 0, acc_after = 0;
    std::vector<std::string> rho_choices;
    double exit_adaptive = 0, acc_adaptive = 0, acc_fixed = 0, exit_flat = 0, acc_flat = 0;
    std::size_t flat_matched = 0;
    double secs4 = 0, secs5 = 0, secs6 = 0, secs7 = 0;
};

std::string join(const std::vector<int>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + std::to_string(v[i]);
    return s;
}

std::string join(const std::vector<double>& v)
{
    std::string s;
    for (std::size_t i = 0; i < v.size(); ++i) s += (i ? "," : "") + fmt(v[i]);
    return s;
}

double mean(const std::vector<double>& v) { return std::accumulate(v.begin(), v.end(), 0.0) / static_cast<double>(v.size()); }

void desk_criteria(const fs::path& workdir)
{
    DeskResults r;
    r.acc_phi1.assign(kEvalT.size(), {});
    r.acc_search.assign(kEvalT.size(), {});
    const double n_seeds = static_cast<double>(kSeeds.size());

    for (std::uint64_t seed : kSeeds) {
        Desk d;
        r.secs4 += timed([&] {
            d = make_desk(seed, workdir);
            r.ann_acc.push_back(d.ann_accuracy);
            const ConversionResult longrun = convert_uniform(d, kLongT, 1);
            r.agree.push_back(agreement(d.net, longrun.snn, d.data.test, kLongT));
        });

        ConvertedSNN searched8;
        r.secs5 += timed([&] {
            for (std::size_t ti = 0; ti < kEvalT.size(); ++ti) {
                const std::size_t T = kEvalT[ti];
                r.acc_phi1[ti].push_back(snn_accuracy(convert_uniform(d, T, 1).snn, d.data.test, T, 8));
                std::vector<int> chosen;
                const ConversionResult s = convert_searched(d, T, &chosen);
                r.acc_search[ti].push_back(snn_accuracy(s.snn, d.data.test, T, 8));
                if (T == 8) {
                    searched8 = s.snn;
                    r.phi_choices.push_back(join(chosen));
                }
            }
        });

        r.secs6 += timed([&] {
            const std::size_t T = 8;
            const std::vector<double> rhos{1, 2, 4};
            const SensitivityTable table = build_rho_table(d.net, searched8, rhos, d.calib, table_opts(T));
            double pre = 0.0;
            for (std::size_t i = 0; i < table.layers(); ++i) pre += table.S[i][0];
            const ParetoAssignment a = pareto_rho_search(table, 1.5 * pre);
            CalibrationPlan plan = CalibrationPlan::uniform(T, table.layers(), 1);
            std::vector<double> chosen;
            for (std::size_t i = 0; i < table.layers(); ++i) {
                plan.phi[i] = searched8.configs[i].phi;
                plan.rho[i] = rhos[a.choice[i]];
                chosen.push_back(plan.rho[i]);
            }
            r.rho_choices.push_back(join(chosen));
            const ConversionResult fin = convert(d.net, plan, d.calib, 8);
            const Tensor batch = d.data.test.batch();
            r.spikes_before += static_cast<double>(run(searched8.net, searched8.configs, batch, T, 8).report.total());
            r.spikes_after += static_cast<double>(run(fin.snn.net, fin.snn.configs, batch, T, 8).report.total());
            r.acc_before += snn_accuracy(searched8, d.data.test, T, 8) / n_seeds;
            r.acc_after += snn_accuracy(fin.snn, d.data.test, T, 8) / n_seeds;
        });

        r.secs7 += timed([&] {
            const double gamma = kLatencyFraction * static_cast<double>(kExitTmax);
            const TuneResult tuned = tune_exit_policy(searched8, d.data.valid, kExitTmax, gamma, 0.1, 0.1, 8);
            const ExitTrajectories test = compute_trajectories(searched8, d.data.test, kExitTmax, 8);
            const ExitTrace adaptive = evaluate_policy(test, tuned.policy);
            std::size_t hits = 0;
            for (std::size_t j = 0; j < test.labels.size(); ++j) hits += test.prediction[j].back() == test.labels[j];
            const double fixed = static_cast<double>(hits) / static_cast<double>(test.labels.size());
            r.exit_adaptive += adaptive.mean_exit / n_seeds;
            r.acc_adaptive += adaptive.accuracy / n_seeds;
            r.acc_fixed += fixed / n_seeds;
            // Uniform-threshold baseline: fastest beta = 0 policy that reaches the adaptive accuracy.
            double best_exit = INFINITY, best_acc = -1, fallback_exit = 0, fallback_acc = -1;
            for (double a : alpha_grid()) {
                const ExitTrace t = evaluate_policy(test, ExitPolicy::make(a, 0.0, 0.1, test.mean_entropy));
                if (t.accuracy >= adaptive.accuracy && t.mean_exit < best_exit) best_exit = t.mean_exit, best_acc = t.accuracy;
                if (t.accuracy > fallback_acc) fallback_acc = t.accuracy, fallback_exit = t.mean_exit;
            }
            if (std::isfinite(best_exit)) {
                ++r.flat_matched;
                r.exit_flat += best_exit / n_seeds;
                r.acc_flat += best_acc / n_seeds;
            } else {
                r.exit_flat += fallback_exit / n_seeds;
                r.acc_flat += fallback_acc / n_seeds;
            }
        });
    }

    // 4
    const double min_ann = *std::min_element(r.ann_acc.begin(), r.ann_acc.end());
    const double min_agree = *std::min_element(r.agree.begin(), r.agree.end());
    report(4, min_ann >= kAnnAccuracy && min_agree >= kAgreement && r.secs4 / n_seeds < kConvergenceSeconds,
           "ANN test accuracy per seed " + join(r.ann_acc) + " (need >= " + fmt(kAnnAccuracy) + "); T=" +
               std::to_string(kLongT) + " phi=1 top-1 agreement " + join(r.agree) + " (need >= " + fmt(kAgreement) +
               ")",
           r.secs4);

    // 5
    bool every_T = true;
    std::string per_T;
    for (std::size_t ti = 0; ti < kEvalT.size(); ++ti) {
        const double a1 = mean(r.acc_phi1[ti]), as = mean(r.acc_search[ti]);
        every_T = every_T && as >= a1;
        per_T += (ti ? "; " : "") + std::string("T=") + std::to_string(kEvalT[ti]) + " phi1 " + fmt(a1) +
                 " searched " + fmt(as);
    }
    const double ann = mean(r.ann_acc);
    const double gap1 = ann - mean(r.acc_phi1.back()), gaps = ann - mean(r.acc_search.back());
    const bool shrink_ok = gap1 > 0 ? gaps <= (1 - kGapShrink) * gap1 : gaps <= gap1;
    const double shrink = gap1 > 0 ? 1 - gaps / gap1 : 0.0;
    std::string phis;
    for (const auto& s : r.phi_choices) phis += (phis.empty() ? "" : " | ") + s;
    report(5, every_T && shrink_ok,
           per_T + "; T=8 gap to ANN phi1 " + fmt(gap1) + " searched " + fmt(gaps) + ", shrink " +
               fmt(100 * shrink) + "% (need >= " + fmt(100 * kGapShrink) + "%); chosen phi " + phis,
           r.secs5);

    // 6
    const double reduction = 1 - r.spikes_after / r.spikes_before;
    const double drop = r.acc_before - r.acc_after;
    std::string rhos;
    for (const auto& s : r.rho_choices) rhos += (rhos.empty() ? "" : " | ") + s;
    report(6, reduction >= kSpikeReduction && drop <= kAccuracyDrop,
           "spike reduction " + fmt(100 * reduction) + "% (need >= " + fmt(100 * kSpikeReduction) +
               "%), accuracy " + fmt(r.acc_before) + " -> " + fmt(r.acc_after) + " (max drop " +
               fmt(100 * kAccuracyDrop) + " points); chosen rho " + rhos,
           r.secs6);

    // 7
    const double limit = kLatencyFraction * static_cast<double>(kExitTmax);
    const bool ok7 = r.exit_adaptive <= limit && r.acc_adaptive >= r.acc_fixed - kAccuracyDrop &&
                     r.exit_flat >= r.exit_adaptive;
    report(7, ok7,
           "adaptive mean exit " + fmt(r.exit_adaptive) + " (need <= " + fmt(limit) + "), accuracy " +
               fmt(r.acc_adaptive) + " vs fixed T_max " + fmt(r.acc_fixed) + "; beta=0 at matched accuracy (" +
               std::to_string(r.flat_matched) + "/" + std::to_string(kSeeds.size()) + " seeds matched) mean exit " +
               fmt(r.exit_flat) + ", accuracy " + fmt(r.acc_flat),
           r.secs7);
}

// --- 8 to 10 ---------------------------------------------------------------

void criterion_energy()
{
    bool ok = true;
    std::string detail;
    const double secs = timed([&] {
        SpikeReport zero;
        zero.spikes = {0, 0, 0};
        const double w0 = energy(zero, {1e-9, 1e-3}).watts;
        SpikeReport thousand;
        thousand.spikes = {1000};
        const double w1 = energy(thousand, {1e-9, 1e-3}).watts;
        SpikeReport a, b;
        a.spikes = {300, 200};
        a.samples = 2;
        b.spikes = {150, 350};
        b.samples = 3;
        SpikeReport ab = a;
        ab += b;
        const EnergyModel m{1e-9, 1e-3};
        const bool linear = energy(ab, m).watts == energy(a, m).watts + energy(b, m).watts &&
                            energy(ab, m).joules == energy(a, m).joules + energy(b, m).joules && ab.samples == 5;
        ok = w0 == 0.0 && w1 == 1e-3 && linear;
        detail = "0 spikes -> " + fmt(w0) + " W, 1000 spikes at 1e-9 J -> " + fmt(w1, 17) + " W, concatenation " +
                 (linear ? "additive" : "not additive");
    });
    report(8, ok, detail, secs);
}

void criterion_entropy()
{
    bool ok = true;
    std::string detail;
    const double secs = timed([&] {
        const std::vector<double> onehot{0, 1, 0}, uniform(10, 0.1), p{0.5, 0.5}, q{0.25, 0.75};
        const double h1 = entropy(onehot), hu = entropy(uniform);
        const double kpp = kl_divergence(uniform, uniform), kpq = kl_divergence(p, q);
        ok = h1 == 0.0 && std::abs(hu + std::log(10.0)) <= kEntropyTol && kpp == 0.0 &&
             std::abs(kpq - 0.143841) <= kKlTol;
        detail = "one-hot " + fmt(h1) + ", uniform-10 " + fmt(hu, 10) + ", KL(p||p) " + fmt(kpp) +
                 ", two-class KL " + fmt(kpq, 8);
    });
    report(9, ok, detail, secs);
}

void criterion_schedule()
{
    bool ok = true;
    std::string detail;
    const double secs = timed([&] {
        Rng rng(1010);
        const NetworkDef net = random_net(rng, {6, 24, 4});
        Dataset calib;
        for (int i = 0; i < 48; ++i) {
            Tensor t({6});
            for (auto& x : t.values()) x = rng.uniform(0, 1);
            calib.inputs.push_back(t);
            calib.labels.push_back(rng.below(4));
        }
        const ConvertedSNN snn = convert(net, CalibrationPlan::uniform(8, 1, 2), calib).snn;
        const ExitPolicy p = fit_schedule(snn, calib, 16, 0.7, 0.1, 0.1);
        double worst = 0.0;
        for (std::size_t t = 0; t < p.T_max; ++t)
            worst = std::max(worst, std::abs(p.schedule[t] - (p.alpha_base + p.beta * std::exp(-(p.mean_entropy[t] -
                                                                                                  p.entropy_min) /
                                                                                                 p.delta))));
        const auto tmin = static_cast<std::size_t>(std::min_element(p.mean_entropy.begin(), p.mean_entropy.end()) -
                                                   p.mean_entropy.begin());
        const double at_min = p.schedule[tmin] - (p.alpha_base + p.beta);
        const ExitPolicy flat = fit_schedule(snn, calib, 16, 0.7, 0.0, 0.1);
        const bool is_flat = std::all_of(flat.schedule.begin(), flat.schedule.end(), [](double a) { return a == 0.7; });
        ok = worst <= kScheduleTol && std::abs(at_min) <= kScheduleTol && is_flat;
        detail = "max schedule error " + fmt(worst) + " (tol " + fmt(kScheduleTol) + "), alpha at E_min minus (base+beta) " +
                 fmt(at_min) + ", beta=0 " + (is_flat ? "flat" : "not flat");
    });
    report(10, ok, detail, secs);
}

// --- 11 --------------------------------------------------------------------

const char* kCliConfig =
    "data.classes = 4\n"
    "data.dim = 6\n"
    "data.spread = 0.6\n"
    "data.train_per_class = 60\n"
    "data.valid_per_class = 20\n"
    "data.test_per_class = 40\n"
    "train.hidden = 24,12\n"
    "train.epochs = 8\n"
    "T = 4\n"
    "calib_size = 64\n"
    "T_max = 8\n"
    "seed = 5\n";

std::string slurp(const fs::path& p)
{
    std::ifstream in(p, std::ios::binary);
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void criterion_determinism(const std::string& cli, const fs::path& workdir)
{
    const std::vector<std::string> tasks{"train", "convert", "search-phi", "search-rho", "fit-exit", "eval", "simulate"};
    std::vector<std::string> failures;
    const double secs = timed([&] {
        const fs::path cfg = workdir / "cli.cfg";
        std::ofstream(cfg) << kCliConfig;
        for (const char* w : {"1", "8"}) fs::remove_all(workdir / (std::string("cli_w") + w));
        for (const auto& task : tasks) {
            Json first[2];
            for (int wi = 0; wi < 2; ++wi) {
                const std::string w = wi ? "8" : "1";
                const fs::path out = workdir / ("cli_w" + w);
                std::string cmd = cli + " " + task + " --config " + cfg.string() + " --set out_dir=" + out.string() +
                                  " --set workers=" + w;
                if (task == "eval")
                    cmd += " --set snn=" + (out / "snn.json").string() + " --set policy=" + (out / "policy.json").string();
                cmd += " > /dev/null";
                for (int rep = 0; rep < 2; ++rep) {
                    if (std::system(cmd.c_str()) != 0) {
                        failures.push_back(task + " exited nonzero (workers " + w + ")");
                        continue;
                    }
                    Json j = deterministic_part(Json::parse(slurp(out / (task + "_report.json"))));
                    if (rep == 0) {
                        first[wi] = j;
                    } else if (j.dump() != first[wi].dump()) {
                        failures.push_back(task + " repeat differs (workers " + w + ")");
                    }
                }
            }
            if (first[0]["metrics"] != first[1]["metrics"] || first[0]["status"] != first[1]["status"])
                failures.push_back(task + " differs between workers 1 and 8");
        }
    });
    std::string detail = std::to_string(tasks.size()) + " CLI tasks, each run twice at workers 1 and 8: ";
    if (failures.empty()) {
        detail += "all reports identical except wall clock and the workers echo";
    } else {
        for (const auto& f : failures) detail += f + "; ";
    }
    report(11, failures.empty(), detail, secs);
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"spikecal acceptance checks"};
    std::string cli, workdir = "acceptance_work";
    std::vector<int> only;
    app.add_option("--cli", cli, "path to the spikecal executable")->required();
    app.add_option("--workdir", workdir, "scratch directory");
    app.add_option("--only", only, "run only these criteria");
    CLI11_PARSE(app, argc, argv);
    fs::create_directories(workdir);
    auto want = [&](int id) { return only.empty() || std::find(only.begin(), only.end(), id) != only.end(); };

    try {
        if (want(1)) criterion_identity();
        if (want(2)) criterion_equivalence();
        if (want(3)) criterion_dp();
        if (want(4) || want(5) || want(6) || want(7)) desk_criteria(workdir);
        if (want(8)) criterion_energy();
        if (want(9)) criterion_entropy();
        if (want(10)) criterion_schedule();
        if (want(11)) criterion_determinism(cli, workdir);
    } catch (const std::exception& e) {
        std::printf("acceptance aborted: %s\n", e.what());
        return 2;
    }
    std::size_t passed = 0;
    for (const auto& l : results) passed += l.pass;
    std::printf("%zu/%zu criteria passed\n", passed, results.size());
    return passed == results.size() ? 0 : 1;
}
