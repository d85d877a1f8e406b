#include "spikecal/pipeline.hpp"

#include <chrono>
#include <cmath>
#include <algorithm>
#include <filesystem>
#include <fstream>
#include <sstream>

#include "spikecal/data.hpp"
#include "spikecal/prob.hpp"
#include "spikecal/rng.hpp"
#include "spikecal/snn.hpp"

namespace spikecal {

namespace fs = std::filesystem;

int exit_code(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::Config:
    case ErrorKind::Parameter:
    case ErrorKind::Size:
        return kExitConfig;
    case ErrorKind::Format:
    case ErrorKind::Validation:
    case ErrorKind::Io:
    case ErrorKind::Data:
        return kExitData;
    case ErrorKind::Infeasible:
        return kExitInfeasible;
    case ErrorKind::Training:
    case ErrorKind::Numeric:
        return kExitNumeric;
    }
    return kExitNumeric;
}

DataSplits load_data(const RunConfig& c)
{
    DataSplits s;
    if (c.data.source == "synth") {
        const auto& d = c.data;
        s.train = synth_blobs(d.classes, d.dim, d.train_per_class, d.spread, derive_seed(c.seed, Stream::TrainData));
        s.valid = synth_blobs(d.classes, d.dim, d.valid_per_class, d.spread, derive_seed(c.seed, Stream::ValidData));
        s.test = synth_blobs(d.classes, d.dim, d.test_per_class, d.spread, derive_seed(c.seed, Stream::TestData));
    } else {
        Dataset train = load_idx(c.data.train_images, c.data.train_labels);
        if (c.data.valid_size >= train.size())
            throw DataError("data.valid_size must be smaller than the training file (" + std::to_string(train.size()) +
                            " samples)");
        const std::size_t cut = train.size() - c.data.valid_size;
        s.valid = train.subset(cut, train.size());
        s.train = train.subset(0, cut);
        s.test = load_idx(c.data.test_images, c.data.test_labels);
    }
    for (const Dataset* d : {&s.train, &s.valid, &s.test}) d->check(c.data.classes);
    return s;
}

Dataset calibration_set(const RunConfig& c, const Dataset& train)
{
    return train.subset(0, c.calib_size);
}

CalibrationPlan make_plan(const RunConfig& c, std::size_t L)
{
    CalibrationPlan p;
    p.T = c.T;
    p.grid_points = c.grid_points;
    if (c.phi.size() != 1 && c.phi.size() != L)
        throw ConfigError("phi needs 1 or " + std::to_string(L) + " values, got " + std::to_string(c.phi.size()));
    if (c.rho.size() != 1 && c.rho.size() != L)
        throw ConfigError("rho needs 1 or " + std::to_string(L) + " values, got " + std::to_string(c.rho.size()));
    p.phi = c.phi.size() == 1 ? std::vector<int>(L, c.phi[0]) : c.phi;
    p.rho = c.rho.size() == 1 ? std::vector<double>(L, c.rho[0]) : c.rho;
    return p;
}

double snn_accuracy(const ConvertedSNN& snn, const Dataset& data, std::size_t T, std::size_t workers)
{
    if (data.empty()) return 0.0;
    const RunResult r = run(snn.net, snn.configs, data.batch(), T, workers);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.size(); ++i) hits += argmax(r.logits.row(i).values()) == data.labels[i];
    return static_cast<double>(hits) / static_cast<double>(data.size());
}

NetworkDef make_network(const RunConfig& c, const Shape& sample_shape)
{
    const std::size_t dim = element_count(sample_shape);
    NetworkDef net = make_mlp(dim, c.hidden, c.data.classes);
    if (sample_shape.size() > 1) {
        net.input_shape = sample_shape;
        net.layers.insert(net.layers.begin(), LayerSpec::flatten());
    }
    initialize_weights(net, c.seed);
    return net;
}

namespace {

Json configs_json(const std::vector<NeuronConfig>& configs, const std::vector<std::size_t>& layers)
{
    Json arr = Json::array();
    for (std::size_t k = 0; k < configs.size(); ++k)
        arr.push_back({{"layer", layers[k]}, {"v_th", configs[k].v_th}, {"phi", configs[k].phi},
                       {"rho", configs[k].rho}});
    return arr;
}

Json spikes_json(const SpikeReport& r, const EnergyModel& model)
{
    const EnergyEstimate e = energy(r, model);
    const double n = static_cast<double>(r.samples);
    return {{"per_layer", r.spikes},
            {"total", r.total()},
            {"per_sample", static_cast<double>(r.total()) / n},
            {"watts", e.watts},
            {"joules", e.joules},
            {"joules_per_sample", e.joules / n}};
}

Json conversion_json(const ConversionReport& r)
{
    Json layers = Json::array();
    for (const auto& l : r.layers)
        layers.push_back({{"layer", l.layer},
                          {"v_th", l.config.v_th},
                          {"phi", l.config.phi},
                          {"rho", l.config.rho},
                          {"objective", l.objective},
                          {"bias_delta_norm", l.bias_delta_norm},
                          {"degenerate", l.degenerate}});
    return {{"T", r.T},
            {"calibration_samples", r.calibration_samples},
            {"layers", layers},
            {"head_bias_delta_norm", r.head_bias_delta_norm},
            {"logit_mse_before_bias", r.logit_mse_before},
            {"logit_mse_after_bias", r.logit_mse_after}};
}

CsvTable conversion_csv(const ConversionReport& r)
{
    CsvTable t({"layer", "v_th", "phi", "rho", "objective", "bias_delta_norm"});
    for (const auto& l : r.layers)
        t.add({std::to_string(l.layer), format_number(l.config.v_th), std::to_string(l.config.phi),
               format_number(l.config.rho), format_number(l.objective), format_number(l.bias_delta_norm)});
    return t;
}

CsvTable table_csv(const SensitivityTable& table, const std::vector<std::size_t>& layers, const char* legend)
{
    CsvTable t({"layer", legend, "S", "E"});
    for (std::size_t i = 0; i < table.layers(); ++i)
        for (std::size_t k = 0; k < table.options(); ++k)
            t.add({std::to_string(layers[i]), format_number(table.legend[k]), format_number(table.S[i][k]),
                   format_number(table.E[i][k])});
    return t;
}

CsvTable frontier_csv(const ParetoAssignment& a, const SensitivityTable& table)
{
    CsvTable t({"E", "S", "assignment"});
    for (const auto& p : a.frontier) {
        std::string choice;
        for (std::size_t i = 0; i < p.choice.size(); ++i) {
            if (i) choice += ' ';
            choice += format_number(table.legend[p.choice[i]]);
        }
        t.add({format_number(p.E), format_number(p.S), choice});
    }
    return t;
}

Json assignment_json(const ParetoAssignment& a, const SensitivityTable& table, double budget)
{
    std::vector<double> chosen;
    for (auto k : a.choice) chosen.push_back(table.legend[k]);
    return {{"budget", budget},   {"assignment", chosen},
            {"S_sum", a.S_sum},   {"E_sum", a.E_sum},
            {"frontier_points", a.frontier.size()}};
}

Json table_json(const SensitivityTable& t)
{
    return {{"legend", t.legend}, {"S", t.S}, {"E", t.E}};
}

Json accuracy_per_T(const ConvertedSNN& snn, const Dataset& data, const std::vector<std::size_t>& Ts,
                    std::size_t workers)
{
    Json out = Json::object();
    for (auto T : Ts) out[std::to_string(T)] = snn_accuracy(snn, data, T, workers);
    return out;
}

struct Context {
    const RunConfig& c;
    Json& metrics;
    Json& artifacts;

    fs::path out(const std::string& name)
    {
        artifacts.push_back(name);
        return c.out_dir / name;
    }
};

void task_train(Context& ctx)
{
    const auto& c = ctx.c;
    const DataSplits data = load_data(c);
    NetworkDef net = make_network(c, data.train.inputs.front().shape());
    TrainOptions opt{c.epochs, c.learning_rate, c.batch_size, c.seed};
    TrainResult tr = train_tiny(net, data.train, opt);
    const NetworkDef stored = round_to_storage(tr.net);
    save_model(stored, ctx.out("model.json"));
    ctx.metrics["ann"] = {{"final_loss", tr.final_loss},
                          {"train_accuracy", accuracy(stored, data.train)},
                          {"valid_accuracy", accuracy(stored, data.valid)},
                          {"test_accuracy", accuracy(stored, data.test)}};
}

ConversionResult base_conversion(Context& ctx, const NetworkDef& net, const Dataset& calib)
{
    return convert(net, make_plan(ctx.c, net.spiking_layers().size()), calib, ctx.c.workers);
}

void task_convert(Context& ctx)
{
    const auto& c = ctx.c;
    const NetworkDef net = load_model(c.model);
    const DataSplits data = load_data(c);
    ctx.metrics["ann"] = {{"test_accuracy", accuracy(net, data.test)}};
    const ConversionResult conv = base_conversion(ctx, net, calibration_set(c, data.train));
    ctx.metrics["conversion"] = conversion_json(conv.report);
    save_snn(conv.snn, ctx.out("snn.json"));
    write_csv(ctx.out("conversion.csv"), conversion_csv(conv.report));
    ctx.metrics["snn"] = {{"T", c.T}, {"test_accuracy", snn_accuracy(conv.snn, data.test, c.T, c.workers)},
                          {"accuracy_per_T", accuracy_per_T(conv.snn, data.test, c.eval_T, c.workers)}};
}

TableOptions table_options(const RunConfig& c)
{
    TableOptions o;
    o.T = c.T;
    o.energy.energy_per_spike = c.energy_per_spike;
    o.grid_points = c.grid_points;
    o.workers = c.workers;
    return o;
}

void task_search_phi(Context& ctx)
{
    const auto& c = ctx.c;
    const NetworkDef net = load_model(c.model);
    const DataSplits data = load_data(c);
    const Dataset calib = calibration_set(c, data.train);
    const auto layers = net.spiking_layers();
    ctx.metrics["ann"] = {{"test_accuracy", accuracy(net, data.test)}};

    const ConversionResult base = base_conversion(ctx, net, calib);
    const SensitivityTable table = build_phi_table(net, base.snn, c.phi_candidates, calib, table_options(c));
    ctx.metrics["table"] = table_json(table);
    ctx.metrics["energy_measured_with"] = "other layers at their configured defaults";
    write_csv(ctx.out("phi_table.csv"), table_csv(table, layers, "phi"));

    double budget = 0.0;
    if (c.e_target) {
        budget = *c.e_target;
    } else {
        const auto it = std::find(c.phi_candidates.begin(), c.phi_candidates.end(), c.e_target_uniform_phi);
        if (it == c.phi_candidates.end())
            throw ConfigError("e_target_uniform_phi must be one of phi_candidates when e_target is unset");
        const auto k = static_cast<std::size_t>(it - c.phi_candidates.begin());
        for (std::size_t i = 0; i < table.layers(); ++i) budget += table.E[i][k];
    }
    ctx.metrics["E_target"] = budget;
    const ParetoAssignment a = pareto_phi_search(table, budget, c.bins);
    ctx.metrics["search"] = assignment_json(a, table, budget);
    write_csv(ctx.out("phi_frontier.csv"), frontier_csv(a, table));

    CalibrationPlan plan = make_plan(c, layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) plan.phi[i] = static_cast<int>(table.legend[a.choice[i]]);
    const ConversionResult fin = convert(net, plan, calib, c.workers);
    ctx.metrics["conversion"] = conversion_json(fin.report);
    save_snn(fin.snn, ctx.out("snn.json"));
    write_csv(ctx.out("conversion.csv"), conversion_csv(fin.report));

    const RunResult r = run(fin.snn.net, fin.snn.configs, data.test.batch(), c.T, c.workers);
    EnergyModel em{c.energy_per_spike};
    ctx.metrics["snn"] = {{"T", c.T},
                          {"test_accuracy", snn_accuracy(fin.snn, data.test, c.T, c.workers)},
                          {"baseline_test_accuracy", snn_accuracy(base.snn, data.test, c.T, c.workers)},
                          {"accuracy_per_T", accuracy_per_T(fin.snn, data.test, c.eval_T, c.workers)},
                          {"spikes", spikes_json(r.report, em)}};
}

void task_search_rho(Context& ctx)
{
    const auto& c = ctx.c;
    const NetworkDef net = load_model(c.model);
    const DataSplits data = load_data(c);
    const Dataset calib = calibration_set(c, data.train);
    const auto layers = net.spiking_layers();
    ctx.metrics["ann"] = {{"test_accuracy", accuracy(net, data.test)}};

    ConvertedSNN snn;
    if (fs::exists(c.snn)) {
        snn = load_snn(c.snn);
        ctx.metrics["input_snn"] = "loaded from the snn file";
    } else {
        snn = base_conversion(ctx, net, calib).snn;
        ctx.metrics["input_snn"] = "converted from model";
    }
    if (snn.configs.size() != layers.size()) throw DataError("converted network does not match the model");

    const SensitivityTable table = build_rho_table(net, snn, c.rho_candidates, calib, table_options(c));
    ctx.metrics["table"] = table_json(table);
    ctx.metrics["energy_measured_with"] = "other layers at their configured defaults";
    write_csv(ctx.out("rho_table.csv"), table_csv(table, layers, "rho"));

    double pre = 0.0;
    for (std::size_t i = 0; i < layers.size(); ++i) pre += sensitivity(net, i, snn.configs[i], calib, c.T, c.workers);
    const double budget = c.s_target ? *c.s_target : c.s_target_scale * pre;
    ctx.metrics["S_sum_before"] = pre;
    ctx.metrics["S_target"] = budget;
    const ParetoAssignment a = pareto_rho_search(table, budget, c.bins);
    ctx.metrics["search"] = assignment_json(a, table, budget);
    write_csv(ctx.out("rho_frontier.csv"), frontier_csv(a, table));

    CalibrationPlan plan = make_plan(c, layers.size());
    for (std::size_t i = 0; i < layers.size(); ++i) {
        plan.phi[i] = snn.configs[i].phi;
        plan.rho[i] = table.legend[a.choice[i]];
    }
    const ConversionResult fin = convert(net, plan, calib, c.workers);
    ctx.metrics["conversion"] = conversion_json(fin.report);
    save_snn(fin.snn, ctx.out("snn.json"));
    write_csv(ctx.out("conversion.csv"), conversion_csv(fin.report));

    EnergyModel em{c.energy_per_spike};
    const Tensor batch = data.test.batch();
    const RunResult before = run(snn.net, snn.configs, batch, c.T, c.workers);
    const RunResult after = run(fin.snn.net, fin.snn.configs, batch, c.T, c.workers);
    const double reduction =
        before.report.total() ? 1.0 - static_cast<double>(after.report.total()) / static_cast<double>(before.report.total())
                              : 0.0;
    ctx.metrics["snn"] = {{"T", c.T},
                          {"test_accuracy_before", snn_accuracy(snn, data.test, c.T, c.workers)},
                          {"test_accuracy_after", snn_accuracy(fin.snn, data.test, c.T, c.workers)},
                          {"spikes_before", spikes_json(before.report, em)},
                          {"spikes_after", spikes_json(after.report, em)},
                          {"spike_reduction", reduction}};
}

Json trace_json(const ExitTrace& t)
{
    return {{"accuracy", t.accuracy}, {"mean_exit", t.mean_exit}, {"total_spikes", t.total_spikes}};
}

CsvTable trace_csv(const ExitTrace& t)
{
    CsvTable csv({"sample", "exit_t", "confidence", "correct"});
    for (std::size_t j = 0; j < t.samples.size(); ++j)
        csv.add({std::to_string(j), std::to_string(t.samples[j].exit_t), format_number(t.samples[j].confidence),
                 t.correct[j] ? "1" : "0"});
    return csv;
}

Json policy_json(const ExitPolicy& p)
{
    return {{"alpha_base", p.alpha_base}, {"beta", p.beta},         {"delta", p.delta},
            {"T_max", p.T_max},           {"entropy_min", p.entropy_min}, {"mean_entropy", p.mean_entropy},
            {"schedule", p.schedule}};
}

void task_fit_exit(Context& ctx)
{
    const auto& c = ctx.c;
    const ConvertedSNN snn = load_snn(c.snn);
    const DataSplits data = load_data(c);
    const double gamma = c.latency_target ? *c.latency_target : c.latency_fraction * static_cast<double>(c.T_max);
    ctx.metrics["latency_target"] = gamma;
    const TuneResult tuned = tune_exit_policy(snn, data.valid, c.T_max, gamma, c.beta, c.delta, c.workers);
    ctx.metrics["policy"] = policy_json(tuned.policy);
    ctx.metrics["alpha_grid"] = {{"low", kAlphaGridLow}, {"high", kAlphaGridHigh}, {"points", kAlphaGridPoints}};
    ctx.metrics["valid"] = {{"accuracy", tuned.accuracy}, {"mean_exit", tuned.mean_exit},
                            {"feasible", tuned.feasible}};
    if (!tuned.feasible) ctx.metrics["warning"] = tuned.warning;
    write_file_atomic(ctx.out("policy.json"), serialize_policy(tuned.policy));

    CsvTable grid({"alpha_base", "accuracy", "mean_exit"});
    for (const auto& g : tuned.grid)
        grid.add({format_number(g.alpha_base), format_number(g.accuracy), format_number(g.mean_exit)});
    write_csv(ctx.out("exit_grid.csv"), grid);

    const ExitTrace adaptive = adaptive_evaluate(snn, data.test, tuned.policy, c.workers);
    const RunResult fixed = run(snn.net, snn.configs, data.test.batch(), c.T_max, c.workers);
    ctx.metrics["test"] = {{"adaptive", trace_json(adaptive)},
                           {"fixed_T_max", {{"accuracy", snn_accuracy(snn, data.test, c.T_max, c.workers)},
                                            {"mean_exit", c.T_max},
                                            {"total_spikes", fixed.report.total()}}}};
    write_csv(ctx.out("exit_trace.csv"), trace_csv(adaptive));
}

ExitPolicy load_policy(const fs::path& p)
{
    std::ifstream in(p);
    if (!in) throw IoError("cannot open exit policy " + p.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_policy(ss.str());
}

void task_eval(Context& ctx)
{
    const auto& c = ctx.c;
    const NetworkDef net = load_model(c.model);
    const DataSplits data = load_data(c);
    ctx.metrics["ann"] = {{"test_accuracy", accuracy(net, data.test)}};
    if (c.entries.at("snn").empty()) return;
    const ConvertedSNN snn = load_snn(c.snn);
    ctx.metrics["snn"] = {{"accuracy_per_T", accuracy_per_T(snn, data.test, c.eval_T, c.workers)}};
    if (c.entries.at("policy").empty()) return;
    const ExitTrace t = adaptive_evaluate(snn, data.test, load_policy(c.policy), c.workers);
    ctx.metrics["adaptive"] = trace_json(t);
    write_csv(ctx.out("exit_trace.csv"), trace_csv(t));
}

void task_simulate(Context& ctx)
{
    const auto& c = ctx.c;
    const ConvertedSNN snn = load_snn(c.snn);
    const DataSplits data = load_data(c);
    const RunResult r = run(snn.net, snn.configs, data.test.batch(), c.T, c.workers);
    std::size_t hits = 0;
    for (std::size_t i = 0; i < data.test.size(); ++i)
        hits += argmax(r.logits.row(i).values()) == data.test.labels[i];
    EnergyModel em{c.energy_per_spike};
    ctx.metrics["neurons"] = configs_json(snn.configs, snn.net.spiking_layers());
    ctx.metrics["snn"] = {{"T", c.T},
                          {"test_accuracy", static_cast<double>(hits) / static_cast<double>(data.test.size())},
                          {"spikes", spikes_json(r.report, em)}};
    CsvTable csv({"layer", "spikes", "spikes_per_sample"});
    for (std::size_t k = 0; k < r.report.spikes.size(); ++k)
        csv.add({std::to_string(r.report.layers[k]), std::to_string(r.report.spikes[k]),
                 format_number(static_cast<double>(r.report.spikes[k]) / static_cast<double>(r.report.samples))});
    write_csv(ctx.out("spikes.csv"), csv);
}

}  // namespace

RunOutcome run(const RunConfig& c)
{
    const auto start = std::chrono::steady_clock::now();
    RunOutcome o;
    Json metrics = Json::object();
    Json artifacts = Json::array();
    Json config = Json::object();
    for (const auto& [k, v] : c.entries) config[k] = v;
    o.report["tool"] = "spikecal";
    o.report["tool_version"] = SPIKECAL_VERSION;
    o.report["task"] = c.task;
    o.report["config"] = config;

    const fs::path report_path = c.out_dir / (c.task + "_report.json");
    try {
        fs::create_directories(c.out_dir);
        Context ctx{c, metrics, artifacts};
        if (c.task == "train") task_train(ctx);
        else if (c.task == "convert") task_convert(ctx);
        else if (c.task == "search-phi") task_search_phi(ctx);
        else if (c.task == "search-rho") task_search_rho(ctx);
        else if (c.task == "fit-exit") task_fit_exit(ctx);
        else if (c.task == "eval") task_eval(ctx);
        else if (c.task == "simulate") task_simulate(ctx);
        else throw ConfigError("unknown task '" + c.task + "'");
        o.report["status"] = "ok";
    } catch (const Error& e) {
        o.exit_code = exit_code(e.kind());
        o.report["status"] = "failed";
        o.report["error"] = {{"kind", to_string(e.kind())}, {"message", e.what()}};
        if (const auto* ib = dynamic_cast<const InfeasibleBudget*>(&e)) o.report["error"]["min_achievable"] = ib->min_achievable();
    } catch (const std::exception& e) {
        o.exit_code = kExitNumeric;
        o.report["status"] = "failed";
        o.report["error"] = {{"kind", "internal"}, {"message", e.what()}};
    }
    o.report["metrics"] = metrics;
    o.report["artifacts"] = artifacts;
    o.report["wall_clock_seconds"] =
        std::chrono::duration<double>(std::chrono::steady_clock::now() - start).count();
    try {
        std::error_code ec;
        fs::create_directories(c.out_dir, ec);
        write_json(report_path, o.report);
    } catch (const Error& e) {
        if (o.exit_code == kExitOk) o.exit_code = exit_code(e.kind());
    }
    return o;
}

Json deterministic_part(Json report)
{
    report.erase("wall_clock_seconds");
    return report;
}

}  // namespace spikecal
