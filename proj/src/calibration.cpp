#include "spikecal/calibration.hpp"

#include <algorithm>
#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spikecal/error.hpp"
#include "spikecal/parallel.hpp"
#include "spikecal/snn.hpp"

namespace spikecal {

namespace {

// clipfloor without argument checks, for the inner loop of the objective.
inline double clipfloor_fast(double x, double steps, double v_th, double ceiling)
{
    return v_th / steps * std::clamp(std::floor(steps * x / v_th), 0.0, ceiling);
}

}  // namespace

double threshold_objective(std::span<const double> activations, std::size_t T, double v_th, int phi)
{
    if (activations.empty()) throw ParameterError("threshold_objective: no activations");
    if (!(v_th > 0.0)) throw ParameterError("threshold_objective: v_th must be positive");
    const double steps = static_cast<double>(T);
    const double ceiling = steps * static_cast<double>(phi);
    double sum = 0.0;
    for (double a : activations) {
        const double d = clipfloor_fast(a, steps, v_th, ceiling) - std::max(a, 0.0);
        sum += d * d;
    }
    return sum / static_cast<double>(activations.size());
}

std::vector<double> threshold_candidates(std::span<const double> activations, std::size_t grid_points)
{
    if (grid_points == 0) throw ParameterError("threshold grid must have at least one point");
    double top = 0.0;
    for (double a : activations) top = std::max(top, a);
    const bool degenerate = !(top > 0.0);
    if (degenerate) top = 1.0;

    std::vector<double> c;
    c.reserve(grid_points + kPercentileGrid.size());
    if (grid_points == 1) {
        c.push_back(top);
    } else {
        for (std::size_t j = 0; j < grid_points; ++j) {
            const double e = -3.0 + 3.0 * static_cast<double>(j) / static_cast<double>(grid_points - 1);
            c.push_back(j + 1 == grid_points ? top : top * std::pow(10.0, e));
        }
    }
    if (!degenerate) {
        std::vector<double> values(activations.begin(), activations.end());
        for (double p : kPercentileGrid) {
            const double v = percentile(values, p);
            if (v > 0.0) c.push_back(v);
        }
    }
    std::sort(c.begin(), c.end());
    c.erase(std::unique(c.begin(), c.end()), c.end());
    return c;
}

ThresholdResult optimize_threshold(std::span<const double> activations, std::size_t T, int phi, std::size_t grid_points)
{
    if (activations.empty()) throw ParameterError("optimize_threshold: activations are empty");
    if (T == 0) throw ParameterError("optimize_threshold: T must be >= 1");
    if (phi < 1) throw ParameterError("optimize_threshold: phi must be >= 1");

    const auto grid = threshold_candidates(activations, grid_points);
    const bool degenerate = std::none_of(activations.begin(), activations.end(), [](double a) { return a > 0.0; });
    if (degenerate) {
        return {grid.front(), threshold_objective(activations, T, grid.front(), phi), true,
                "all activations are <= 0; using the smallest candidate threshold"};
    }

    std::size_t best = 0;
    double best_obj = threshold_objective(activations, T, grid[0], phi);
    for (std::size_t j = 1; j < grid.size(); ++j) {
        const double obj = threshold_objective(activations, T, grid[j], phi);
        if (obj < best_obj) {
            best_obj = obj;
            best = j;
        }
    }

    ThresholdResult result{grid[best], best_obj, false, {}};
    double lo = grid[best > 0 ? best - 1 : best];
    double hi = grid[best + 1 < grid.size() ? best + 1 : best];
    if (hi > lo) {
        constexpr double kInvPhi = 0.6180339887498949;
        auto f = [&](double v) { return threshold_objective(activations, T, v, phi); };
        double x1 = hi - kInvPhi * (hi - lo), x2 = lo + kInvPhi * (hi - lo);
        double f1 = f(x1), f2 = f(x2);
        for (int it = 0; it < 60 && hi - lo > 1e-12 * hi; ++it) {
            if (f1 <= f2) {
                hi = x2, x2 = x1, f2 = f1;
                x1 = hi - kInvPhi * (hi - lo);
                f1 = f(x1);
            } else {
                lo = x1, x1 = x2, f1 = f2;
                x2 = lo + kInvPhi * (hi - lo);
                f2 = f(x2);
            }
        }
        const double v = f1 <= f2 ? x1 : x2;
        const double obj = std::min(f1, f2);
        if (obj < result.objective || (obj == result.objective && v < result.v_th)) {
            result.v_th = v;
            result.objective = obj;
        }
    }
    return result;
}

CalibrationPlan CalibrationPlan::uniform(std::size_t T, std::size_t spiking_layers, int phi, double rho)
{
    CalibrationPlan p;
    p.T = T;
    p.phi.assign(spiking_layers, phi);
    p.rho.assign(spiking_layers, rho);
    return p;
}

void CalibrationPlan::check(std::size_t spiking_layers) const
{
    if (T == 0) throw ParameterError("calibration plan: T must be >= 1");
    if (grid_points == 0) throw ParameterError("calibration plan: threshold grid is empty");
    if (phi.size() != spiking_layers || rho.size() != spiking_layers)
        throw ParameterError("calibration plan: need phi and rho for each of the " + std::to_string(spiking_layers) +
                             " spiking layers");
    for (int p : phi)
        if (p < 1) throw ParameterError("calibration plan: phi must be >= 1");
    for (double r : rho)
        if (!(r >= 1.0)) throw ParameterError("calibration plan: rho must be >= 1");
}

std::vector<Tensor> ann_layer_outputs(const NetworkDef& net, const Tensor& input)
{
    std::vector<Tensor> out;
    Tensor cur = input;
    for (const auto& layer : net.layers) {
        cur = apply_layer(layer, cur);
        if (layer.relu_after)
            for (auto& x : cur.values()) x = std::max(x, 0.0);
        out.push_back(cur);
    }
    return out;
}

namespace {

// Per-channel mean of (reference - actual) over samples and spatial positions.
// Rows are [N, C, ...]; a rank-2 tensor treats every unit as its own channel.
std::vector<double> channel_mean_error(const Tensor& reference, const Tensor& actual)
{
    const std::size_t n = reference.shape()[0];
    const std::size_t per_sample = reference.size() / n;
    const std::size_t channels = reference.shape()[1];
    const std::size_t spatial = per_sample / channels;
    std::vector<double> mu(channels, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t k = 0; k < spatial; ++k) {
                const std::size_t idx = i * per_sample + c * spatial + k;
                mu[c] += reference[idx] - actual[idx];
            }
    const double denom = static_cast<double>(n * spatial);
    for (auto& m : mu) m /= denom;
    return mu;
}

double l2(const std::vector<double>& v)
{
    double s = 0.0;
    for (double x : v) s += x * x;
    return std::sqrt(s);
}

double mse(const Tensor& a, const Tensor& b)
{
    double s = 0.0;
    for (std::size_t i = 0; i < a.size(); ++i) s += (a[i] - b[i]) * (a[i] - b[i]);
    return a.size() ? s / static_cast<double>(a.size()) : 0.0;
}

}  // namespace

BiasCalibration calibrate_bias(const NetworkDef& ann, const ConvertedSNN& snn, const Dataset& calib, std::size_t T,
                               std::size_t workers)
{
    if (calib.empty()) throw ParameterError("calibrate_bias: calibration set is empty");
    if (T == 0) throw ParameterError("calibrate_bias: T must be >= 1");
    const auto spiking = ann.spiking_layers();
    if (snn.configs.size() != spiking.size()) throw ParameterError("calibrate_bias: missing neuron configs");

    const Tensor batch = calib.batch();
    const std::size_t n = calib.size();
    const auto shapes = ann.layer_output_shapes();

    // ANN reference outputs of every spiking layer and of the head.
    std::vector<Tensor> reference;
    for (auto li : spiking) {
        Shape s{n};
        s.insert(s.end(), shapes[li].begin(), shapes[li].end());
        reference.emplace_back(std::move(s));
    }
    reference.emplace_back(Shape{n, ann.num_classes});
    parallel_for(n, workers, [&](std::size_t b) {
        auto outs = ann_layer_outputs(ann, calib.inputs[b]);
        for (std::size_t k = 0; k < spiking.size(); ++k) reference[k].set_row(b, outs[spiking[k]]);
        reference.back().set_row(b, outs.back());
    });

    BiasCalibration result{snn, {}};
    const std::size_t head = ann.layers.size() - 1;
    for (std::size_t k = 0; k <= spiking.size(); ++k) {
        const std::size_t li = k < spiking.size() ? spiking[k] : head;
        const RunResult r = run(result.snn.net, result.snn.configs, batch, T, workers);
        const Tensor& actual = k < spiking.size() ? r.average_outputs[k] : r.logits;
        const auto mu = channel_mean_error(reference[k], actual);
        auto bias = result.snn.net.layers[li].bias.values();
        for (std::size_t c = 0; c < mu.size(); ++c) bias[c] += mu[c];
        result.delta_norms.push_back(l2(mu));
    }
    return result;
}

ConversionResult convert(const NetworkDef& net, const CalibrationPlan& plan, const Dataset& calib, std::size_t workers)
{
    require_valid(net);
    const auto spiking = net.spiking_layers();
    plan.check(spiking.size());
    if (calib.empty()) throw ParameterError("convert: calibration set is empty");
    calib.check(net.num_classes);

    const Tensor batch = calib.batch();
    const ForwardResult ann = forward(net, batch);

    ConversionResult out;
    out.report.T = plan.T;
    out.report.calibration_samples = calib.size();
    out.report.layers.resize(spiking.size());
    out.snn.net = net;
    out.snn.configs.resize(spiking.size());
    parallel_for(spiking.size(), workers, [&](std::size_t k) {
        const ThresholdResult th = optimize_threshold(ann.trace.activations[k].values(), plan.T, plan.phi[k],
                                                      plan.grid_points);
        out.snn.configs[k] = NeuronConfig{th.v_th, plan.rho[k], plan.phi[k]};
        out.report.layers[k] = LayerCalibration{spiking[k], out.snn.configs[k], th.objective, 0.0, th.degenerate};
    });

    out.report.logit_mse_before = mse(ann.logits, run(out.snn.net, out.snn.configs, batch, plan.T, workers).logits);
    BiasCalibration cal = calibrate_bias(net, out.snn, calib, plan.T, workers);
    out.snn = std::move(cal.snn);
    for (std::size_t k = 0; k < spiking.size(); ++k) out.report.layers[k].bias_delta_norm = cal.delta_norms[k];
    out.report.head_bias_delta_norm = cal.delta_norms.back();
    out.report.logit_mse_after = mse(ann.logits, run(out.snn.net, out.snn.configs, batch, plan.T, workers).logits);
    return out;
}

// --- converted network file --------------------------------------------------

namespace {

void append_double(std::string& out, double v)
{
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out.append(buf, res.ptr);
}

}  // namespace

std::string serialize_snn(const ConvertedSNN& snn)
{
    const auto spiking = snn.net.spiking_layers();
    if (snn.configs.size() != spiking.size()) throw ValidationError("converted network: config count mismatch");
    for (const auto& c : snn.configs) check_config(c);
    for (const auto& l : snn.net.layers)
        if (!l.bias.all_finite()) throw ValidationError("converted network: non-finite bias");

    std::string out = "{\n  \"biases\": [";
    for (std::size_t i = 0; i < snn.net.layers.size(); ++i) {
        out += i ? ",\n    [" : "\n    [";
        const auto& b = snn.net.layers[i].bias;
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (j) out += ", ";
            append_double(out, b[j]);
        }
        out += "]";
    }
    out += "\n  ],\n  \"format_version\": " + std::to_string(kSnnFormatVersion) + ",\n  \"model\": ";
    std::string model = serialize_model(snn.net);
    model.pop_back();  // trailing newline
    for (char ch : model) {
        out += ch;
        if (ch == '\n') out += "  ";
    }
    out += ",\n  \"neurons\": [";
    for (std::size_t k = 0; k < spiking.size(); ++k) {
        out += k ? ",\n    {" : "\n    {";
        out += "\"layer\": " + std::to_string(spiking[k]) + ", \"phi\": " + std::to_string(snn.configs[k].phi) +
               ", \"rho\": ";
        append_double(out, snn.configs[k].rho);
        out += ", \"v_th\": ";
        append_double(out, snn.configs[k].v_th);
        out += "}";
    }
    out += spiking.empty() ? "]\n}\n" : "\n  ]\n}\n";
    return out;
}

ConvertedSNN parse_snn(const std::string& text)
{
    using nlohmann::json;
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("converted network file is not valid JSON: ") + e.what());
    }
    if (!doc.is_object() || !doc.contains("model") || !doc.contains("neurons") || !doc.contains("biases"))
        throw FormatError("converted network file: expected fields biases, format_version, model, neurons");
    if (doc.value("format_version", -1) != kSnnFormatVersion)
        throw FormatError("converted network file: unsupported format_version");

    ConvertedSNN snn;
    snn.net = parse_model(doc["model"].dump());
    const auto spiking = snn.net.spiking_layers();
    const json& neurons = doc["neurons"];
    if (!neurons.is_array() || neurons.size() != spiking.size())
        throw FormatError("converted network file: neurons must list every spiking layer");
    for (std::size_t k = 0; k < spiking.size(); ++k) {
        const json& n = neurons[k];
        try {
            if (n.at("layer").get<std::size_t>() != spiking[k])
                throw FormatError("neurons[" + std::to_string(k) + "].layer: expected " + std::to_string(spiking[k]));
            snn.configs.push_back({n.at("v_th").get<double>(), n.at("rho").get<double>(), n.at("phi").get<int>()});
        } catch (const json::exception& e) {
            throw FormatError("neurons[" + std::to_string(k) + "]: " + e.what());
        }
        check_config(snn.configs.back());
    }
    const json& biases = doc["biases"];
    if (!biases.is_array() || biases.size() != snn.net.layers.size())
        throw FormatError("converted network file: biases must have one entry per layer");
    for (std::size_t i = 0; i < snn.net.layers.size(); ++i) {
        auto b = snn.net.layers[i].bias.values();
        if (!biases[i].is_array() || biases[i].size() != b.size())
            throw FormatError("biases[" + std::to_string(i) + "]: wrong length");
        for (std::size_t j = 0; j < b.size(); ++j) {
            if (!biases[i][j].is_number()) throw FormatError("biases[" + std::to_string(i) + "]: expected numbers");
            b[j] = biases[i][j].get<double>();
        }
    }
    return snn;
}

ConvertedSNN load_snn(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open converted network " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_snn(ss.str());
}

void save_snn(const ConvertedSNN& snn, const std::filesystem::path& path)
{
    write_file_atomic(path, serialize_snn(snn));
}

}  // namespace spikecal
