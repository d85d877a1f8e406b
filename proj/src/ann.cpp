#include "spikecal/ann.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

#include "spikecal/error.hpp"
#include "spikecal/prob.hpp"
#include "spikecal/rng.hpp"

namespace spikecal {

void check_config(const NeuronConfig& cfg)
{
    if (!(cfg.v_th > 0.0) || !std::isfinite(cfg.v_th))
        throw ParameterError("neuron threshold must be positive, got " + std::to_string(cfg.v_th));
    if (!(cfg.rho >= 1.0) || !std::isfinite(cfg.rho))
        throw ParameterError("threshold ratio must be >= 1, got " + std::to_string(cfg.rho));
    if (cfg.phi < 1) throw ParameterError("burst count must be >= 1, got " + std::to_string(cfg.phi));
}

void Dataset::check(std::size_t num_classes) const
{
    if (inputs.size() != labels.size())
        throw DataError("dataset has " + std::to_string(inputs.size()) + " inputs but " +
                        std::to_string(labels.size()) + " labels");
    for (std::size_t i = 0; i < inputs.size(); ++i) {
        if (inputs[i].shape() != inputs[0].shape()) throw DataError("sample " + std::to_string(i) + " has a different shape");
        if (labels[i] >= num_classes)
            throw DataError("label " + std::to_string(labels[i]) + " of sample " + std::to_string(i) +
                            " is outside [0, " + std::to_string(num_classes) + ")");
    }
}

Dataset Dataset::subset(std::size_t begin, std::size_t end) const
{
    end = std::min(end, size());
    begin = std::min(begin, end);
    Dataset d;
    d.inputs.assign(inputs.begin() + begin, inputs.begin() + end);
    d.labels.assign(labels.begin() + begin, labels.begin() + end);
    return d;
}

Tensor Dataset::batch() const
{
    return stack(inputs);
}

double percentile(std::vector<double> values, double pct)
{
    if (values.empty()) return 0.0;
    std::sort(values.begin(), values.end());
    const double rank = pct / 100.0 * static_cast<double>(values.size() - 1);
    const auto lo = static_cast<std::size_t>(std::floor(rank));
    const auto hi = std::min(lo + 1, values.size() - 1);
    const double frac = rank - static_cast<double>(lo);
    return values[lo] + (values[hi] - values[lo]) * frac;
}

namespace {

void relu_inplace(Tensor& t)
{
    for (auto& x : t.values()) x = std::max(x, 0.0);
}

void check_batch(const NetworkDef& net, const Tensor& batch)
{
    Shape expected{batch.rank() ? batch.shape()[0] : 0};
    expected.insert(expected.end(), net.input_shape.begin(), net.input_shape.end());
    if (batch.rank() == 0 || batch.shape() != expected)
        throw ValidationError("batch shape " + shape_to_string(batch.shape()) + " does not match [N] + input_shape " +
                              shape_to_string(net.input_shape));
}

ActivationSummary summarize(std::size_t layer, const Tensor& acts)
{
    ActivationSummary s;
    s.layer = layer;
    s.max = acts.empty() ? 0.0 : acts.max();
    const std::size_t n = acts.shape()[0];
    const std::size_t per_sample = n ? acts.size() / n : 0;
    const std::size_t channels = acts.rank() > 1 ? acts.shape()[1] : 1;
    const std::size_t spatial = channels ? per_sample / channels : 0;
    s.channel_max.assign(channels, 0.0);
    for (std::size_t i = 0; i < n; ++i)
        for (std::size_t c = 0; c < channels; ++c)
            for (std::size_t k = 0; k < spatial; ++k)
                s.channel_max[c] = std::max(s.channel_max[c], acts[i * per_sample + c * spatial + k]);
    std::vector<double> all(acts.values().begin(), acts.values().end());
    for (double p : kPercentileGrid) s.percentiles.push_back(percentile(all, p));
    return s;
}

}  // namespace

Tensor forward_sample(const NetworkDef& net, const Tensor& input)
{
    Tensor cur = input;
    for (const auto& layer : net.layers) {
        cur = apply_layer(layer, cur);
        if (layer.relu_after) relu_inplace(cur);
    }
    return cur;
}

ForwardResult forward(const NetworkDef& net, const Tensor& batch)
{
    check_batch(net, batch);
    const std::size_t n = batch.shape()[0];
    const auto shapes = net.layer_output_shapes();
    ForwardResult result;
    result.logits = Tensor({n, net.num_classes});
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (!net.layers[i].relu_after) continue;
        Shape s{n};
        s.insert(s.end(), shapes[i].begin(), shapes[i].end());
        result.trace.layers.push_back(i);
        result.trace.activations.emplace_back(std::move(s));
    }
    for (std::size_t b = 0; b < n; ++b) {
        Tensor cur = batch.row(b);
        std::size_t k = 0;
        for (std::size_t i = 0; i < net.layers.size(); ++i) {
            cur = apply_layer(net.layers[i], cur);
            if (net.layers[i].relu_after) {
                relu_inplace(cur);
                result.trace.activations[k++].set_row(b, cur);
            }
        }
        result.logits.set_row(b, cur);
    }
    for (std::size_t k = 0; k < result.trace.layers.size(); ++k)
        result.trace.summaries.push_back(summarize(result.trace.layers[k], result.trace.activations[k]));
    return result;
}

double clipfloor(double x, std::size_t T, double v_th, int phi)
{
    if (T == 0) throw ParameterError("clipfloor: T must be >= 1");
    if (!(v_th > 0.0)) throw ParameterError("clipfloor: v_th must be positive");
    if (phi < 1) throw ParameterError("clipfloor: phi must be >= 1");
    const double steps = static_cast<double>(T);
    const double level = std::clamp(std::floor(steps * x / v_th), 0.0, steps * static_cast<double>(phi));
    return v_th / steps * level;
}

Tensor clipfloor(const Tensor& x, std::size_t T, double v_th, int phi)
{
    Tensor out = x;
    for (auto& v : out.values()) v = clipfloor(v, T, v_th, phi);
    return out;
}

Tensor mixed_forward_sample(const NetworkDef& net, const Tensor& input, const LayerModes& modes, std::size_t T)
{
    Tensor cur = input;
    std::size_t k = 0;
    for (const auto& layer : net.layers) {
        cur = apply_layer(layer, cur);
        if (!layer.relu_after) continue;
        const auto& mode = k < modes.size() ? modes[k] : std::nullopt;
        ++k;
        if (mode) {
            check_config(*mode);
            cur = clipfloor(cur, T, mode->threshold(), mode->phi);
        } else {
            relu_inplace(cur);
        }
    }
    return cur;
}

Tensor surrogate_forward(const NetworkDef& net, const Tensor& batch, std::span<const NeuronConfig> configs,
                         std::size_t T)
{
    check_batch(net, batch);
    const std::size_t spiking = net.spiking_layers().size();
    if (configs.size() != spiking)
        throw ParameterError("surrogate_forward: expected " + std::to_string(spiking) + " configs, got " +
                             std::to_string(configs.size()));
    if (T == 0) throw ParameterError("surrogate_forward: T must be >= 1");
    LayerModes modes(configs.begin(), configs.end());
    const std::size_t n = batch.shape()[0];
    Tensor logits({n, net.num_classes});
    for (std::size_t b = 0; b < n; ++b) logits.set_row(b, mixed_forward_sample(net, batch.row(b), modes, T));
    return logits;
}

// --- training -------------------------------------------------------------

NetworkDef make_mlp(std::size_t input_dim, std::span<const std::size_t> hidden, std::size_t classes)
{
    NetworkDef net;
    net.input_shape = {input_dim};
    net.num_classes = classes;
    std::size_t prev = input_dim;
    for (std::size_t h : hidden) {
        net.layers.push_back(LayerSpec::linear(prev, h, true));
        prev = h;
    }
    net.layers.push_back(LayerSpec::linear(prev, classes, false));
    return net;
}

void initialize_weights(NetworkDef& net, std::uint64_t seed)
{
    Rng rng(derive_seed(seed, Stream::WeightInit));
    for (auto& layer : net.layers) {
        if (!layer.has_parameters()) continue;
        const auto& ws = layer.weight.shape();
        std::size_t fan_in = 1;
        for (std::size_t i = 1; i < ws.size(); ++i) fan_in *= ws[i];
        const double scale = std::sqrt((layer.relu_after ? 2.0 : 1.0) / static_cast<double>(fan_in));
        for (auto& w : layer.weight.values()) w = scale * rng.normal();
        for (auto& b : layer.bias.values()) b = 0.0;
    }
}

namespace {

// Backward pass of the affine/pooling part of one layer for one sample.
void backward_layer(const LayerSpec& layer, const Tensor& input, const Tensor& delta, Tensor* dweight,
                    Tensor* dbias, Tensor& dinput)
{
    dinput = Tensor(input.shape());
    const auto in = input.values();
    const auto d = delta.values();
    auto din = dinput.values();
    switch (layer.kind) {
    case LayerKind::Linear: {
        const std::size_t n_out = layer.weight.shape()[0], n_in = layer.weight.shape()[1];
        const auto w = layer.weight.values();
        for (std::size_t o = 0; o < n_out; ++o) {
            const double g = d[o];
            if (g == 0.0) continue;
            (*dbias)[o] += g;
            for (std::size_t i = 0; i < n_in; ++i) {
                (*dweight)[o * n_in + i] += g * in[i];
                din[i] += w[o * n_in + i] * g;
            }
        }
        return;
    }
    case LayerKind::Conv2d: {
        const auto& ws = layer.weight.shape();
        const std::size_t oc = ws[0], ic = ws[1], kh = ws[2], kw = ws[3];
        const std::size_t ih = input.shape()[1], iw = input.shape()[2];
        const std::size_t oh = delta.shape()[1], ow = delta.shape()[2];
        long ph = 0, pw = 0;
        if (layer.padding == Padding::Same) {
            const long th = static_cast<long>((oh - 1) * layer.stride[0] + kh) - static_cast<long>(ih);
            const long tw = static_cast<long>((ow - 1) * layer.stride[1] + kw) - static_cast<long>(iw);
            ph = th > 0 ? th / 2 : 0;
            pw = tw > 0 ? tw / 2 : 0;
        }
        const auto w = layer.weight.values();
        for (std::size_t o = 0; o < oc; ++o)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x) {
                    const double g = d[(o * oh + y) * ow + x];
                    if (g == 0.0) continue;
                    (*dbias)[o] += g;
                    for (std::size_t c = 0; c < ic; ++c)
                        for (std::size_t dy = 0; dy < kh; ++dy) {
                            const long iy = static_cast<long>(y * layer.stride[0] + dy) - ph;
                            if (iy < 0 || iy >= static_cast<long>(ih)) continue;
                            for (std::size_t dx = 0; dx < kw; ++dx) {
                                const long ix = static_cast<long>(x * layer.stride[1] + dx) - pw;
                                if (ix < 0 || ix >= static_cast<long>(iw)) continue;
                                const std::size_t wi = ((o * ic + c) * kh + dy) * kw + dx;
                                const std::size_t ii = (c * ih + static_cast<std::size_t>(iy)) * iw +
                                                       static_cast<std::size_t>(ix);
                                (*dweight)[wi] += g * in[ii];
                                din[ii] += w[wi] * g;
                            }
                        }
                }
        return;
    }
    case LayerKind::AvgPool2d: {
        const std::size_t ch = input.shape()[0], ih = input.shape()[1], iw = input.shape()[2];
        const std::size_t oh = delta.shape()[1], ow = delta.shape()[2];
        const std::size_t kh = layer.kernel[0], kw = layer.kernel[1];
        const double scale = 1.0 / static_cast<double>(kh * kw);
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x) {
                    const double g = d[(c * oh + y) * ow + x] * scale;
                    for (std::size_t dy = 0; dy < kh; ++dy)
                        for (std::size_t dx = 0; dx < kw; ++dx)
                            din[(c * ih + y * layer.stride[0] + dy) * iw + x * layer.stride[1] + dx] += g;
                }
        return;
    }
    case LayerKind::Flatten:
        std::copy(d.begin(), d.end(), din.begin());
        return;
    }
}

}  // namespace

double loss_and_gradients(const NetworkDef& net, std::span<const Tensor> inputs, std::span<const std::size_t> labels,
                          Gradients* grads)
{
    if (inputs.empty() || inputs.size() != labels.size())
        throw ParameterError("loss_and_gradients: need equally many inputs and labels");
    const std::size_t L = net.layers.size();
    if (grads) {
        grads->weight.assign(L, Tensor());
        grads->bias.assign(L, Tensor());
        for (std::size_t i = 0; i < L; ++i) {
            if (!net.layers[i].has_parameters()) continue;
            grads->weight[i] = Tensor(net.layers[i].weight.shape());
            grads->bias[i] = Tensor(net.layers[i].bias.shape());
        }
    }
    const double inv_n = 1.0 / static_cast<double>(inputs.size());
    double loss = 0.0;
    std::vector<Tensor> layer_in(L), pre(L);
    for (std::size_t s = 0; s < inputs.size(); ++s) {
        Tensor cur = inputs[s];
        for (std::size_t i = 0; i < L; ++i) {
            layer_in[i] = cur;
            pre[i] = apply_layer(net.layers[i], cur);
            cur = pre[i];
            if (net.layers[i].relu_after) relu_inplace(cur);
        }
        const auto p = softmax(cur.values());
        loss -= std::log(std::max(p[labels[s]], 1e-300)) * inv_n;
        if (!grads) continue;

        Tensor delta(cur.shape());
        for (std::size_t k = 0; k < p.size(); ++k) delta[k] = (p[k] - (k == labels[s] ? 1.0 : 0.0)) * inv_n;
        for (std::size_t i = L; i-- > 0;) {
            if (net.layers[i].relu_after)
                for (std::size_t k = 0; k < delta.size(); ++k)
                    if (!(pre[i][k] > 0.0)) delta[k] = 0.0;
            Tensor dinput;
            const bool has_params = net.layers[i].has_parameters();
            backward_layer(net.layers[i], layer_in[i], delta, has_params ? &grads->weight[i] : nullptr,
                           has_params ? &grads->bias[i] : nullptr, dinput);
            delta = std::move(dinput);
        }
    }
    return loss;
}

double accuracy(const NetworkDef& net, const Dataset& data)
{
    if (data.empty()) return 0.0;
    std::size_t correct = 0;
    for (std::size_t i = 0; i < data.size(); ++i)
        if (argmax(forward_sample(net, data.inputs[i]).values()) == data.labels[i]) ++correct;
    return static_cast<double>(correct) / static_cast<double>(data.size());
}

TrainResult train_tiny(const NetworkDef& net, const Dataset& data, const TrainOptions& options)
{
    require_valid(net);
    if (data.empty()) throw ParameterError("train_tiny: empty dataset");
    data.check(net.num_classes);
    if (options.batch_size == 0) throw ParameterError("train_tiny: batch_size must be >= 1");

    TrainResult result{net, 0.0, 0.0};
    NetworkDef& model = result.net;
    Rng rng(derive_seed(options.seed, Stream::Shuffle));
    std::vector<std::size_t> order(data.size());
    std::iota(order.begin(), order.end(), 0);

    std::vector<Tensor> xb;
    std::vector<std::size_t> yb;
    Gradients grads;
    for (std::size_t epoch = 0; epoch < options.epochs; ++epoch) {
        rng.shuffle(order);
        for (std::size_t start = 0; start < order.size(); start += options.batch_size) {
            const std::size_t end = std::min(order.size(), start + options.batch_size);
            xb.clear();
            yb.clear();
            for (std::size_t j = start; j < end; ++j) {
                xb.push_back(data.inputs[order[j]]);
                yb.push_back(data.labels[order[j]]);
            }
            const double loss = loss_and_gradients(model, xb, yb, &grads);
            if (!std::isfinite(loss))
                throw TrainingError("training diverged (loss is not finite) in epoch " + std::to_string(epoch), epoch);
            for (std::size_t i = 0; i < model.layers.size(); ++i) {
                if (!model.layers[i].has_parameters()) continue;
                auto w = model.layers[i].weight.values();
                auto b = model.layers[i].bias.values();
                for (std::size_t k = 0; k < w.size(); ++k) w[k] -= options.learning_rate * grads.weight[i][k];
                for (std::size_t k = 0; k < b.size(); ++k) b[k] -= options.learning_rate * grads.bias[i][k];
            }
        }
        for (const auto& layer : model.layers)
            if (!layer.weight.all_finite() || !layer.bias.all_finite())
                throw TrainingError("training diverged (non-finite weights) in epoch " + std::to_string(epoch), epoch);
    }
    result.final_loss = loss_and_gradients(model, data.inputs, data.labels, nullptr);
    if (!std::isfinite(result.final_loss))
        throw TrainingError("training diverged (final loss is not finite)", options.epochs);
    result.train_accuracy = accuracy(model, data);
    return result;
}

}  // namespace spikecal
