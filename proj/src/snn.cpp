#include "spikecal/snn.hpp"

#include <algorithm>
#include <cmath>

#include "spikecal/error.hpp"
#include "spikecal/parallel.hpp"

namespace spikecal {

std::uint64_t fire(std::span<double> membrane, std::span<const double> current, const NeuronConfig& cfg,
                   std::span<double> emitted, std::span<double> pre_spike)
{
    const double theta = cfg.threshold();
    if (!(theta > 0.0)) throw ParameterError("fire: effective threshold must be positive");
    const double cap = static_cast<double>(cfg.phi);
    std::uint64_t count = 0;
    for (std::size_t i = 0; i < membrane.size(); ++i) {
        const double u = membrane[i] + current[i];
        const double m = std::clamp(std::floor(u / theta), 0.0, cap);
        const double amplitude = m * theta;
        emitted[i] = amplitude;
        membrane[i] = u - amplitude;
        if (!pre_spike.empty()) pre_spike[i] = u;
        count += static_cast<std::uint64_t>(m);
    }
    return count;
}

std::uint64_t SpikeReport::total() const
{
    std::uint64_t t = 0;
    for (auto s : spikes) t += s;
    return t;
}

SpikeReport& SpikeReport::operator+=(const SpikeReport& other)
{
    if (layers.empty() && spikes.empty()) {
        layers = other.layers;
        spikes.assign(other.spikes.size(), 0);
        timesteps = other.timesteps;
    }
    if (other.spikes.size() != spikes.size()) throw ParameterError("cannot merge spike reports of different networks");
    for (std::size_t i = 0; i < spikes.size(); ++i) spikes[i] += other.spikes[i];
    samples += other.samples;
    return *this;
}

EnergyEstimate energy(const SpikeReport& report, const EnergyModel& model)
{
    const double spikes = static_cast<double>(report.total());
    return {spikes / model.timestep_duration * model.energy_per_spike, spikes * model.energy_per_spike};
}

namespace {

std::vector<int> spiking_ordinals(const NetworkDef& net)
{
    std::vector<int> ord(net.layers.size(), -1);
    int k = 0;
    for (std::size_t i = 0; i < net.layers.size(); ++i)
        if (net.layers[i].relu_after) ord[i] = k++;
    return ord;
}

void check_configs(const NetworkDef& net, std::span<const NeuronConfig> configs)
{
    const std::size_t spiking = net.spiking_layers().size();
    if (configs.size() != spiking)
        throw ParameterError("expected " + std::to_string(spiking) + " neuron configs, got " +
                             std::to_string(configs.size()));
    for (const auto& c : configs) check_config(c);
}

void check_input(const NetworkDef& net, const Tensor& input)
{
    if (input.shape() != net.input_shape)
        throw ValidationError("input shape " + shape_to_string(input.shape()) + " does not match " +
                              shape_to_string(net.input_shape));
}

// One network timestep; `buffers` holds one scratch tensor per layer.
void advance(SimState& state, const NetworkDef& net, std::span<const NeuronConfig> configs,
             const std::vector<int>& ordinal, std::vector<Tensor>& buffers, const Tensor& input,
             std::vector<Tensor>& emitted_now)
{
    const Tensor* cur = &input;
    const std::size_t last = net.layers.size() - 1;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        apply_layer_into(net.layers[i], *cur, buffers[i]);
        if (ordinal[i] >= 0) {
            const auto k = static_cast<std::size_t>(ordinal[i]);
            state.spikes[k] += fire(state.v[k].values(), buffers[i].values(), configs[k], emitted_now[k].values(),
                                    state.u[k].values());
            auto acc = state.emitted[k].values();
            const auto now = emitted_now[k].values();
            for (std::size_t j = 0; j < acc.size(); ++j) acc[j] += now[j];
            cur = &emitted_now[k];
        } else {
            if (i == last) {
                auto head = state.head.values();
                const auto z = buffers[i].values();
                for (std::size_t j = 0; j < head.size(); ++j) head[j] += z[j];
            }
            cur = &buffers[i];
        }
    }
    ++state.t;
}

std::vector<Tensor> make_buffers(const NetworkDef& net)
{
    std::vector<Tensor> buffers;
    for (const auto& s : net.layer_output_shapes()) buffers.emplace_back(s);
    return buffers;
}

}  // namespace

SimState make_state(const NetworkDef& net)
{
    require_valid(net);
    const auto shapes = net.layer_output_shapes();
    SimState s;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (!net.layers[i].relu_after) continue;
        s.u.emplace_back(shapes[i]);
        s.v.emplace_back(shapes[i]);
        s.emitted.emplace_back(shapes[i]);
        s.spikes.push_back(0);
    }
    s.head = Tensor(shapes.back());
    return s;
}

std::vector<Tensor> step(SimState& state, const NetworkDef& net, std::span<const NeuronConfig> configs,
                         const Tensor& input)
{
    check_configs(net, configs);
    check_input(net, input);
    auto buffers = make_buffers(net);
    std::vector<Tensor> emitted;
    for (const auto& v : state.v) emitted.emplace_back(v.shape());
    advance(state, net, configs, spiking_ordinals(net), buffers, input, emitted);
    return emitted;
}

Simulator::Simulator(const NetworkDef& net, std::vector<NeuronConfig> configs)
    : net_(&net), configs_(std::move(configs)), ordinal_(spiking_ordinals(net))
{
    check_configs(net, configs_);
    state_ = make_state(net);
    buffers_ = make_buffers(net);
    for (const auto& v : state_.v) step_emitted_.emplace_back(v.shape());
}

void Simulator::reset()
{
    state_ = make_state(*net_);
}

const std::vector<Tensor>& Simulator::step(const Tensor& input)
{
    check_input(*net_, input);
    advance(state_, *net_, configs_, ordinal_, buffers_, input, step_emitted_);
    return step_emitted_;
}

Tensor Simulator::logits() const
{
    Tensor out = state_.head;
    if (state_.t == 0) return out;
    const double inv = 1.0 / static_cast<double>(state_.t);
    for (auto& x : out.values()) x *= inv;
    return out;
}

Tensor Simulator::average_output(std::size_t k) const
{
    Tensor out = state_.emitted.at(k);
    if (state_.t == 0) return out;
    for (auto& x : out.values()) x /= static_cast<double>(state_.t);
    return out;
}

std::uint64_t Simulator::total_spikes() const
{
    std::uint64_t t = 0;
    for (auto s : state_.spikes) t += s;
    return t;
}

RunResult run(const NetworkDef& net, std::span<const NeuronConfig> configs, const Tensor& batch, std::size_t T,
              std::size_t workers)
{
    if (T == 0) throw ParameterError("run: T must be >= 1");
    check_configs(net, configs);
    Shape expected{batch.rank() ? batch.shape()[0] : 0};
    expected.insert(expected.end(), net.input_shape.begin(), net.input_shape.end());
    if (batch.rank() == 0 || batch.shape() != expected)
        throw ValidationError("batch shape " + shape_to_string(batch.shape()) + " does not match [N] + input_shape " +
                              shape_to_string(net.input_shape));

    const std::size_t n = batch.shape()[0];
    const auto shapes = net.layer_output_shapes();
    const auto spiking = net.spiking_layers();

    RunResult result;
    result.logits = Tensor({n, net.num_classes});
    for (auto li : spiking) {
        Shape s{n};
        s.insert(s.end(), shapes[li].begin(), shapes[li].end());
        result.average_outputs.emplace_back(std::move(s));
    }
    std::vector<std::vector<std::uint64_t>> per_sample(n);
    std::vector<NeuronConfig> cfg(configs.begin(), configs.end());

    parallel_for(n, workers, [&](std::size_t b) {
        Simulator sim(net, cfg);
        const Tensor input = batch.row(b);
        for (std::size_t t = 0; t < T; ++t) sim.step(input);
        result.logits.set_row(b, sim.logits());
        for (std::size_t k = 0; k < spiking.size(); ++k) result.average_outputs[k].set_row(b, sim.average_output(k));
        per_sample[b] = sim.state().spikes;
    });

    result.report.layers = spiking;
    result.report.spikes.assign(spiking.size(), 0);
    result.report.samples = n;
    result.report.timesteps = T;
    for (const auto& s : per_sample)
        for (std::size_t k = 0; k < s.size(); ++k) result.report.spikes[k] += s[k];
    return result;
}

}  // namespace spikecal
