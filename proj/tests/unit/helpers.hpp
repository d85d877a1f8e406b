#pragma once

#include <vector>

#include "spikecal/ann.hpp"
#include "spikecal/model_ir.hpp"
#include "spikecal/rng.hpp"

namespace spikecal::fixture {

// Random MLP with the given widths; the last width is the class count.
inline NetworkDef random_mlp(std::uint64_t seed, const std::vector<std::size_t>& widths, double bias_scale = 0.1)
{
    NetworkDef net;
    net.input_shape = {widths.front()};
    net.num_classes = widths.back();
    Rng rng(seed);
    for (std::size_t i = 1; i < widths.size(); ++i) {
        LayerSpec l = LayerSpec::linear(widths[i - 1], widths[i], i + 1 < widths.size());
        for (auto& w : l.weight.values()) w = rng.normal() / std::sqrt(static_cast<double>(widths[i - 1]));
        for (auto& b : l.bias.values()) b = bias_scale * rng.normal();
        net.layers.push_back(std::move(l));
    }
    return net;
}

inline Dataset random_inputs(std::uint64_t seed, const Shape& shape, std::size_t n, std::size_t classes,
                             double lo = 0.0, double hi = 1.0)
{
    Rng rng(seed);
    Dataset d;
    for (std::size_t i = 0; i < n; ++i) {
        Tensor t(shape);
        for (auto& x : t.values()) x = rng.uniform(lo, hi);
        d.inputs.push_back(std::move(t));
        d.labels.push_back(rng.below(classes));
    }
    return d;
}

}  // namespace spikecal::fixture
