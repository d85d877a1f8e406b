#pragma once

#include <array>
#include <cstddef>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "spikecal/tensor.hpp"

namespace spikecal {

enum class LayerKind { Linear, Conv2d, AvgPool2d, Flatten };
enum class Padding { Valid, Same };

const char* to_string(LayerKind kind);
const char* to_string(Padding padding);

/// One layer of a sequential network.
///
/// Linear weights are [out, in]; Conv2d weights are [out_channels, in_channels, kh, kw]
/// (cross-correlation, no kernel flip). Bias has one entry per output unit/channel.
/// AvgPool2d and Flatten carry no parameters. Convolution and pooling operate on
/// [channels, height, width] samples.
struct LayerSpec {
    LayerKind kind = LayerKind::Linear;
    Tensor weight;
    Tensor bias;
    std::array<std::size_t, 2> kernel{1, 1};
    std::array<std::size_t, 2> stride{1, 1};
    Padding padding = Padding::Valid;
    bool relu_after = false;

    bool has_parameters() const noexcept { return kind == LayerKind::Linear || kind == LayerKind::Conv2d; }

    static LayerSpec linear(std::size_t in, std::size_t out, bool relu);
    static LayerSpec conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kh, std::size_t kw,
                            std::size_t stride, Padding padding, bool relu);
    static LayerSpec avg_pool2d(std::size_t k, std::size_t stride);
    static LayerSpec flatten();

    bool operator==(const LayerSpec&) const = default;
};

struct NetworkDef {
    Shape input_shape;
    std::size_t num_classes = 0;
    std::vector<LayerSpec> layers;

    /// Indices of layers followed by a ReLU; these become spiking populations.
    std::vector<std::size_t> spiking_layers() const;
    /// Per-sample output shape of every layer (throws ValidationError on inconsistency).
    std::vector<Shape> layer_output_shapes() const;

    bool operator==(const NetworkDef&) const = default;
};

struct Diagnostic {
    std::optional<std::size_t> layer;
    std::optional<std::size_t> other_layer;
    std::string message;
};

std::string to_string(const Diagnostic& d);

/// Shape of a layer's output for a given per-sample input shape, or nullopt
/// with `why` filled in when the two are incompatible.
std::optional<Shape> infer_output_shape(const LayerSpec& layer, const Shape& input, std::string* why = nullptr);

std::vector<Diagnostic> validate(const NetworkDef& net);
/// Throws ValidationError carrying every diagnostic when validate() is non-empty.
void require_valid(const NetworkDef& net);

/// Applies the affine/pooling part of a layer (no activation) to one sample.
Tensor apply_layer(const LayerSpec& layer, const Tensor& input);
/// Same as apply_layer but writes into a preallocated output.
void apply_layer_into(const LayerSpec& layer, const Tensor& input, Tensor& output);

inline constexpr int kModelFormatVersion = 1;

std::string serialize_model(const NetworkDef& net);
NetworkDef parse_model(const std::string& text);
NetworkDef load_model(const std::filesystem::path& path);
void save_model(const NetworkDef& net, const std::filesystem::path& path);

/// Rounds every weight and bias to the nearest 32-bit float (the storage precision).
NetworkDef round_to_storage(NetworkDef net);

/// Writes `contents` to a sibling temporary file and renames it over `path`.
void write_file_atomic(const std::filesystem::path& path, const std::string& contents);

}  // namespace spikecal
