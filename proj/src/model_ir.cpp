#include "spikecal/model_ir.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "spikecal/error.hpp"

namespace spikecal {

namespace fs = std::filesystem;
using nlohmann::json;

const char* to_string(LayerKind kind)
{
    switch (kind) {
    case LayerKind::Linear: return "linear";
    case LayerKind::Conv2d: return "conv2d";
    case LayerKind::AvgPool2d: return "avgpool2d";
    case LayerKind::Flatten: return "flatten";
    }
    return "?";
}

const char* to_string(Padding padding)
{
    return padding == Padding::Same ? "same" : "valid";
}

LayerSpec LayerSpec::linear(std::size_t in, std::size_t out, bool relu)
{
    LayerSpec l;
    l.kind = LayerKind::Linear;
    l.weight = Tensor({out, in});
    l.bias = Tensor({out});
    l.relu_after = relu;
    return l;
}

LayerSpec LayerSpec::conv2d(std::size_t in_channels, std::size_t out_channels, std::size_t kh, std::size_t kw,
                            std::size_t stride, Padding padding, bool relu)
{
    LayerSpec l;
    l.kind = LayerKind::Conv2d;
    l.weight = Tensor({out_channels, in_channels, kh, kw});
    l.bias = Tensor({out_channels});
    l.kernel = {kh, kw};
    l.stride = {stride, stride};
    l.padding = padding;
    l.relu_after = relu;
    return l;
}

LayerSpec LayerSpec::avg_pool2d(std::size_t k, std::size_t stride)
{
    LayerSpec l;
    l.kind = LayerKind::AvgPool2d;
    l.kernel = {k, k};
    l.stride = {stride, stride};
    return l;
}

LayerSpec LayerSpec::flatten()
{
    LayerSpec l;
    l.kind = LayerKind::Flatten;
    return l;
}

std::vector<std::size_t> NetworkDef::spiking_layers() const
{
    std::vector<std::size_t> out;
    for (std::size_t i = 0; i < layers.size(); ++i)
        if (layers[i].relu_after) out.push_back(i);
    return out;
}

std::vector<Shape> NetworkDef::layer_output_shapes() const
{
    std::vector<Shape> shapes;
    Shape cur = input_shape;
    for (std::size_t i = 0; i < layers.size(); ++i) {
        std::string why;
        auto next = infer_output_shape(layers[i], cur, &why);
        if (!next) throw ValidationError("layer " + std::to_string(i) + ": " + why);
        shapes.push_back(*next);
        cur = *next;
    }
    return shapes;
}

std::string to_string(const Diagnostic& d)
{
    std::string out;
    if (d.layer) out += "layer " + std::to_string(*d.layer) + ": ";
    return out + d.message;
}

namespace {

// Output extent of a strided window along one axis.
std::optional<std::size_t> window_extent(std::size_t in, std::size_t k, std::size_t stride, Padding padding)
{
    if (padding == Padding::Same) return (in + stride - 1) / stride;
    if (in < k) return std::nullopt;
    return (in - k) / stride + 1;
}

std::size_t same_pad_before(std::size_t in, std::size_t out, std::size_t k, std::size_t stride)
{
    const long total = static_cast<long>((out - 1) * stride + k) - static_cast<long>(in);
    return total > 0 ? static_cast<std::size_t>(total / 2) : 0;
}

}  // namespace

std::optional<Shape> infer_output_shape(const LayerSpec& layer, const Shape& input, std::string* why)
{
    auto fail = [&](std::string msg) -> std::optional<Shape> {
        if (why) *why = std::move(msg);
        return std::nullopt;
    };
    switch (layer.kind) {
    case LayerKind::Linear: {
        if (layer.weight.rank() != 2) return fail("linear weight must be rank 2");
        if (input.size() != 1) return fail("linear layer needs a rank-1 input, got " + shape_to_string(input));
        if (input[0] != layer.weight.shape()[1])
            return fail("linear layer expects " + std::to_string(layer.weight.shape()[1]) + " inputs, got " +
                        std::to_string(input[0]));
        return Shape{layer.weight.shape()[0]};
    }
    case LayerKind::Conv2d: {
        if (layer.weight.rank() != 4) return fail("conv2d weight must be rank 4");
        if (input.size() != 3) return fail("conv2d needs a [C, H, W] input, got " + shape_to_string(input));
        const auto& w = layer.weight.shape();
        if (input[0] != w[1])
            return fail("conv2d expects " + std::to_string(w[1]) + " input channels, got " +
                        std::to_string(input[0]));
        if (layer.stride[0] == 0 || layer.stride[1] == 0) return fail("stride must be positive");
        auto h = window_extent(input[1], w[2], layer.stride[0], layer.padding);
        auto wd = window_extent(input[2], w[3], layer.stride[1], layer.padding);
        if (!h || !wd) return fail("conv2d kernel larger than input " + shape_to_string(input));
        return Shape{w[0], *h, *wd};
    }
    case LayerKind::AvgPool2d: {
        if (input.size() != 3) return fail("avgpool2d needs a [C, H, W] input, got " + shape_to_string(input));
        if (layer.kernel[0] == 0 || layer.kernel[1] == 0) return fail("pool kernel must be positive");
        if (layer.stride[0] == 0 || layer.stride[1] == 0) return fail("stride must be positive");
        auto h = window_extent(input[1], layer.kernel[0], layer.stride[0], Padding::Valid);
        auto wd = window_extent(input[2], layer.kernel[1], layer.stride[1], Padding::Valid);
        if (!h || !wd) return fail("pool window larger than input " + shape_to_string(input));
        return Shape{input[0], *h, *wd};
    }
    case LayerKind::Flatten:
        return Shape{element_count(input)};
    }
    return fail("unknown layer kind");
}

std::vector<Diagnostic> validate(const NetworkDef& net)
{
    std::vector<Diagnostic> diags;
    auto add = [&](std::optional<std::size_t> layer, std::string msg, std::optional<std::size_t> other = {}) {
        diags.push_back({layer, other, std::move(msg)});
    };

    if (net.layers.empty()) add({}, "network has no layers");
    if (net.num_classes == 0) add({}, "num_classes must be positive");
    if (net.input_shape.empty()) add({}, "input_shape is empty");
    for (auto e : net.input_shape)
        if (e == 0) {
            add({}, "input_shape " + shape_to_string(net.input_shape) + " has a zero extent");
            break;
        }

    Shape cur = net.input_shape;
    bool shapes_ok = !net.input_shape.empty() && element_count(net.input_shape) > 0;
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        const LayerSpec& l = net.layers[i];
        if (l.has_parameters()) {
            const auto& ws = l.weight.shape();
            const std::size_t want_rank = l.kind == LayerKind::Linear ? 2 : 4;
            if (ws.size() != want_rank) {
                add(i, std::string(to_string(l.kind)) + " weight must be rank " + std::to_string(want_rank) +
                           ", got " + shape_to_string(ws));
                shapes_ok = false;
                continue;
            }
            if (l.weight.size() == 0) add(i, "zero-sized weight " + shape_to_string(ws));
            if (l.bias.rank() != 1 || l.bias.shape()[0] != ws[0])
                add(i, "bias shape " + shape_to_string(l.bias.shape()) + " does not match " +
                           std::to_string(ws[0]) + " outputs");
            if (l.kind == LayerKind::Conv2d && (l.kernel[0] != ws[2] || l.kernel[1] != ws[3]))
                add(i, "kernel extents disagree with weight shape " + shape_to_string(ws));
            if (!l.weight.all_finite() || !l.bias.all_finite()) add(i, "non-finite weight or bias value");
        } else {
            if (!l.weight.empty() || !l.bias.empty()) add(i, std::string(to_string(l.kind)) + " carries no parameters");
            if (l.relu_after) add(i, "relu_after is only supported on linear and conv2d layers");
        }
        if (l.kind == LayerKind::AvgPool2d && l.padding != Padding::Valid) add(i, "avgpool2d supports valid padding only");

        if (!shapes_ok) continue;
        std::string why;
        auto next = infer_output_shape(l, cur, &why);
        if (!next) {
            if (i > 0) {
                add(i, "layer " + std::to_string(i) + " is incompatible with the output " + shape_to_string(cur) +
                           " of layer " + std::to_string(i - 1) + ": " + why,
                    i - 1);
            } else {
                add(i, "incompatible with input_shape " + shape_to_string(cur) + ": " + why);
            }
            shapes_ok = false;
            continue;
        }
        if (element_count(*next) == 0) {
            add(i, "zero-sized output " + shape_to_string(*next));
            shapes_ok = false;
            continue;
        }
        cur = *next;
    }

    if (!net.layers.empty()) {
        const std::size_t last = net.layers.size() - 1;
        if (net.layers[last].relu_after) add(last, "final layer must not have relu_after (logits are raw)");
        if (shapes_ok && !(cur.size() == 1 && cur[0] == net.num_classes))
            add(last, "output shape " + shape_to_string(cur) + " does not match num_classes " +
                          std::to_string(net.num_classes));
    }
    return diags;
}

void require_valid(const NetworkDef& net)
{
    auto diags = validate(net);
    if (diags.empty()) return;
    std::string msg = "invalid network";
    for (const auto& d : diags) msg += "; " + to_string(d);
    throw ValidationError(msg);
}

void apply_layer_into(const LayerSpec& layer, const Tensor& input, Tensor& output)
{
    const auto& in = input.values();
    auto out = output.values();
    switch (layer.kind) {
    case LayerKind::Linear: {
        const std::size_t n_out = layer.weight.shape()[0];
        const std::size_t n_in = layer.weight.shape()[1];
        const double* w = layer.weight.values().data();
        for (std::size_t o = 0; o < n_out; ++o) {
            double acc = layer.bias[o];
            const double* row = w + o * n_in;
            for (std::size_t i = 0; i < n_in; ++i) acc += row[i] * in[i];
            out[o] = acc;
        }
        return;
    }
    case LayerKind::Conv2d: {
        const auto& ws = layer.weight.shape();
        const std::size_t oc = ws[0], ic = ws[1], kh = ws[2], kw = ws[3];
        const std::size_t ih = input.shape()[1], iw = input.shape()[2];
        const std::size_t oh = output.shape()[1], ow = output.shape()[2];
        const std::size_t sh = layer.stride[0], sw = layer.stride[1];
        long ph = 0, pw = 0;
        if (layer.padding == Padding::Same) {
            ph = static_cast<long>(same_pad_before(ih, oh, kh, sh));
            pw = static_cast<long>(same_pad_before(iw, ow, kw, sw));
        }
        const double* w = layer.weight.values().data();
        for (std::size_t o = 0; o < oc; ++o) {
            for (std::size_t y = 0; y < oh; ++y) {
                for (std::size_t x = 0; x < ow; ++x) {
                    double acc = layer.bias[o];
                    for (std::size_t c = 0; c < ic; ++c) {
                        for (std::size_t dy = 0; dy < kh; ++dy) {
                            const long iy = static_cast<long>(y * sh + dy) - ph;
                            if (iy < 0 || iy >= static_cast<long>(ih)) continue;
                            for (std::size_t dx = 0; dx < kw; ++dx) {
                                const long ix = static_cast<long>(x * sw + dx) - pw;
                                if (ix < 0 || ix >= static_cast<long>(iw)) continue;
                                acc += w[((o * ic + c) * kh + dy) * kw + dx] *
                                       in[(c * ih + static_cast<std::size_t>(iy)) * iw + static_cast<std::size_t>(ix)];
                            }
                        }
                    }
                    out[(o * oh + y) * ow + x] = acc;
                }
            }
        }
        return;
    }
    case LayerKind::AvgPool2d: {
        const std::size_t ch = input.shape()[0], ih = input.shape()[1], iw = input.shape()[2];
        const std::size_t oh = output.shape()[1], ow = output.shape()[2];
        const std::size_t kh = layer.kernel[0], kw = layer.kernel[1];
        const double scale = 1.0 / static_cast<double>(kh * kw);
        for (std::size_t c = 0; c < ch; ++c)
            for (std::size_t y = 0; y < oh; ++y)
                for (std::size_t x = 0; x < ow; ++x) {
                    double acc = 0.0;
                    for (std::size_t dy = 0; dy < kh; ++dy)
                        for (std::size_t dx = 0; dx < kw; ++dx)
                            acc += in[(c * ih + y * layer.stride[0] + dy) * iw + x * layer.stride[1] + dx];
                    out[(c * oh + y) * ow + x] = acc * scale;
                }
        return;
    }
    case LayerKind::Flatten:
        std::copy(in.begin(), in.end(), out.begin());
        return;
    }
}

Tensor apply_layer(const LayerSpec& layer, const Tensor& input)
{
    std::string why;
    auto shape = infer_output_shape(layer, input.shape(), &why);
    if (!shape) throw ValidationError(why);
    Tensor out(*shape);
    apply_layer_into(layer, input, out);
    return out;
}

// ---------------------------------------------------------------------------
// Manifest serialization. Keys are emitted in lexicographic order, floats with
// the shortest decimal string that round-trips through a 32-bit float.

namespace {

void append_float(std::string& out, double value)
{
    const float f = static_cast<float>(value);
    if (f == 0.0f) {
        out += std::signbit(f) ? "-0.0" : "0";
        return;
    }
    char buf[32];
    auto res = std::to_chars(buf, buf + sizeof(buf), f);
    out.append(buf, res.ptr);
}

void append_uint_array(std::string& out, std::span<const std::size_t> values)
{
    out += '[';
    for (std::size_t i = 0; i < values.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(values[i]);
    }
    out += ']';
}

void append_float_array(std::string& out, const Tensor& t)
{
    out += '[';
    for (std::size_t i = 0; i < t.size(); ++i) {
        if (i) out += ", ";
        append_float(out, t[i]);
    }
    out += ']';
}

struct ObjectWriter {
    std::string& out;
    std::string indent;
    bool first = true;

    void key(const char* k)
    {
        out += first ? "\n" : ",\n";
        first = false;
        out += indent;
        out += '"';
        out += k;
        out += "\": ";
    }
};

void write_layer(std::string& out, const LayerSpec& l)
{
    out += "    {";
    ObjectWriter w{out, "      "};
    const std::array<std::size_t, 2> k = l.kernel, s = l.stride;
    switch (l.kind) {
    case LayerKind::Linear:
        w.key("bias"); append_float_array(out, l.bias);
        w.key("in_features"); out += std::to_string(l.weight.shape()[1]);
        w.key("kind"); out += "\"linear\"";
        w.key("out_features"); out += std::to_string(l.weight.shape()[0]);
        w.key("relu_after"); out += l.relu_after ? "true" : "false";
        w.key("weight"); append_float_array(out, l.weight);
        break;
    case LayerKind::Conv2d:
        w.key("bias"); append_float_array(out, l.bias);
        w.key("in_channels"); out += std::to_string(l.weight.shape()[1]);
        w.key("kernel"); append_uint_array(out, k);
        w.key("kind"); out += "\"conv2d\"";
        w.key("out_channels"); out += std::to_string(l.weight.shape()[0]);
        w.key("padding"); out += std::string("\"") + to_string(l.padding) + "\"";
        w.key("relu_after"); out += l.relu_after ? "true" : "false";
        w.key("stride"); append_uint_array(out, s);
        w.key("weight"); append_float_array(out, l.weight);
        break;
    case LayerKind::AvgPool2d:
        w.key("kernel"); append_uint_array(out, k);
        w.key("kind"); out += "\"avgpool2d\"";
        w.key("relu_after"); out += l.relu_after ? "true" : "false";
        w.key("stride"); append_uint_array(out, s);
        break;
    case LayerKind::Flatten:
        w.key("kind"); out += "\"flatten\"";
        w.key("relu_after"); out += l.relu_after ? "true" : "false";
        break;
    }
    out += "\n    }";
}

// Parsing helpers: every failure names the offending field.
const json& field(const json& obj, const std::string& where, const char* key)
{
    auto it = obj.find(key);
    if (it == obj.end()) throw FormatError(where + "." + key + ": missing field");
    return *it;
}

std::size_t as_count(const json& v, const std::string& name)
{
    if (!v.is_number_unsigned()) throw FormatError(name + ": expected a non-negative integer");
    return v.get<std::size_t>();
}

bool as_bool(const json& v, const std::string& name)
{
    if (!v.is_boolean()) throw FormatError(name + ": expected true or false");
    return v.get<bool>();
}

Shape as_extents(const json& v, const std::string& name)
{
    if (!v.is_array()) throw FormatError(name + ": expected an array of extents");
    Shape out;
    for (std::size_t i = 0; i < v.size(); ++i) out.push_back(as_count(v[i], name + "[" + std::to_string(i) + "]"));
    return out;
}

std::array<std::size_t, 2> as_pair(const json& v, const std::string& name)
{
    Shape s = as_extents(v, name);
    if (s.size() != 2) throw FormatError(name + ": expected two extents");
    return {s[0], s[1]};
}

Tensor as_payload(const json& v, const std::string& name, Shape shape)
{
    if (!v.is_array()) throw FormatError(name + ": expected an array of numbers");
    std::vector<double> data;
    data.reserve(v.size());
    for (std::size_t i = 0; i < v.size(); ++i) {
        if (!v[i].is_number()) throw FormatError(name + "[" + std::to_string(i) + "]: expected a number");
        const float f = static_cast<float>(v[i].get<double>());
        if (!std::isfinite(f))
            throw ValidationError(name + "[" + std::to_string(i) + "]: value not representable as a 32-bit float");
        data.push_back(static_cast<double>(f));
    }
    if (data.size() != element_count(shape))
        throw ValidationError(name + ": declared shape " + shape_to_string(shape) + " needs " +
                              std::to_string(element_count(shape)) + " values, found " + std::to_string(data.size()));
    return Tensor(std::move(shape), std::move(data));
}

void reject_unknown_keys(const json& obj, const std::string& where, std::initializer_list<const char*> allowed)
{
    std::set<std::string> ok(allowed.begin(), allowed.end());
    for (auto it = obj.begin(); it != obj.end(); ++it)
        if (!ok.count(it.key())) throw FormatError(where + "." + it.key() + ": unknown field");
}

LayerSpec parse_layer(const json& obj, const std::string& where)
{
    if (!obj.is_object()) throw FormatError(where + ": expected an object");
    const json& kind_v = field(obj, where, "kind");
    if (!kind_v.is_string()) throw FormatError(where + ".kind: expected a string");
    const std::string kind = kind_v.get<std::string>();
    LayerSpec l;
    if (kind == "linear") {
        reject_unknown_keys(obj, where, {"bias", "in_features", "kind", "out_features", "relu_after", "weight"});
        const std::size_t in = as_count(field(obj, where, "in_features"), where + ".in_features");
        const std::size_t out = as_count(field(obj, where, "out_features"), where + ".out_features");
        l.kind = LayerKind::Linear;
        l.relu_after = as_bool(field(obj, where, "relu_after"), where + ".relu_after");
        l.weight = as_payload(field(obj, where, "weight"), where + ".weight", {out, in});
        l.bias = as_payload(field(obj, where, "bias"), where + ".bias", {out});
    } else if (kind == "conv2d") {
        reject_unknown_keys(obj, where,
                            {"bias", "in_channels", "kernel", "kind", "out_channels", "padding", "relu_after",
                             "stride", "weight"});
        const std::size_t ic = as_count(field(obj, where, "in_channels"), where + ".in_channels");
        const std::size_t oc = as_count(field(obj, where, "out_channels"), where + ".out_channels");
        l.kind = LayerKind::Conv2d;
        l.kernel = as_pair(field(obj, where, "kernel"), where + ".kernel");
        l.stride = as_pair(field(obj, where, "stride"), where + ".stride");
        const json& pad = field(obj, where, "padding");
        if (pad == "same") l.padding = Padding::Same;
        else if (pad == "valid") l.padding = Padding::Valid;
        else throw FormatError(where + ".padding: expected \"same\" or \"valid\"");
        l.relu_after = as_bool(field(obj, where, "relu_after"), where + ".relu_after");
        l.weight = as_payload(field(obj, where, "weight"), where + ".weight", {oc, ic, l.kernel[0], l.kernel[1]});
        l.bias = as_payload(field(obj, where, "bias"), where + ".bias", {oc});
    } else if (kind == "avgpool2d") {
        reject_unknown_keys(obj, where, {"kernel", "kind", "relu_after", "stride"});
        l.kind = LayerKind::AvgPool2d;
        l.kernel = as_pair(field(obj, where, "kernel"), where + ".kernel");
        l.stride = as_pair(field(obj, where, "stride"), where + ".stride");
        l.relu_after = as_bool(field(obj, where, "relu_after"), where + ".relu_after");
    } else if (kind == "flatten") {
        reject_unknown_keys(obj, where, {"kind", "relu_after"});
        l.kind = LayerKind::Flatten;
        l.relu_after = as_bool(field(obj, where, "relu_after"), where + ".relu_after");
    } else if (kind == "batchnorm" || kind == "batchnorm2d" || kind == "batch_norm") {
        throw FormatError(where + ".kind: batch normalization is not supported; fold it into the preceding "
                                  "linear/conv2d weights and bias before import");
    } else {
        throw FormatError(where + ".kind: unknown layer kind \"" + kind + "\"");
    }
    return l;
}

}  // namespace

std::string serialize_model(const NetworkDef& net)
{
    require_valid(net);
    std::string out = "{";
    ObjectWriter top{out, "  "};
    top.key("format_version"); out += std::to_string(kModelFormatVersion);
    top.key("input_shape"); append_uint_array(out, net.input_shape);
    top.key("layers"); out += "[\n";
    for (std::size_t i = 0; i < net.layers.size(); ++i) {
        if (i) out += ",\n";
        write_layer(out, net.layers[i]);
    }
    out += "\n  ]";
    top.key("num_classes"); out += std::to_string(net.num_classes);
    out += "\n}\n";
    return out;
}

NetworkDef parse_model(const std::string& text)
{
    json doc;
    try {
        doc = json::parse(text);
    } catch (const json::parse_error& e) {
        throw FormatError(std::string("manifest is not valid JSON: ") + e.what());
    }
    if (!doc.is_object()) throw FormatError("manifest: expected a top-level object");
    reject_unknown_keys(doc, "manifest", {"format_version", "input_shape", "layers", "num_classes"});
    const json& version = field(doc, "manifest", "format_version");
    if (!version.is_number_integer() || version.get<long>() != kModelFormatVersion)
        throw FormatError("manifest.format_version: unsupported version " + version.dump());

    NetworkDef net;
    net.input_shape = as_extents(field(doc, "manifest", "input_shape"), "manifest.input_shape");
    net.num_classes = as_count(field(doc, "manifest", "num_classes"), "manifest.num_classes");
    const json& layers = field(doc, "manifest", "layers");
    if (!layers.is_array()) throw FormatError("manifest.layers: expected an array");
    for (std::size_t i = 0; i < layers.size(); ++i)
        net.layers.push_back(parse_layer(layers[i], "layers[" + std::to_string(i) + "]"));
    require_valid(net);
    return net;
}

NetworkDef load_model(const fs::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open model file " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return parse_model(ss.str());
}

void save_model(const NetworkDef& net, const fs::path& path)
{
    write_file_atomic(path, serialize_model(net));
}

NetworkDef round_to_storage(NetworkDef net)
{
    for (auto& l : net.layers) {
        for (auto& w : l.weight.values()) w = static_cast<double>(static_cast<float>(w));
        for (auto& b : l.bias.values()) b = static_cast<double>(static_cast<float>(b));
    }
    return net;
}

void write_file_atomic(const fs::path& path, const std::string& contents)
{
    fs::path tmp = path;
    tmp += ".tmp";
    {
        std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
        if (!out) throw IoError("cannot write " + tmp.string());
        out << contents;
        out.flush();
        if (!out) throw IoError("write failed for " + tmp.string());
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) {
        fs::remove(tmp, ec);
        throw IoError("cannot rename into " + path.string());
    }
}

}  // namespace spikecal
