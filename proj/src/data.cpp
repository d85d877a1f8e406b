#include "spikecal/data.hpp"

#include <cmath>
#include <fstream>
#include <iterator>
#include <numeric>
#include <sstream>

#include "spikecal/error.hpp"
#include "spikecal/rng.hpp"

namespace spikecal {

namespace {

std::uint32_t read_be32(const std::vector<std::uint8_t>& b, std::size_t off)
{
    if (off + 4 > b.size()) throw FormatError("IDX file truncated in the header");
    return (std::uint32_t{b[off]} << 24) | (std::uint32_t{b[off + 1]} << 16) | (std::uint32_t{b[off + 2]} << 8) |
           std::uint32_t{b[off + 3]};
}

void put_be32(std::vector<std::uint8_t>& b, std::uint32_t v)
{
    for (int s = 24; s >= 0; s -= 8) b.push_back(static_cast<std::uint8_t>(v >> s));
}

std::string hex(std::uint32_t v)
{
    std::ostringstream ss;
    ss << "0x" << std::hex << std::uppercase;
    ss.width(8);
    ss.fill('0');
    ss << v;
    return ss.str();
}

std::vector<std::uint8_t> read_bytes(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path.string());
    return {std::istreambuf_iterator<char>(in), std::istreambuf_iterator<char>()};
}

}  // namespace

std::vector<Tensor> parse_idx_images(const std::vector<std::uint8_t>& bytes)
{
    const std::uint32_t magic = read_be32(bytes, 0);
    if (magic != kIdxImageMagic)
        throw FormatError("IDX images: expected magic " + hex(kIdxImageMagic) + ", found " + hex(magic));
    const std::size_t n = read_be32(bytes, 4), rows = read_be32(bytes, 8), cols = read_be32(bytes, 12);
    const std::size_t per = rows * cols;
    if (bytes.size() != 16 + n * per)
        throw FormatError("IDX images: expected " + std::to_string(16 + n * per) + " bytes, found " +
                          std::to_string(bytes.size()));
    std::vector<Tensor> out;
    out.reserve(n);
    for (std::size_t i = 0; i < n; ++i) {
        std::vector<double> v(per);
        for (std::size_t k = 0; k < per; ++k) v[k] = static_cast<double>(bytes[16 + i * per + k]) / 255.0;
        out.emplace_back(Shape{1, rows, cols}, std::move(v));
    }
    return out;
}

std::vector<std::size_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes)
{
    const std::uint32_t magic = read_be32(bytes, 0);
    if (magic != kIdxLabelMagic)
        throw FormatError("IDX labels: expected magic " + hex(kIdxLabelMagic) + ", found " + hex(magic));
    const std::size_t n = read_be32(bytes, 4);
    if (bytes.size() != 8 + n)
        throw FormatError("IDX labels: expected " + std::to_string(8 + n) + " bytes, found " +
                          std::to_string(bytes.size()));
    return {bytes.begin() + 8, bytes.end()};
}

Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels)
{
    Dataset d;
    d.inputs = parse_idx_images(read_bytes(images));
    d.labels = parse_idx_labels(read_bytes(labels));
    if (d.inputs.size() != d.labels.size())
        throw DataError("IDX: " + std::to_string(d.inputs.size()) + " images but " + std::to_string(d.labels.size()) +
                        " labels");
    return d;
}

std::vector<std::uint8_t> encode_idx_images(std::size_t rows, std::size_t cols, const std::vector<std::uint8_t>& pixels)
{
    if (rows * cols == 0 || pixels.size() % (rows * cols)) throw ParameterError("IDX images: pixel count mismatch");
    std::vector<std::uint8_t> b;
    put_be32(b, kIdxImageMagic);
    put_be32(b, static_cast<std::uint32_t>(pixels.size() / (rows * cols)));
    put_be32(b, static_cast<std::uint32_t>(rows));
    put_be32(b, static_cast<std::uint32_t>(cols));
    b.insert(b.end(), pixels.begin(), pixels.end());
    return b;
}

std::vector<std::uint8_t> encode_idx_labels(const std::vector<std::uint8_t>& labels)
{
    std::vector<std::uint8_t> b;
    put_be32(b, kIdxLabelMagic);
    put_be32(b, static_cast<std::uint32_t>(labels.size()));
    b.insert(b.end(), labels.begin(), labels.end());
    return b;
}

std::vector<double> blob_center(std::size_t c, std::size_t classes, std::size_t dim)
{
    std::size_t m = 1;
    for (;;) {
        double cap = 1.0;
        for (std::size_t i = 0; i < dim; ++i) cap *= static_cast<double>(m);
        if (cap >= static_cast<double>(classes)) break;
        ++m;
    }
    std::vector<double> centre(dim, 0.0);
    for (std::size_t i = 0; i < dim && c; ++i, c /= m) centre[i] = kLatticeSpacing * static_cast<double>(c % m);
    return centre;
}

Dataset synth_blobs(std::size_t classes, std::size_t dim, std::size_t per_class, double spread, std::uint64_t seed)
{
    if (classes < 2) throw ParameterError("synth_blobs: need at least 2 classes");
    if (dim < 1) throw ParameterError("synth_blobs: dimension must be >= 1");
    if (per_class < 1) throw ParameterError("synth_blobs: need at least one sample per class");
    if (!(spread >= 0.0)) throw ParameterError("synth_blobs: spread must be >= 0");

    Rng rng(seed);
    Dataset d;
    for (std::size_t c = 0; c < classes; ++c) {
        const auto centre = blob_center(c, classes, dim);
        for (std::size_t j = 0; j < per_class; ++j) {
            std::vector<double> x(dim);
            for (std::size_t i = 0; i < dim; ++i) x[i] = centre[i] + spread * rng.normal();
            d.inputs.emplace_back(Shape{dim}, std::move(x));
            d.labels.push_back(c);
        }
    }
    std::vector<std::size_t> order(d.size());
    std::iota(order.begin(), order.end(), 0);
    rng.shuffle(order);
    Dataset out;
    for (auto i : order) {
        out.inputs.push_back(std::move(d.inputs[i]));
        out.labels.push_back(d.labels[i]);
    }
    return out;
}

}  // namespace spikecal
