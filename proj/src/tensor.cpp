#include "spikecal/tensor.hpp"

#include <algorithm>
#include <cmath>
#include <functional>
#include <limits>
#include <numeric>

#include "spikecal/error.hpp"

namespace spikecal {

const char* to_string(ErrorKind kind)
{
    switch (kind) {
    case ErrorKind::Format: return "format error";
    case ErrorKind::Validation: return "validation error";
    case ErrorKind::Parameter: return "parameter error";
    case ErrorKind::Io: return "I/O error";
    case ErrorKind::Training: return "training error";
    case ErrorKind::Infeasible: return "infeasible budget";
    case ErrorKind::Size: return "size error";
    case ErrorKind::Config: return "config error";
    case ErrorKind::Data: return "data error";
    case ErrorKind::Numeric: return "numeric error";
    }
    return "error";
}

std::size_t element_count(const Shape& shape)
{
    return std::accumulate(shape.begin(), shape.end(), std::size_t{1}, std::multiplies<>());
}

std::string shape_to_string(const Shape& shape)
{
    std::string out = "[";
    for (std::size_t i = 0; i < shape.size(); ++i) {
        if (i) out += ", ";
        out += std::to_string(shape[i]);
    }
    return out + "]";
}

Tensor::Tensor(Shape shape, double fill) : shape_(std::move(shape)), data_(element_count(shape_), fill) {}

Tensor::Tensor(Shape shape, std::vector<double> data) : shape_(std::move(shape)), data_(std::move(data))
{
    if (element_count(shape_) != data_.size()) {
        throw ValidationError("tensor shape " + shape_to_string(shape_) + " needs " +
                              std::to_string(element_count(shape_)) + " values, got " +
                              std::to_string(data_.size()));
    }
}

Tensor Tensor::row(std::size_t i) const
{
    if (shape_.empty() || i >= shape_[0]) throw ParameterError("row index out of range");
    Shape inner(shape_.begin() + 1, shape_.end());
    const std::size_t n = element_count(inner);
    return Tensor(std::move(inner), std::vector<double>(data_.begin() + i * n, data_.begin() + (i + 1) * n));
}

void Tensor::set_row(std::size_t i, const Tensor& sample)
{
    if (shape_.empty() || i >= shape_[0]) throw ParameterError("row index out of range");
    const std::size_t n = size() / shape_[0];
    if (sample.size() != n) throw ValidationError("row payload has wrong size");
    std::copy(sample.data_.begin(), sample.data_.end(), data_.begin() + i * n);
}

Tensor Tensor::reshaped(Shape shape) const
{
    return Tensor(std::move(shape), data_);
}

bool Tensor::all_finite() const
{
    return std::all_of(data_.begin(), data_.end(), [](double x) { return std::isfinite(x); });
}

double Tensor::max() const
{
    if (data_.empty()) return -std::numeric_limits<double>::infinity();
    return *std::max_element(data_.begin(), data_.end());
}

Tensor stack(std::span<const Tensor> samples)
{
    if (samples.empty()) throw ParameterError("cannot stack an empty batch");
    Shape shape{samples.size()};
    shape.insert(shape.end(), samples[0].shape().begin(), samples[0].shape().end());
    std::vector<double> data;
    data.reserve(samples.size() * samples[0].size());
    for (const auto& s : samples) {
        if (s.shape() != samples[0].shape()) throw ValidationError("cannot stack tensors of different shapes");
        data.insert(data.end(), s.values().begin(), s.values().end());
    }
    return Tensor(std::move(shape), std::move(data));
}

}  // namespace spikecal
