#pragma once

#include <cstddef>
#include <span>
#include <string>
#include <vector>

namespace spikecal {

using Shape = std::vector<std::size_t>;

std::size_t element_count(const Shape& shape);
std::string shape_to_string(const Shape& shape);

/// Dense row-major tensor of doubles.
class Tensor {
public:
    Tensor() = default;
    explicit Tensor(Shape shape, double fill = 0.0);
    /// Throws ValidationError when the payload length does not match the shape.
    Tensor(Shape shape, std::vector<double> data);

    const Shape& shape() const noexcept { return shape_; }
    std::size_t rank() const noexcept { return shape_.size(); }
    std::size_t size() const noexcept { return data_.size(); }
    bool empty() const noexcept { return data_.empty(); }

    std::span<double> values() noexcept { return data_; }
    std::span<const double> values() const noexcept { return data_; }
    const std::vector<double>& data() const noexcept { return data_; }

    double& operator[](std::size_t i) { return data_[i]; }
    double operator[](std::size_t i) const { return data_[i]; }

    // Row i of a tensor with a leading batch extent.
    Tensor row(std::size_t i) const;
    void set_row(std::size_t i, const Tensor& sample);

    Tensor reshaped(Shape shape) const;

    bool all_finite() const;
    double max() const;

    bool operator==(const Tensor&) const = default;

private:
    Shape shape_;
    std::vector<double> data_;
};

/// Stacks equally shaped samples along a new leading batch axis.
Tensor stack(std::span<const Tensor> samples);

}  // namespace spikecal
