#pragma once

#include <cstdint>
#include <filesystem>
#include <string>
#include <vector>

#include "spikecal/ann.hpp"

namespace spikecal {

inline constexpr std::uint32_t kIdxImageMagic = 0x00000803;
inline constexpr std::uint32_t kIdxLabelMagic = 0x00000801;

/// Image samples of shape [1, rows, cols], bytes scaled by 1/255.
std::vector<Tensor> parse_idx_images(const std::vector<std::uint8_t>& bytes);
std::vector<std::size_t> parse_idx_labels(const std::vector<std::uint8_t>& bytes);

/// Throws FormatError on bad magic or truncated files, DataError on count mismatch.
Dataset load_idx(const std::filesystem::path& images, const std::filesystem::path& labels);

std::vector<std::uint8_t> encode_idx_images(std::size_t rows, std::size_t cols, const std::vector<std::uint8_t>& pixels);
std::vector<std::uint8_t> encode_idx_labels(const std::vector<std::uint8_t>& labels);

inline constexpr double kLatticeSpacing = 4.0;

/// Centre of class c: the base-m digits of c (m = ceil(K^(1/d))) times
/// kLatticeSpacing, one digit per coordinate.
std::vector<double> blob_center(std::size_t c, std::size_t classes, std::size_t dim);

/// `per_class` isotropic Gaussian samples around each class centre, shuffled.
Dataset synth_blobs(std::size_t classes, std::size_t dim, std::size_t per_class, double spread, std::uint64_t seed);

}  // namespace spikecal
