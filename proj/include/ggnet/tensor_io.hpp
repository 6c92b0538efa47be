#pragma once

#include <filesystem>
#include <iosfwd>

#include "ggnet/tensor.hpp"

namespace ggnet {

// "GGT1" container: 4 magic bytes, four little-endian u32 shape fields
// (n, c, h, w), then n*c*h*w little-endian IEEE-754 binary32 values.

inline constexpr char kTensorMagic[4] = {'G', 'G', 'T', '1'};

/// Size in bytes of a serialized tensor with the given shape.
std::size_t serialized_size(const Shape& shape);

void write_tensor(std::ostream& os, const Tensor<float>& t);
Tensor<float> read_tensor(std::istream& is);

void save_tensor(const std::filesystem::path& path, const Tensor<float>& t);
Tensor<float> load_tensor(const std::filesystem::path& path);

} // namespace ggnet
