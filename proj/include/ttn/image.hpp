#pragma once

#include <cstddef>
#include <filesystem>
#include <string>
#include <string_view>

#include "ttn/tensor.hpp"

namespace ttn::image {

// Binary PPM (P6, maxval 255) to a (3, H, W) tensor with values in [0, 1].
// Throws DecodeError on malformed input.
Tensor decode_ppm(std::string_view bytes);
Tensor read_ppm(const std::filesystem::path& path);

// Values are clamped to [0, 1] and rounded to 8 bits.
std::string encode_ppm(const Tensor& img);
void write_ppm(const std::filesystem::path& path, const Tensor& img);

// Square window of side `size` with top-left corner (y, x).
Tensor crop(const Tensor& img, std::size_t y, std::size_t x, std::size_t size);
// Horizontal flip.
Tensor mirror(const Tensor& img);

}  // namespace ttn::image
