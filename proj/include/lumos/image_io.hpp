#pragma once

#include <filesystem>

#include "lumos/tensor.hpp"

namespace lumos {

/// Reads an 8- or 16-bit PNG as {3,H,W} linear values in [0,1] (sample
/// divided by the bit-depth maximum, no gamma). Gray and palette images are
/// expanded to RGB; alpha is dropped.
Tensor read_png(const std::filesystem::path& path);

/// Writes {3,H,W} (RGB) or {1,H,W}/{H,W} (gray) after clamping to [0,1].
void write_png(const std::filesystem::path& path, const Tensor& image, int bit_depth = 16);

}  // namespace lumos
