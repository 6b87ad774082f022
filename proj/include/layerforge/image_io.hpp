#pragma once

#include <string>

#include "layerforge/tensor.hpp"

namespace layerforge::io {

// Reads 8- or 16-bit grayscale/RGB PNG into (H, W, C), C in {1, 3},
// values scaled to [0, 1]. Alpha is stripped, palettes expanded.
Tensor read_png(const std::string& path);

// Writes (H, W, 1) or (H, W, 3) as 16-bit PNG, values clamped to [0, 1].
// Output bytes depend only on the tensor contents.
void write_png16(const std::string& path, const Tensor& image);

// Raw float sidecar: "LRF1", u32 rank, u32 extents, little-endian f64 payload.
void write_rawf(const std::string& path, const Tensor& t);
Tensor read_rawf(const std::string& path);

}  // namespace layerforge::io
