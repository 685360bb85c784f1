#pragma once

#include <filesystem>
#include <span>

#include "dag/data_model.hpp"

namespace dag {

// Netpbm rasters. Binary (P6/P5) and ASCII (P3/P2) variants are read;
// grayscale inputs are replicated to three channels. Writers emit binary.

Image read_image(const std::filesystem::path& path);
void write_ppm(const std::filesystem::path& path, const Image& image);

/// Writes a single-channel map as 8-bit grayscale, linearly rescaled so the
/// map's minimum is 0 and maximum is 255 (a constant map becomes mid-gray).
void write_pgm(const std::filesystem::path& path, std::span<const double> values, int height,
               int width);

}  // namespace dag
