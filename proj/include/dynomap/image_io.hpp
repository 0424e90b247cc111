#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dynomap {

// Minimal PNG output (8-bit grayscale / RGB, zlib-compressed) and exact-value
// CSV export for rendered images.

void write_png_gray8(const std::string& path, const std::vector<uint8_t>& pixels, int w, int h);
void write_png_rgb8(const std::string& path, const std::vector<uint8_t>& rgb, int w, int h);

// Min-max scale a real-valued image to 8-bit for display.
std::vector<uint8_t> to_gray8(const std::vector<double>& values);

// Exact values, one row per line, max round-trip precision.
void write_matrix_csv(const std::string& path, const std::vector<double>& values, int rows,
                      int cols);

} // namespace dynomap
