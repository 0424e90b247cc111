#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace dynomap {

// Static plot emission: enough raster graphics for the report artifacts
// (null-distribution histograms, attribution heatmaps, butterfly bars).

struct Rgb {
    uint8_t r = 0, g = 0, b = 0;
};

struct Canvas {
    int w = 0, h = 0;
    std::vector<uint8_t> pixels; // rgb8

    Canvas(int width, int height, Rgb bg = {255, 255, 255});
    void set(int x, int y, Rgb c);
    void fill_rect(int x0, int y0, int x1, int y1, Rgb c);
    void hline(int x0, int x1, int y, Rgb c);
    void vline(int x, int y0, int y1, Rgb c);
    // 5x7 bitmap font, uppercase fold; scale integer-multiplies the glyphs.
    void text(int x, int y, const std::string& s, Rgb c, int scale = 1);
    void text_vertical(int x, int y, const std::string& s, Rgb c, int scale = 1);
    void save(const std::string& path) const;
};

// Histogram of a null distribution with a vertical marker at the observed
// value.
void plot_null_histogram(const std::string& path, const std::vector<double>& null_values,
                         double observed, const std::string& title);

// Row-normalized heatmap with row labels and vertical column labels.
void plot_heatmap(const std::string& path, const std::vector<std::vector<double>>& values,
                  const std::vector<std::string>& row_labels,
                  const std::vector<std::string>& col_labels, const std::string& title);

// Signed horizontal bars (positive right, negative left), one row per name.
void plot_butterfly(const std::string& path, const std::vector<std::string>& names,
                    const std::vector<double>& deltas, const std::string& positive_label,
                    const std::string& negative_label, const std::string& title);

} // namespace dynomap
