#include "dynomap/plots.hpp"

#include <algorithm>
#include <cctype>
#include <cmath>
#include <cstdio>
#include <map>

#include "dynomap/common.hpp"
#include "dynomap/image_io.hpp"

namespace dynomap {

namespace {

struct Glyph {
    const char* rows[7];
};

const std::map<char, Glyph>& font() {
    static const std::map<char, Glyph> table = {
        {'A', {{".###.", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}}},
        {'B', {{"####.", "#...#", "#...#", "####.", "#...#", "#...#", "####."}}},
        {'C', {{".###.", "#...#", "#....", "#....", "#....", "#...#", ".###."}}},
        {'D', {{"####.", "#...#", "#...#", "#...#", "#...#", "#...#", "####."}}},
        {'E', {{"#####", "#....", "#....", "####.", "#....", "#....", "#####"}}},
        {'F', {{"#####", "#....", "#....", "####.", "#....", "#....", "#...."}}},
        {'G', {{".###.", "#...#", "#....", "#.###", "#...#", "#...#", ".####"}}},
        {'H', {{"#...#", "#...#", "#...#", "#####", "#...#", "#...#", "#...#"}}},
        {'I', {{"#####", "..#..", "..#..", "..#..", "..#..", "..#..", "#####"}}},
        {'J', {{"..###", "...#.", "...#.", "...#.", "...#.", "#..#.", ".##.."}}},
        {'K', {{"#...#", "#..#.", "#.#..", "##...", "#.#..", "#..#.", "#...#"}}},
        {'L', {{"#....", "#....", "#....", "#....", "#....", "#....", "#####"}}},
        {'M', {{"#...#", "##.##", "#.#.#", "#.#.#", "#...#", "#...#", "#...#"}}},
        {'N', {{"#...#", "##..#", "#.#.#", "#..##", "#...#", "#...#", "#...#"}}},
        {'O', {{".###.", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}}},
        {'P', {{"####.", "#...#", "#...#", "####.", "#....", "#....", "#...."}}},
        {'Q', {{".###.", "#...#", "#...#", "#...#", "#.#.#", "#..#.", ".##.#"}}},
        {'R', {{"####.", "#...#", "#...#", "####.", "#.#..", "#..#.", "#...#"}}},
        {'S', {{".####", "#....", "#....", ".###.", "....#", "....#", "####."}}},
        {'T', {{"#####", "..#..", "..#..", "..#..", "..#..", "..#..", "..#.."}}},
        {'U', {{"#...#", "#...#", "#...#", "#...#", "#...#", "#...#", ".###."}}},
        {'V', {{"#...#", "#...#", "#...#", "#...#", "#...#", ".#.#.", "..#.."}}},
        {'W', {{"#...#", "#...#", "#...#", "#.#.#", "#.#.#", "##.##", "#...#"}}},
        {'X', {{"#...#", "#...#", ".#.#.", "..#..", ".#.#.", "#...#", "#...#"}}},
        {'Y', {{"#...#", "#...#", ".#.#.", "..#..", "..#..", "..#..", "..#.."}}},
        {'Z', {{"#####", "....#", "...#.", "..#..", ".#...", "#....", "#####"}}},
        {'0', {{".###.", "#...#", "#..##", "#.#.#", "##..#", "#...#", ".###."}}},
        {'1', {{"..#..", ".##..", "..#..", "..#..", "..#..", "..#..", "#####"}}},
        {'2', {{".###.", "#...#", "....#", "...#.", "..#..", ".#...", "#####"}}},
        {'3', {{".###.", "#...#", "....#", "..##.", "....#", "#...#", ".###."}}},
        {'4', {{"...#.", "..##.", ".#.#.", "#..#.", "#####", "...#.", "...#."}}},
        {'5', {{"#####", "#....", "####.", "....#", "....#", "#...#", ".###."}}},
        {'6', {{".###.", "#....", "#....", "####.", "#...#", "#...#", ".###."}}},
        {'7', {{"#####", "....#", "...#.", "..#..", ".#...", ".#...", ".#..."}}},
        {'8', {{".###.", "#...#", "#...#", ".###.", "#...#", "#...#", ".###."}}},
        {'9', {{".###.", "#...#", "#...#", ".####", "....#", "....#", ".###."}}},
        {'.', {{".....", ".....", ".....", ".....", ".....", ".##..", ".##.."}}},
        {',', {{".....", ".....", ".....", ".....", "..##.", "..#..", ".#..."}}},
        {'-', {{".....", ".....", ".....", "#####", ".....", ".....", "....."}}},
        {'_', {{".....", ".....", ".....", ".....", ".....", ".....", "#####"}}},
        {':', {{".....", ".##..", ".##..", ".....", ".##..", ".##..", "....."}}},
        {'%', {{"##..#", "##..#", "...#.", "..#..", ".#...", "#..##", "#..##"}}},
        {'(', {{"...#.", "..#..", ".#...", ".#...", ".#...", "..#..", "...#."}}},
        {')', {{".#...", "..#..", "...#.", "...#.", "...#.", "..#..", ".#..."}}},
        {'/', {{"....#", "...#.", "..#..", "..#..", ".#...", "#....", "#...."}}},
        {'+', {{".....", "..#..", "..#..", "#####", "..#..", "..#..", "....."}}},
        {'=', {{".....", ".....", "#####", ".....", "#####", ".....", "....."}}},
        {'<', {{"...#.", "..#..", ".#...", "#....", ".#...", "..#..", "...#."}}},
        {'>', {{".#...", "..#..", "...#.", "....#", "...#.", "..#..", ".#..."}}},
        {' ', {{".....", ".....", ".....", ".....", ".....", ".....", "....."}}},
    };
    return table;
}

const Glyph* lookup(char c) {
    const char up = (char)std::toupper((unsigned char)c);
    const auto it = font().find(up);
    return it == font().end() ? nullptr : &it->second;
}

std::string format_num(double v) {
    char buf[32];
    std::snprintf(buf, sizeof(buf), "%.4g", v);
    return buf;
}

// Blue-to-red diverging-ish map for heatmaps on [0,1].
Rgb colormap(double t) {
    t = std::clamp(t, 0.0, 1.0);
    const auto lerp = [](double a, double b, double u) { return a + (b - a) * u; };
    double r, g, b;
    if (t < 0.5) {
        const double u = t / 0.5;
        r = lerp(20, 240, u);
        g = lerp(40, 240, u);
        b = lerp(120, 240, u);
    } else {
        const double u = (t - 0.5) / 0.5;
        r = lerp(240, 178, u);
        g = lerp(240, 24, u);
        b = lerp(240, 43, u);
    }
    return {(uint8_t)r, (uint8_t)g, (uint8_t)b};
}

} // namespace

Canvas::Canvas(int width, int height, Rgb bg) : w(width), h(height) {
    pixels.assign((size_t)3 * w * h, 255);
    fill_rect(0, 0, w - 1, h - 1, bg);
}

void Canvas::set(int x, int y, Rgb c) {
    if (x < 0 || y < 0 || x >= w || y >= h) return;
    uint8_t* p = pixels.data() + ((size_t)y * w + x) * 3;
    p[0] = c.r;
    p[1] = c.g;
    p[2] = c.b;
}

void Canvas::fill_rect(int x0, int y0, int x1, int y1, Rgb c) {
    for (int y = std::max(0, y0); y <= std::min(h - 1, y1); ++y)
        for (int x = std::max(0, x0); x <= std::min(w - 1, x1); ++x) set(x, y, c);
}

void Canvas::hline(int x0, int x1, int y, Rgb c) { fill_rect(x0, y, x1, y, c); }
void Canvas::vline(int x, int y0, int y1, Rgb c) { fill_rect(x, y0, x, y1, c); }

void Canvas::text(int x, int y, const std::string& s, Rgb c, int scale) {
    int cx = x;
    for (char ch : s) {
        if (const Glyph* g = lookup(ch)) {
            for (int r = 0; r < 7; ++r)
                for (int col = 0; col < 5; ++col)
                    if (g->rows[r][col] == '#')
                        fill_rect(cx + col * scale, y + r * scale, cx + (col + 1) * scale - 1,
                                  y + (r + 1) * scale - 1, c);
        }
        cx += 6 * scale;
    }
}

void Canvas::text_vertical(int x, int y, const std::string& s, Rgb c, int scale) {
    int cy = y;
    for (char ch : s) {
        if (const Glyph* g = lookup(ch)) {
            for (int r = 0; r < 7; ++r)
                for (int col = 0; col < 5; ++col)
                    if (g->rows[r][col] == '#')
                        fill_rect(x + col * scale, cy + r * scale, x + (col + 1) * scale - 1,
                                  cy + (r + 1) * scale - 1, c);
        }
        cy += 8 * scale;
    }
}

void Canvas::save(const std::string& path) const { write_png_rgb8(path, pixels, w, h); }

void plot_null_histogram(const std::string& path, const std::vector<double>& null_values,
                         double observed, const std::string& title) {
    if (null_values.empty()) throw InputError("plot_null_histogram: empty null sample");
    const int w = 640, h = 360;
    const int ml = 50, mr = 20, mt = 40, mb = 40;
    Canvas cv(w, h);
    cv.text(ml, 12, title, {30, 30, 30});

    double lo = *std::min_element(null_values.begin(), null_values.end());
    double hi = *std::max_element(null_values.begin(), null_values.end());
    lo = std::min(lo, observed);
    hi = std::max(hi, observed);
    const double span = (hi - lo) > 0 ? (hi - lo) : 1.0;
    lo -= 0.05 * span;
    hi += 0.05 * span;

    const int bins = 40;
    std::vector<int> counts(bins, 0);
    for (double v : null_values) {
        int b = (int)((v - lo) / (hi - lo) * bins);
        b = std::clamp(b, 0, bins - 1);
        counts[b] += 1;
    }
    const int peak = std::max(1, *std::max_element(counts.begin(), counts.end()));

    const int px0 = ml, px1 = w - mr, py0 = mt, py1 = h - mb;
    cv.hline(px0, px1, py1, {0, 0, 0});
    cv.vline(px0, py0, py1, {0, 0, 0});
    for (int b = 0; b < bins; ++b) {
        const int x0 = px0 + b * (px1 - px0) / bins;
        const int x1 = px0 + (b + 1) * (px1 - px0) / bins - 1;
        const int bh = (int)std::lround((double)counts[b] / peak * (py1 - py0));
        if (bh > 0) cv.fill_rect(x0, py1 - bh, x1, py1 - 1, {120, 150, 220});
    }
    const int ox = px0 + (int)std::lround((observed - lo) / (hi - lo) * (px1 - px0));
    cv.vline(ox, py0, py1, {200, 30, 30});
    cv.text(std::min(ox + 4, w - 120), py0 + 4, "OBSERVED " + format_num(observed),
            {200, 30, 30});
    cv.text(px0, py1 + 8, format_num(lo), {30, 30, 30});
    cv.text(px1 - 60, py1 + 8, format_num(hi), {30, 30, 30});
    cv.save(path);
}

void plot_heatmap(const std::string& path, const std::vector<std::vector<double>>& values,
                  const std::vector<std::string>& row_labels,
                  const std::vector<std::string>& col_labels, const std::string& title) {
    const int rows = (int)values.size();
    if (rows == 0) throw InputError("plot_heatmap: no rows");
    const int cols = (int)values[0].size();
    int label_w = 0;
    for (const auto& s : row_labels) label_w = std::max(label_w, (int)s.size());
    int collabel_len = 0;
    for (const auto& s : col_labels) collabel_len = std::max(collabel_len, (int)s.size());

    const int cell_w = 16, cell_h = 18;
    const int ml = 10 + 6 * label_w, mt = 30, mb = 10 + 8 * collabel_len, mr = 20;
    Canvas cv(ml + cols * cell_w + mr, mt + rows * cell_h + mb);
    cv.text(10, 8, title, {30, 30, 30});

    double lo = values[0][0], hi = values[0][0];
    for (const auto& r : values)
        for (double v : r) {
            lo = std::min(lo, v);
            hi = std::max(hi, v);
        }
    const double span = (hi - lo) > 0 ? hi - lo : 1.0;

    for (int r = 0; r < rows; ++r) {
        cv.text(5, mt + r * cell_h + 5, row_labels[r], {30, 30, 30});
        for (int c = 0; c < cols; ++c) {
            const Rgb col = colormap((values[r][c] - lo) / span);
            cv.fill_rect(ml + c * cell_w, mt + r * cell_h, ml + (c + 1) * cell_w - 2,
                         mt + (r + 1) * cell_h - 2, col);
        }
    }
    for (int c = 0; c < cols && c < (int)col_labels.size(); ++c)
        cv.text_vertical(ml + c * cell_w + 4, mt + rows * cell_h + 6, col_labels[c],
                         {30, 30, 30});
    cv.save(path);
}

void plot_butterfly(const std::string& path, const std::vector<std::string>& names,
                    const std::vector<double>& deltas, const std::string& positive_label,
                    const std::string& negative_label, const std::string& title) {
    const int n = (int)names.size();
    if (n == 0 || (int)deltas.size() != n) throw InputError("plot_butterfly: bad inputs");
    int label_w = 0;
    for (const auto& s : names) label_w = std::max(label_w, (int)s.size());

    const int row_h = 14, ml = 12 + 6 * label_w, mr = 30, mt = 44, mb = 16;
    const int plot_w = 420;
    Canvas cv(ml + plot_w + mr, mt + n * row_h + mb);
    cv.text(10, 8, title, {30, 30, 30});
    cv.text(ml + plot_w / 2 + 8, 24, positive_label + " >", {200, 30, 30});
    cv.text(ml + 8, 24, "< " + negative_label, {30, 60, 200});

    double amax = 1e-12;
    for (double d : deltas) amax = std::max(amax, std::abs(d));
    const int cx = ml + plot_w / 2;
    cv.vline(cx, mt, mt + n * row_h, {0, 0, 0});
    for (int i = 0; i < n; ++i) {
        const int y0 = mt + i * row_h + 2, y1 = mt + (i + 1) * row_h - 3;
        const int extent = (int)std::lround(std::abs(deltas[i]) / amax * (plot_w / 2 - 4));
        if (deltas[i] >= 0)
            cv.fill_rect(cx + 1, y0, cx + 1 + extent, y1, {200, 30, 30});
        else
            cv.fill_rect(cx - 1 - extent, y0, cx - 1, y1, {30, 60, 200});
        cv.text(5, y0, names[i], {30, 30, 30});
    }
    cv.save(path);
}

} // namespace dynomap
