#include "dynomap/image_io.hpp"

#include <algorithm>
#include <cstdio>
#include <cstring>
#include <fstream>

#include <zlib.h>

#include "dynomap/common.hpp"

namespace dynomap {

namespace {

void put_u32(std::string& out, uint32_t v) {
    out.push_back((char)(v >> 24));
    out.push_back((char)(v >> 16));
    out.push_back((char)(v >> 8));
    out.push_back((char)v);
}

void put_chunk(std::string& out, const char type[4], const std::string& payload) {
    put_u32(out, (uint32_t)payload.size());
    std::string body(type, 4);
    body += payload;
    out += body;
    const uint32_t crc =
        (uint32_t)crc32(0, reinterpret_cast<const Bytef*>(body.data()), (uInt)body.size());
    put_u32(out, crc);
}

void write_png(const std::string& path, const uint8_t* pixels, int w, int h, int channels) {
    // filter byte 0 per scanline
    std::string raw;
    raw.reserve((size_t)h * (1 + (size_t)w * channels));
    for (int y = 0; y < h; ++y) {
        raw.push_back('\0');
        raw.append(reinterpret_cast<const char*>(pixels + (size_t)y * w * channels),
                   (size_t)w * channels);
    }
    uLongf comp_len = compressBound((uLong)raw.size());
    std::vector<Bytef> comp(comp_len);
    if (compress2(comp.data(), &comp_len, reinterpret_cast<const Bytef*>(raw.data()),
                  (uLong)raw.size(), 6) != Z_OK)
        throw NumericError("png: deflate failed");

    std::string out("\x89PNG\r\n\x1a\n", 8);
    std::string ihdr;
    put_u32(ihdr, (uint32_t)w);
    put_u32(ihdr, (uint32_t)h);
    ihdr.push_back(8);                          // bit depth
    ihdr.push_back(channels == 1 ? 0 : 2);      // grayscale / truecolor
    ihdr.push_back(0);
    ihdr.push_back(0);
    ihdr.push_back(0);
    put_chunk(out, "IHDR", ihdr);
    put_chunk(out, "IDAT", std::string(reinterpret_cast<char*>(comp.data()), comp_len));
    put_chunk(out, "IEND", "");

    std::ofstream f(path, std::ios::binary);
    if (!f) throw InputError("png: cannot write " + path);
    f.write(out.data(), (std::streamsize)out.size());
}

} // namespace

void write_png_gray8(const std::string& path, const std::vector<uint8_t>& pixels, int w, int h) {
    if ((int)pixels.size() != w * h) throw InputError("png: pixel buffer size mismatch");
    write_png(path, pixels.data(), w, h, 1);
}

void write_png_rgb8(const std::string& path, const std::vector<uint8_t>& rgb, int w, int h) {
    if ((int)rgb.size() != 3 * w * h) throw InputError("png: pixel buffer size mismatch");
    write_png(path, rgb.data(), w, h, 3);
}

std::vector<uint8_t> to_gray8(const std::vector<double>& values) {
    double lo = values.empty() ? 0.0 : values[0], hi = lo;
    for (double v : values) {
        lo = std::min(lo, v);
        hi = std::max(hi, v);
    }
    const double span = hi - lo;
    std::vector<uint8_t> out(values.size());
    for (size_t i = 0; i < values.size(); ++i)
        out[i] = span > 0 ? (uint8_t)std::clamp(255.0 * (values[i] - lo) / span, 0.0, 255.0)
                          : (uint8_t)0;
    return out;
}

void write_matrix_csv(const std::string& path, const std::vector<double>& values, int rows,
                      int cols) {
    std::ofstream f(path);
    if (!f) throw InputError("csv: cannot write " + path);
    char buf[64];
    for (int r = 0; r < rows; ++r) {
        for (int c = 0; c < cols; ++c) {
            std::snprintf(buf, sizeof(buf), "%.17g", values[(size_t)r * cols + c]);
            f << buf;
            if (c + 1 < cols) f << ',';
        }
        f << '\n';
    }
}

} // namespace dynomap
