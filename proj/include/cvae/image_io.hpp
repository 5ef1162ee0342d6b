#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "cvae/checkpoint.hpp"  // FormatError

namespace cvae {

// Binary PPM (P6), 8-bit RGB.
inline void write_ppm(const std::string& path, int width, int height,
                      const std::vector<std::uint8_t>& rgb) {
    if (rgb.size() != (std::size_t)width * height * 3)
        throw FormatError("ppm: pixel buffer size mismatch");
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("ppm: cannot open " + path);
    f << "P6\n" << width << " " << height << "\n255\n";
    f.write((const char*)rgb.data(), (std::streamsize)rgb.size());
    if (!f) throw FormatError("ppm: write failed for " + path);
}

struct PpmImage {
    int width = 0, height = 0;
    std::vector<std::uint8_t> rgb;
};

inline PpmImage read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("ppm: cannot open " + path);
    std::string magic;
    f >> magic;
    if (magic != "P6") throw FormatError("ppm: not a P6 file");
    PpmImage img;
    int maxval = 0;
    f >> img.width >> img.height >> maxval;
    if (!f || img.width <= 0 || img.height <= 0 || maxval != 255)
        throw FormatError("ppm: bad header in " + path);
    f.get();  // single whitespace after header
    img.rgb.resize((std::size_t)img.width * img.height * 3);
    if (!f.read((char*)img.rgb.data(), (std::streamsize)img.rgb.size()))
        throw FormatError("ppm: truncated pixel data in " + path);
    return img;
}

inline std::vector<std::uint8_t> float_to_rgb8(const std::vector<double>& img) {
    std::vector<std::uint8_t> out(img.size());
    for (std::size_t i = 0; i < img.size(); ++i) {
        double v = img[i];
        v = v < 0.0 ? 0.0 : (v > 1.0 ? 1.0 : v);
        out[i] = (std::uint8_t)(v * 255.0 + 0.5);
    }
    return out;
}

}  // namespace cvae
