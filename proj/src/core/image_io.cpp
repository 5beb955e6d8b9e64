#include "core/image_io.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>

#include "core/check.hpp"

namespace prism {

namespace {

struct PnmHeader {
    std::string magic;
    int width = 0;
    int height = 0;
    int maxval = 0;
};

// Reads "P6"/"P5", dimensions and maxval, skipping '#' comments.
PnmHeader read_header(std::istream& in, const std::string& path) {
    PnmHeader h;
    in >> h.magic;
    auto next_int = [&](int& out) {
        while (true) {
            in >> std::ws;
            if (in.peek() == '#') {
                std::string line;
                std::getline(in, line);
                continue;
            }
            if (!(in >> out)) throw IoError("malformed PNM header in " + path);
            return;
        }
    };
    next_int(h.width);
    next_int(h.height);
    next_int(h.maxval);
    in.get(); // single whitespace before raster
    if (h.width <= 0 || h.height <= 0) throw IoError("invalid PNM dimensions in " + path);
    return h;
}

std::ifstream open_in(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open image: " + path);
    return in;
}

std::ofstream open_out(const std::string& path) {
    std::ofstream out(path, std::ios::binary);
    if (!out) throw IoError("cannot write image: " + path);
    return out;
}

unsigned char quantize8(double v) {
    const double c = std::clamp(v, 0.0, 1.0);
    return static_cast<unsigned char>(std::lround(c * 255.0));
}

} // namespace

Tensor read_ppm(const std::string& path) {
    auto in = open_in(path);
    const PnmHeader h = read_header(in, path);
    if (h.magic != "P6") throw IoError("expected P6 PPM: " + path);
    if (h.maxval != 255) throw IoError("only 8-bit PPM supported: " + path);
    std::vector<unsigned char> buf(static_cast<size_t>(h.width) * h.height * 3);
    in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!in) throw IoError("truncated PPM raster: " + path);
    Tensor img({3, h.height, h.width});
    size_t i = 0;
    for (int y = 0; y < h.height; ++y)
        for (int x = 0; x < h.width; ++x)
            for (int c = 0; c < 3; ++c) img.at(c, y, x) = buf[i++] / 255.0;
    return img;
}

void write_ppm(const std::string& path, const Tensor& image) {
    PRISM_CHECK(image.rank() == 3 && (image.channels() == 3 || image.channels() == 1),
                "write_ppm expects (3,H,W) or (1,H,W)");
    auto out = open_out(path);
    const int hgt = image.height(), wid = image.width();
    out << "P6\n" << wid << " " << hgt << "\n255\n";
    std::vector<unsigned char> buf(static_cast<size_t>(wid) * hgt * 3);
    size_t i = 0;
    for (int y = 0; y < hgt; ++y)
        for (int x = 0; x < wid; ++x)
            for (int c = 0; c < 3; ++c)
                buf[i++] = quantize8(image.at(image.channels() == 3 ? c : 0, y, x));
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing " + path);
}

Tensor read_pgm(const std::string& path) {
    auto in = open_in(path);
    const PnmHeader h = read_header(in, path);
    if (h.magic != "P5") throw IoError("expected P5 PGM: " + path);
    Tensor map({1, h.height, h.width});
    const size_t n = static_cast<size_t>(h.width) * h.height;
    if (h.maxval == 255) {
        std::vector<unsigned char> buf(n);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n));
        if (!in) throw IoError("truncated PGM raster: " + path);
        for (size_t i = 0; i < n; ++i) map[static_cast<std::int64_t>(i)] = buf[i] / 255.0;
    } else if (h.maxval == 65535) {
        std::vector<unsigned char> buf(n * 2);
        in.read(reinterpret_cast<char*>(buf.data()), static_cast<std::streamsize>(n * 2));
        if (!in) throw IoError("truncated PGM raster: " + path);
        for (size_t i = 0; i < n; ++i) {
            // big-endian per Netpbm
            map[static_cast<std::int64_t>(i)] =
                static_cast<double>((buf[2 * i] << 8) | buf[2 * i + 1]);
        }
    } else {
        throw IoError("unsupported PGM maxval in " + path);
    }
    return map;
}

int pgm_maxval(const std::string& path) {
    auto in = open_in(path);
    const PnmHeader h = read_header(in, path);
    if (h.magic != "P5") throw IoError("expected P5 PGM: " + path);
    return h.maxval;
}

void write_pgm8(const std::string& path, const Tensor& map) {
    PRISM_CHECK(map.rank() == 3 && map.channels() == 1, "write_pgm8 expects (1,H,W)");
    auto out = open_out(path);
    const int hgt = map.height(), wid = map.width();
    out << "P5\n" << wid << " " << hgt << "\n255\n";
    std::vector<unsigned char> buf(static_cast<size_t>(wid) * hgt);
    for (std::int64_t i = 0; i < map.numel(); ++i) buf[static_cast<size_t>(i)] = quantize8(map[i]);
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing " + path);
}

void write_pgm16(const std::string& path, const Tensor& raw) {
    PRISM_CHECK(raw.rank() == 3 && raw.channels() == 1, "write_pgm16 expects (1,H,W)");
    auto out = open_out(path);
    const int hgt = raw.height(), wid = raw.width();
    out << "P5\n" << wid << " " << hgt << "\n65535\n";
    std::vector<unsigned char> buf(static_cast<size_t>(wid) * hgt * 2);
    for (std::int64_t i = 0; i < raw.numel(); ++i) {
        const double v = std::clamp(raw[i], 0.0, 65535.0);
        const auto u = static_cast<unsigned>(std::lround(v));
        buf[static_cast<size_t>(2 * i)] = static_cast<unsigned char>(u >> 8);
        buf[static_cast<size_t>(2 * i + 1)] = static_cast<unsigned char>(u & 0xff);
    }
    out.write(reinterpret_cast<const char*>(buf.data()), static_cast<std::streamsize>(buf.size()));
    if (!out) throw IoError("failed writing " + path);
}

} // namespace prism
