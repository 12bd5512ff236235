#include "util/image.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>

#include "util/errors.hpp"

namespace coseq::util {

static uint8_t to_byte(float v) {
    v = std::clamp(v, 0.0f, 1.0f);
    return static_cast<uint8_t>(std::lround(v * 255.0f));
}

Image quantize(const Image& img) {
    Image out(img.width, img.height);
    for (size_t i = 0; i < img.px.size(); ++i) {
        out.px[i] = static_cast<float>(to_byte(img.px[i])) / 255.0f;
    }
    return out;
}

double rms_diff(const Image& a, const Image& b) {
    if (!a.same_shape(b)) throw DimensionError("rms_diff: image shapes differ");
    double acc = 0.0;
    for (size_t i = 0; i < a.px.size(); ++i) {
        double d = static_cast<double>(a.px[i]) - b.px[i];
        acc += d * d;
    }
    return std::sqrt(acc / static_cast<double>(a.px.size()));
}

void write_ppm(const std::string& path, const Image& img) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("write_ppm: cannot open " + path);
    f << "P6\n" << img.width << " " << img.height << "\n255\n";
    std::vector<uint8_t> bytes(img.px.size());
    for (size_t i = 0; i < img.px.size(); ++i) bytes[i] = to_byte(img.px[i]);
    f.write(reinterpret_cast<const char*>(bytes.data()),
            static_cast<std::streamsize>(bytes.size()));
    if (!f) throw IoError("write_ppm: short write to " + path);
}

Image read_ppm(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("read_ppm: cannot open " + path);
    std::string magic;
    int w = 0, h = 0, maxval = 0;
    f >> magic >> w >> h >> maxval;
    if (magic != "P6" || maxval != 255 || w <= 0 || h <= 0) {
        throw FormatError("read_ppm: unsupported PPM header in " + path);
    }
    f.get();  // single whitespace after maxval
    Image img(w, h);
    std::vector<uint8_t> bytes(img.px.size());
    f.read(reinterpret_cast<char*>(bytes.data()),
           static_cast<std::streamsize>(bytes.size()));
    if (f.gcount() != static_cast<std::streamsize>(bytes.size())) {
        throw FormatError("read_ppm: truncated pixel data in " + path);
    }
    for (size_t i = 0; i < bytes.size(); ++i) {
        img.px[i] = static_cast<float>(bytes[i]) / 255.0f;
    }
    return img;
}

}  // namespace coseq::util
