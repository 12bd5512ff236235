#pragma once

#include <cstdint>
#include <string>
#include <vector>

namespace coseq::util {

/// Small RGB raster with float channels in [0,1], row-major, interleaved.
struct Image {
    int width = 0;
    int height = 0;
    std::vector<float> px;  // size = width*height*3

    Image() = default;
    Image(int w, int h, float fill = 0.0f)
        : width(w), height(h), px(static_cast<size_t>(w) * h * 3, fill) {}

    size_t size() const { return px.size(); }

    float& at(int x, int y, int c) {
        return px[(static_cast<size_t>(y) * width + x) * 3 + c];
    }
    float at(int x, int y, int c) const {
        return px[(static_cast<size_t>(y) * width + x) * 3 + c];
    }

    bool same_shape(const Image& o) const {
        return width == o.width && height == o.height;
    }
};

/// Snap every channel to the nearest 1/255 step, the resolution PPM can hold.
Image quantize(const Image& img);

/// sqrt(mean((a-b)^2)) over all channels
double rms_diff(const Image& a, const Image& b);

// Binary PPM (P6), maxval 255. write_ppm(read_ppm(p)) is byte-identical.
void write_ppm(const std::string& path, const Image& img);
Image read_ppm(const std::string& path);

}  // namespace coseq::util
