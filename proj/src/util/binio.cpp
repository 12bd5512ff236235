#include "util/binio.hpp"

#include <cstring>
#include <fstream>

#include "util/errors.hpp"

namespace coseq::util {

void write_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {
        static_cast<unsigned char>(v & 0xFF),
        static_cast<unsigned char>((v >> 8) & 0xFF),
        static_cast<unsigned char>((v >> 16) & 0xFF),
        static_cast<unsigned char>((v >> 24) & 0xFF),
    };
    os.write(reinterpret_cast<const char*>(b), 4);
}

void write_f32(std::ostream& os, float v) {
    uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32(os, bits);
}

uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw FormatError("binio: truncated stream while reading u32");
    return static_cast<uint32_t>(b[0]) | (static_cast<uint32_t>(b[1]) << 8) |
           (static_cast<uint32_t>(b[2]) << 16) | (static_cast<uint32_t>(b[3]) << 24);
}

float read_f32(std::istream& is) {
    uint32_t bits = read_u32(is);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

void write_f32_array(std::ostream& os, const float* data, size_t n) {
    for (size_t i = 0; i < n; ++i) write_f32(os, data[i]);
}

void read_f32_array(std::istream& is, float* data, size_t n) {
    for (size_t i = 0; i < n; ++i) data[i] = read_f32(is);
}

void save_raw_tensor(const std::string& path, const std::vector<int>& shape,
                     const std::vector<float>& data) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_raw_tensor: cannot open " + path);
    write_u32(f, static_cast<uint32_t>(shape.size()));
    for (int d : shape) write_u32(f, static_cast<uint32_t>(d));
    write_f32_array(f, data.data(), data.size());
    if (!f) throw IoError("save_raw_tensor: short write to " + path);
}

void load_raw_tensor(const std::string& path, std::vector<int>& shape,
                     std::vector<float>& data) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_raw_tensor: cannot open " + path);
    uint32_t rank = read_u32(f);
    shape.resize(rank);
    size_t numel = 1;
    for (uint32_t i = 0; i < rank; ++i) {
        shape[i] = static_cast<int>(read_u32(f));
        numel *= static_cast<size_t>(shape[i]);
    }
    data.resize(numel);
    read_f32_array(f, data.data(), numel);
}

}  // namespace coseq::util
