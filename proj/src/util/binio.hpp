#pragma once

#include <cstdint>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

namespace coseq::util {

// Explicit little-endian scalar IO, independent of host byte order.

void write_u32(std::ostream& os, uint32_t v);
void write_f32(std::ostream& os, float v);
uint32_t read_u32(std::istream& is);
float read_f32(std::istream& is);

void write_f32_array(std::ostream& os, const float* data, size_t n);
void read_f32_array(std::istream& is, float* data, size_t n);

// Flat tensor dump: u32 rank, u32 dims[rank], f32 payload. Used for latent
// inspection output.
void save_raw_tensor(const std::string& path, const std::vector<int>& shape,
                     const std::vector<float>& data);
void load_raw_tensor(const std::string& path, std::vector<int>& shape,
                     std::vector<float>& data);

}  // namespace coseq::util
