#pragma once

#include <map>
#include <string>
#include <vector>

#include "nn/tensor.hpp"

namespace coseq::nn {

// Versioned binary container shared by every trainable module. Layout:
// magic "COSEQ1", then one record per tensor:
//   u32 name_len, name bytes, u32 rank, u32 dims[rank], f32 payload (LE).
// Records run to end of file. Scalar metadata travels as 1-element tensors
// under "meta/..." names.

struct NamedTensor {
    std::string name;
    Tensor tensor;
};

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors);
std::map<std::string, Tensor> load_checkpoint(const std::string& path);

// lookup helpers
const Tensor& require_tensor(const std::map<std::string, Tensor>& ckpt,
                             const std::string& name);
float require_scalar(const std::map<std::string, Tensor>& ckpt, const std::string& name);

}  // namespace coseq::nn
