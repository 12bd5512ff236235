#include "nn/checkpoint.hpp"

#include <fstream>

#include "util/binio.hpp"
#include "util/errors.hpp"

namespace coseq::nn {

static const char kMagic[] = "COSEQ1";

void save_checkpoint(const std::string& path, const std::vector<NamedTensor>& tensors) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw IoError("save_checkpoint: cannot open " + path);
    f.write(kMagic, 6);
    for (const auto& nt : tensors) {
        util::write_u32(f, static_cast<uint32_t>(nt.name.size()));
        f.write(nt.name.data(), static_cast<std::streamsize>(nt.name.size()));
        util::write_u32(f, static_cast<uint32_t>(nt.tensor.shape.size()));
        for (int d : nt.tensor.shape) util::write_u32(f, static_cast<uint32_t>(d));
        util::write_f32_array(f, nt.tensor.data.data(), nt.tensor.data.size());
    }
    if (!f) throw IoError("save_checkpoint: short write to " + path);
}

std::map<std::string, Tensor> load_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw IoError("load_checkpoint: cannot open " + path);
    char magic[6];
    f.read(magic, 6);
    if (!f || std::string(magic, 6) != kMagic) {
        throw FormatError("load_checkpoint: bad magic in " + path);
    }
    std::map<std::string, Tensor> out;
    while (true) {
        f.peek();
        if (f.eof()) break;
        uint32_t name_len = util::read_u32(f);
        std::string name(name_len, '\0');
        f.read(name.data(), name_len);
        if (!f) throw FormatError("load_checkpoint: truncated name in " + path);
        uint32_t rank = util::read_u32(f);
        std::vector<int> shape(rank);
        size_t numel = 1;
        for (uint32_t i = 0; i < rank; ++i) {
            shape[i] = static_cast<int>(util::read_u32(f));
            numel *= static_cast<size_t>(shape[i]);
        }
        std::vector<float> data(numel);
        util::read_f32_array(f, data.data(), numel);
        out.emplace(std::move(name), Tensor(std::move(shape), std::move(data)));
    }
    return out;
}

const Tensor& require_tensor(const std::map<std::string, Tensor>& ckpt,
                             const std::string& name) {
    auto it = ckpt.find(name);
    if (it == ckpt.end()) throw FormatError("checkpoint: missing tensor '" + name + "'");
    return it->second;
}

float require_scalar(const std::map<std::string, Tensor>& ckpt, const std::string& name) {
    const Tensor& t = require_tensor(ckpt, name);
    if (t.numel() != 1) throw FormatError("checkpoint: '" + name + "' is not scalar");
    return t.data[0];
}

}  // namespace coseq::nn
