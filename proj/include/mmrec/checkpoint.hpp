#pragma once

#include <cstdint>
#include <fstream>
#include <string>
#include <vector>

#include "mmrec/error.hpp"
#include "mmrec/features.hpp"
#include "mmrec/model.hpp"

namespace mmrec {

/// Trained model plus the metadata needed to resume or audit a run.
/// File layout (little-endian): magic "MMCK", version u32, six u64 dims,
/// tensor count u32, then per tensor: name (u16 length + UTF-8), rank u8,
/// shape u64 each, float32 payload; finally epoch u32, best validation
/// recall f64, and a u32-length-prefixed config echo string.
struct Checkpoint {
    ModelParams params;
    std::uint32_t epoch = 0;
    double best_val_recall10 = 0.0;
    std::string config_echo;
};

inline constexpr std::uint32_t kCheckpointVersion = 1;

inline void save_checkpoint(const std::string& path, const Checkpoint& ckpt) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot open " + path + " for writing");
    out.write("MMCK", 4);
    binio::write_u32(out, kCheckpointVersion);
    const ModelDims& d = ckpt.params.dims;
    for (std::int32_t dim : {d.n_users, d.n_items, d.embed_dim, d.img_dim, d.txt_dim, d.policy_hidden}) {
        binio::write_u64(out, static_cast<std::uint64_t>(dim));
    }
    auto refs = tensor_refs(const_cast<ModelParams&>(ckpt.params));
    binio::write_u32(out, static_cast<std::uint32_t>(refs.size()));
    for (const TensorRef& ref : refs) {
        binio::write_u16(out, static_cast<std::uint16_t>(ref.name.size()));
        binio::write_bytes(out, ref.name.data(), ref.name.size());
        out.put(static_cast<char>(ref.shape.size()));
        for (std::int64_t s : ref.shape) binio::write_u64(out, static_cast<std::uint64_t>(s));
        for (std::size_t e = 0; e < ref.size; ++e) {
            binio::write_f32(out, static_cast<float>(ref.data[e]));
        }
    }
    binio::write_u32(out, ckpt.epoch);
    binio::write_f64(out, ckpt.best_val_recall10);
    binio::write_u32(out, static_cast<std::uint32_t>(ckpt.config_echo.size()));
    binio::write_bytes(out, ckpt.config_echo.data(), ckpt.config_echo.size());
    if (!out) throw IoError("write failed for " + path);
}

inline Checkpoint load_checkpoint(const std::string& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw IoError("cannot open " + path);
    char magic[4];
    binio::read_bytes(in, magic, 4, "checkpoint magic");
    if (std::string_view(magic, 4) != "MMCK") {
        throw FormatError(path + ": not a checkpoint file (bad magic)");
    }
    const std::uint32_t version = binio::read_u32(in, "checkpoint version");
    if (version != kCheckpointVersion) {
        throw FormatError(path + ": unsupported checkpoint version " + std::to_string(version));
    }
    std::uint64_t raw_dims[6];
    for (auto& v : raw_dims) v = binio::read_u64(in, "checkpoint dims");
    for (std::uint64_t v : raw_dims) {
        if (v < 1 || v > (1ULL << 31)) {
            throw FormatError(path + ": implausible dimension " + std::to_string(v));
        }
    }
    ModelDims dims;
    dims.n_users = static_cast<std::int32_t>(raw_dims[0]);
    dims.n_items = static_cast<std::int32_t>(raw_dims[1]);
    dims.embed_dim = static_cast<std::int32_t>(raw_dims[2]);
    dims.img_dim = static_cast<std::int32_t>(raw_dims[3]);
    dims.txt_dim = static_cast<std::int32_t>(raw_dims[4]);
    dims.policy_hidden = static_cast<std::int32_t>(raw_dims[5]);

    Checkpoint ckpt;
    ckpt.params = make_param_shapes(dims);
    auto refs = tensor_refs(ckpt.params);
    const std::uint32_t count = binio::read_u32(in, "tensor count");
    if (count != refs.size()) {
        throw FormatError(path + ": expected " + std::to_string(refs.size()) + " tensors, found " +
                          std::to_string(count));
    }
    for (TensorRef& ref : refs) {
        const std::uint16_t name_len = binio::read_u16(in, "tensor name length");
        std::string name(name_len, '\0');
        binio::read_bytes(in, name.data(), name_len, "tensor name");
        if (name != ref.name) {
            throw FormatError(path + ": expected tensor '" + ref.name + "', found '" + name + "'");
        }
        char rank = 0;
        binio::read_bytes(in, &rank, 1, "tensor rank");
        if (static_cast<std::size_t>(rank) != ref.shape.size()) {
            throw FormatError(path + ": tensor '" + name + "' has rank " +
                              std::to_string(static_cast<int>(rank)) + ", expected " +
                              std::to_string(ref.shape.size()));
        }
        for (std::int64_t expected : ref.shape) {
            const std::uint64_t got = binio::read_u64(in, "tensor shape");
            if (got != static_cast<std::uint64_t>(expected)) {
                throw FormatError(path + ": tensor '" + name + "' shape mismatch");
            }
        }
        for (std::size_t e = 0; e < ref.size; ++e) {
            ref.data[e] = static_cast<double>(binio::read_f32(in, "tensor payload"));
        }
    }
    ckpt.epoch = binio::read_u32(in, "epoch");
    ckpt.best_val_recall10 = binio::read_f64(in, "best validation recall");
    const std::uint32_t echo_len = binio::read_u32(in, "config echo length");
    if (echo_len > (1U << 24)) throw FormatError(path + ": implausible config echo length");
    ckpt.config_echo.assign(echo_len, '\0');
    binio::read_bytes(in, ckpt.config_echo.data(), echo_len, "config echo");
    return ckpt;
}

}  // namespace mmrec
