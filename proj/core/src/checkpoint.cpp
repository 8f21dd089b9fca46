#include "s3l/checkpoint.hpp"

#include <cstring>
#include <fstream>

namespace fs = std::filesystem;

namespace s3l {

namespace {

constexpr char kMagic[4] = {'S', '3', 'L', '1'};

void put_u32(std::ostream& out, uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& out, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    out.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& in) {
    unsigned char b[4];
    in.read(reinterpret_cast<char*>(b), 4);
    S3L_CHECK(in.gcount() == 4, "checkpoint: truncated");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<uint32_t>(b[i]) << (8 * i);
    return v;
}

uint64_t get_u64(std::istream& in) {
    unsigned char b[8];
    in.read(reinterpret_cast<char*>(b), 8);
    S3L_CHECK(in.gcount() == 8, "checkpoint: truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<uint64_t>(b[i]) << (8 * i);
    return v;
}

}  // namespace

const Tensor* Checkpoint::find(const std::string& name) const {
    for (const auto& [n, t] : tensors)
        if (n == name) return &t;
    return nullptr;
}

void save_checkpoint(const Checkpoint& ckpt, const fs::path& path) {
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    S3L_CHECK(out.good(), "save_checkpoint: cannot write ", path.string());
    out.write(kMagic, 4);
    put_u32(out, Checkpoint::kVersion);
    put_u64(out, ckpt.spec_digest);
    put_u64(out, ckpt.stage);
    put_u64(out, ckpt.epoch);
    put_u64(out, ckpt.rng_seed);
    put_u64(out, ckpt.queue_ptr);
    put_u64(out, ckpt.queue_fill);
    put_u32(out, static_cast<uint32_t>(ckpt.tensors.size()));
    for (const auto& [name, t] : ckpt.tensors) {
        put_u32(out, static_cast<uint32_t>(name.size()));
        out.write(name.data(), static_cast<std::streamsize>(name.size()));
        out.put(t.dtype() == DType::F32 ? 0 : 1);
        put_u32(out, static_cast<uint32_t>(t.rank()));
        for (int64_t d : t.shape()) put_u64(out, static_cast<uint64_t>(d));
        uint64_t bytes = static_cast<uint64_t>(t.numel()) * dtype_size(t.dtype());
        put_u64(out, bytes);
        if (t.dtype() == DType::F32) {
            for (int64_t i = 0; i < t.numel(); ++i) {
                float v = t.f32()[i];
                uint32_t u;
                std::memcpy(&u, &v, 4);
                put_u32(out, u);
            }
        } else {
            for (int64_t i = 0; i < t.numel(); ++i) {
                double v = t.f64()[i];
                uint64_t u;
                std::memcpy(&u, &v, 8);
                put_u64(out, u);
            }
        }
    }
    S3L_CHECK(out.good(), "save_checkpoint: write failed for ", path.string());
}

Checkpoint load_checkpoint(const fs::path& path) {
    std::ifstream in(path, std::ios::binary);
    S3L_CHECK(in.good(), "load_checkpoint: cannot open ", path.string());
    char magic[4];
    in.read(magic, 4);
    S3L_CHECK(in.gcount() == 4 && std::memcmp(magic, kMagic, 4) == 0,
              "load_checkpoint: bad magic in ", path.string());
    uint32_t version = get_u32(in);
    S3L_CHECK(version == Checkpoint::kVersion, "load_checkpoint: unsupported version ", version);

    Checkpoint ckpt;
    ckpt.spec_digest = get_u64(in);
    ckpt.stage = get_u64(in);
    ckpt.epoch = get_u64(in);
    ckpt.rng_seed = get_u64(in);
    ckpt.queue_ptr = get_u64(in);
    ckpt.queue_fill = get_u64(in);
    uint32_t count = get_u32(in);
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = get_u32(in);
        std::string name(name_len, '\0');
        in.read(name.data(), name_len);
        S3L_CHECK(in.gcount() == static_cast<std::streamsize>(name_len), "checkpoint: truncated");
        int dt = in.get();
        S3L_CHECK(dt == 0 || dt == 1, "load_checkpoint: bad dtype code ", dt);
        uint32_t rank = get_u32(in);
        std::vector<int64_t> shape(rank);
        for (uint32_t d = 0; d < rank; ++d) shape[d] = static_cast<int64_t>(get_u64(in));
        uint64_t bytes = get_u64(in);
        Tensor t = Tensor::zeros(shape, dt == 0 ? DType::F32 : DType::F64);
        S3L_CHECK(bytes == static_cast<uint64_t>(t.numel()) * dtype_size(t.dtype()),
                  "load_checkpoint: byte length disagrees with shape for ", name);
        if (dt == 0)
            for (int64_t k = 0; k < t.numel(); ++k) {
                uint32_t u = get_u32(in);
                float v;
                std::memcpy(&v, &u, 4);
                t.f32()[k] = v;
            }
        else
            for (int64_t k = 0; k < t.numel(); ++k) {
                uint64_t u = get_u64(in);
                double v;
                std::memcpy(&v, &u, 8);
                t.f64()[k] = v;
            }
        ckpt.tensors.emplace_back(std::move(name), std::move(t));
    }
    return ckpt;
}

void require_digest(const Checkpoint& ckpt, const BackboneSpec& spec) {
    S3L_CHECK(ckpt.spec_digest == spec.digest(),
              "checkpoint: backbone spec digest mismatch (checkpoint ", ckpt.spec_digest,
              ", config ", spec.digest(), ")");
}

void pack_network(Checkpoint& ckpt, const Network& net, const std::string& prefix) {
    for (const auto& e : net.entries())
        ckpt.tensors.emplace_back(prefix + e.name, e.tensor.clone());
}

void unpack_network(const Checkpoint& ckpt, Network& net, const std::string& prefix) {
    for (auto& e : net.entries()) {
        const Tensor* src = ckpt.find(prefix + e.name);
        S3L_CHECK(src, "checkpoint: missing tensor ", prefix + e.name);
        S3L_CHECK(src->shape() == e.tensor.shape(), "checkpoint: shape mismatch for ",
                  prefix + e.name);
        e.tensor.copy_values_from(*src);
    }
}

}  // namespace s3l
