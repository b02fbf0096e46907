#include "cclap/checkpoint.hpp"

#include <cstdint>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <fstream>

#include "cclap/errors.hpp"

namespace cclap {

namespace {

constexpr char kMagic[] = "CCLAPCKPT";
constexpr size_t kMagicLen = 9;

void put_u32(std::ostream& os, uint32_t v) {
    unsigned char b[4] = {static_cast<unsigned char>(v), static_cast<unsigned char>(v >> 8),
                          static_cast<unsigned char>(v >> 16), static_cast<unsigned char>(v >> 24)};
    os.write(reinterpret_cast<const char*>(b), 4);
}

void put_u64(std::ostream& os, uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>(v >> (8 * i));
    os.write(reinterpret_cast<const char*>(b), 8);
}

uint32_t get_u32(std::istream& is) {
    unsigned char b[4];
    if (!is.read(reinterpret_cast<char*>(b), 4)) throw IoError("checkpoint: truncated");
    return b[0] | (uint32_t(b[1]) << 8) | (uint32_t(b[2]) << 16) | (uint32_t(b[3]) << 24);
}

uint64_t get_u64(std::istream& is) {
    unsigned char b[8];
    if (!is.read(reinterpret_cast<char*>(b), 8)) throw IoError("checkpoint: truncated");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(b[i]) << (8 * i);
    return v;
}

static_assert(sizeof(float) == 4, "f32 payload assumes 4-byte float");

void put_f32(std::ostream& os, float f) {
    uint32_t v;
    std::memcpy(&v, &f, 4);
    put_u32(os, v);
}

float get_f32(std::istream& is) {
    uint32_t v = get_u32(is);
    float f;
    std::memcpy(&f, &v, 4);
    return f;
}

}  // namespace

void save_checkpoint(const std::string& path, const TensorMap& tensors) {
    namespace fs = std::filesystem;
    std::string tmp = path + ".tmp";
    {
        std::ofstream os(tmp, std::ios::binary);
        if (!os) throw IoError("checkpoint: cannot open for write: " + tmp);
        os.write(kMagic, kMagicLen);
        put_u32(os, kCheckpointVersion);
        put_u32(os, static_cast<uint32_t>(tensors.size()));
        for (const auto& [name, t] : tensors) {
            put_u32(os, static_cast<uint32_t>(name.size()));
            os.write(name.data(), static_cast<std::streamsize>(name.size()));
            put_u32(os, static_cast<uint32_t>(t.shape.size()));
            for (int e : t.shape) put_u64(os, static_cast<uint64_t>(e));
            for (size_t i = 0; i < t.numel(); ++i) put_f32(os, (*t.data)[i]);
        }
        if (!os) throw IoError("checkpoint: write failed: " + tmp);
    }
    std::error_code ec;
    fs::rename(tmp, path, ec);
    if (ec) throw IoError("checkpoint: rename failed: " + ec.message());
}

TensorMap load_checkpoint(const std::string& path) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw IoError("checkpoint: cannot open: " + path);
    char magic[kMagicLen];
    if (!is.read(magic, kMagicLen) || std::memcmp(magic, kMagic, kMagicLen) != 0)
        throw IoError("checkpoint: bad magic in " + path);
    uint32_t version = get_u32(is);
    if (version != kCheckpointVersion) throw IoError("checkpoint: unsupported version");
    uint32_t count = get_u32(is);
    TensorMap out;
    for (uint32_t i = 0; i < count; ++i) {
        uint32_t name_len = get_u32(is);
        std::string name(name_len, '\0');
        if (!is.read(name.data(), name_len)) throw IoError("checkpoint: truncated name");
        uint32_t rank = get_u32(is);
        std::vector<int> shape(rank);
        for (uint32_t r = 0; r < rank; ++r) shape[r] = static_cast<int>(get_u64(is));
        Tensor<float> t(shape);
        for (size_t j = 0; j < t.numel(); ++j) (*t.data)[j] = get_f32(is);
        out.emplace(std::move(name), std::move(t));
    }
    return out;
}

void merge_into_checkpoint(const std::string& path, const std::string& prefix,
                           const TensorMap& tensors) {
    TensorMap all;
    if (std::filesystem::exists(path)) {
        all = load_checkpoint(path);
        for (auto it = all.begin(); it != all.end();) {
            if (it->first.rfind(prefix + "/", 0) == 0)
                it = all.erase(it);
            else
                ++it;
        }
    }
    for (const auto& [name, t] : tensors) all[prefix + "/" + name] = t;
    save_checkpoint(path, all);
}

TensorMap with_prefix_stripped(const TensorMap& all, const std::string& prefix) {
    TensorMap out;
    const std::string p = prefix + "/";
    for (const auto& [name, t] : all)
        if (name.rfind(p, 0) == 0) out[name.substr(p.size())] = t;
    return out;
}

}  // namespace cclap
