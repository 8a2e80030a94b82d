#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <string>
#include <vector>

#include "calidrop/model.hpp"

namespace calidrop {

// Versioned binary container: header (magic, version, config hash, seed),
// then one record per registry entry with shapes and raw little-endian values
// plus the momentum buffer (optimizer state). Parameter values are written in
// the scalar width of the instantiation.
namespace ckpt {
constexpr char kMagic[4] = {'C', 'D', 'C', 'K'};
constexpr std::uint32_t kVersion = 1;
}  // namespace ckpt

namespace detail {

template <class T>
void write_pod(std::ostream& os, const T& v) {
    os.write(reinterpret_cast<const char*>(&v), sizeof(T));
}

template <class T>
T read_pod(std::istream& is, const std::string& what) {
    T v{};
    if (!is.read(reinterpret_cast<char*>(&v), sizeof(T)))
        throw DataError("checkpoint truncated while reading " + what);
    return v;
}

}  // namespace detail

template <class S>
void save_checkpoint(const std::string& path, Model<S>& net, std::uint64_t config_hash,
                     std::uint64_t seed) {
    std::ofstream os(path, std::ios::binary);
    if (!os) throw DataError("cannot open checkpoint for writing: " + path);
    os.write(ckpt::kMagic, 4);
    detail::write_pod(os, ckpt::kVersion);
    detail::write_pod(os, config_hash);
    detail::write_pod(os, seed);
    detail::write_pod(os, static_cast<std::uint32_t>(sizeof(S)));
    auto params = net.params();
    detail::write_pod(os, static_cast<std::uint32_t>(params.size()));
    for (Param<S>* p : params) {
        detail::write_pod(os, static_cast<std::uint16_t>(p->name.size()));
        os.write(p->name.data(), static_cast<std::streamsize>(p->name.size()));
        detail::write_pod(os, static_cast<std::uint8_t>(p->value.ndim()));
        for (int d : p->value.shape) detail::write_pod(os, static_cast<std::int32_t>(d));
        os.write(reinterpret_cast<const char*>(p->value.data.data()),
                 static_cast<std::streamsize>(p->value.size() * sizeof(S)));
        os.write(reinterpret_cast<const char*>(p->momentum.data.data()),
                 static_cast<std::streamsize>(p->momentum.size() * sizeof(S)));
    }
    if (!os) throw DataError("write failure on checkpoint: " + path);
}

struct CheckpointHeader {
    std::uint64_t config_hash = 0;
    std::uint64_t seed = 0;
};

template <class S>
CheckpointHeader load_checkpoint(const std::string& path, Model<S>& net) {
    std::ifstream is(path, std::ios::binary);
    if (!is) throw DataError("cannot open checkpoint: " + path);
    char magic[4];
    if (!is.read(magic, 4) || std::memcmp(magic, ckpt::kMagic, 4) != 0)
        throw DataError("not a checkpoint file: " + path);
    if (detail::read_pod<std::uint32_t>(is, "version") != ckpt::kVersion)
        throw DataError("unsupported checkpoint version");
    CheckpointHeader hdr;
    hdr.config_hash = detail::read_pod<std::uint64_t>(is, "config hash");
    hdr.seed = detail::read_pod<std::uint64_t>(is, "seed");
    if (detail::read_pod<std::uint32_t>(is, "scalar width") != sizeof(S))
        throw DataError("checkpoint scalar width mismatch");
    const auto count = detail::read_pod<std::uint32_t>(is, "param count");
    auto params = net.params();
    if (count != params.size())
        throw DataError("checkpoint parameter count mismatch");
    for (Param<S>* p : params) {
        const auto nlen = detail::read_pod<std::uint16_t>(is, "name length");
        std::string name(nlen, '\0');
        if (!is.read(name.data(), nlen)) throw DataError("checkpoint truncated in name");
        const auto ndim = detail::read_pod<std::uint8_t>(is, "ndim");
        std::vector<int> shape(ndim);
        for (auto& d : shape) d = detail::read_pod<std::int32_t>(is, "extent");
        if (shape != p->value.shape)
            throw DataError("checkpoint shape mismatch for '" + name + "'");
        if (!is.read(reinterpret_cast<char*>(p->value.data.data()),
                     static_cast<std::streamsize>(p->value.size() * sizeof(S))) ||
            !is.read(reinterpret_cast<char*>(p->momentum.data.data()),
                     static_cast<std::streamsize>(p->momentum.size() * sizeof(S))))
            throw DataError("checkpoint truncated in payload of '" + name + "'");
        p->grad.fill(S(0));
    }
    return hdr;
}

// In-memory value snapshots for best-epoch selection.
template <class S>
std::vector<Tensor<S>> snapshot_values(Model<S>& net) {
    std::vector<Tensor<S>> out;
    for (Param<S>* p : net.params()) out.push_back(p->value);
    return out;
}

template <class S>
void restore_values(Model<S>& net, const std::vector<Tensor<S>>& snap) {
    auto params = net.params();
    if (snap.size() != params.size()) throw UsageError("snapshot size mismatch");
    for (size_t i = 0; i < params.size(); ++i) params[i]->value = snap[i];
}

}  // namespace calidrop
