#pragma once

#include <cstdint>
#include <cstring>
#include <fstream>
#include <map>
#include <stdexcept>
#include <string>
#include <vector>

#include "cvae/tensor.hpp"

namespace cvae {

struct FormatError : std::runtime_error {
    using std::runtime_error::runtime_error;
};

namespace detail {

inline void put_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4] = {(unsigned char)(v & 0xff), (unsigned char)(v >> 8 & 0xff),
                          (unsigned char)(v >> 16 & 0xff),
                          (unsigned char)(v >> 24 & 0xff)};
    os.write((const char*)b, 4);
}

inline void put_f64(std::ostream& os, double v) {
    std::uint64_t u;
    std::memcpy(&u, &v, 8);
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = (unsigned char)(u >> (8 * i) & 0xff);
    os.write((const char*)b, 8);
}

inline std::uint32_t get_u32(std::istream& is, const char* what) {
    unsigned char b[4];
    if (!is.read((char*)b, 4))
        throw FormatError(std::string("checkpoint: truncated reading ") + what +
                          " at byte " + std::to_string((long)is.tellg() < 0
                                                           ? -1L
                                                           : (long)is.tellg()));
    return (std::uint32_t)b[0] | (std::uint32_t)b[1] << 8 |
           (std::uint32_t)b[2] << 16 | (std::uint32_t)b[3] << 24;
}

inline double get_f64(std::istream& is, const char* what) {
    unsigned char b[8];
    if (!is.read((char*)b, 8))
        throw FormatError(std::string("checkpoint: truncated reading ") + what);
    std::uint64_t u = 0;
    for (int i = 0; i < 8; ++i) u |= (std::uint64_t)b[i] << (8 * i);
    double v;
    std::memcpy(&v, &u, 8);
    return v;
}

}  // namespace detail

// "CVAE1" magic, little-endian u32 tensor count, then per tensor:
// u32 name length + UTF-8 name, u32 rank, extents as u32, raw f64 LE values.
// An optional trailing metadata block (u32 length + UTF-8 text) carries the
// run config and concept records.
struct Checkpoint {
    std::vector<std::pair<std::string, Tensor>> tensors;
    std::string metadata;

    const Tensor* find(const std::string& name) const {
        for (const auto& [n, t] : tensors)
            if (n == name) return &t;
        return nullptr;
    }
};

inline void write_checkpoint(std::ostream& os, const Checkpoint& ck) {
    os.write("CVAE1", 5);
    detail::put_u32(os, (std::uint32_t)ck.tensors.size());
    for (const auto& [name, t] : ck.tensors) {
        detail::put_u32(os, (std::uint32_t)name.size());
        os.write(name.data(), (std::streamsize)name.size());
        detail::put_u32(os, (std::uint32_t)t.rank());
        for (int e : t.shape) detail::put_u32(os, (std::uint32_t)e);
        for (double v : t.data) detail::put_f64(os, v);
    }
    detail::put_u32(os, (std::uint32_t)ck.metadata.size());
    os.write(ck.metadata.data(), (std::streamsize)ck.metadata.size());
}

inline void write_checkpoint(const std::string& path, const Checkpoint& ck) {
    std::ofstream f(path, std::ios::binary);
    if (!f) throw FormatError("checkpoint: cannot open " + path + " for writing");
    write_checkpoint(f, ck);
    if (!f) throw FormatError("checkpoint: write failed for " + path);
}

inline Checkpoint read_checkpoint(std::istream& is) {
    char magic[5];
    if (!is.read(magic, 5) || std::memcmp(magic, "CVAE1", 5) != 0)
        throw FormatError("checkpoint: bad magic at byte 0");
    Checkpoint ck;
    std::uint32_t count = detail::get_u32(is, "tensor count");
    for (std::uint32_t i = 0; i < count; ++i) {
        std::uint32_t nlen = detail::get_u32(is, "name length");
        std::string name(nlen, '\0');
        if (!is.read(name.data(), nlen))
            throw FormatError("checkpoint: truncated tensor name");
        std::uint32_t rank = detail::get_u32(is, "rank");
        if (rank > 8) throw FormatError("checkpoint: implausible rank");
        std::vector<int> shape(rank);
        std::size_t numel = 1;
        for (auto& e : shape) {
            e = (int)detail::get_u32(is, "extent");
            if (e <= 0) throw FormatError("checkpoint: non-positive extent");
            numel *= (std::size_t)e;
        }
        Tensor t(shape);
        for (std::size_t j = 0; j < numel; ++j)
            t.data[j] = detail::get_f64(is, "tensor values");
        ck.tensors.emplace_back(std::move(name), std::move(t));
    }
    // metadata block is optional for forward compatibility
    unsigned char b[4];
    if (is.read((char*)b, 4)) {
        std::uint32_t mlen = (std::uint32_t)b[0] | (std::uint32_t)b[1] << 8 |
                             (std::uint32_t)b[2] << 16 | (std::uint32_t)b[3] << 24;
        ck.metadata.resize(mlen);
        if (!is.read(ck.metadata.data(), mlen))
            throw FormatError("checkpoint: truncated metadata");
    }
    return ck;
}

inline Checkpoint read_checkpoint(const std::string& path) {
    std::ifstream f(path, std::ios::binary);
    if (!f) throw FormatError("checkpoint: cannot open " + path);
    return read_checkpoint(f);
}

}  // namespace cvae
