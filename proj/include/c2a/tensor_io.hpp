#pragma once

#include <cstdint>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <stdexcept>
#include <string>
#include <vector>

#include "c2a/tensor.hpp"

namespace c2a {

enum class IoErrorCode {
    open_failed,
    bad_magic,
    bad_version,
    bad_dtype,
    bad_dims,
    truncated,
    value_range,
    write_failed,
};

inline const char* io_error_code_name(IoErrorCode c) {
    switch (c) {
        case IoErrorCode::open_failed: return "open_failed";
        case IoErrorCode::bad_magic: return "bad_magic";
        case IoErrorCode::bad_version: return "bad_version";
        case IoErrorCode::bad_dtype: return "bad_dtype";
        case IoErrorCode::bad_dims: return "bad_dims";
        case IoErrorCode::truncated: return "truncated";
        case IoErrorCode::value_range: return "value_range";
        case IoErrorCode::write_failed: return "write_failed";
    }
    return "?";
}

struct io_error : std::runtime_error {
    IoErrorCode code;
    io_error(IoErrorCode c, const std::string& msg)
        : std::runtime_error(std::string("io error [") + io_error_code_name(c) + "]: " + msg),
          code(c) {}
};

enum class TensorDType : std::uint32_t { f64 = 0, u16 = 1 };

namespace detail {

inline void put_u32(std::string& buf, std::uint32_t v) {
    for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

inline void put_u64(std::string& buf, std::uint64_t v) {
    for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}

struct ByteReader {
    const std::string& buf;
    std::size_t pos = 0;
    const std::string path;

    bool take(void* out, std::size_t n) {
        if (pos + n > buf.size()) return false;
        std::memcpy(out, buf.data() + pos, n);
        pos += n;
        return true;
    }
    std::uint32_t u32() {
        std::uint32_t v = 0;
        if (!take(&v, 4)) throw io_error(IoErrorCode::truncated, path);
        return v;
    }
    std::uint64_t u64() {
        std::uint64_t v = 0;
        if (!take(&v, 8)) throw io_error(IoErrorCode::truncated, path);
        return v;
    }
};

}  // namespace detail

// Layout: "C2AT" | u32 version=1 | u32 dtype | u32 ndim | ndim x u64 dims |
// little-endian payload.
inline constexpr std::uint32_t TENSOR_FILE_VERSION = 1;

inline void write_tensor_file(const std::filesystem::path& path, const Tensor& t,
                              TensorDType dtype = TensorDType::f64) {
    if (t.dims.empty()) throw io_error(IoErrorCode::bad_dims, "empty dims list: " + path.string());
    std::string buf;
    buf.reserve(16 + 8 * t.dims.size() + t.size() * 8);
    buf += "C2AT";
    detail::put_u32(buf, TENSOR_FILE_VERSION);
    detail::put_u32(buf, static_cast<std::uint32_t>(dtype));
    detail::put_u32(buf, static_cast<std::uint32_t>(t.dims.size()));
    for (std::size_t d : t.dims) detail::put_u64(buf, static_cast<std::uint64_t>(d));
    if (dtype == TensorDType::f64) {
        static_assert(sizeof(double) == 8);
        const std::size_t off = buf.size();
        buf.resize(off + t.size() * 8);
        std::memcpy(buf.data() + off, t.data.data(), t.size() * 8);
    } else {
        for (double v : t.data) {
            if (v < 0.0 || v > 65535.0 || v != std::floor(v))
                throw io_error(IoErrorCode::value_range,
                               "value " + std::to_string(v) + " not representable as u16");
            const std::uint16_t u = static_cast<std::uint16_t>(v);
            buf.push_back(static_cast<char>(u & 0xff));
            buf.push_back(static_cast<char>((u >> 8) & 0xff));
        }
    }
    std::ofstream out(path, std::ios::binary | std::ios::trunc);
    if (!out) throw io_error(IoErrorCode::open_failed, path.string());
    out.write(buf.data(), static_cast<std::streamsize>(buf.size()));
    if (!out) throw io_error(IoErrorCode::write_failed, path.string());
}

inline Tensor read_tensor_file(const std::filesystem::path& path) {
    std::ifstream in(path, std::ios::binary);
    if (!in) throw io_error(IoErrorCode::open_failed, path.string());
    std::string buf((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
    detail::ByteReader r{buf, 0, path.string()};

    char magic[4];
    if (!r.take(magic, 4) || std::memcmp(magic, "C2AT", 4) != 0)
        throw io_error(IoErrorCode::bad_magic, path.string());
    const std::uint32_t version = r.u32();
    if (version != TENSOR_FILE_VERSION)
        throw io_error(IoErrorCode::bad_version,
                       path.string() + ": version " + std::to_string(version));
    const std::uint32_t dtype = r.u32();
    if (dtype > 1) throw io_error(IoErrorCode::bad_dtype, path.string());
    const std::uint32_t ndim = r.u32();
    if (ndim == 0 || ndim > 16) throw io_error(IoErrorCode::bad_dims, path.string());

    Tensor t;
    t.dims.resize(ndim);
    std::size_t total = 1;
    for (std::uint32_t i = 0; i < ndim; ++i) {
        t.dims[i] = static_cast<std::size_t>(r.u64());
        total *= t.dims[i];
    }
    t.data.resize(total);
    if (static_cast<TensorDType>(dtype) == TensorDType::f64) {
        const std::size_t want = total * 8;
        if (r.pos + want > buf.size()) throw io_error(IoErrorCode::truncated, path.string());
        std::memcpy(t.data.data(), buf.data() + r.pos, want);
        r.pos += want;
    } else {
        for (std::size_t i = 0; i < total; ++i) {
            std::uint16_t u = 0;
            if (!r.take(&u, 2)) throw io_error(IoErrorCode::truncated, path.string());
            t.data[i] = static_cast<double>(u);
        }
    }
    if (r.pos != buf.size())
        throw io_error(IoErrorCode::truncated, path.string() + ": trailing bytes");
    return t;
}

}  // namespace c2a
