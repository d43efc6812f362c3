#pragma once

#include <bit>
#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>
#include <vector>

#include "radhop/errors.hpp"

// Byte-level little-endian stream IO. All on-disk formats in this project are
// pinned little-endian regardless of host byte order.
namespace radhop::io {

inline void put_bytes(std::ostream& os, const void* p, std::size_t n) {
    os.write(static_cast<const char*>(p), static_cast<std::streamsize>(n));
    if (!os) throw IoError("write failed");
}

inline void get_bytes(std::istream& is, void* p, std::size_t n) {
    is.read(static_cast<char*>(p), static_cast<std::streamsize>(n));
    if (static_cast<std::size_t>(is.gcount()) != n) throw FormatError("truncated file");
}

inline void write_u8(std::ostream& os, std::uint8_t v) { put_bytes(os, &v, 1); }

inline std::uint8_t read_u8(std::istream& is) {
    std::uint8_t v;
    get_bytes(is, &v, 1);
    return v;
}

inline void write_u32(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    put_bytes(os, b, 4);
}

inline void write_u64(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    put_bytes(os, b, 8);
}

inline void write_i32(std::ostream& os, std::int32_t v) { write_u32(os, static_cast<std::uint32_t>(v)); }
inline void write_i64(std::ostream& os, std::int64_t v) { write_u64(os, static_cast<std::uint64_t>(v)); }
inline void write_f32(std::ostream& os, float v) { write_u32(os, std::bit_cast<std::uint32_t>(v)); }
inline void write_f64(std::ostream& os, double v) { write_u64(os, std::bit_cast<std::uint64_t>(v)); }

inline std::uint32_t read_u32(std::istream& is) {
    unsigned char b[4];
    get_bytes(is, b, 4);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint64_t read_u64(std::istream& is) {
    unsigned char b[8];
    get_bytes(is, b, 8);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline std::int32_t read_i32(std::istream& is) { return static_cast<std::int32_t>(read_u32(is)); }
inline std::int64_t read_i64(std::istream& is) { return static_cast<std::int64_t>(read_u64(is)); }
inline float read_f32(std::istream& is) { return std::bit_cast<float>(read_u32(is)); }
inline double read_f64(std::istream& is) { return std::bit_cast<double>(read_u64(is)); }

inline void write_string(std::ostream& os, const std::string& s) {
    write_u64(os, s.size());
    put_bytes(os, s.data(), s.size());
}

inline std::string read_string(std::istream& is, std::uint64_t max_len = (1ull << 30)) {
    std::uint64_t n = read_u64(is);
    if (n > max_len) throw FormatError("string length out of range");
    std::string s(static_cast<std::size_t>(n), '\0');
    if (n) get_bytes(is, s.data(), static_cast<std::size_t>(n));
    return s;
}

template <class T, class WriteOne>
void write_vec(std::ostream& os, const std::vector<T>& v, WriteOne one) {
    write_u64(os, v.size());
    for (const T& x : v) one(os, x);
}

inline void write_f64_vec(std::ostream& os, const std::vector<double>& v) {
    write_vec(os, v, [](std::ostream& o, double x) { write_f64(o, x); });
}
inline void write_f32_vec(std::ostream& os, const std::vector<float>& v) {
    write_vec(os, v, [](std::ostream& o, float x) { write_f32(o, x); });
}
inline void write_i32_vec(std::ostream& os, const std::vector<std::int32_t>& v) {
    write_vec(os, v, [](std::ostream& o, std::int32_t x) { write_i32(o, x); });
}

inline std::uint64_t read_len(std::istream& is, std::uint64_t max_len) {
    std::uint64_t n = read_u64(is);
    if (n > max_len) throw FormatError("array length out of range");
    return n;
}

inline std::vector<double> read_f64_vec(std::istream& is, std::uint64_t max_len = (1ull << 28)) {
    std::uint64_t n = read_len(is, max_len);
    std::vector<double> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = read_f64(is);
    return v;
}
inline std::vector<float> read_f32_vec(std::istream& is, std::uint64_t max_len = (1ull << 29)) {
    std::uint64_t n = read_len(is, max_len);
    std::vector<float> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = read_f32(is);
    return v;
}
inline std::vector<std::int32_t> read_i32_vec(std::istream& is, std::uint64_t max_len = (1ull << 29)) {
    std::uint64_t n = read_len(is, max_len);
    std::vector<std::int32_t> v(static_cast<std::size_t>(n));
    for (auto& x : v) x = read_i32(is);
    return v;
}

} // namespace radhop::io
