#pragma once

#include <cstdint>
#include <cstring>
#include <istream>
#include <ostream>
#include <string>

#include "mars/errors.hpp"

namespace mars::detail {

inline void write_u64_le(std::ostream& os, std::uint64_t v) {
    unsigned char b[8];
    for (int i = 0; i < 8; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 8);
}

inline void write_u32_le(std::ostream& os, std::uint32_t v) {
    unsigned char b[4];
    for (int i = 0; i < 4; ++i) b[i] = static_cast<unsigned char>((v >> (8 * i)) & 0xFF);
    os.write(reinterpret_cast<const char*>(b), 4);
}

inline void write_f64_le(std::ostream& os, double v) {
    std::uint64_t bits;
    std::memcpy(&bits, &v, 8);
    write_u64_le(os, bits);
}

inline void write_f32_le(std::ostream& os, float v) {
    std::uint32_t bits;
    std::memcpy(&bits, &v, 4);
    write_u32_le(os, bits);
}

inline std::uint64_t read_u64_le(std::istream& is, const std::string& what) {
    unsigned char b[8];
    is.read(reinterpret_cast<char*>(b), 8);
    if (!is) throw DataError("truncated file while reading " + what);
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(b[i]) << (8 * i);
    return v;
}

inline std::uint32_t read_u32_le(std::istream& is, const std::string& what) {
    unsigned char b[4];
    is.read(reinterpret_cast<char*>(b), 4);
    if (!is) throw DataError("truncated file while reading " + what);
    std::uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::uint32_t>(b[i]) << (8 * i);
    return v;
}

inline double read_f64_le(std::istream& is, const std::string& what) {
    std::uint64_t bits = read_u64_le(is, what);
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
}

inline float read_f32_le(std::istream& is, const std::string& what) {
    std::uint32_t bits = read_u32_le(is, what);
    float v;
    std::memcpy(&v, &bits, 4);
    return v;
}

// Reads characters up to '\n' (consumed, not returned).
inline std::string read_header_line(std::istream& is, const std::string& what) {
    std::string line;
    if (!std::getline(is, line)) throw DataError("missing header line in " + what);
    if (!line.empty() && line.back() == '\r') line.pop_back();
    return line;
}

} // namespace mars::detail
