#pragma once

#include <cstdint>
#include <cstddef>
#include <stdexcept>
#include <string>
#include <vector>

namespace gnf {

using Bytes = std::vector<uint8_t>;

// Error hierarchy. Every failure mode named in the module contracts maps to
// one of these so callers (and the CLI) can distinguish them.
struct Error : std::runtime_error {
    explicit Error(const std::string& msg) : std::runtime_error(msg) {}
};

struct ParseError : Error { using Error::Error; };
struct UnknownBase : ParseError {
    size_t position;
    char ch;
    UnknownBase(size_t pos, char c)
        : ParseError("unknown base '" + std::string(1, c) + "' at position " + std::to_string(pos)),
          position(pos), ch(c) {}
};
struct EmptyFile : ParseError { using ParseError::ParseError; };
struct ContainsN : Error { using Error::Error; };
struct LengthMismatch : Error { using Error::Error; };
struct LengthNotMultiple : Error { using Error::Error; };
struct AllN : Error { using Error::Error; };
struct TooShort : Error { using Error::Error; };
struct ShapeMismatch : Error { using Error::Error; };
struct NotScalar : Error { using Error::Error; };
struct NonFinite : Error { using Error::Error; };
struct TargetOutOfRange : Error { using Error::Error; };
struct TokenOutOfRange : Error { using Error::Error; };
struct BadContextLength : Error { using Error::Error; };
struct BadDistribution : Error { using Error::Error; };
struct CorruptStream : Error { using Error::Error; };
struct BadMagic : Error { using Error::Error; };
struct HashMismatch : Error { using Error::Error; };
struct VersionUnsupported : Error { using Error::Error; };
struct ModelMismatch : Error { using Error::Error; };
struct CrcMismatch : Error { using Error::Error; };
struct MismatchError : Error {
    size_t position;
    MismatchError(size_t pos, const std::string& what)
        : Error(what + " at position " + std::to_string(pos)), position(pos) {}
};

// LEB128-style unsigned varint, used for run lengths and header fields.
inline void put_varint(Bytes& out, uint64_t v) {
    while (v >= 0x80) {
        out.push_back(static_cast<uint8_t>(v) | 0x80);
        v >>= 7;
    }
    out.push_back(static_cast<uint8_t>(v));
}

inline uint64_t get_varint(const Bytes& in, size_t& pos) {
    uint64_t v = 0;
    int shift = 0;
    while (true) {
        if (pos >= in.size()) throw CorruptStream("truncated varint");
        uint8_t b = in[pos++];
        v |= uint64_t(b & 0x7f) << shift;
        if (!(b & 0x80)) return v;
        shift += 7;
        if (shift > 63) throw CorruptStream("varint overflow");
    }
}

inline void put_u16(Bytes& out, uint16_t v) {
    out.push_back(v & 0xff);
    out.push_back((v >> 8) & 0xff);
}
inline void put_u32(Bytes& out, uint32_t v) {
    for (int i = 0; i < 4; ++i) out.push_back((v >> (8 * i)) & 0xff);
}
inline void put_u64(Bytes& out, uint64_t v) {
    for (int i = 0; i < 8; ++i) out.push_back((v >> (8 * i)) & 0xff);
}
inline uint16_t get_u16(const Bytes& in, size_t& pos) {
    if (pos + 2 > in.size()) throw CorruptStream("truncated u16");
    uint16_t v = uint16_t(in[pos]) | uint16_t(in[pos + 1]) << 8;
    pos += 2;
    return v;
}
inline uint32_t get_u32(const Bytes& in, size_t& pos) {
    if (pos + 4 > in.size()) throw CorruptStream("truncated u32");
    uint32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= uint32_t(in[pos + i]) << (8 * i);
    pos += 4;
    return v;
}
inline uint64_t get_u64(const Bytes& in, size_t& pos) {
    if (pos + 8 > in.size()) throw CorruptStream("truncated u64");
    uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= uint64_t(in[pos + i]) << (8 * i);
    pos += 8;
    return v;
}

uint32_t crc32_of(const Bytes& data);
std::vector<uint8_t> sha256_of(const uint8_t* data, size_t len);

}  // namespace gnf
