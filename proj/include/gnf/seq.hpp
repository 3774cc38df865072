#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "gnf/common.hpp"

namespace gnf {

// Fixed project-wide base mapping. Never configurable per file.
enum : uint8_t { BASE_A = 0, BASE_C = 1, BASE_G = 2, BASE_T = 3, BASE_N = 4 };

inline char base_to_char(uint8_t code) {
    static const char tab[5] = {'A', 'C', 'G', 'T', 'N'};
    return tab[code];
}

// Returns 0..4, or 0xff for characters outside the alphabet.
inline uint8_t char_to_base(char c) {
    switch (c) {
        case 'A': case 'a': return BASE_A;
        case 'C': case 'c': return BASE_C;
        case 'G': case 'g': return BASE_G;
        case 'T': case 't': return BASE_T;
        case 'N': case 'n': return BASE_N;
        default: return 0xff;
    }
}

struct BaseSeq {
    std::string id;
    std::vector<uint8_t> bases;  // codes 0..4

    size_t size() const { return bases.size(); }
    bool operator==(const BaseSeq& o) const = default;

    std::string to_string() const {
        std::string s;
        s.reserve(bases.size());
        for (uint8_t b : bases) s.push_back(base_to_char(b));
        return s;
    }
    static BaseSeq from_string(const std::string& id, const std::string& s) {
        BaseSeq q;
        q.id = id;
        q.bases.reserve(s.size());
        for (size_t i = 0; i < s.size(); ++i) {
            uint8_t b = char_to_base(s[i]);
            if (b == 0xff) throw UnknownBase(i, s[i]);
            q.bases.push_back(b);
        }
        return q;
    }
};

struct FastaRecord {
    std::string header;  // text after '>' with no newline
    BaseSeq seq;
    bool operator==(const FastaRecord& o) const = default;
};

std::vector<FastaRecord> parse_fasta(const std::string& content);
std::string write_fasta(const std::vector<FastaRecord>& records, size_t line_width = 70);

// 4 bases per byte, base i in bits (6 - 2*(i mod 4))..  Big-endian within byte.
Bytes pack_2bit(const BaseSeq& frag);
BaseSeq unpack_2bit(const Bytes& bytes, size_t length);

// 3 bits per base, codes 0..4; used when N travels in-stream.
Bytes pack_3bit(const BaseSeq& frag);
BaseSeq unpack_3bit(const Bytes& bytes, size_t length);

struct DatasetSplit {
    std::vector<FastaRecord> train, val, test;
};
DatasetSplit split_dataset(const std::vector<FastaRecord>& records,
                           double train_ratio, double val_ratio, double test_ratio,
                           uint64_t seed);

}  // namespace gnf
