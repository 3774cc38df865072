#include "gnf/seq.hpp"

#include <cctype>
#include <random>
#include <zlib.h>
#include <openssl/sha.h>

namespace gnf {

uint32_t crc32_of(const Bytes& data) {
    return static_cast<uint32_t>(::crc32(0L, data.data(), static_cast<uInt>(data.size())));
}

std::vector<uint8_t> sha256_of(const uint8_t* data, size_t len) {
    std::vector<uint8_t> digest(SHA256_DIGEST_LENGTH);
    SHA256(data, len, digest.data());
    return digest;
}

std::vector<FastaRecord> parse_fasta(const std::string& content) {
    std::vector<FastaRecord> records;
    size_t i = 0;
    const size_t n = content.size();
    while (i < n) {
        // skip leading whitespace between records
        while (i < n && std::isspace(static_cast<unsigned char>(content[i]))) ++i;
        if (i >= n) break;
        if (content[i] != '>') throw ParseError("expected '>' at file offset " + std::to_string(i));
        ++i;
        std::string header;
        while (i < n && content[i] != '\n') {
            if (content[i] != '\r') header.push_back(content[i]);
            ++i;
        }
        FastaRecord rec;
        rec.header = header;
        rec.seq.id = header;
        while (i < n && content[i] != '>') {
            char c = content[i];
            if (!std::isspace(static_cast<unsigned char>(c))) {
                uint8_t b = char_to_base(c);
                if (b == 0xff) {
                    // position is the index within this record's bases
                    throw UnknownBase(rec.seq.bases.size(), c);
                }
                rec.seq.bases.push_back(b);
            }
            ++i;
        }
        records.push_back(std::move(rec));
    }
    if (records.empty()) throw EmptyFile("no FASTA records found");
    return records;
}

std::string write_fasta(const std::vector<FastaRecord>& records, size_t line_width) {
    std::string out;
    for (const auto& rec : records) {
        out.push_back('>');
        out += rec.header;
        out.push_back('\n');
        const auto& bases = rec.seq.bases;
        for (size_t i = 0; i < bases.size(); i += line_width) {
            size_t end = std::min(i + line_width, bases.size());
            for (size_t j = i; j < end; ++j) out.push_back(base_to_char(bases[j]));
            out.push_back('\n');
        }
    }
    return out;
}

Bytes pack_2bit(const BaseSeq& frag) {
    Bytes out((frag.size() + 3) / 4, 0);
    for (size_t i = 0; i < frag.size(); ++i) {
        uint8_t b = frag.bases[i];
        if (b >= 4) throw ContainsN("pack_2bit: base N at position " + std::to_string(i));
        out[i / 4] |= b << (6 - 2 * (i % 4));
    }
    return out;
}

BaseSeq unpack_2bit(const Bytes& bytes, size_t length) {
    if (bytes.size() != (length + 3) / 4)
        throw LengthMismatch("unpack_2bit: " + std::to_string(bytes.size()) + " bytes for length " +
                             std::to_string(length));
    BaseSeq seq;
    seq.bases.resize(length);
    for (size_t i = 0; i < length; ++i)
        seq.bases[i] = (bytes[i / 4] >> (6 - 2 * (i % 4))) & 3;
    return seq;
}

Bytes pack_3bit(const BaseSeq& frag) {
    Bytes out((frag.size() * 3 + 7) / 8, 0);
    for (size_t i = 0; i < frag.size(); ++i) {
        uint8_t b = frag.bases[i];
        size_t bit = i * 3;
        for (int k = 0; k < 3; ++k) {
            if ((b >> (2 - k)) & 1) out[(bit + k) / 8] |= 0x80 >> ((bit + k) % 8);
        }
    }
    return out;
}

BaseSeq unpack_3bit(const Bytes& bytes, size_t length) {
    if (bytes.size() != (length * 3 + 7) / 8)
        throw LengthMismatch("unpack_3bit: size mismatch");
    BaseSeq seq;
    seq.bases.resize(length);
    for (size_t i = 0; i < length; ++i) {
        uint8_t b = 0;
        size_t bit = i * 3;
        for (int k = 0; k < 3; ++k)
            b = (b << 1) | ((bytes[(bit + k) / 8] >> (7 - (bit + k) % 8)) & 1);
        if (b > 4) throw CorruptStream("unpack_3bit: code out of range");
        seq.bases[i] = b;
    }
    return seq;
}

DatasetSplit split_dataset(const std::vector<FastaRecord>& records,
                           double train_ratio, double val_ratio, double test_ratio,
                           uint64_t seed) {
    double sum = train_ratio + val_ratio + test_ratio;
    if (sum < 0.999 || sum > 1.001) throw Error("split ratios must sum to 1");
    std::vector<size_t> order(records.size());
    for (size_t i = 0; i < order.size(); ++i) order[i] = i;
    // explicit Fisher-Yates so the shuffle is identical across standard libraries
    std::mt19937_64 rng(seed);
    for (size_t i = order.size(); i > 1; --i) {
        size_t j = rng() % i;
        std::swap(order[i - 1], order[j]);
    }
    size_t n = records.size();
    size_t n_val = static_cast<size_t>(val_ratio * n);
    size_t n_test = static_cast<size_t>(test_ratio * n);
    size_t n_train = n - n_val - n_test;  // remainder goes to train
    DatasetSplit split;
    for (size_t i = 0; i < n; ++i) {
        const auto& r = records[order[i]];
        if (i < n_train) split.train.push_back(r);
        else if (i < n_train + n_val) split.val.push_back(r);
        else split.test.push_back(r);
    }
    return split;
}

}  // namespace gnf
