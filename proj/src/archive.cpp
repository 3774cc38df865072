#include "gnf/archive.hpp"

#include <cstring>

namespace gnf {

Bytes ArchiveHeader::serialize() const {
    Bytes out;
    out.insert(out.end(), kMagic, kMagic + 4);
    put_u16(out, kVersion);
    out.push_back(static_cast<uint8_t>(n_mode));
    out.push_back(static_cast<uint8_t>(model_kind));
    out.push_back(model_param);
    if (fingerprint.size() != 32) {
        for (int i = 0; i < 32; ++i) out.push_back(0);
    } else {
        out.insert(out.end(), fingerprint.begin(), fingerprint.end());
    }
    put_u64(out, grouping.group_len);
    put_u32(out, grouping.context_len);
    out.push_back(static_cast<uint8_t>(grouping.ngram));
    out.push_back(static_cast<uint8_t>(grouping.byte_group));
    put_varint(out, sequences.size());
    for (const auto& s : sequences) {
        put_varint(out, s.id.size());
        out.insert(out.end(), s.id.begin(), s.id.end());
        put_varint(out, s.original_length);
        put_varint(out, s.pure_length);
        put_u32(out, s.seq_crc);
        put_varint(out, s.fragments.size());
        for (size_t g = 0; g < s.fragments.size(); ++g) {
            put_varint(out, s.fragments[g].size());
            out.insert(out.end(), s.fragments[g].begin(), s.fragments[g].end());
            out.push_back(s.tail_lens[g]);
            out.insert(out.end(), s.tails[g].begin(), s.tails[g].end());
        }
        put_varint(out, s.side.runs.size());
        uint64_t prev_end = 0;
        for (const auto& [start, len] : s.side.runs) {
            put_varint(out, start - prev_end);
            put_varint(out, len);
            prev_end = start + len;
        }
        for (uint64_t pl : s.payload_lengths) put_varint(out, pl);
    }
    put_u32(out, crc32_of(out));
    return out;
}

ArchiveHeader ArchiveHeader::parse(const Bytes& data, size_t& pos) {
    size_t start = pos;
    if (data.size() < pos + 4 || std::memcmp(data.data() + pos, kMagic, 4) != 0)
        throw BadMagic("not a gnf archive");
    pos += 4;
    uint16_t version = get_u16(data, pos);
    if (version != kVersion) throw VersionUnsupported("archive version " + std::to_string(version));
    ArchiveHeader h;
    h.n_mode = static_cast<NMode>(data.at(pos++));
    h.model_kind = static_cast<ModelKind>(data.at(pos++));
    h.model_param = data.at(pos++);
    if (pos + 32 > data.size()) throw CorruptStream("truncated fingerprint");
    h.fingerprint.assign(data.begin() + pos, data.begin() + pos + 32);
    pos += 32;
    h.grouping.group_len = get_u64(data, pos);
    h.grouping.context_len = get_u32(data, pos);
    h.grouping.ngram = data.at(pos++);
    h.grouping.byte_group = data.at(pos++);
    uint64_t n_seqs = get_varint(data, pos);
    const uint32_t alphabet = h.n_mode == NMode::InStream ? 5 : 4;
    for (uint64_t i = 0; i < n_seqs; ++i) {
        SequenceEntry s;
        uint64_t id_len = get_varint(data, pos);
        if (pos + id_len > data.size()) throw CorruptStream("truncated id");
        s.id.assign(data.begin() + pos, data.begin() + pos + id_len);
        pos += id_len;
        s.original_length = get_varint(data, pos);
        s.pure_length = get_varint(data, pos);
        s.seq_crc = get_u32(data, pos);
        uint64_t n_groups = get_varint(data, pos);
        for (uint64_t g = 0; g < n_groups; ++g) {
            uint64_t fl = get_varint(data, pos);
            if (pos + fl > data.size()) throw CorruptStream("truncated fragment");
            s.fragments.emplace_back(data.begin() + pos, data.begin() + pos + fl);
            pos += fl;
            uint8_t tl = data.at(pos++);
            if (tl >= h.grouping.ngram) throw CorruptStream("tail longer than a token");
            size_t tb = alphabet == 5 ? (size_t(tl) * 3 + 7) / 8 : (size_t(tl) + 3) / 4;
            if (pos + tb > data.size()) throw CorruptStream("truncated tail");
            s.tail_lens.push_back(tl);
            s.tails.emplace_back(data.begin() + pos, data.begin() + pos + tb);
            pos += tb;
        }
        uint64_t n_runs = get_varint(data, pos);
        uint64_t prev_end = 0;
        for (uint64_t r = 0; r < n_runs; ++r) {
            uint64_t delta = get_varint(data, pos);
            uint64_t len = get_varint(data, pos);
            s.side.runs.emplace_back(prev_end + delta, len);
            prev_end = prev_end + delta + len;
        }
        for (uint64_t g = 0; g < n_groups; ++g) s.payload_lengths.push_back(get_varint(data, pos));
        h.sequences.push_back(std::move(s));
    }
    Bytes covered(data.begin() + start, data.begin() + pos);
    uint32_t crc = get_u32(data, pos);
    if (crc != crc32_of(covered)) throw CrcMismatch("archive header CRC mismatch");
    return h;
}

Bytes Archive::to_bytes() const {
    Bytes out = header.serialize();
    out.insert(out.end(), payload.begin(), payload.end());
    return out;
}

Archive Archive::from_bytes(const Bytes& data) {
    Archive a;
    size_t pos = 0;
    a.header = ArchiveHeader::parse(data, pos);
    uint64_t expected = 0;
    for (const auto& s : a.header.sequences)
        for (uint64_t pl : s.payload_lengths) expected += pl;
    if (data.size() - pos != expected)
        throw CorruptStream("payload size does not match header accounting");
    a.payload.assign(data.begin() + pos, data.end());
    return a;
}

}  // namespace gnf
