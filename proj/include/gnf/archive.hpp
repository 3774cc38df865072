#pragma once

#include <string>
#include <vector>

#include "gnf/coder.hpp"
#include "gnf/grouping.hpp"

namespace gnf {

enum class NMode : uint8_t { SideChannel = 0, InStream = 1 };
enum class ModelKind : uint8_t { Uniform = 0, OrderK = 1, Neural = 2 };

struct SequenceEntry {
    std::string id;
    uint64_t original_length = 0;  // bases including N
    uint64_t pure_length = 0;      // bases actually grouped (excludes N in side-channel mode)
    uint32_t seq_crc = 0;          // CRC-32 over the original base codes
    std::vector<Bytes> fragments;          // packed initial fragments, one per group
    std::vector<Bytes> tails;              // raw bases left over after the last whole token
    std::vector<uint8_t> tail_lens;        // base count per tail
    NSideChannel side;                     // empty when n_mode == InStream
    std::vector<uint64_t> payload_lengths; // per-group coded byte counts
};

struct ArchiveHeader {
    static constexpr char kMagic[4] = {'G', 'N', 'F', '1'};
    static constexpr uint16_t kVersion = 1;

    NMode n_mode = NMode::SideChannel;
    ModelKind model_kind = ModelKind::Uniform;
    uint8_t model_param = 0;                 // k for order-k models
    std::vector<uint8_t> fingerprint;        // 32 bytes, zero unless Neural
    GroupingConfig grouping;
    std::vector<SequenceEntry> sequences;

    Bytes serialize() const;                 // includes trailing CRC-32
    static ArchiveHeader parse(const Bytes& data, size_t& pos);
};

struct Archive {
    ArchiveHeader header;
    Bytes payload;  // concatenated group payloads, sequence-major

    Bytes to_bytes() const;
    static Archive from_bytes(const Bytes& data);
};

}  // namespace gnf
