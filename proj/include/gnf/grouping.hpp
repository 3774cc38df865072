#pragma once

#include <cstdint>
#include <vector>

#include "gnf/seq.hpp"

namespace gnf {

struct GroupingConfig {
    uint64_t group_len = 213000;  // bases per fixed-length group
    uint32_t context_len = 64;    // bases of model context
    uint32_t ngram = 2;           // bases per token
    uint32_t byte_group = 4;      // adjacent embeddings concatenated per encoder position

    void validate() const {
        if (ngram == 0 || byte_group == 0) throw Error("ngram and byte_group must be positive");
        if (context_len % ngram != 0) throw Error("context_len must be a multiple of ngram");
        if ((context_len / ngram) % byte_group != 0)
            throw Error("token context must be a multiple of byte_group");
        if (group_len <= context_len) throw Error("group_len must exceed context_len");
    }
};

struct FixedGroup {
    size_t index = 0;
    BaseSeq initial_fragment;  // context_len bases, N-free in side-channel mode
    BaseSeq body;              // bases to be entropy-coded
};

// Run-length record of N positions in the original sequence.
struct NSideChannel {
    std::vector<std::pair<uint64_t, uint64_t>> runs;  // (start, length), sorted, non-overlapping
    bool operator==(const NSideChannel& o) const = default;
};

std::pair<BaseSeq, NSideChannel> extract_n(const BaseSeq& seq);
BaseSeq reinsert_n(const BaseSeq& pure, const NSideChannel& side);

std::vector<FixedGroup> split_fixed(const BaseSeq& pure_seq, const GroupingConfig& cfg);

struct TokenSeq {
    std::vector<uint16_t> tokens;
    uint32_t ngram = 1;
    uint32_t alphabet = 4;  // 4, or 5 when N travels in-stream
};

TokenSeq ngram_tokenize(const BaseSeq& bases, uint32_t ngram, uint32_t alphabet = 4);
BaseSeq ngram_detokenize(const TokenSeq& tokens);

inline uint32_t vocab_size(uint32_t ngram, uint32_t alphabet) {
    uint32_t v = 1;
    for (uint32_t i = 0; i < ngram; ++i) v *= alphabet;
    return v;
}

}  // namespace gnf
