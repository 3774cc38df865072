#pragma once

#include <cstdint>
#include <vector>

#include "gnf/common.hpp"

namespace gnf {

// Integer-quantized probability table, total fixed at 2^16.
// Every symbol keeps frequency >= 1 so no prediction can produce an
// uncodable symbol.
struct FreqTable {
    std::vector<uint32_t> freqs;
    std::vector<uint32_t> cumulative;  // prefix sums, cumulative[i] = sum of freqs[0..i)

    static constexpr uint32_t kTotal = 1u << 16;

    static FreqTable uniform(size_t n_symbols);
    uint32_t cum_low(size_t sym) const { return cumulative[sym]; }
    uint32_t freq(size_t sym) const { return freqs[sym]; }
    size_t size() const { return freqs.size(); }
    bool operator==(const FreqTable& o) const = default;
};

FreqTable quantize_probs(const std::vector<double>& p);

// Renormalizing range coder. 48-bit active window, byte renormalization at
// 2^40, so the truncation loss per symbol is below 2^-24 bits.
class RangeEncoder {
public:
    void encode(const FreqTable& table, size_t symbol);
    Bytes finish();
    size_t bytes_pending() const { return out_.size(); }

private:
    static constexpr uint64_t kTopMask = (1ULL << 48) - 1;
    static constexpr uint64_t kBot = 1ULL << 40;
    uint64_t low_ = 0;
    uint64_t range_ = kTopMask;  // (0, 2^48)
    uint8_t cache_ = 0;
    bool first_ = true;
    uint64_t pending_ = 0;
    Bytes out_;
    void shift_low();
};

class RangeDecoder {
public:
    explicit RangeDecoder(const Bytes& data);
    size_t decode(const FreqTable& table);

private:
    static constexpr uint64_t kTopMask = (1ULL << 48) - 1;
    static constexpr uint64_t kBot = 1ULL << 40;
    const Bytes& data_;
    size_t pos_ = 0;
    uint64_t code_ = 0;
    uint64_t range_ = kTopMask;
    uint8_t next_byte();
};

}  // namespace gnf
