#include "gnf/coder.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>

namespace gnf {

FreqTable FreqTable::uniform(size_t n_symbols) {
    std::vector<double> p(n_symbols, 1.0 / n_symbols);
    return quantize_probs(p);
}

FreqTable quantize_probs(const std::vector<double>& p) {
    const size_t n = p.size();
    if (n < 2 || n > FreqTable::kTotal / 2) throw BadDistribution("bad symbol count");
    double sum = 0.0;
    for (double x : p) {
        if (!(x >= -1e-9)) throw BadDistribution("negative probability");
        sum += x;
    }
    if (std::fabs(sum - 1.0) > 1e-6) throw BadDistribution("probabilities do not sum to 1");

    const double scale = static_cast<double>(FreqTable::kTotal - n);
    std::vector<uint32_t> freqs(n);
    std::vector<double> target(n);
    int64_t total = 0;
    for (size_t i = 0; i < n; ++i) {
        target[i] = std::max(0.0, p[i]) * scale;
        freqs[i] = static_cast<uint32_t>(std::max<int64_t>(1, std::llround(target[i])));
        total += freqs[i];
    }
    int64_t deficit = static_cast<int64_t>(FreqTable::kTotal) - total;
    // Largest-remainder correction: most underrepresented symbols absorb the
    // deficit (or give back the excess), index order breaking ties.
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), 0);
    std::stable_sort(order.begin(), order.end(), [&](size_t a, size_t b) {
        return (target[a] - freqs[a]) > (target[b] - freqs[b]);
    });
    size_t k = 0;
    while (deficit > 0) {
        freqs[order[k % n]] += 1;
        --deficit;
        ++k;
    }
    k = 0;
    while (deficit < 0) {
        size_t i = order[n - 1 - (k % n)];
        if (freqs[i] > 1) {
            freqs[i] -= 1;
            ++deficit;
        }
        ++k;
    }
    FreqTable t;
    t.freqs = std::move(freqs);
    t.cumulative.resize(n + 1);
    t.cumulative[0] = 0;
    for (size_t i = 0; i < n; ++i) t.cumulative[i + 1] = t.cumulative[i] + t.freqs[i];
    return t;
}

void RangeEncoder::shift_low() {
    uint32_t carry = static_cast<uint32_t>(low_ >> 48);
    if (low_ < 0xFF0000000000ULL || carry) {
        if (!first_) out_.push_back(static_cast<uint8_t>(cache_ + carry));
        first_ = false;
        while (pending_) {
            out_.push_back(static_cast<uint8_t>(0xFF + carry));
            --pending_;
        }
        cache_ = static_cast<uint8_t>(low_ >> 40);
    } else {
        ++pending_;
    }
    low_ = (low_ << 8) & kTopMask;
}

void RangeEncoder::encode(const FreqTable& table, size_t symbol) {
    uint64_t r = range_ / FreqTable::kTotal;
    low_ += r * table.cum_low(symbol);
    range_ = r * table.freq(symbol);
    while (range_ < kBot) {
        range_ <<= 8;
        shift_low();
    }
}

Bytes RangeEncoder::finish() {
    for (int i = 0; i < 7; ++i) shift_low();
    return std::move(out_);
}

RangeDecoder::RangeDecoder(const Bytes& data) : data_(data) {
    for (int i = 0; i < 6; ++i) code_ = (code_ << 8) | next_byte();
}

uint8_t RangeDecoder::next_byte() {
    return pos_ < data_.size() ? data_[pos_++] : 0;
}

size_t RangeDecoder::decode(const FreqTable& table) {
    uint64_t r = range_ / FreqTable::kTotal;
    uint64_t v = code_ / r;
    if (v >= FreqTable::kTotal) v = FreqTable::kTotal - 1;
    // locate the symbol whose cumulative interval contains v
    size_t sym = 0;
    while (sym + 1 < table.size() && table.cumulative[sym + 1] <= v) ++sym;
    code_ -= r * table.cum_low(sym);
    range_ = r * table.freq(sym);
    if (code_ >= range_) throw CorruptStream("code outside the decoded interval");
    while (range_ < kBot) {
        code_ = ((code_ << 8) | next_byte()) & kTopMask;
        range_ <<= 8;
    }
    return sym;
}

}  // namespace gnf
