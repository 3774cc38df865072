#include "gnf/grouping.hpp"

namespace gnf {

std::pair<BaseSeq, NSideChannel> extract_n(const BaseSeq& seq) {
    BaseSeq pure;
    pure.id = seq.id;
    pure.bases.reserve(seq.size());
    NSideChannel side;
    size_t i = 0;
    while (i < seq.size()) {
        if (seq.bases[i] == BASE_N) {
            size_t start = i;
            while (i < seq.size() && seq.bases[i] == BASE_N) ++i;
            side.runs.emplace_back(start, i - start);
        } else {
            pure.bases.push_back(seq.bases[i]);
            ++i;
        }
    }
    if (pure.bases.empty() && !seq.bases.empty())
        throw AllN("sequence contains only N bases");
    return {std::move(pure), std::move(side)};
}

BaseSeq reinsert_n(const BaseSeq& pure, const NSideChannel& side) {
    BaseSeq out;
    out.id = pure.id;
    size_t total = pure.size();
    for (const auto& [start, len] : side.runs) total += len;
    out.bases.reserve(total);
    size_t src = 0;
    size_t run = 0;
    for (size_t pos = 0; pos < total; ++pos) {
        if (run < side.runs.size() && pos == side.runs[run].first) {
            for (uint64_t k = 0; k < side.runs[run].second; ++k) out.bases.push_back(BASE_N);
            pos += side.runs[run].second - 1;
            ++run;
        } else {
            if (src >= pure.size()) throw CorruptStream("N side channel inconsistent with sequence");
            out.bases.push_back(pure.bases[src++]);
        }
    }
    if (src != pure.size()) throw CorruptStream("N side channel leaves unplaced bases");
    return out;
}

std::vector<FixedGroup> split_fixed(const BaseSeq& pure_seq, const GroupingConfig& cfg) {
    cfg.validate();
    const size_t len = pure_seq.size();
    if (len <= cfg.context_len)
        throw TooShort("sequence of " + std::to_string(len) + " bases is not longer than the context");
    std::vector<FixedGroup> groups;
    size_t n_groups = (len + cfg.group_len - 1) / cfg.group_len;
    for (size_t gi = 0; gi < n_groups; ++gi) {
        size_t begin = gi * cfg.group_len;
        size_t end = std::min(begin + cfg.group_len, len);
        FixedGroup g;
        g.index = gi;
        size_t frag_begin, frag_end, body_begin;
        if (end - begin > cfg.context_len) {
            frag_begin = begin;
            frag_end = begin + cfg.context_len;
            body_begin = frag_end;
        } else {
            // Tail group no longer than the context: borrow the preceding
            // context_len bases as fragment and code the whole span as body.
            frag_begin = begin - cfg.context_len;  // begin >= group_len > context_len here
            frag_end = begin;
            body_begin = begin;
        }
        g.initial_fragment.bases.assign(pure_seq.bases.begin() + frag_begin,
                                        pure_seq.bases.begin() + frag_end);
        g.body.bases.assign(pure_seq.bases.begin() + body_begin, pure_seq.bases.begin() + end);
        groups.push_back(std::move(g));
    }
    return groups;
}

TokenSeq ngram_tokenize(const BaseSeq& bases, uint32_t ngram, uint32_t alphabet) {
    if (ngram == 0) throw Error("ngram must be positive");
    if (bases.size() % ngram != 0)
        throw LengthNotMultiple("sequence length " + std::to_string(bases.size()) +
                                " not a multiple of " + std::to_string(ngram));
    TokenSeq out;
    out.ngram = ngram;
    out.alphabet = alphabet;
    out.tokens.reserve(bases.size() / ngram);
    for (size_t i = 0; i < bases.size(); i += ngram) {
        uint32_t tok = 0;
        for (uint32_t j = 0; j < ngram; ++j) {
            uint8_t b = bases.bases[i + j];
            if (b >= alphabet)
                throw ContainsN("base outside alphabet at position " + std::to_string(i + j));
            tok = tok * alphabet + b;  // big-endian
        }
        out.tokens.push_back(static_cast<uint16_t>(tok));
    }
    return out;
}

BaseSeq ngram_detokenize(const TokenSeq& tokens) {
    BaseSeq out;
    out.bases.reserve(tokens.tokens.size() * tokens.ngram);
    for (uint16_t tok : tokens.tokens) {
        uint32_t t = tok;
        std::vector<uint8_t> tmp(tokens.ngram);
        for (uint32_t j = tokens.ngram; j > 0; --j) {
            tmp[j - 1] = t % tokens.alphabet;
            t /= tokens.alphabet;
        }
        out.bases.insert(out.bases.end(), tmp.begin(), tmp.end());
    }
    return out;
}

}  // namespace gnf
