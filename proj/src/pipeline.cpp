#include "gnf/pipeline.hpp"

#include <algorithm>
#include <atomic>
#include <chrono>
#include <functional>
#include <cstring>
#include <mutex>
#include <thread>

namespace gnf {

namespace {

using Clock = std::chrono::steady_clock;

double elapsed(Clock::time_point t0) {
    return std::chrono::duration<double>(Clock::now() - t0).count();
}

void parallel_for(size_t n, size_t workers, const std::function<void(size_t)>& fn) {
    if (workers <= 1 || n <= 1) {
        for (size_t i = 0; i < n; ++i) fn(i);
        return;
    }
    std::atomic<size_t> next{0};
    std::exception_ptr first_error;
    std::mutex err_mu;
    auto worker = [&] {
        while (true) {
            size_t i = next.fetch_add(1);
            if (i >= n) return;
            try {
                fn(i);
            } catch (...) {
                std::lock_guard<std::mutex> lk(err_mu);
                if (!first_error) first_error = std::current_exception();
                return;
            }
        }
    };
    std::vector<std::thread> threads;
    size_t count = std::min(workers, n);
    threads.reserve(count);
    for (size_t i = 0; i < count; ++i) threads.emplace_back(worker);
    for (auto& t : threads) t.join();
    if (first_error) std::rethrow_exception(first_error);
}

struct GroupRef {
    size_t seq = 0;
    size_t group = 0;
};

Bytes pack_frag(const BaseSeq& frag, NMode mode) {
    return mode == NMode::InStream ? pack_3bit(frag) : pack_2bit(frag);
}
BaseSeq unpack_frag(const Bytes& data, size_t len, NMode mode) {
    return mode == NMode::InStream ? unpack_3bit(data, len) : unpack_2bit(data, len);
}

Bytes encode_group(const PredictorFactory& factory, const GroupingConfig& grouping,
                   uint32_t alphabet, const FixedGroup& g, std::vector<FreqTable>* log) {
    TokenSeq seed = ngram_tokenize(g.initial_fragment, grouping.ngram, alphabet);
    size_t n_tokens = g.body.size() / grouping.ngram;
    BaseSeq whole;
    whole.bases.assign(g.body.bases.begin(), g.body.bases.begin() + n_tokens * grouping.ngram);
    TokenSeq body = ngram_tokenize(whole, grouping.ngram, alphabet);

    auto pred = factory.new_stream(seed.tokens);
    RangeEncoder enc;
    for (uint16_t tok : body.tokens) {
        FreqTable ft = quantize_probs(pred->predict());
        if (log && log->size() < 1000) log->push_back(ft);
        enc.encode(ft, tok);
        pred->consume(tok);
    }
    return enc.finish();
}

BaseSeq decode_group(const PredictorFactory& factory, const GroupingConfig& grouping,
                     uint32_t alphabet, const BaseSeq& fragment, const uint8_t* payload,
                     size_t payload_len, size_t n_tokens, std::vector<FreqTable>* log) {
    TokenSeq seed = ngram_tokenize(fragment, grouping.ngram, alphabet);
    auto pred = factory.new_stream(seed.tokens);
    Bytes buf(payload, payload + payload_len);
    RangeDecoder dec(buf);
    TokenSeq body;
    body.ngram = grouping.ngram;
    body.alphabet = alphabet;
    body.tokens.reserve(n_tokens);
    for (size_t i = 0; i < n_tokens; ++i) {
        FreqTable ft = quantize_probs(pred->predict());
        if (log && log->size() < 1000) log->push_back(ft);
        uint16_t tok = static_cast<uint16_t>(dec.decode(ft));
        body.tokens.push_back(tok);
        pred->consume(tok);
    }
    return ngram_detokenize(body);
}

std::unique_ptr<PredictorFactory> factory_for_header(const ArchiveHeader& h, Model* model) {
    uint32_t alphabet = h.n_mode == NMode::InStream ? 5 : 4;
    switch (h.model_kind) {
        case ModelKind::Uniform:
            return std::make_unique<UniformFactory>(h.grouping.ngram, alphabet);
        case ModelKind::OrderK:
            return std::make_unique<OrderKFactory>(h.model_param, h.grouping.ngram, alphabet);
        case ModelKind::Neural: {
            if (!model) throw ModelMismatch("archive needs a neural model checkpoint");
            if (model->fingerprint() != h.fingerprint)
                throw ModelMismatch("model fingerprint does not match archive");
            const auto& mc = model->config();
            if (mc.ngram != h.grouping.ngram || mc.context_len != h.grouping.context_len ||
                mc.alphabet != alphabet)
                throw ModelMismatch("model configuration does not match archive grouping");
            return std::make_unique<ModelFactory>(*model);
        }
    }
    throw CorruptStream("unknown model kind");
}

}  // namespace

CompressResult compress(const std::vector<FastaRecord>& records, const PredictorFactory& factory,
                        const PipelineConfig& cfg) {
    auto t0 = Clock::now();
    cfg.grouping.validate();
    const uint32_t alphabet = cfg.n_mode == NMode::InStream ? 5 : 4;
    if (factory.vocab() != vocab_size(cfg.grouping.ngram, alphabet))
        throw ModelMismatch("predictor vocab does not match grouping");

    ArchiveHeader header;
    header.n_mode = cfg.n_mode;
    header.grouping = cfg.grouping;
    if (auto* mf = dynamic_cast<const ModelFactory*>(&factory)) {
        const auto& mc = mf->model().config();
        if (mc.byte_group != cfg.grouping.byte_group || mc.context_len != cfg.grouping.context_len)
            throw ModelMismatch("model configuration does not match grouping config");
        header.model_kind = ModelKind::Neural;
        header.fingerprint = mf->model().fingerprint();
    } else if (auto* ok = dynamic_cast<const OrderKFactory*>(&factory)) {
        header.model_kind = ModelKind::OrderK;
        header.model_param = static_cast<uint8_t>(ok->order());
    } else {
        header.model_kind = ModelKind::Uniform;
    }

    std::vector<std::vector<FixedGroup>> all_groups;
    std::vector<GroupRef> tasks;
    uint64_t total_bases = 0;
    for (const auto& rec : records) {
        if (rec.seq.bases.empty()) throw TooShort("empty sequence '" + rec.header + "'");
        SequenceEntry entry;
        entry.id = rec.header;
        entry.original_length = rec.seq.size();
        entry.seq_crc = crc32_of(rec.seq.bases);
        total_bases += rec.seq.size();

        BaseSeq pure;
        if (cfg.n_mode == NMode::SideChannel) {
            auto [p, side] = extract_n(rec.seq);
            pure = std::move(p);
            entry.side = std::move(side);
        } else {
            pure = rec.seq;
        }
        entry.pure_length = pure.size();
        auto groups = split_fixed(pure, cfg.grouping);
        for (auto& g : groups) {
            entry.fragments.push_back(pack_frag(g.initial_fragment, cfg.n_mode));
            size_t tail = g.body.size() % cfg.grouping.ngram;
            BaseSeq tail_seq;
            tail_seq.bases.assign(g.body.bases.end() - tail, g.body.bases.end());
            entry.tail_lens.push_back(static_cast<uint8_t>(tail));
            entry.tails.push_back(pack_frag(tail_seq, cfg.n_mode));
            tasks.push_back({header.sequences.size(), g.index});
        }
        entry.payload_lengths.assign(groups.size(), 0);
        header.sequences.push_back(std::move(entry));
        all_groups.push_back(std::move(groups));
    }

    std::vector<Bytes> payloads(tasks.size());
    size_t workers = cfg.table_log ? 1 : cfg.workers;
    std::vector<size_t> task_offset(records.size() + 1, 0);
    for (size_t t = 0; t < tasks.size(); ++t) task_offset[tasks[t].seq + 1] = t + 1;
    parallel_for(tasks.size(), workers, [&](size_t t) {
        const auto& ref = tasks[t];
        payloads[t] = encode_group(factory, cfg.grouping, alphabet,
                                   all_groups[ref.seq][ref.group], cfg.table_log);
    });
    Bytes payload;
    for (size_t t = 0; t < tasks.size(); ++t) {
        header.sequences[tasks[t].seq].payload_lengths[tasks[t].group] = payloads[t].size();
        payload.insert(payload.end(), payloads[t].begin(), payloads[t].end());
    }

    Archive archive{std::move(header), std::move(payload)};
    CompressResult res;
    res.archive = archive.to_bytes();
    res.stats.total_bases = total_bases;
    res.stats.archive_bytes = res.archive.size();
    res.stats.payload_bytes = archive.payload.size();
    res.stats.header_bytes = res.archive.size() - archive.payload.size();
    for (const auto& s : archive.header.sequences)
        for (size_t g = 0; g < s.fragments.size(); ++g)
            res.stats.fragment_bytes += s.fragments[g].size() + s.tails[g].size();
    res.stats.bpb = total_bases ? 8.0 * res.archive.size() / total_bases : 0.0;
    res.stats.seconds = elapsed(t0);
    return res;
}

std::vector<FastaRecord> decompress(const Bytes& archive_bytes, Model* model, size_t workers,
                                    std::vector<FreqTable>* table_log) {
    Archive archive = Archive::from_bytes(archive_bytes);
    const ArchiveHeader& h = archive.header;
    const uint32_t alphabet = h.n_mode == NMode::InStream ? 5 : 4;
    auto factory = factory_for_header(h, model);

    struct DecodeTask {
        size_t seq, group;
        BaseSeq fragment;
        const uint8_t* payload;
        size_t payload_len;
        size_t n_tokens;
        size_t body_len;
        bool own_fragment;
    };
    std::vector<DecodeTask> tasks;
    size_t offset = 0;
    for (size_t si = 0; si < h.sequences.size(); ++si) {
        const auto& s = h.sequences[si];
        size_t n_groups = (s.pure_length + h.grouping.group_len - 1) / h.grouping.group_len;
        if (n_groups != s.fragments.size() || n_groups != s.payload_lengths.size())
            throw CorruptStream("group accounting mismatch");
        for (size_t g = 0; g < n_groups; ++g) {
            size_t begin = g * h.grouping.group_len;
            size_t end = std::min<size_t>(begin + h.grouping.group_len, s.pure_length);
            size_t span = end - begin;
            bool own = span > h.grouping.context_len;
            size_t body_len = own ? span - h.grouping.context_len : span;
            size_t tail = s.tail_lens[g];
            DecodeTask task;
            task.seq = si;
            task.group = g;
            task.fragment = unpack_frag(s.fragments[g], h.grouping.context_len, h.n_mode);
            task.payload = archive.payload.data() + offset;
            task.payload_len = s.payload_lengths[g];
            task.n_tokens = (body_len - tail) / h.grouping.ngram;
            task.body_len = body_len;
            task.own_fragment = own;
            offset += s.payload_lengths[g];
            tasks.push_back(std::move(task));
        }
    }

    if (table_log) workers = 1;
    std::vector<BaseSeq> bodies(tasks.size());
    parallel_for(tasks.size(), workers, [&](size_t t) {
        const auto& task = tasks[t];
        bodies[t] = decode_group(*factory, h.grouping, alphabet, task.fragment, task.payload,
                                 task.payload_len, task.n_tokens, table_log);
    });

    std::vector<FastaRecord> records;
    size_t ti = 0;
    for (size_t si = 0; si < h.sequences.size(); ++si) {
        const auto& s = h.sequences[si];
        BaseSeq pure;
        pure.bases.reserve(s.pure_length);
        while (ti < tasks.size() && tasks[ti].seq == si) {
            const auto& task = tasks[ti];
            if (task.own_fragment)
                pure.bases.insert(pure.bases.end(), task.fragment.bases.begin(),
                                  task.fragment.bases.end());
            pure.bases.insert(pure.bases.end(), bodies[ti].bases.begin(), bodies[ti].bases.end());
            // raw tail bases after the last whole token
            BaseSeq tail = unpack_frag(s.tails[task.group], s.tail_lens[task.group], h.n_mode);
            pure.bases.insert(pure.bases.end(), tail.bases.begin(), tail.bases.end());
            ++ti;
        }
        if (pure.size() != s.pure_length) throw CorruptStream("reassembled length mismatch");
        FastaRecord rec;
        rec.header = s.id;
        rec.seq = h.n_mode == NMode::SideChannel ? reinsert_n(pure, s.side) : pure;
        rec.seq.id = s.id;
        if (rec.seq.size() != s.original_length) throw CorruptStream("sequence length mismatch");
        if (crc32_of(rec.seq.bases) != s.seq_crc)
            throw CrcMismatch("decoded sequence fails its checksum");
        records.push_back(std::move(rec));
    }
    return records;
}

VerifyReport verify(const std::vector<FastaRecord>& original, const Bytes& archive, Model* model,
                    size_t workers) {
    auto t0 = Clock::now();
    VerifyReport report;
    Archive parsed = Archive::from_bytes(archive);
    for (const auto& s : parsed.header.sequences) {
        report.total_bases += s.original_length;
        for (uint64_t pl : s.payload_lengths) report.group_payloads.push_back(pl);
    }
    report.bpb = report.total_bases ? 8.0 * archive.size() / report.total_bases : 0.0;
    auto records = decompress(archive, model, workers);
    if (records.size() != original.size()) {
        report.detail = "record count mismatch";
        report.seconds = elapsed(t0);
        return report;
    }
    for (size_t i = 0; i < records.size(); ++i) {
        const auto& a = original[i].seq.bases;
        const auto& b = records[i].seq.bases;
        size_t n = std::min(a.size(), b.size());
        for (size_t j = 0; j < n; ++j)
            if (a[j] != b[j]) {
                report.detail = "base mismatch in record " + std::to_string(i) + " at position " +
                                std::to_string(j);
                report.seconds = elapsed(t0);
                return report;
            }
        if (a.size() != b.size()) {
            report.detail = "length mismatch in record " + std::to_string(i);
            report.seconds = elapsed(t0);
            return report;
        }
    }
    report.ok = true;
    report.seconds = elapsed(t0);
    return report;
}

}  // namespace gnf
