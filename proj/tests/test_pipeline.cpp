#include <random>

#include "doctest.h"
#include "gnf/pipeline.hpp"

using namespace gnf;

namespace {

std::mt19937_64 g_rng(555);

FastaRecord random_record(const std::string& id, size_t n, uint64_t seed, double n_frac = 0.01) {
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(0, 1);
    FastaRecord r;
    r.header = id;
    r.seq.id = id;
    for (size_t i = 0; i < n; ++i) {
        if (u(rng) < n_frac) {
            size_t run = 1 + rng() % 20;  // N arrives in runs, as in real data
            for (size_t j = 0; j < run && r.seq.size() < n; ++j) r.seq.bases.push_back(BASE_N);
            if (r.seq.size() >= n) break;
        }
        r.seq.bases.push_back(uint8_t(rng() % 4));
    }
    r.seq.bases.resize(n, uint8_t(seed % 4));
    return r;
}

bool same_records(const std::vector<FastaRecord>& a, const std::vector<FastaRecord>& b) {
    if (a.size() != b.size()) return false;
    for (size_t i = 0; i < a.size(); ++i)
        if (a[i].header != b[i].header || a[i].seq.bases != b[i].seq.bases) return false;
    return true;
}

}  // namespace

TEST_CASE("archive header round trips through serialize/parse") {
    ArchiveHeader h;
    h.n_mode = NMode::InStream;
    h.model_kind = ModelKind::OrderK;
    h.model_param = 4;
    h.grouping.group_len = 9999;
    h.grouping.ngram = 3;
    h.grouping.byte_group = 1;
    SequenceEntry s;
    s.id = "chr1";
    s.original_length = 500;
    s.pure_length = 480;
    s.seq_crc = 0xdeadbeef;
    s.fragments.push_back({1, 2, 3});
    s.tails.push_back({9});
    s.tail_lens.push_back(2);
    s.side.runs = {{10, 5}, {100, 15}};
    s.payload_lengths = {123};
    h.sequences.push_back(s);
    Bytes data = h.serialize();
    size_t pos = 0;
    ArchiveHeader back = ArchiveHeader::parse(data, pos);
    CHECK(pos == data.size());
    CHECK(back.n_mode == h.n_mode);
    CHECK(back.model_kind == h.model_kind);
    CHECK(back.model_param == 4);
    CHECK(back.grouping.group_len == 9999);
    REQUIRE(back.sequences.size() == 1);
    CHECK(back.sequences[0].id == "chr1");
    CHECK(back.sequences[0].side.runs == s.side.runs);
    CHECK(back.sequences[0].payload_lengths == s.payload_lengths);

    Bytes corrupt = data;
    corrupt[10] ^= 0xff;
    size_t p2 = 0;
    CHECK_THROWS(ArchiveHeader::parse(corrupt, p2));
}

TEST_CASE("losslessness grid: baseline models, both N modes, ngram 1..3") {
    std::vector<FastaRecord> records;
    records.push_back(random_record("a", 3000, 1));
    records.push_back(random_record("b", 1234, 2, 0.03));
    records.push_back(random_record("c", 150, 3, 0.0));
    for (NMode n_mode : {NMode::SideChannel, NMode::InStream}) {
        uint32_t alphabet = n_mode == NMode::InStream ? 5 : 4;
        for (uint32_t ngram = 1; ngram <= 3; ++ngram) {
            for (uint32_t bg : {1u, 2u, 4u}) {
                PipelineConfig cfg;
                cfg.grouping.group_len = 700;
                cfg.grouping.ngram = ngram;
                cfg.grouping.byte_group = bg;
                cfg.grouping.context_len = 24;  // 24 is divisible by 1,2,3 and by bg
                if ((24 / ngram) % bg != 0) continue;
                cfg.n_mode = n_mode;
                for (int model = 0; model < 2; ++model) {
                    std::unique_ptr<PredictorFactory> f;
                    if (model == 0)
                        f = std::make_unique<UniformFactory>(ngram, alphabet);
                    else
                        f = std::make_unique<OrderKFactory>(2, ngram, alphabet);
                    auto res = compress(records, *f, cfg);
                    auto out = decompress(res.archive, nullptr);
                    CHECK(same_records(records, out));
                }
            }
        }
    }
}

TEST_CASE("neural round trip, fingerprint binding, and encoder/decoder lockstep") {
    Model model(ModelConfig::toy(2, 4), 17);
    std::mt19937_64 rng(4);
    for (auto& p : model.params())
        for (auto& v : p.v()) v += (double(rng() % 1000) / 1000.0 - 0.5) * 0.05;

    std::vector<FastaRecord> records{random_record("chr", 1500, 7)};
    PipelineConfig cfg;
    cfg.grouping.group_len = 600;
    cfg.grouping.context_len = model.config().context_len;
    cfg.grouping.ngram = 2;
    cfg.grouping.byte_group = 4;
    std::vector<FreqTable> enc_tables;
    cfg.table_log = &enc_tables;

    ModelFactory factory(model);
    auto res = compress(records, factory, cfg);
    std::vector<FreqTable> dec_tables;
    auto out = decompress(res.archive, &model, 1, &dec_tables);
    CHECK(same_records(records, out));

    REQUIRE(enc_tables.size() == dec_tables.size());
    REQUIRE(!enc_tables.empty());
    for (size_t i = 0; i < enc_tables.size(); ++i) REQUIRE(enc_tables[i] == dec_tables[i]);

    // wrong checkpoint refuses before decoding anything
    Model other(ModelConfig::toy(2, 4), 18);
    CHECK_THROWS_AS(decompress(res.archive, &other), ModelMismatch);
    CHECK_THROWS_AS(decompress(res.archive, nullptr), ModelMismatch);
}

TEST_CASE("compress is deterministic") {
    std::vector<FastaRecord> records{random_record("x", 2000, 11)};
    PipelineConfig cfg;
    cfg.grouping.group_len = 500;
    cfg.grouping.context_len = 32;
    OrderKFactory f(3, 2, 4);
    auto a = compress(records, f, cfg);
    auto b = compress(records, f, cfg);
    CHECK(a.archive == b.archive);
    // and worker count never changes the bytes
    cfg.workers = 4;
    auto c = compress(records, f, cfg);
    CHECK(a.archive == c.archive);
}

TEST_CASE("parallel decode output is bit-identical to sequential") {
    std::vector<FastaRecord> records;
    records.push_back(random_record("p", 8000, 21));
    records.push_back(random_record("q", 5000, 22));
    PipelineConfig cfg;
    cfg.grouping.group_len = 800;  // >= 16 groups total
    cfg.grouping.context_len = 32;
    OrderKFactory f(2, 2, 4);
    auto res = compress(records, f, cfg);
    auto seq1 = decompress(res.archive, nullptr, 1);
    auto par = decompress(res.archive, nullptr, 8);
    CHECK(same_records(seq1, par));
    CHECK(same_records(records, par));
}

TEST_CASE("uniform model bpb is 2 plus container overhead") {
    std::vector<FastaRecord> records{random_record("r", 100000, 31, 0.0)};
    PipelineConfig cfg;
    cfg.grouping.group_len = 213000;
    UniformFactory f(2, 4);
    auto res = compress(records, f, cfg);
    CHECK(res.stats.bpb > 2.0);
    CHECK(res.stats.bpb < 2.02);
    CHECK(res.stats.archive_bytes ==
          res.stats.header_bytes + res.stats.payload_bytes);
}

TEST_CASE("verify reports ok with matching bpb, and pinpoints mismatches") {
    std::vector<FastaRecord> records{random_record("v", 3000, 41)};
    PipelineConfig cfg;
    cfg.grouping.group_len = 1000;
    cfg.grouping.context_len = 32;
    UniformFactory f(2, 4);
    auto res = compress(records, f, cfg);
    auto report = verify(records, res.archive, nullptr);
    CHECK(report.ok);
    CHECK(report.total_bases == 3000);
    CHECK(report.bpb == doctest::Approx(res.stats.bpb).epsilon(1e-12));
    CHECK(report.group_payloads.size() == 3);

    auto other = records;
    other[0].seq.bases[1234] = (other[0].seq.bases[1234] + 1) % 4;
    auto bad = verify(other, res.archive, nullptr);
    CHECK_FALSE(bad.ok);
    CHECK(bad.detail.find("1234") != std::string::npos);
}

TEST_CASE("fuzz: corrupted archives are detected or at least never reproduce silently") {
    std::vector<FastaRecord> records{random_record("f", 2500, 51)};
    PipelineConfig cfg;
    cfg.grouping.group_len = 900;
    cfg.grouping.context_len = 32;
    OrderKFactory f(2, 2, 4);
    auto res = compress(records, f, cfg);
    int detected = 0;
    for (int it = 0; it < 60; ++it) {
        Bytes mutated = res.archive;
        size_t pos = g_rng() % mutated.size();
        mutated[pos] ^= uint8_t(1 << (g_rng() % 8));
        try {
            auto out = decompress(mutated, nullptr);
            // a flip may land in dead flush padding and decode identically;
            // a silently *different* output is the one forbidden outcome
            CHECK(same_records(records, out));
        } catch (const Error&) {
            ++detected;
        }
    }
    CHECK(detected >= 40);
    // truncation
    Bytes trunc(res.archive.begin(), res.archive.end() - 5);
    CHECK_THROWS_AS(decompress(trunc, nullptr), Error);
}

TEST_CASE("too-short and empty inputs are rejected") {
    PipelineConfig cfg;
    cfg.grouping.context_len = 32;
    UniformFactory f(2, 4);
    std::vector<FastaRecord> shorty{random_record("s", 30, 1, 0.0)};
    CHECK_THROWS_AS(compress(shorty, f, cfg), TooShort);
    FastaRecord empty;
    empty.header = "e";
    CHECK_THROWS_AS(compress({empty}, f, cfg), TooShort);
}

TEST_CASE("in-stream mode codes N as a fifth symbol with no side channel") {
    std::vector<FastaRecord> records{random_record("n", 2000, 61, 0.05)};
    PipelineConfig cfg;
    cfg.grouping.group_len = 700;
    cfg.grouping.context_len = 24;
    cfg.n_mode = NMode::InStream;
    OrderKFactory f(2, 2, 5);
    auto res = compress(records, f, cfg);
    Archive parsed = Archive::from_bytes(res.archive);
    for (const auto& s : parsed.header.sequences) {
        CHECK(s.side.runs.empty());
        CHECK(s.pure_length == s.original_length);
    }
    CHECK(same_records(records, decompress(res.archive, nullptr)));
}

TEST_CASE("vocab mismatch between predictor and grouping is rejected") {
    PipelineConfig cfg;  // ngram 2
    UniformFactory f(1, 4);
    std::vector<FastaRecord> records{random_record("m", 1000, 71, 0.0)};
    CHECK_THROWS_AS(compress(records, f, cfg), ModelMismatch);
}
