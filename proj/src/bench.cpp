#include "gnf/bench.hpp"

#include <chrono>
#include <cstdio>
#include <cstdlib>
#include <filesystem>

#include "json.hpp"

namespace gnf {

namespace {

using Clock = std::chrono::steady_clock;

std::vector<BaseSeq> pure_seqs(const std::vector<FastaRecord>& records) {
    std::vector<BaseSeq> out;
    for (const auto& r : records) {
        auto [pure, side] = extract_n(r.seq);
        out.push_back(std::move(pure));
    }
    return out;
}

void quick_train(Model& model, const std::vector<FastaRecord>& records, uint64_t seed,
                 double seconds) {
    if (seconds <= 0) return;
    auto seqs = pure_seqs(records);
    auto examples = make_examples(seqs, model.config());
    if (examples.size() < 80) return;
    size_t n_val = std::max<size_t>(examples.size() / 10, 16);
    std::vector<Example> val(examples.end() - n_val, examples.end());
    examples.resize(examples.size() - n_val);
    TrainConfig cfg;
    cfg.seed = seed;
    cfg.epochs = 1000;
    cfg.max_seconds = seconds;
    train(model, examples, val, cfg);
}

}  // namespace

BenchRow bench_method(const std::vector<FastaRecord>& records, const PredictorFactory& factory,
                      const PipelineConfig& cfg, Model* model_for_decode) {
    BenchRow row;
    row.method = factory.name();
    char buf[128];
    std::snprintf(buf, sizeof(buf), "group_len=%llu ngram=%u byte_group=%u workers=%zu",
                  static_cast<unsigned long long>(cfg.grouping.group_len), cfg.grouping.ngram,
                  cfg.grouping.byte_group, cfg.workers);
    row.config = buf;
    try {
        auto res = compress(records, factory, cfg);
        row.enc_seconds = res.stats.seconds;
        auto t0 = Clock::now();
        auto out = decompress(res.archive, model_for_decode, cfg.workers);
        row.dec_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
        for (size_t i = 0; i < records.size(); ++i)
            if (out[i].seq.bases != records[i].seq.bases)
                throw MismatchError(i, "round trip mismatch in record");
        row.bpb = 8.0 * res.archive.size() / res.stats.total_bases;
        row.ok = true;
    } catch (const std::exception& e) {
        row.note = e.what();
    }
    if (model_for_decode) row.params = model_for_decode->count_params();
    return row;
}

std::optional<BenchRow> bench_external(const std::string& tool, const std::string& fasta_path,
                                       uint64_t total_bases) {
    if (std::system(("command -v " + tool + " >/dev/null 2>&1").c_str()) != 0) return std::nullopt;
    std::string out = fasta_path + ".bench_" + tool;
    std::string cmd;
    if (tool == "gzip")
        cmd = "gzip -9 -c '" + fasta_path + "' > '" + out + "'";
    else if (tool == "xz")
        cmd = "xz -9 -c '" + fasta_path + "' > '" + out + "'";
    else if (tool == "zstd")
        cmd = "zstd -19 -q -c '" + fasta_path + "' > '" + out + "'";
    else
        return std::nullopt;
    BenchRow row;
    row.method = tool;
    row.config = "whole fasta file, external subprocess";
    auto t0 = Clock::now();
    if (std::system(cmd.c_str()) != 0) {
        std::filesystem::remove(out);
        return std::nullopt;
    }
    row.enc_seconds = std::chrono::duration<double>(Clock::now() - t0).count();
    row.bpb = 8.0 * std::filesystem::file_size(out) / total_bases;
    row.ok = true;
    std::filesystem::remove(out);
    return row;
}

BenchReport grouping_ablation_grid(const std::vector<FastaRecord>& records,
                                   const PipelineConfig& base, uint64_t seed,
                                   double train_seconds) {
    struct Variant {
        const char* label;
        uint32_t ngram, byte_group;
        bool fg;
    };
    // Mirrors the grid: nothing, byte-grouping, +n-gram, +fixed-length groups.
    const Variant variants[] = {
        {"BG:off NG:off FG:off", 1, 1, false},
        {"BG:on  NG:off FG:off", 1, 4, false},
        {"BG:on  NG:on  FG:off", 2, 4, false},
        {"BG:on  NG:on  FG:on", 2, 4, true},
    };
    BenchReport report;
    for (const auto& v : variants) {
        ModelConfig mc = ModelConfig::toy(v.ngram, v.byte_group);
        Model model(mc, seed);
        quick_train(model, records, seed, train_seconds);
        PipelineConfig cfg = base;
        cfg.grouping.ngram = v.ngram;
        cfg.grouping.byte_group = v.byte_group;
        cfg.grouping.context_len = mc.context_len;
        if (!v.fg) cfg.grouping.group_len = uint64_t(1) << 40;  // one group per sequence
        ModelFactory factory(model);
        BenchRow row = bench_method(records, factory, cfg, &model);
        row.method = "neural";
        row.config = std::string(v.label) + " | " + row.config;
        report.rows.push_back(std::move(row));
    }
    return report;
}

BenchReport latent_ablation_grid(const std::vector<FastaRecord>& records, Model& model,
                                 const PipelineConfig& base) {
    struct Variant {
        const char* label;
        bool latent, cut;
    };
    const Variant variants[] = {
        {"latent:off cut:on", false, true},
        {"latent:on  cut:off", true, false},
        {"latent:on  cut:on", true, true},
    };
    bool orig_latent = model.config().use_latent;
    bool orig_cut = model.config().segment_cut;
    BenchReport report;
    for (const auto& v : variants) {
        model.set_memory_policy(v.latent, v.cut);
        ModelFactory factory(model);
        BenchRow row = bench_method(records, factory, base, &model);
        row.method = "neural";
        row.config = std::string(v.label) + " | " + row.config;
        report.rows.push_back(std::move(row));
    }
    model.set_memory_policy(orig_latent, orig_cut);
    return report;
}

std::string BenchReport::to_table() const {
    std::string out;
    char buf[512];
    std::snprintf(buf, sizeof(buf), "%-10s %-8s %-10s %-10s %-12s %-3s %s\n", "method", "bpb",
                  "enc_s", "dec_s", "params", "ok", "config");
    out += buf;
    for (const auto& r : rows) {
        std::snprintf(buf, sizeof(buf), "%-10s %-8.4f %-10.3f %-10.3f %-12llu %-3s %s%s%s\n",
                      r.method.c_str(), r.bpb, r.enc_seconds, r.dec_seconds,
                      static_cast<unsigned long long>(r.params), r.ok ? "yes" : "no",
                      r.config.c_str(), r.note.empty() ? "" : " | ", r.note.c_str());
        out += buf;
    }
    return out;
}

std::string BenchReport::to_json() const {
    nlohmann::json arr = nlohmann::json::array();
    for (const auto& r : rows)
        arr.push_back({{"method", r.method},
                       {"config", r.config},
                       {"bpb", r.bpb},
                       {"enc_seconds", r.enc_seconds},
                       {"dec_seconds", r.dec_seconds},
                       {"params", r.params},
                       {"ok", r.ok},
                       {"note", r.note}});
    return arr.dump(2);
}

}  // namespace gnf
