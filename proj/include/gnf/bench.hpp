#pragma once

#include <optional>

#include "gnf/pipeline.hpp"
#include "gnf/trainer.hpp"

namespace gnf {

struct BenchRow {
    std::string method;
    std::string config;   // human-readable flag summary
    double bpb = 0.0;     // recomputed from archive bytes, never model telemetry
    double enc_seconds = 0.0;
    double dec_seconds = 0.0;
    uint64_t params = 0;  // 0 for non-neural rows
    bool ok = false;
    std::string note;
};

struct BenchReport {
    std::vector<BenchRow> rows;
    std::string to_table() const;  // aligned text
    std::string to_json() const;
};

// Compress + decompress + verify one method; bpb from real archive bytes.
BenchRow bench_method(const std::vector<FastaRecord>& records, const PredictorFactory& factory,
                      const PipelineConfig& cfg, Model* model_for_decode = nullptr);

// Reference row via an external general-purpose compressor ("gzip", "xz",
// "zstd"); nullopt when the tool is not on PATH.
std::optional<BenchRow> bench_external(const std::string& tool, const std::string& fasta_path,
                                       uint64_t total_bases);

// Four-row byte-grouping / n-gram / fixed-length-grouping grid. Each row gets
// its own toy model, optionally trained on the corpus for up to train_seconds.
BenchReport grouping_ablation_grid(const std::vector<FastaRecord>& records,
                                   const PipelineConfig& base, uint64_t seed,
                                   double train_seconds);

// Three-row latent-array / segment-cut grid on shared weights.
BenchReport latent_ablation_grid(const std::vector<FastaRecord>& records, Model& model,
                                 const PipelineConfig& base);

}  // namespace gnf
