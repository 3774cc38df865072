#pragma once

#include <optional>

#include "gnf/archive.hpp"
#include "gnf/predictor.hpp"

namespace gnf {

struct PipelineConfig {
    GroupingConfig grouping;
    NMode n_mode = NMode::SideChannel;
    size_t workers = 1;
    // debug lockstep hook: when set, the first 1000 quantized tables are
    // appended here (encoder or decoder side)
    std::vector<FreqTable>* table_log = nullptr;
};

struct CompressStats {
    double bpb = 0.0;
    uint64_t total_bases = 0;
    size_t archive_bytes = 0;
    size_t header_bytes = 0;
    size_t fragment_bytes = 0;  // packed fragment + tail bytes inside the header
    size_t payload_bytes = 0;
    double seconds = 0.0;
};

struct CompressResult {
    Bytes archive;
    CompressStats stats;
};

CompressResult compress(const std::vector<FastaRecord>& records, const PredictorFactory& factory,
                        const PipelineConfig& cfg);

// model may be null for uniform / order-k archives; required (and fingerprint
// checked) for neural archives.
std::vector<FastaRecord> decompress(const Bytes& archive, Model* model, size_t workers = 1,
                                    std::vector<FreqTable>* table_log = nullptr);

struct VerifyReport {
    bool ok = false;
    double bpb = 0.0;
    uint64_t total_bases = 0;
    std::vector<uint64_t> group_payloads;
    double seconds = 0.0;
    std::string detail;
};

VerifyReport verify(const std::vector<FastaRecord>& original, const Bytes& archive, Model* model,
                    size_t workers = 1);

}  // namespace gnf
