#pragma once

#include <ostream>

#include "gnf/model.hpp"

namespace gnf {

struct TrainConfig {
    size_t batch_size = 64;
    double lr = 0.001;
    size_t epochs = 100;
    uint64_t seed = 1;
    size_t eval_every = 1;          // epochs between validation passes
    double max_seconds = 0.0;       // 0 = unlimited
    bool prev_window_memory = true; // seed each example's latent from the
                                    // window one token earlier (no-grad)
    std::ostream* log = nullptr;    // JSONL history, one line per eval
};

// A training example is a context window plus the next token, addressed as an
// offset into an N-free sequence.
struct Example {
    const BaseSeq* seq = nullptr;
    size_t offset = 0;  // first base of the context window
};

// One example per stride_tokens tokens of each sequence.
std::vector<Example> make_examples(const std::vector<BaseSeq>& seqs, const ModelConfig& cfg,
                                   size_t stride_tokens = 1);

struct TrainResult {
    double best_val_bpb = 0.0;
    size_t best_epoch = 0;
    Bytes best_checkpoint;
    std::vector<double> val_history;
    size_t steps = 0;
};

TrainResult train(Model& model, const std::vector<Example>& train_ex,
                  const std::vector<Example>& val_ex, const TrainConfig& cfg);

// Two training sources; every step concatenates one batch from each.
TrainResult hybrid_train(Model& model, const std::vector<Example>& a,
                         const std::vector<Example>& b, const std::vector<Example>& val_ex,
                         const TrainConfig& cfg);

// Mean -log2 P(target) per base over the examples, eval mode.
double evaluate_bpb(Model& model, const std::vector<Example>& examples, size_t batch_size = 64);

}  // namespace gnf
