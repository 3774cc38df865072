#pragma once

#include <deque>
#include <optional>
#include <string>

#include "gnf/grouping.hpp"
#include "gnf/layers.hpp"
#include "gnf/tensor.hpp"

namespace gnf {

enum class EmbedMode : uint8_t { Learned = 0, OneHot = 1 };

struct ModelConfig {
    uint32_t alphabet = 4;       // 4, or 5 when N travels in-stream
    uint32_t ngram = 1;
    uint32_t byte_group = 1;
    uint32_t context_len = 64;   // bases
    uint32_t d_m = 768;
    uint32_t d_ff = 3072;
    uint32_t n_heads = 8;
    uint32_t d_k = 0;            // 0 -> d_m / n_heads
    uint32_t conv_k = 24;
    uint32_t conv_stride = 1;
    uint32_t pool_k = 3;
    uint32_t pool_stride = 3;
    double dropout_p = 0.1;
    double sinusoid_base = 10000.0;
    EmbedMode embed_mode = EmbedMode::Learned;
    bool use_latent = true;      // ablation: feed previous segment output as memory
    bool segment_cut = true;     // ablation: restrict memory to one segment
    uint32_t mem_segments = 4;   // memory cap when segment_cut is off

    uint32_t vocab() const { return vocab_size(ngram, alphabet); }
    uint32_t n_tokens() const { return context_len / ngram; }
    uint32_t enc_len() const { return n_tokens() / byte_group; }
    uint32_t embed_dim() const {
        return embed_mode == EmbedMode::OneHot ? vocab() : d_m / byte_group;
    }
    uint32_t head_dim() const { return d_k ? d_k : d_m / n_heads; }
    uint32_t conv_out_len() const { return (enc_len() - conv_k) / conv_stride + 1; }
    uint32_t n_pos() const { return (conv_out_len() - pool_k) / pool_stride + 1; }

    void validate() const;

    // Toy preset small enough to train on one core in minutes.
    static ModelConfig toy(uint32_t ngram = 2, uint32_t byte_group = 4, uint32_t alphabet = 4);
    // Conv/pool sizes scaled for a shorter encoder input, preserving the
    // default 64 -> 41 -> 13 proportions where possible.
    static void fit_conv(ModelConfig& cfg);
};

// Sinusoidal positional encoding g(i) in R^{d_m}; i may be negative.
std::vector<double> sinusoidal_pe(long long i, uint32_t d_m, double base = 10000.0);

struct ForwardResult {
    nn::Tensor logits;  // [B, vocab]
    nn::Tensor latent;  // [B, n_pos, d_m]
};

class Model {
public:
    explicit Model(const ModelConfig& cfg, uint64_t init_seed = 1);

    const ModelConfig& config() const { return cfg_; }

    // Latent-memory flags don't touch parameter shapes, so they may be toggled
    // on existing weights (ablation rows). The fingerprint changes with them.
    void set_memory_policy(bool use_latent, bool segment_cut) {
        cfg_.use_latent = use_latent;
        cfg_.segment_cut = segment_cut;
    }

    // tokens: B windows of n_tokens() tokens each (flattened row-major).
    // memory: optional [B, M, d_m]; pass undefined Tensor for the first segment.
    ForwardResult forward(nn::Tape* tape, const std::vector<uint16_t>& tokens, size_t batch,
                          const nn::Tensor& memory, bool train, uint64_t step);

    // Attention score matrix before softmax (exposed for the equivalence and
    // translation-property tests). Returns per-head [n_heads][N, M+N].
    std::vector<nn::Tensor> attention_scores(nn::Tape* tape, const nn::Tensor& x,
                                             const nn::Tensor& memory, bool masked = true);
    nn::Tensor encoder_forward(nn::Tape* tape, const nn::Tensor& x, const nn::Tensor& memory,
                               bool train, uint64_t step);

    std::vector<nn::Tensor>& params() { return params_; }
    const std::vector<nn::Tensor>& params() const { return params_; }
    void zero_grad();
    uint64_t count_params() const;

    Bytes save_checkpoint() const;
    static Model load_checkpoint(const Bytes& bytes);
    std::vector<uint8_t> fingerprint() const;  // 32 bytes

    // layer/shape trace of one forward pass, for the structure test
    std::vector<std::pair<std::string, nn::Shape>> shape_trace();

    uint64_t dropout_seed = 0x5eed;

    // exposed for the brute-force oracle
    nn::Tensor embed_table, conv_w, conv_b;
    nn::BatchNormState bn;
    nn::Tensor wq, wk, wv, wo, u, v;
    nn::Tensor ln1_g, ln1_b, ln2_g, ln2_b;
    nn::Tensor ff_w1, ff_b1, ff_w2, ff_b2;
    nn::Tensor head_w, head_b;

private:
    ModelConfig cfg_;
    std::vector<nn::Tensor> params_;
    void collect_params();
};

// Rolling latent state for one decode/encode stream.
class InferenceSession {
public:
    explicit InferenceSession(Model& model) : model_(&model) {}

    // context: exactly n_tokens() tokens; returns P(next token), updates latent
    std::vector<double> predict(const std::vector<uint16_t>& context);
    void reset() { memory_.clear(); }

private:
    Model* model_;
    std::deque<nn::Tensor> memory_;  // detached [1, n_pos, d_m] latents
    uint64_t step_ = 0;
};

}  // namespace gnf
