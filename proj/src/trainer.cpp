#include "gnf/trainer.hpp"

#include <algorithm>
#include <chrono>
#include <cmath>
#include <limits>
#include <random>

#include "json.hpp"

namespace gnf {

namespace {

using Clock = std::chrono::steady_clock;

std::vector<uint16_t> window_tokens(const Example& ex, const ModelConfig& cfg, size_t offset) {
    BaseSeq w;
    w.bases.assign(ex.seq->bases.begin() + offset,
                   ex.seq->bases.begin() + offset + cfg.context_len);
    return ngram_tokenize(w, cfg.ngram, cfg.alphabet).tokens;
}

uint16_t target_token(const Example& ex, const ModelConfig& cfg) {
    BaseSeq t;
    t.bases.assign(ex.seq->bases.begin() + ex.offset + cfg.context_len,
                   ex.seq->bases.begin() + ex.offset + cfg.context_len + cfg.ngram);
    return ngram_tokenize(t, cfg.ngram, cfg.alphabet).tokens[0];
}

struct Batch {
    std::vector<uint16_t> tokens;   // B * n_tokens
    std::vector<uint16_t> targets;  // B
    nn::Tensor memory;              // [B, n_pos, d_m] or undefined
    size_t size = 0;
};

// Builds per-example memory from a detached forward on the window one token
// earlier, matching what InferenceSession feeds the model at coding time.
// Examples at a sequence start get zero memory rows (first-segment case).
Batch make_batch(Model& model, const std::vector<Example>& examples, const std::vector<size_t>& ids,
                 bool prev_window_memory) {
    const auto& cfg = model.config();
    Batch b;
    b.size = ids.size();
    b.tokens.reserve(b.size * cfg.n_tokens());
    b.targets.reserve(b.size);
    for (size_t id : ids) {
        auto toks = window_tokens(examples[id], cfg, examples[id].offset);
        b.tokens.insert(b.tokens.end(), toks.begin(), toks.end());
        b.targets.push_back(target_token(examples[id], cfg));
    }
    if (cfg.use_latent && prev_window_memory) {
        std::vector<size_t> with_prev;
        std::vector<uint16_t> prev_tokens;
        for (size_t i = 0; i < ids.size(); ++i) {
            const auto& ex = examples[ids[i]];
            if (ex.offset < cfg.ngram) continue;
            auto toks = window_tokens(ex, cfg, ex.offset - cfg.ngram);
            prev_tokens.insert(prev_tokens.end(), toks.begin(), toks.end());
            with_prev.push_back(i);
        }
        b.memory = nn::Tensor::zeros({b.size, cfg.n_pos(), cfg.d_m});
        if (!with_prev.empty()) {
            nn::Tensor undef;
            auto prev = model.forward(nullptr, prev_tokens, with_prev.size(), undef, false, 0);
            size_t row = cfg.n_pos() * cfg.d_m;
            for (size_t j = 0; j < with_prev.size(); ++j)
                std::copy(prev.latent.v().begin() + j * row,
                          prev.latent.v().begin() + (j + 1) * row,
                          b.memory.v().begin() + with_prev[j] * row);
        }
    }
    return b;
}

TrainResult train_impl(Model& model, const std::vector<std::vector<Example>>& sources,
                       const std::vector<Example>& val_ex, const TrainConfig& cfg) {
    auto t0 = Clock::now();
    TrainResult result;
    result.best_val_bpb = std::numeric_limits<double>::infinity();
    nn::RmsPropState opt;
    opt.lr = cfg.lr;
    std::mt19937_64 rng(cfg.seed);
    uint64_t step = 0;
    size_t steps_per_epoch = 0;
    for (const auto& src : sources)
        steps_per_epoch = std::max(steps_per_epoch, src.size() / cfg.batch_size);
    if (steps_per_epoch == 0) throw TooShort("not enough training examples for one batch");

    // best weights kept at full precision; the checkpoint bytes are f32
    std::vector<std::vector<double>> best_params;
    std::vector<double> best_rmean, best_rvar;
    auto maybe_eval = [&](size_t epoch, double train_loss) {
        double val = evaluate_bpb(model, val_ex, cfg.batch_size);
        result.val_history.push_back(val);
        if (val < result.best_val_bpb) {
            result.best_val_bpb = val;
            result.best_epoch = epoch;
            result.best_checkpoint = model.save_checkpoint();
            best_params.clear();
            for (const auto& p : model.params()) best_params.push_back(p.v());
            best_rmean = model.bn.running_mean;
            best_rvar = model.bn.running_var;
        }
        if (cfg.log) {
            nlohmann::json line{{"epoch", epoch},
                                {"step", step},
                                {"train_loss", train_loss},
                                {"val_bpb", val},
                                {"seconds",
                                 std::chrono::duration<double>(Clock::now() - t0).count()}};
            *cfg.log << line.dump() << "\n";
        }
    };

    bool out_of_time = false;
    for (size_t epoch = 0; epoch < cfg.epochs && !out_of_time; ++epoch) {
        std::vector<std::vector<size_t>> order(sources.size());
        for (size_t s = 0; s < sources.size(); ++s) {
            order[s].resize(sources[s].size());
            for (size_t i = 0; i < order[s].size(); ++i) order[s][i] = i;
            std::shuffle(order[s].begin(), order[s].end(), rng);
        }
        double loss_sum = 0.0;
        size_t loss_count = 0;
        for (size_t bi = 0; bi < steps_per_epoch; ++bi) {
            if (cfg.max_seconds > 0 &&
                std::chrono::duration<double>(Clock::now() - t0).count() > cfg.max_seconds) {
                out_of_time = true;
                break;
            }
            std::vector<uint16_t> tokens, targets;
            std::vector<nn::Tensor> mems;
            size_t total = 0;
            for (size_t s = 0; s < sources.size(); ++s) {
                std::vector<size_t> ids;
                for (size_t j = 0; j < cfg.batch_size; ++j)
                    ids.push_back(order[s][(bi * cfg.batch_size + j) % order[s].size()]);
                Batch b = make_batch(model, sources[s], ids, cfg.prev_window_memory);
                tokens.insert(tokens.end(), b.tokens.begin(), b.tokens.end());
                targets.insert(targets.end(), b.targets.begin(), b.targets.end());
                if (b.memory.defined()) mems.push_back(b.memory);
                total += b.size;
            }
            nn::Tensor memory;
            if (!mems.empty()) {
                memory = nn::Tensor::zeros({total, model.config().n_pos(), model.config().d_m});
                size_t at = 0;
                for (const auto& m : mems) {
                    std::copy(m.v().begin(), m.v().end(), memory.v().begin() + at);
                    at += m.v().size();
                }
            }

            nn::Tape tape;
            model.zero_grad();
            auto fwd = model.forward(&tape, tokens, total, memory, true, step);
            auto ce = nn::cross_entropy(&tape, fwd.logits, targets);
            tape.backward(ce.loss);
            nn::rmsprop_step(model.params(), opt);
            loss_sum += ce.loss.v()[0];
            ++loss_count;
            ++step;
        }
        result.steps = step;
        if ((epoch + 1) % cfg.eval_every == 0 || epoch + 1 == cfg.epochs || out_of_time)
            maybe_eval(epoch + 1, loss_count ? loss_sum / loss_count : 0.0);
    }
    if (result.best_checkpoint.empty()) {
        result.best_checkpoint = model.save_checkpoint();
        result.best_val_bpb = evaluate_bpb(model, val_ex, cfg.batch_size);
    } else {
        // leave the model at its best-validation weights
        for (size_t i = 0; i < model.params().size(); ++i)
            model.params()[i].v() = best_params[i];
        model.bn.running_mean = best_rmean;
        model.bn.running_var = best_rvar;
    }
    return result;
}

}  // namespace

std::vector<Example> make_examples(const std::vector<BaseSeq>& seqs, const ModelConfig& cfg,
                                   size_t stride_tokens) {
    std::vector<Example> out;
    size_t stride = stride_tokens * cfg.ngram;
    for (const auto& s : seqs) {
        if (s.size() < cfg.context_len + cfg.ngram) continue;
        for (size_t off = 0; off + cfg.context_len + cfg.ngram <= s.size(); off += stride)
            out.push_back({&s, off});
    }
    return out;
}

TrainResult train(Model& model, const std::vector<Example>& train_ex,
                  const std::vector<Example>& val_ex, const TrainConfig& cfg) {
    return train_impl(model, {train_ex}, val_ex, cfg);
}

TrainResult hybrid_train(Model& model, const std::vector<Example>& a,
                         const std::vector<Example>& b, const std::vector<Example>& val_ex,
                         const TrainConfig& cfg) {
    return train_impl(model, {a, b}, val_ex, cfg);
}

double evaluate_bpb(Model& model, const std::vector<Example>& examples, size_t batch_size) {
    if (examples.empty()) return 0.0;
    const auto& cfg = model.config();
    double bits = 0.0;
    for (size_t at = 0; at < examples.size(); at += batch_size) {
        size_t n = std::min(batch_size, examples.size() - at);
        std::vector<size_t> ids(n);
        for (size_t i = 0; i < n; ++i) ids[i] = at + i;
        Batch b = make_batch(model, examples, ids, true);
        auto fwd = model.forward(nullptr, b.tokens, n, b.memory, false, 0);
        auto ce = nn::cross_entropy(nullptr, fwd.logits, b.targets);
        for (double x : ce.bits) bits += x;
    }
    return bits / (examples.size() * cfg.ngram);
}

}  // namespace gnf
