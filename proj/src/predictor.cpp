#include "gnf/predictor.hpp"

namespace gnf {

namespace {

class UniformPredictor : public Predictor {
public:
    explicit UniformPredictor(uint32_t vocab) : p_(vocab, 1.0 / vocab) {}
    std::vector<double> predict() override { return p_; }
    void consume(uint16_t) override {}

private:
    std::vector<double> p_;
};

// Chains per-base conditionals into a token distribution over alphabet^ngram.
class OrderKPredictor : public Predictor {
public:
    OrderKPredictor(uint32_t k, uint32_t ngram, uint32_t alphabet,
                    const std::vector<uint16_t>& seed_context)
        : model_(k, alphabet), ngram_(ngram), alphabet_(alphabet) {
        TokenSeq ts;
        ts.tokens = seed_context;
        ts.ngram = ngram;
        ts.alphabet = alphabet;
        BaseSeq bases = ngram_detokenize(ts);
        for (uint8_t b : bases.bases) push_base(b);
    }

    std::vector<double> predict() override {
        std::vector<double> out;
        out.reserve(vocab_size(ngram_, alphabet_));
        expand(history_, 1.0, 0, out);
        return out;
    }

    void consume(uint16_t token) override {
        std::vector<uint8_t> bases(ngram_);
        uint32_t t = token;
        for (uint32_t j = ngram_; j > 0; --j) {
            bases[j - 1] = t % alphabet_;
            t /= alphabet_;
        }
        for (uint8_t b : bases) push_base(b);
    }

private:
    OrderKModel model_;
    uint32_t ngram_, alphabet_;
    std::vector<uint8_t> history_;  // last k bases

    void push_base(uint8_t b) {
        if (history_.size() >= model_.order()) model_.update(history_, b);
        history_.push_back(b);
        if (history_.size() > model_.order()) history_.erase(history_.begin());
    }

    // Depth-first product of per-base conditionals, emitting leaves in token
    // order. The model adapts after every base, so each hypothetical branch
    // applies its count before recursing and reverts it after; an ngram-token
    // stream then assigns exactly the probabilities a per-base adaptive coder
    // would.
    void expand(const std::vector<uint8_t>& ctx, double p, uint32_t depth,
                std::vector<double>& out) {
        if (depth == ngram_) {
            out.push_back(p);
            return;
        }
        auto cond = model_.predict(ctx);
        for (uint8_t b = 0; b < alphabet_; ++b) {
            std::vector<uint8_t> next = ctx;
            next.push_back(b);
            if (next.size() > model_.order()) next.erase(next.begin());
            model_.update(ctx, b);
            expand(next, p * cond[b], depth + 1, out);
            model_.downdate(ctx, b);
        }
    }
};

class NeuralPredictor : public Predictor {
public:
    NeuralPredictor(Model& model, const std::vector<uint16_t>& seed_context)
        : session_(model), context_(seed_context), n_tokens_(model.config().n_tokens()) {
        if (context_.size() != n_tokens_)
            throw BadContextLength("seed context must be " + std::to_string(n_tokens_) + " tokens");
    }

    std::vector<double> predict() override { return session_.predict(context_); }

    void consume(uint16_t token) override {
        context_.push_back(token);
        context_.erase(context_.begin());
    }

private:
    InferenceSession session_;
    std::vector<uint16_t> context_;
    size_t n_tokens_;
};

}  // namespace

std::unique_ptr<Predictor> UniformFactory::new_stream(const std::vector<uint16_t>&) const {
    return std::make_unique<UniformPredictor>(vocab());
}

OrderKModel::OrderKModel(uint32_t k, uint32_t alphabet) : k_(k), alphabet_(alphabet) {
    if (k > 8) throw Error("order-k supports k <= 8");
    size_t n_ctx = 1;
    for (uint32_t i = 0; i < k; ++i) n_ctx *= alphabet;
    counts_.assign(n_ctx * alphabet, 1);  // Laplace add-1
}

size_t OrderKModel::ctx_index(const std::vector<uint8_t>& context) const {
    if (context.size() < k_) throw TooShort("context shorter than model order");
    size_t idx = 0;
    for (size_t i = context.size() - k_; i < context.size(); ++i)
        idx = idx * alphabet_ + context[i];
    return idx;
}

std::vector<double> OrderKModel::predict(const std::vector<uint8_t>& context) const {
    size_t base = ctx_index(context) * alphabet_;
    double total = 0.0;
    for (uint32_t s = 0; s < alphabet_; ++s) total += counts_[base + s];
    std::vector<double> p(alphabet_);
    for (uint32_t s = 0; s < alphabet_; ++s) p[s] = counts_[base + s] / total;
    return p;
}

void OrderKModel::update(const std::vector<uint8_t>& context, uint8_t symbol) {
    if (symbol >= alphabet_) throw TargetOutOfRange("symbol outside alphabet");
    counts_[ctx_index(context) * alphabet_ + symbol] += 1;
}

void OrderKModel::downdate(const std::vector<uint8_t>& context, uint8_t symbol) {
    if (symbol >= alphabet_) throw TargetOutOfRange("symbol outside alphabet");
    uint32_t& c = counts_[ctx_index(context) * alphabet_ + symbol];
    if (c <= 1) throw Error("downdate below the add-1 floor");
    c -= 1;
}

std::unique_ptr<Predictor> OrderKFactory::new_stream(
    const std::vector<uint16_t>& seed_context) const {
    return std::make_unique<OrderKPredictor>(k_, ngram_, alphabet_, seed_context);
}

std::unique_ptr<Predictor> ModelFactory::new_stream(
    const std::vector<uint16_t>& seed_context) const {
    return std::make_unique<NeuralPredictor>(*model_, seed_context);
}

}  // namespace gnf
