#pragma once

#include <memory>
#include <vector>

#include "gnf/grouping.hpp"
#include "gnf/model.hpp"

namespace gnf {

// A per-stream next-token predictor. One instance per coded group; the
// encoder and decoder drive an identical predict/consume sequence, which keeps
// both sides' state (and therefore the quantized tables) in lockstep.
class Predictor {
public:
    virtual ~Predictor() = default;
    virtual std::vector<double> predict() = 0;      // P(next token), length vocab
    virtual void consume(uint16_t token) = 0;       // observed/decoded token
};

class PredictorFactory {
public:
    virtual ~PredictorFactory() = default;
    virtual std::unique_ptr<Predictor> new_stream(const std::vector<uint16_t>& seed_context) const = 0;
    virtual uint32_t vocab() const = 0;
    virtual std::string name() const = 0;
};

// Static uniform distribution; the 2.0 bpb reference point.
class UniformFactory : public PredictorFactory {
public:
    UniformFactory(uint32_t ngram, uint32_t alphabet) : ngram_(ngram), alphabet_(alphabet) {}
    std::unique_ptr<Predictor> new_stream(const std::vector<uint16_t>&) const override;
    uint32_t vocab() const override { return vocab_size(ngram_, alphabet_); }
    std::string name() const override { return "uniform"; }

private:
    uint32_t ngram_, alphabet_;
};

// Adaptive order-k context model over bases with add-1 smoothing. Token
// probabilities are chained products of per-base conditionals.
class OrderKModel {
public:
    OrderKModel(uint32_t k, uint32_t alphabet);
    std::vector<double> predict(const std::vector<uint8_t>& context) const;  // last k bases
    void update(const std::vector<uint8_t>& context, uint8_t symbol);
    void downdate(const std::vector<uint8_t>& context, uint8_t symbol);  // undo one update
    uint32_t order() const { return k_; }
    uint32_t alphabet() const { return alphabet_; }

private:
    uint32_t k_, alphabet_;
    std::vector<uint32_t> counts_;  // [alphabet^k][alphabet]
    size_t ctx_index(const std::vector<uint8_t>& context) const;
};

class OrderKFactory : public PredictorFactory {
public:
    OrderKFactory(uint32_t k, uint32_t ngram, uint32_t alphabet)
        : k_(k), ngram_(ngram), alphabet_(alphabet) {}
    std::unique_ptr<Predictor> new_stream(const std::vector<uint16_t>& seed_context) const override;
    uint32_t vocab() const override { return vocab_size(ngram_, alphabet_); }
    std::string name() const override { return "order-" + std::to_string(k_); }
    uint32_t order() const { return k_; }

private:
    uint32_t k_, ngram_, alphabet_;
};

// Neural entropy model with a rolling context window and latent-array state.
class ModelFactory : public PredictorFactory {
public:
    explicit ModelFactory(Model& model) : model_(&model) {}
    std::unique_ptr<Predictor> new_stream(const std::vector<uint16_t>& seed_context) const override;
    uint32_t vocab() const override { return model_->config().vocab(); }
    std::string name() const override { return "neural"; }
    Model& model() const { return *model_; }

private:
    Model* model_;
};

}  // namespace gnf
