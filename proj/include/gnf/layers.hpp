#pragma once

#include "gnf/tensor.hpp"

namespace gnf::nn {

// x[B,Cin,L], w[Cout,Cin,K], bias[Cout] -> [B,Cout,Lout], valid cross-correlation
Tensor conv1d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& bias, size_t stride);

// x[B,C,L] -> [B,C,Lout]; gradient routes to argmax positions only
Tensor maxpool1d(Tape* tape, const Tensor& x, size_t k, size_t stride);

// x[..,D], gamma[D], beta[D]
Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps = 1e-5);

struct BatchNormState {
    Tensor gamma, beta;              // learnable, [C]
    std::vector<double> running_mean, running_var;  // eval-mode statistics
    double momentum = 0.9;
    double eps = 1e-5;

    explicit BatchNormState(size_t channels);
};

// x[B,C,L]; train mode normalizes by batch stats and updates running stats
Tensor batch_norm(Tape* tape, const Tensor& x, BatchNormState& bn, bool train);

// Counter-based deterministic dropout; identity in eval mode.
Tensor dropout(Tape* tape, const Tensor& x, double p, bool train, uint64_t seed,
               uint64_t layer_id, uint64_t step);

// x[..,in] * w[in,out] + b[out]
Tensor linear(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b);

// tokens -> [len(tokens), d] rows of table[V,d]
Tensor embedding(Tape* tape, const std::vector<uint16_t>& tokens, const Tensor& table);

// [L, d] -> [L/g, d*g] concatenating g adjacent rows
Tensor byte_group_reshape(Tape* tape, const Tensor& x, size_t g);

struct CrossEntropyResult {
    Tensor loss;                   // scalar, mean over batch
    std::vector<double> bits;      // per-example -log2 p(target)
};
CrossEntropyResult cross_entropy(Tape* tape, const Tensor& logits,
                                 const std::vector<uint16_t>& targets);

struct RmsPropState {
    std::vector<std::vector<double>> acc;  // per-parameter running mean of squared grads
    double rho = 0.9;
    double eps = 1e-8;
    double lr = 0.001;
};

void rmsprop_step(std::vector<Tensor>& params, RmsPropState& state);

}  // namespace gnf::nn
