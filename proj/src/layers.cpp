#include "gnf/layers.hpp"

#include <cmath>

namespace gnf::nn {

namespace {
bool track(Tape* tape, std::initializer_list<const Tensor*> ins) {
    if (!tape) return false;
    for (const Tensor* t : ins)
        if ((*t).requires_grad()) return true;
    return false;
}

inline uint64_t splitmix64(uint64_t x) {
    x += 0x9e3779b97f4a7c15ULL;
    x = (x ^ (x >> 30)) * 0xbf58476d1ce4e5b9ULL;
    x = (x ^ (x >> 27)) * 0x94d049bb133111ebULL;
    return x ^ (x >> 31);
}
}  // namespace

Tensor conv1d(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& bias, size_t stride) {
    if (x.ndim() != 3 || w.ndim() != 3) throw ShapeMismatch("conv1d expects x[B,Cin,L], w[Cout,Cin,K]");
    size_t B = x.dim(0), Cin = x.dim(1), L = x.dim(2);
    size_t Cout = w.dim(0), K = w.dim(2);
    if (w.dim(1) != Cin) throw ShapeMismatch("conv1d: channel mismatch");
    if (L < K) throw ShapeMismatch("conv1d: input shorter than kernel");
    size_t Lout = (L - K) / stride + 1;
    bool rg = track(tape, {&x, &w, &bias});
    Tensor out = Tensor::zeros({B, Cout, Lout}, rg);
    for (size_t b = 0; b < B; ++b)
        for (size_t o = 0; o < Cout; ++o) {
            double* orow = out.v().data() + (b * Cout + o) * Lout;
            for (size_t l = 0; l < Lout; ++l) orow[l] = bias.v()[o];
            for (size_t c = 0; c < Cin; ++c) {
                const double* xrow = x.v().data() + (b * Cin + c) * L;
                const double* wrow = w.v().data() + (o * Cin + c) * K;
                for (size_t k = 0; k < K; ++k) {
                    double wk = wrow[k];
                    for (size_t l = 0; l < Lout; ++l) orow[l] += wk * xrow[l * stride + k];
                }
            }
        }
    ensure_finite(out, "conv1d");
    if (rg) {
        auto xi = x.impl_, wi = w.impl_, bi = bias.impl_, oi = out.impl_;
        tape->record([xi, wi, bi, oi, B, Cin, Cout, L, K, Lout, stride] {
            for (size_t b = 0; b < B; ++b)
                for (size_t o = 0; o < Cout; ++o) {
                    const double* dy = oi->g.data() + (b * Cout + o) * Lout;
                    if (bi->rg)
                        for (size_t l = 0; l < Lout; ++l) bi->g[o] += dy[l];
                    for (size_t c = 0; c < Cin; ++c) {
                        const double* xrow = xi->v.data() + (b * Cin + c) * L;
                        const double* wrow = wi->v.data() + (o * Cin + c) * K;
                        double* dxrow = xi->rg ? xi->g.data() + (b * Cin + c) * L : nullptr;
                        double* dwrow = wi->rg ? wi->g.data() + (o * Cin + c) * K : nullptr;
                        for (size_t k = 0; k < K; ++k) {
                            double dwk = 0.0;
                            for (size_t l = 0; l < Lout; ++l) {
                                dwk += dy[l] * xrow[l * stride + k];
                                if (dxrow) dxrow[l * stride + k] += dy[l] * wrow[k];
                            }
                            if (dwrow) dwrow[k] += dwk;
                        }
                    }
                }
        });
    }
    return out;
}

Tensor maxpool1d(Tape* tape, const Tensor& x, size_t k, size_t stride) {
    if (x.ndim() != 3) throw ShapeMismatch("maxpool1d expects [B,C,L]");
    size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    if (L < k) throw ShapeMismatch("maxpool1d: input shorter than window");
    size_t Lout = (L - k) / stride + 1;
    bool rg = track(tape, {&x});
    Tensor out = Tensor::zeros({B, C, Lout}, rg);
    auto argmax = std::make_shared<std::vector<size_t>>(B * C * Lout);
    for (size_t bc = 0; bc < B * C; ++bc) {
        const double* xrow = x.v().data() + bc * L;
        for (size_t l = 0; l < Lout; ++l) {
            size_t best = l * stride;
            for (size_t j = 1; j < k; ++j)
                if (xrow[l * stride + j] > xrow[best]) best = l * stride + j;
            out.v()[bc * Lout + l] = xrow[best];
            (*argmax)[bc * Lout + l] = best;
        }
    }
    if (rg) {
        auto xi = x.impl_, oi = out.impl_;
        tape->record([xi, oi, argmax, B, C, L, Lout] {
            for (size_t bc = 0; bc < B * C; ++bc)
                for (size_t l = 0; l < Lout; ++l)
                    xi->g[bc * L + (*argmax)[bc * Lout + l]] += oi->g[bc * Lout + l];
        });
    }
    return out;
}

Tensor layer_norm(Tape* tape, const Tensor& x, const Tensor& gamma, const Tensor& beta,
                  double eps) {
    size_t d = x.shape().back();
    if (gamma.size() != d || beta.size() != d) throw ShapeMismatch("layer_norm: param dims");
    size_t rows = x.size() / d;
    bool rg = track(tape, {&x, &gamma, &beta});
    Tensor out = Tensor::zeros(x.shape(), rg);
    auto stats = std::make_shared<std::vector<double>>(rows * 2);  // mean, invstd
    for (size_t r = 0; r < rows; ++r) {
        const double* in = x.v().data() + r * d;
        double mean = 0.0;
        for (size_t j = 0; j < d; ++j) mean += in[j];
        mean /= d;
        double var = 0.0;
        for (size_t j = 0; j < d; ++j) var += (in[j] - mean) * (in[j] - mean);
        var /= d;
        double inv = 1.0 / std::sqrt(var + eps);
        (*stats)[r * 2] = mean;
        (*stats)[r * 2 + 1] = inv;
        for (size_t j = 0; j < d; ++j)
            out.v()[r * d + j] = gamma.v()[j] * (in[j] - mean) * inv + beta.v()[j];
    }
    ensure_finite(out, "layer_norm");
    if (rg) {
        auto xi = x.impl_, gi = gamma.impl_, bi = beta.impl_, oi = out.impl_;
        tape->record([xi, gi, bi, oi, stats, rows, d] {
            for (size_t r = 0; r < rows; ++r) {
                double mean = (*stats)[r * 2], inv = (*stats)[r * 2 + 1];
                const double* in = xi->v.data() + r * d;
                const double* dy = oi->g.data() + r * d;
                double sum_dyg = 0.0, sum_dyg_xhat = 0.0;
                for (size_t j = 0; j < d; ++j) {
                    double xhat = (in[j] - mean) * inv;
                    double dyg = dy[j] * gi->v[j];
                    sum_dyg += dyg;
                    sum_dyg_xhat += dyg * xhat;
                    if (gi->rg) gi->g[j] += dy[j] * xhat;
                    if (bi->rg) bi->g[j] += dy[j];
                }
                if (xi->rg)
                    for (size_t j = 0; j < d; ++j) {
                        double xhat = (in[j] - mean) * inv;
                        double dyg = dy[j] * gi->v[j];
                        xi->g[r * d + j] +=
                            inv * (dyg - sum_dyg / d - xhat * sum_dyg_xhat / d);
                    }
            }
        });
    }
    return out;
}

BatchNormState::BatchNormState(size_t channels)
    : gamma(Tensor::from({channels}, std::vector<double>(channels, 1.0), true)),
      beta(Tensor::zeros({channels}, true)),
      running_mean(channels, 0.0),
      running_var(channels, 1.0) {}

Tensor batch_norm(Tape* tape, const Tensor& x, BatchNormState& bn, bool train) {
    if (x.ndim() != 3) throw ShapeMismatch("batch_norm expects [B,C,L]");
    size_t B = x.dim(0), C = x.dim(1), L = x.dim(2);
    if (bn.gamma.size() != C) throw ShapeMismatch("batch_norm: channel mismatch");
    bool rg = track(tape, {&x, &bn.gamma, &bn.beta});
    Tensor out = Tensor::zeros(x.shape(), rg);
    auto stats = std::make_shared<std::vector<double>>(C * 2);
    size_t n = B * L;
    for (size_t c = 0; c < C; ++c) {
        double mean, var;
        if (train) {
            mean = 0.0;
            for (size_t b = 0; b < B; ++b)
                for (size_t l = 0; l < L; ++l) mean += x.v()[(b * C + c) * L + l];
            mean /= n;
            var = 0.0;
            for (size_t b = 0; b < B; ++b)
                for (size_t l = 0; l < L; ++l) {
                    double d = x.v()[(b * C + c) * L + l] - mean;
                    var += d * d;
                }
            var /= n;
            bn.running_mean[c] = bn.momentum * bn.running_mean[c] + (1 - bn.momentum) * mean;
            bn.running_var[c] = bn.momentum * bn.running_var[c] + (1 - bn.momentum) * var;
        } else {
            mean = bn.running_mean[c];
            var = bn.running_var[c];
        }
        double inv = 1.0 / std::sqrt(var + bn.eps);
        (*stats)[c * 2] = mean;
        (*stats)[c * 2 + 1] = inv;
        for (size_t b = 0; b < B; ++b)
            for (size_t l = 0; l < L; ++l) {
                size_t i = (b * C + c) * L + l;
                out.v()[i] = bn.gamma.v()[c] * (x.v()[i] - mean) * inv + bn.beta.v()[c];
            }
    }
    ensure_finite(out, "batch_norm");
    if (rg) {
        auto xi = x.impl_, gi = bn.gamma.impl_, bi = bn.beta.impl_, oi = out.impl_;
        tape->record([xi, gi, bi, oi, stats, B, C, L, n, train] {
            for (size_t c = 0; c < C; ++c) {
                double mean = (*stats)[c * 2], inv = (*stats)[c * 2 + 1];
                double sum_dy = 0.0, sum_dy_xhat = 0.0;
                for (size_t b = 0; b < B; ++b)
                    for (size_t l = 0; l < L; ++l) {
                        size_t i = (b * C + c) * L + l;
                        double xhat = (xi->v[i] - mean) * inv;
                        sum_dy += oi->g[i];
                        sum_dy_xhat += oi->g[i] * xhat;
                    }
                if (gi->rg) gi->g[c] += sum_dy_xhat;
                if (bi->rg) bi->g[c] += sum_dy;
                if (xi->rg) {
                    double gc = gi->v[c];
                    for (size_t b = 0; b < B; ++b)
                        for (size_t l = 0; l < L; ++l) {
                            size_t i = (b * C + c) * L + l;
                            double xhat = (xi->v[i] - mean) * inv;
                            if (train)
                                xi->g[i] += gc * inv *
                                            (oi->g[i] - sum_dy / n - xhat * sum_dy_xhat / n);
                            else
                                xi->g[i] += gc * inv * oi->g[i];
                        }
                }
            }
        });
    }
    return out;
}

Tensor dropout(Tape* tape, const Tensor& x, double p, bool train, uint64_t seed,
               uint64_t layer_id, uint64_t step) {
    if (!train || p <= 0.0) return x;
    bool rg = track(tape, {&x});
    Tensor out = Tensor::zeros(x.shape(), rg);
    double keep_scale = 1.0 / (1.0 - p);
    uint64_t key = splitmix64(seed ^ splitmix64(layer_id ^ splitmix64(step)));
    auto mask = std::make_shared<std::vector<uint8_t>>(x.size());
    for (size_t i = 0; i < x.size(); ++i) {
        // uniform in [0,1) from the counter stream
        double u = (splitmix64(key + i) >> 11) * (1.0 / 9007199254740992.0);
        bool keep = u >= p;
        (*mask)[i] = keep;
        out.v()[i] = keep ? x.v()[i] * keep_scale : 0.0;
    }
    if (rg) {
        auto xi = x.impl_, oi = out.impl_;
        tape->record([xi, oi, mask, keep_scale] {
            for (size_t i = 0; i < oi->g.size(); ++i)
                if ((*mask)[i]) xi->g[i] += oi->g[i] * keep_scale;
        });
    }
    return out;
}

Tensor linear(Tape* tape, const Tensor& x, const Tensor& w, const Tensor& b) {
    size_t in = w.dim(0), out_dim = w.dim(1);
    if (x.shape().back() != in) throw ShapeMismatch("linear: input dim mismatch");
    Shape flat{x.size() / in, in};
    Tensor x2 = reshape(tape, x, flat);
    Tensor y = matmul(tape, x2, w);
    y = add_bias(tape, y, b);
    Shape os = x.shape();
    os.back() = out_dim;
    return reshape(tape, y, os);
}

Tensor embedding(Tape* tape, const std::vector<uint16_t>& tokens, const Tensor& table) {
    size_t V = table.dim(0), d = table.dim(1);
    for (uint16_t t : tokens)
        if (t >= V) throw TokenOutOfRange("token " + std::to_string(t) + " >= vocab " + std::to_string(V));
    bool rg = track(tape, {&table});
    Tensor out = Tensor::zeros({tokens.size(), d}, rg);
    for (size_t i = 0; i < tokens.size(); ++i)
        for (size_t j = 0; j < d; ++j) out.v()[i * d + j] = table.v()[tokens[i] * d + j];
    if (rg) {
        auto ti = table.impl_, oi = out.impl_;
        auto toks = tokens;
        tape->record([ti, oi, toks, d] {
            for (size_t i = 0; i < toks.size(); ++i)
                for (size_t j = 0; j < d; ++j) ti->g[toks[i] * d + j] += oi->g[i * d + j];
        });
    }
    return out;
}

Tensor byte_group_reshape(Tape* tape, const Tensor& x, size_t g) {
    if (x.ndim() != 2) throw ShapeMismatch("byte_group_reshape expects [L,d]");
    size_t L = x.dim(0), d = x.dim(1);
    if (L % g != 0) throw LengthNotMultiple("byte_group_reshape: L not a multiple of g");
    // row-major [L,d] -> [L/g, d*g] is a pure reshape
    return reshape(tape, x, {L / g, d * g});
}

CrossEntropyResult cross_entropy(Tape* tape, const Tensor& logits,
                                 const std::vector<uint16_t>& targets) {
    if (logits.ndim() != 2) throw ShapeMismatch("cross_entropy expects [B,V]");
    size_t B = logits.dim(0), V = logits.dim(1);
    if (targets.size() != B) throw ShapeMismatch("cross_entropy: target count mismatch");
    for (uint16_t t : targets)
        if (t >= V) throw TargetOutOfRange("target " + std::to_string(t) + " >= " + std::to_string(V));
    bool rg = track(tape, {&logits});
    Tensor loss = Tensor::zeros({1}, rg);
    auto probs = std::make_shared<std::vector<double>>(B * V);
    std::vector<double> bits(B);
    double total = 0.0;
    constexpr double kLog2e = 1.4426950408889634;
    for (size_t b = 0; b < B; ++b) {
        const double* in = logits.v().data() + b * V;
        double mx = in[0];
        for (size_t j = 1; j < V; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (size_t j = 0; j < V; ++j) sum += std::exp(in[j] - mx);
        double lse = mx + std::log(sum);
        for (size_t j = 0; j < V; ++j) (*probs)[b * V + j] = std::exp(in[j] - lse);
        double nll = lse - in[targets[b]];
        bits[b] = nll * kLog2e;
        total += nll;
    }
    loss.v()[0] = total / B;
    ensure_finite(loss, "cross_entropy");
    if (rg) {
        auto li = logits.impl_, oi = loss.impl_;
        auto tgts = targets;
        tape->record([li, oi, probs, tgts, B, V] {
            double dl = oi->g[0] / B;
            for (size_t b = 0; b < B; ++b)
                for (size_t j = 0; j < V; ++j)
                    li->g[b * V + j] +=
                        dl * ((*probs)[b * V + j] - (j == tgts[b] ? 1.0 : 0.0));
        });
    }
    return {loss, std::move(bits)};
}

void rmsprop_step(std::vector<Tensor>& params, RmsPropState& state) {
    if (state.acc.size() != params.size()) {
        state.acc.assign(params.size(), {});
        for (size_t i = 0; i < params.size(); ++i) state.acc[i].assign(params[i].size(), 0.0);
    }
    for (size_t i = 0; i < params.size(); ++i) {
        Tensor& p = params[i];
        if (p.size() != state.acc[i].size()) throw ShapeMismatch("rmsprop: state size mismatch");
        for (size_t j = 0; j < p.size(); ++j) {
            double g = p.g()[j];
            double& a = state.acc[i][j];
            a = state.rho * a + (1.0 - state.rho) * g * g;
            p.v()[j] -= state.lr * g / (std::sqrt(a) + state.eps);
        }
    }
}

}  // namespace gnf::nn
