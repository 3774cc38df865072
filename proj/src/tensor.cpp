#include "gnf/tensor.hpp"

#include <cmath>
#include <cstring>

namespace gnf::nn {

Tensor Tensor::zeros(Shape shape, bool requires_grad) {
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->v.assign(numel(t.impl_->shape), 0.0);
    t.impl_->rg = requires_grad;
    if (requires_grad) t.impl_->g.assign(t.impl_->v.size(), 0.0);
    return t;
}

Tensor Tensor::from(Shape shape, std::vector<double> data, bool requires_grad) {
    if (numel(shape) != data.size()) throw ShapeMismatch("tensor data does not match shape");
    Tensor t;
    t.impl_ = std::make_shared<TensorImpl>();
    t.impl_->shape = std::move(shape);
    t.impl_->v = std::move(data);
    t.impl_->rg = requires_grad;
    if (requires_grad) t.impl_->g.assign(t.impl_->v.size(), 0.0);
    return t;
}

Tensor Tensor::scalar(double x) { return from({1}, {x}); }

void Tape::backward(Tensor loss) {
    if (loss.size() != 1) throw NotScalar("backward requires a scalar loss");
    if (!loss.requires_grad()) throw NotScalar("loss is not on the tape");
    loss.g()[0] += 1.0;
    for (auto it = ops_.rbegin(); it != ops_.rend(); ++it) (*it)();
}

void ensure_finite(const Tensor& t, const char* where) {
    for (double x : t.v())
        if (!std::isfinite(x)) throw NonFinite(std::string("non-finite value in ") + where);
}

namespace {

bool track(Tape* tape, std::initializer_list<const Tensor*> ins) {
    if (!tape) return false;
    for (const Tensor* t : ins)
        if ((*t).requires_grad()) return true;
    return false;
}

Tensor out_like(Shape shape, bool rg) { return Tensor::zeros(std::move(shape), rg); }

}  // namespace

Tensor add(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeMismatch("add: shape mismatch");
    bool rg = track(tape, {&a, &b});
    Tensor out = out_like(a.shape(), rg);
    for (size_t i = 0; i < a.size(); ++i) out.v()[i] = a.v()[i] + b.v()[i];
    ensure_finite(out, "add");
    if (rg) {
        auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
        tape->record([ai, bi, oi] {
            if (ai->rg) for (size_t i = 0; i < oi->g.size(); ++i) ai->g[i] += oi->g[i];
            if (bi->rg) for (size_t i = 0; i < oi->g.size(); ++i) bi->g[i] += oi->g[i];
        });
    }
    return out;
}

Tensor sub(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeMismatch("sub: shape mismatch");
    bool rg = track(tape, {&a, &b});
    Tensor out = out_like(a.shape(), rg);
    for (size_t i = 0; i < a.size(); ++i) out.v()[i] = a.v()[i] - b.v()[i];
    ensure_finite(out, "sub");
    if (rg) {
        auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
        tape->record([ai, bi, oi] {
            if (ai->rg) for (size_t i = 0; i < oi->g.size(); ++i) ai->g[i] += oi->g[i];
            if (bi->rg) for (size_t i = 0; i < oi->g.size(); ++i) bi->g[i] -= oi->g[i];
        });
    }
    return out;
}

Tensor mul(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.shape() != b.shape()) throw ShapeMismatch("mul: shape mismatch");
    bool rg = track(tape, {&a, &b});
    Tensor out = out_like(a.shape(), rg);
    for (size_t i = 0; i < a.size(); ++i) out.v()[i] = a.v()[i] * b.v()[i];
    ensure_finite(out, "mul");
    if (rg) {
        auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
        tape->record([ai, bi, oi] {
            if (ai->rg) for (size_t i = 0; i < oi->g.size(); ++i) ai->g[i] += oi->g[i] * bi->v[i];
            if (bi->rg) for (size_t i = 0; i < oi->g.size(); ++i) bi->g[i] += oi->g[i] * ai->v[i];
        });
    }
    return out;
}

Tensor scale(Tape* tape, const Tensor& a, double c) {
    bool rg = track(tape, {&a});
    Tensor out = out_like(a.shape(), rg);
    for (size_t i = 0; i < a.size(); ++i) out.v()[i] = a.v()[i] * c;
    ensure_finite(out, "scale");
    if (rg) {
        auto ai = a.impl_, oi = out.impl_;
        tape->record([ai, oi, c] {
            for (size_t i = 0; i < oi->g.size(); ++i) ai->g[i] += oi->g[i] * c;
        });
    }
    return out;
}

Tensor add_bias(Tape* tape, const Tensor& x, const Tensor& bias) {
    size_t d = x.shape().back();
    if (bias.ndim() != 1 || bias.dim(0) != d) throw ShapeMismatch("add_bias: bias dim mismatch");
    bool rg = track(tape, {&x, &bias});
    Tensor out = out_like(x.shape(), rg);
    size_t rows = x.size() / d;
    for (size_t r = 0; r < rows; ++r)
        for (size_t j = 0; j < d; ++j) out.v()[r * d + j] = x.v()[r * d + j] + bias.v()[j];
    ensure_finite(out, "add_bias");
    if (rg) {
        auto xi = x.impl_, bi = bias.impl_, oi = out.impl_;
        tape->record([xi, bi, oi, rows, d] {
            if (xi->rg) for (size_t i = 0; i < oi->g.size(); ++i) xi->g[i] += oi->g[i];
            if (bi->rg)
                for (size_t r = 0; r < rows; ++r)
                    for (size_t j = 0; j < d; ++j) bi->g[j] += oi->g[r * d + j];
        });
    }
    return out;
}

namespace {
// C[m,n] += A[m,k] * B[k,n], optionally with A or B transposed. ikj order.
void gemm_acc(const double* A, const double* B, double* C, size_t m, size_t k, size_t n,
              bool at, bool bt) {
    for (size_t i = 0; i < m; ++i) {
        for (size_t p = 0; p < k; ++p) {
            double a = at ? A[p * m + i] : A[i * k + p];
            if (a == 0.0) continue;
            const double* brow = bt ? nullptr : B + p * n;
            double* crow = C + i * n;
            if (!bt) {
                for (size_t j = 0; j < n; ++j) crow[j] += a * brow[j];
            } else {
                for (size_t j = 0; j < n; ++j) crow[j] += a * B[j * k + p];
            }
        }
    }
}
}  // namespace

Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.ndim() != 2 || b.ndim() != 2 || a.dim(1) != b.dim(0))
        throw ShapeMismatch("matmul: incompatible shapes");
    size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    bool rg = track(tape, {&a, &b});
    Tensor out = out_like({m, n}, rg);
    gemm_acc(a.v().data(), b.v().data(), out.v().data(), m, k, n, false, false);
    ensure_finite(out, "matmul");
    if (rg) {
        auto ai = a.impl_, bi = b.impl_, oi = out.impl_;
        tape->record([ai, bi, oi, m, k, n] {
            // dA = dC * B^T ; dB = A^T * dC
            if (ai->rg) gemm_acc(oi->g.data(), bi->v.data(), ai->g.data(), m, n, k, false, true);
            if (bi->rg) gemm_acc(ai->v.data(), oi->g.data(), bi->g.data(), k, m, n, true, false);
        });
    }
    return out;
}

Tensor bmm(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(1))
        throw ShapeMismatch("bmm: incompatible shapes");
    size_t B = a.dim(0), m = a.dim(1), k = a.dim(2), n = b.dim(2);
    bool rg = track(tape, {&a, &b});
    Tensor out = out_like({B, m, n}, rg);
    for (size_t bi = 0; bi < B; ++bi)
        gemm_acc(a.v().data() + bi * m * k, b.v().data() + bi * k * n,
                 out.v().data() + bi * m * n, m, k, n, false, false);
    ensure_finite(out, "bmm");
    if (rg) {
        auto av = a.impl_, bv = b.impl_, ov = out.impl_;
        tape->record([av, bv, ov, B, m, k, n] {
            for (size_t bi = 0; bi < B; ++bi) {
                if (av->rg)
                    gemm_acc(ov->g.data() + bi * m * n, bv->v.data() + bi * k * n,
                             av->g.data() + bi * m * k, m, n, k, false, true);
                if (bv->rg)
                    gemm_acc(av->v.data() + bi * m * k, ov->g.data() + bi * m * n,
                             bv->g.data() + bi * k * n, k, m, n, true, false);
            }
        });
    }
    return out;
}

Tensor transpose_last2(Tape* tape, const Tensor& x) {
    if (x.ndim() < 2) throw ShapeMismatch("transpose_last2 needs >=2 dims");
    Shape s = x.shape();
    size_t r = s[s.size() - 2], c = s[s.size() - 1];
    std::swap(s[s.size() - 2], s[s.size() - 1]);
    size_t batch = x.size() / (r * c);
    bool rg = track(tape, {&x});
    Tensor out = out_like(s, rg);
    for (size_t b = 0; b < batch; ++b)
        for (size_t i = 0; i < r; ++i)
            for (size_t j = 0; j < c; ++j)
                out.v()[b * r * c + j * r + i] = x.v()[b * r * c + i * c + j];
    if (rg) {
        auto xi = x.impl_, oi = out.impl_;
        tape->record([xi, oi, batch, r, c] {
            for (size_t b = 0; b < batch; ++b)
                for (size_t i = 0; i < r; ++i)
                    for (size_t j = 0; j < c; ++j)
                        xi->g[b * r * c + i * c + j] += oi->g[b * r * c + j * r + i];
        });
    }
    return out;
}

Tensor reshape(Tape* tape, const Tensor& x, Shape shape) {
    if (numel(shape) != x.size()) throw ShapeMismatch("reshape: element count mismatch");
    bool rg = track(tape, {&x});
    Tensor out = out_like(shape, rg);
    out.v() = x.v();
    if (rg) {
        auto xi = x.impl_, oi = out.impl_;
        tape->record([xi, oi] {
            for (size_t i = 0; i < oi->g.size(); ++i) xi->g[i] += oi->g[i];
        });
    }
    return out;
}

Tensor concat_mid(Tape* tape, const Tensor& a, const Tensor& b) {
    if (a.ndim() != 3 || b.ndim() != 3 || a.dim(0) != b.dim(0) || a.dim(2) != b.dim(2))
        throw ShapeMismatch("concat_mid: incompatible shapes");
    size_t B = a.dim(0), n1 = a.dim(1), n2 = b.dim(1), d = a.dim(2);
    bool rg = track(tape, {&a, &b});
    Tensor out = out_like({B, n1 + n2, d}, rg);
    for (size_t bi = 0; bi < B; ++bi) {
        std::memcpy(out.v().data() + bi * (n1 + n2) * d, a.v().data() + bi * n1 * d,
                    n1 * d * sizeof(double));
        std::memcpy(out.v().data() + bi * (n1 + n2) * d + n1 * d, b.v().data() + bi * n2 * d,
                    n2 * d * sizeof(double));
    }
    if (rg) {
        auto ai = a.impl_, bv = b.impl_, oi = out.impl_;
        tape->record([ai, bv, oi, B, n1, n2, d] {
            for (size_t bi = 0; bi < B; ++bi) {
                if (ai->rg)
                    for (size_t i = 0; i < n1 * d; ++i)
                        ai->g[bi * n1 * d + i] += oi->g[bi * (n1 + n2) * d + i];
                if (bv->rg)
                    for (size_t i = 0; i < n2 * d; ++i)
                        bv->g[bi * n2 * d + i] += oi->g[bi * (n1 + n2) * d + n1 * d + i];
            }
        });
    }
    return out;
}

Tensor slice_last(Tape* tape, const Tensor& x, size_t start, size_t len) {
    size_t d = x.shape().back();
    if (start + len > d) throw ShapeMismatch("slice_last: out of range");
    Shape s = x.shape();
    s.back() = len;
    size_t rows = x.size() / d;
    bool rg = track(tape, {&x});
    Tensor out = out_like(s, rg);
    for (size_t r = 0; r < rows; ++r)
        for (size_t j = 0; j < len; ++j) out.v()[r * len + j] = x.v()[r * d + start + j];
    if (rg) {
        auto xi = x.impl_, oi = out.impl_;
        tape->record([xi, oi, rows, d, start, len] {
            for (size_t r = 0; r < rows; ++r)
                for (size_t j = 0; j < len; ++j) xi->g[r * d + start + j] += oi->g[r * len + j];
        });
    }
    return out;
}

Tensor concat_last(Tape* tape, const std::vector<Tensor>& parts) {
    if (parts.empty()) throw ShapeMismatch("concat_last: no inputs");
    size_t total = 0;
    size_t rows = parts[0].size() / parts[0].shape().back();
    for (const auto& p : parts) {
        if (p.size() / p.shape().back() != rows) throw ShapeMismatch("concat_last: row mismatch");
        total += p.shape().back();
    }
    bool rg = false;
    if (tape)
        for (const auto& p : parts) rg = rg || p.requires_grad();
    Shape s = parts[0].shape();
    s.back() = total;
    Tensor out = out_like(s, rg);
    size_t off = 0;
    for (const auto& p : parts) {
        size_t d = p.shape().back();
        for (size_t r = 0; r < rows; ++r)
            for (size_t j = 0; j < d; ++j) out.v()[r * total + off + j] = p.v()[r * d + j];
        off += d;
    }
    if (rg) {
        std::vector<std::shared_ptr<TensorImpl>> ins;
        for (const auto& p : parts) ins.push_back(p.impl_);
        auto oi = out.impl_;
        tape->record([ins, oi, rows, total] {
            size_t off = 0;
            for (const auto& pi : ins) {
                size_t d = pi->shape.back();
                if (pi->rg)
                    for (size_t r = 0; r < rows; ++r)
                        for (size_t j = 0; j < d; ++j) pi->g[r * d + j] += oi->g[r * total + off + j];
                off += d;
            }
        });
    }
    return out;
}

Tensor softmax_last(Tape* tape, const Tensor& x) {
    size_t d = x.shape().back();
    size_t rows = x.size() / d;
    bool rg = track(tape, {&x});
    Tensor out = out_like(x.shape(), rg);
    for (size_t r = 0; r < rows; ++r) {
        const double* in = x.v().data() + r * d;
        double* o = out.v().data() + r * d;
        double mx = in[0];
        for (size_t j = 1; j < d; ++j) mx = std::max(mx, in[j]);
        double sum = 0.0;
        for (size_t j = 0; j < d; ++j) {
            o[j] = std::exp(in[j] - mx);
            sum += o[j];
        }
        for (size_t j = 0; j < d; ++j) o[j] /= sum;
    }
    ensure_finite(out, "softmax");
    if (rg) {
        auto xi = x.impl_, oi = out.impl_;
        tape->record([xi, oi, rows, d] {
            for (size_t r = 0; r < rows; ++r) {
                const double* y = oi->v.data() + r * d;
                const double* dy = oi->g.data() + r * d;
                double dot = 0.0;
                for (size_t j = 0; j < d; ++j) dot += y[j] * dy[j];
                for (size_t j = 0; j < d; ++j) xi->g[r * d + j] += y[j] * (dy[j] - dot);
            }
        });
    }
    return out;
}

Tensor relu(Tape* tape, const Tensor& x) {
    bool rg = track(tape, {&x});
    Tensor out = out_like(x.shape(), rg);
    for (size_t i = 0; i < x.size(); ++i) out.v()[i] = x.v()[i] > 0 ? x.v()[i] : 0.0;
    if (rg) {
        auto xi = x.impl_, oi = out.impl_;
        tape->record([xi, oi] {
            for (size_t i = 0; i < oi->g.size(); ++i)
                if (xi->v[i] > 0) xi->g[i] += oi->g[i];
        });
    }
    return out;
}

Tensor gelu(Tape* tape, const Tensor& x) {
    constexpr double kC = 0.7978845608028654;  // sqrt(2/pi)
    constexpr double kA = 0.044715;
    bool rg = track(tape, {&x});
    Tensor out = out_like(x.shape(), rg);
    for (size_t i = 0; i < x.size(); ++i) {
        double v = x.v()[i];
        out.v()[i] = 0.5 * v * (1.0 + std::tanh(kC * (v + kA * v * v * v)));
    }
    ensure_finite(out, "gelu");
    if (rg) {
        auto xi = x.impl_, oi = out.impl_;
        tape->record([xi, oi] {
            for (size_t i = 0; i < oi->g.size(); ++i) {
                double v = xi->v[i];
                double u = kC * (v + kA * v * v * v);
                double t = std::tanh(u);
                double du = kC * (1.0 + 3.0 * kA * v * v);
                double d = 0.5 * (1.0 + t) + 0.5 * v * (1.0 - t * t) * du;
                xi->g[i] += oi->g[i] * d;
            }
        });
    }
    return out;
}

Tensor sum_all(Tape* tape, const Tensor& x) {
    bool rg = track(tape, {&x});
    Tensor out = out_like({1}, rg);
    double s = 0.0;
    for (double v : x.v()) s += v;
    out.v()[0] = s;
    if (rg) {
        auto xi = x.impl_, oi = out.impl_;
        tape->record([xi, oi] {
            for (size_t i = 0; i < xi->g.size(); ++i) xi->g[i] += oi->g[0];
        });
    }
    return out;
}

Tensor gather_last(Tape* tape, const Tensor& x, const std::vector<size_t>& idx, size_t J) {
    if (x.ndim() != 3) throw ShapeMismatch("gather_last expects [B,N,M]");
    size_t B = x.dim(0), N = x.dim(1), M = x.dim(2);
    if (idx.size() != N * J) throw ShapeMismatch("gather_last: index table size mismatch");
    for (size_t i : idx)
        if (i >= M) throw ShapeMismatch("gather_last: index out of range");
    bool rg = track(tape, {&x});
    Tensor out = out_like({B, N, J}, rg);
    for (size_t b = 0; b < B; ++b)
        for (size_t i = 0; i < N; ++i)
            for (size_t j = 0; j < J; ++j)
                out.v()[(b * N + i) * J + j] = x.v()[(b * N + i) * M + idx[i * J + j]];
    if (rg) {
        auto xi = x.impl_, oi = out.impl_;
        auto table = idx;
        tape->record([xi, oi, table, B, N, M, J] {
            for (size_t b = 0; b < B; ++b)
                for (size_t i = 0; i < N; ++i)
                    for (size_t j = 0; j < J; ++j)
                        xi->g[(b * N + i) * M + table[i * J + j]] += oi->g[(b * N + i) * J + j];
        });
    }
    return out;
}

}  // namespace gnf::nn
