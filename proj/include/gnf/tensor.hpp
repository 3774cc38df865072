#pragma once

#include <cstdint>
#include <functional>
#include <memory>
#include <vector>

#include "gnf/common.hpp"

namespace gnf::nn {

using Shape = std::vector<size_t>;

inline size_t numel(const Shape& s) {
    size_t n = 1;
    for (size_t d : s) n *= d;
    return n;
}

struct TensorImpl {
    Shape shape;
    std::vector<double> v;
    std::vector<double> g;  // allocated iff requires_grad
    bool rg = false;
};

// Value-semantic handle to a shared tensor node. Values are treated as
// immutable once produced by an op; gradients accumulate additively.
class Tensor {
public:
    Tensor() = default;

    static Tensor zeros(Shape shape, bool requires_grad = false);
    static Tensor from(Shape shape, std::vector<double> data, bool requires_grad = false);
    static Tensor scalar(double x);

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    size_t size() const { return impl_->v.size(); }
    size_t dim(size_t i) const { return impl_->shape[i]; }
    size_t ndim() const { return impl_->shape.size(); }

    std::vector<double>& v() { return impl_->v; }
    const std::vector<double>& v() const { return impl_->v; }
    std::vector<double>& g() { return impl_->g; }
    const std::vector<double>& g() const { return impl_->g; }
    bool requires_grad() const { return impl_ && impl_->rg; }

    void zero_grad() {
        if (impl_ && impl_->rg) std::fill(impl_->g.begin(), impl_->g.end(), 0.0);
    }
    // Same values, no gradient tracking, independent storage.
    Tensor detach() const { return from(impl_->shape, impl_->v, false); }

    TensorImpl* node() const { return impl_.get(); }
    std::shared_ptr<TensorImpl> impl_;
};

// Records backward closures in forward order; backward() replays them reversed.
class Tape {
public:
    void record(std::function<void()> op) { ops_.push_back(std::move(op)); }
    void backward(Tensor loss);
    void clear() { ops_.clear(); }
    size_t size() const { return ops_.size(); }

private:
    std::vector<std::function<void()>> ops_;
};

void ensure_finite(const Tensor& t, const char* where);

// --- core ops (tape may be null for inference) ---
Tensor add(Tape* tape, const Tensor& a, const Tensor& b);
Tensor sub(Tape* tape, const Tensor& a, const Tensor& b);
Tensor mul(Tape* tape, const Tensor& a, const Tensor& b);
Tensor scale(Tape* tape, const Tensor& a, double c);
Tensor add_bias(Tape* tape, const Tensor& x, const Tensor& bias);     // broadcast over last dim
Tensor matmul(Tape* tape, const Tensor& a, const Tensor& b);          // [m,k]x[k,n]
Tensor bmm(Tape* tape, const Tensor& a, const Tensor& b);             // [B,m,k]x[B,k,n]
Tensor transpose_last2(Tape* tape, const Tensor& x);
Tensor reshape(Tape* tape, const Tensor& x, Shape shape);
Tensor concat_mid(Tape* tape, const Tensor& a, const Tensor& b);      // [B,N1,d]+[B,N2,d]
Tensor slice_last(Tape* tape, const Tensor& x, size_t start, size_t len);
Tensor concat_last(Tape* tape, const std::vector<Tensor>& parts);
Tensor softmax_last(Tape* tape, const Tensor& x);
Tensor relu(Tape* tape, const Tensor& x);
Tensor gelu(Tape* tape, const Tensor& x);                             // tanh approximation
Tensor sum_all(Tape* tape, const Tensor& x);

// gather along the last dim with a row-dependent fixed index table:
// out[b,i,j] = x[b,i, idx[i*J + j]], idx not differentiated.
Tensor gather_last(Tape* tape, const Tensor& x, const std::vector<size_t>& idx, size_t J);

}  // namespace gnf::nn
