#pragma once

#include <cassert>
#include <cmath>
#include <cstring>
#include <functional>
#include <memory>
#include <vector>

#include "paon/common.hpp"

namespace paon {

template <class S>
struct TensorImpl {
    Shape shape;
    std::vector<S> value;
    std::vector<S> grad;  // empty until first needed
    bool requires_grad = false;
    bool needs_grad = false;  // gradient must flow through this tensor
    bool is_leaf = true;      // false iff produced by a taped op

    void ensure_grad() {
        if (grad.empty()) grad.assign(value.size(), S(0));
    }
};

// Dense 4D tensor (N,C,H,W) with shared storage. Copies are shallow: they
// alias the same buffer, which is how layer parameters stay shared between
// the model, the optimizer, and checkpointing.
template <class S>
class TensorT {
public:
    TensorT() = default;

    explicit TensorT(Shape s, S fill = S(0))
        : impl_(std::make_shared<TensorImpl<S>>()) {
        impl_->shape = s;
        impl_->value.assign(static_cast<size_t>(s.numel()), fill);
    }

    static TensorT zeros(Shape s) { return TensorT(s, S(0)); }
    static TensorT full(Shape s, S v) { return TensorT(s, v); }

    static TensorT from_data(Shape s, std::vector<S> data) {
        if (static_cast<std::int64_t>(data.size()) != s.numel())
            throw UsageError("tensor data length " + std::to_string(data.size()) +
                             " does not match shape " + s.str());
        TensorT t;
        t.impl_ = std::make_shared<TensorImpl<S>>();
        t.impl_->shape = s;
        t.impl_->value = std::move(data);
        return t;
    }

    bool defined() const { return impl_ != nullptr; }
    const Shape& shape() const { return impl_->shape; }
    std::int64_t numel() const { return impl_->shape.numel(); }

    S* data() { return impl_->value.data(); }
    const S* data() const { return impl_->value.data(); }
    std::vector<S>& vec() { return impl_->value; }
    const std::vector<S>& vec() const { return impl_->value; }

    S& at(int n, int c, int h, int w) {
        return impl_->value[flat(n, c, h, w)];
    }
    S at(int n, int c, int h, int w) const {
        return impl_->value[flat(n, c, h, w)];
    }

    // Value of a scalar (1,1,1,1) tensor.
    S item() const {
        if (numel() != 1) throw UsageError("item() on non-scalar tensor " + shape().str());
        return impl_->value[0];
    }

    bool requires_grad() const { return impl_->requires_grad; }
    TensorT& set_requires_grad(bool b) {
        impl_->requires_grad = b;
        impl_->needs_grad = b || !impl_->is_leaf;
        return *this;
    }
    bool needs_grad() const { return impl_->needs_grad; }
    bool is_leaf() const { return impl_->is_leaf; }

    bool has_grad() const { return !impl_->grad.empty(); }
    std::vector<S>& grad() {
        impl_->ensure_grad();
        return impl_->grad;
    }
    const std::vector<S>& grad() const {
        const_cast<TensorImpl<S>*>(impl_.get())->ensure_grad();
        return impl_->grad;
    }
    void zero_grad() {
        if (!impl_->grad.empty())
            std::fill(impl_->grad.begin(), impl_->grad.end(), S(0));
    }

    bool all_finite() const {
        for (S v : impl_->value)
            if (!std::isfinite(static_cast<double>(v))) return false;
        return true;
    }

    std::shared_ptr<TensorImpl<S>> impl() const { return impl_; }

    // Deep copy of values; grad state is not copied.
    TensorT clone() const {
        TensorT t;
        t.impl_ = std::make_shared<TensorImpl<S>>();
        t.impl_->shape = impl_->shape;
        t.impl_->value = impl_->value;
        t.impl_->requires_grad = impl_->requires_grad;
        t.impl_->needs_grad = impl_->requires_grad;
        return t;
    }

    // Same values in another scalar type (the 64-bit shadow path for
    // gradient checks, and back).
    template <class T>
    TensorT<T> cast() const {
        TensorT<T> t{shape()};
        const S* src = data();
        T* dst = t.data();
        for (std::int64_t i = 0; i < numel(); ++i) dst[i] = static_cast<T>(src[i]);
        if (requires_grad()) t.set_requires_grad(true);
        return t;
    }

private:
    size_t flat(int n, int c, int h, int w) const {
        const Shape& s = impl_->shape;
        assert(n >= 0 && n < s.n && c >= 0 && c < s.c && h >= 0 && h < s.h &&
               w >= 0 && w < s.w);
        return ((static_cast<size_t>(n) * s.c + c) * s.h + h) * s.w + w;
    }

    std::shared_ptr<TensorImpl<S>> impl_;
};

// Ordered record of executed ops. The backward pass revisits the record in
// exact reverse execution order; intermediate grads are reset per pass while
// leaf grads accumulate across passes until zero_grad().
template <class S>
class TapeT {
public:
    void record(std::shared_ptr<TensorImpl<S>> out, std::function<void()> fn) {
        out->is_leaf = false;
        out->needs_grad = true;
        nodes_.push_back(Node{std::move(out), std::move(fn)});
    }

    void backward(const TensorT<S>& loss) {
        if (loss.numel() != 1)
            throw UsageError("backward() expects a scalar loss, got shape " +
                             loss.shape().str());
        for (auto& n : nodes_) {
            n.out->ensure_grad();
            std::fill(n.out->grad.begin(), n.out->grad.end(), S(0));
        }
        loss.impl()->ensure_grad();
        loss.impl()->grad[0] += S(1);
        for (auto it = nodes_.rbegin(); it != nodes_.rend(); ++it) it->fn();
    }

    void clear() { nodes_.clear(); }
    size_t size() const { return nodes_.size(); }

    static TapeT* current() { return current_ref(); }

    // RAII activation: ops executed inside the scope record onto this tape.
    class Scope {
    public:
        explicit Scope(TapeT& t) : prev_(current_ref()) { current_ref() = &t; }
        ~Scope() { current_ref() = prev_; }
        Scope(const Scope&) = delete;
        Scope& operator=(const Scope&) = delete;

    private:
        TapeT* prev_;
    };

private:
    struct Node {
        std::shared_ptr<TensorImpl<S>> out;
        std::function<void()> fn;
    };

    static TapeT*& current_ref() {
        thread_local TapeT* cur = nullptr;
        return cur;
    }

    std::vector<Node> nodes_;
};

using Tensor = TensorT<float>;
using Tape = TapeT<float>;

// Backward through the currently scoped tape.
template <class S>
void backward(const TensorT<S>& loss) {
    TapeT<S>* t = TapeT<S>::current();
    if (!t) throw UsageError("backward() called with no active tape");
    t->backward(loss);
}

}  // namespace paon
