#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <functional>
#include <memory>
#include <string>
#include <unordered_set>
#include <utility>
#include <vector>

#include "flowsynth/common.hpp"
#include "flowsynth/rng.hpp"

namespace flowsynth {

namespace detail {

inline bool& grad_mode_flag() {
    thread_local bool enabled = true;
    return enabled;
}

template <typename T>
struct Node {
    Shape shape;
    std::vector<T> value;
    std::vector<T> grad;
    bool requires_grad = false;
    bool is_leaf = true;
    std::vector<std::shared_ptr<Node>> parents;
    std::function<void()> backward_fn;

    void ensure_grad() {
        if (grad.size() != value.size()) grad.assign(value.size(), T(0));
    }
};

// --- raw kernels -----------------------------------------------------------

// C[M x N] += A[M x K] * B[K x N]
// Rows are processed four at a time so each B row is loaded once per quad.
// Every output element still accumulates over p in increasing order, so the
// result does not depend on how parallel_for splits the row range.
template <typename T>
void mm_nn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    parallel_for(0, m, 16, [&](std::size_t lo, std::size_t hi) {
        std::size_t i = lo;
        for (; i + 4 <= hi; i += 4) {
            T* c0 = c + i * n;
            T* c1 = c0 + n;
            T* c2 = c1 + n;
            T* c3 = c2 + n;
            const T* a0 = a + i * k;
            const T* a1 = a0 + k;
            const T* a2 = a1 + k;
            const T* a3 = a2 + k;
            for (std::size_t p = 0; p < k; ++p) {
                const T v0 = a0[p], v1 = a1[p], v2 = a2[p], v3 = a3[p];
                const T* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) {
                    const T bv = brow[j];
                    c0[j] += v0 * bv;
                    c1[j] += v1 * bv;
                    c2[j] += v2 * bv;
                    c3[j] += v3 * bv;
                }
            }
        }
        for (; i < hi; ++i) {
            T* crow = c + i * n;
            const T* arow = a + i * k;
            for (std::size_t p = 0; p < k; ++p) {
                const T av = arow[p];
                const T* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

// C[M x N] += A[M x K] * B^T, with B stored [N x K]
// Row-of-B dot products defeat the vectorizer (summing a row needs
// reassociation), so transpose B once into scratch and reuse the wide
// kernel. The scratch is thread_local to keep repeated calls allocation-free.
template <typename T>
void mm_nt(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    static thread_local std::vector<T> bt;
    if (bt.size() < k * n) bt.resize(k * n);
    for (std::size_t j = 0; j < n; ++j) {
        const T* brow = b + j * k;
        for (std::size_t p = 0; p < k; ++p) bt[p * n + j] = brow[p];
    }
    mm_nn(a, bt.data(), c, m, k, n);
}

// C[M x N] += A^T * B, with A stored [K x M]
// Same quad-row trick as mm_nn, with the reduction axis outermost; the four
// A loads per p are strided but amortized over a full B row of work.
template <typename T>
void mm_tn(const T* a, const T* b, T* c, std::size_t m, std::size_t k, std::size_t n) {
    parallel_for(0, m, 16, [&](std::size_t lo, std::size_t hi) {
        std::size_t i = lo;
        for (; i + 4 <= hi; i += 4) {
            T* c0 = c + i * n;
            T* c1 = c0 + n;
            T* c2 = c1 + n;
            T* c3 = c2 + n;
            for (std::size_t p = 0; p < k; ++p) {
                const T* acol = a + p * m + i;
                const T v0 = acol[0], v1 = acol[1], v2 = acol[2], v3 = acol[3];
                const T* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) {
                    const T bv = brow[j];
                    c0[j] += v0 * bv;
                    c1[j] += v1 * bv;
                    c2[j] += v2 * bv;
                    c3[j] += v3 * bv;
                }
            }
        }
        for (; i < hi; ++i) {
            T* crow = c + i * n;
            for (std::size_t p = 0; p < k; ++p) {
                const T av = a[p * m + i];
                const T* brow = b + p * n;
                for (std::size_t j = 0; j < n; ++j) crow[j] += av * brow[j];
            }
        }
    });
}

// Gathers conv input [C_in x T_in] into the patch matrix [C_in*W x T_out],
// row (ci*W + wi) holding tap wi of channel ci. cols must come in zeroed;
// out-of-range taps stay zero. Row order (ci, wi) matches the flattened
// kernel layout so the conv matmul accumulates taps like a sliding window.
template <typename T>
void im2col(const T* x, std::size_t c_in, std::size_t t_in, std::size_t w, std::size_t stride, std::size_t padding,
            std::size_t t_out, T* cols) {
    const long pad = static_cast<long>(padding), st = static_cast<long>(stride), tin = static_cast<long>(t_in);
    for (std::size_t ci = 0; ci < c_in; ++ci) {
        const T* xrow = x + ci * t_in;
        for (std::size_t wi = 0; wi < w; ++wi) {
            T* crow = cols + (ci * w + wi) * t_out;
            const long off = static_cast<long>(wi) - pad;
            // valid t range: 0 <= t*st + off < tin
            long t0 = off < 0 ? (-off + st - 1) / st : 0;
            long t1 = static_cast<long>(t_out) - 1;
            if (t1 * st + off >= tin) t1 = (tin - 1 - off) / st;
            for (long t = t0; t <= t1; ++t) crow[t] = xrow[t * st + off];
        }
    }
}

// Scatter-add inverse of im2col: folds a patch-matrix gradient back onto the
// input gradient, same tap order as the gather.
template <typename T>
void col2im_add(const T* cols, std::size_t c_in, std::size_t t_in, std::size_t w, std::size_t stride,
                std::size_t padding, std::size_t t_out, T* dx) {
    const long pad = static_cast<long>(padding), st = static_cast<long>(stride), tin = static_cast<long>(t_in);
    for (std::size_t ci = 0; ci < c_in; ++ci) {
        T* dxrow = dx + ci * t_in;
        for (std::size_t wi = 0; wi < w; ++wi) {
            const T* crow = cols + (ci * w + wi) * t_out;
            const long off = static_cast<long>(wi) - pad;
            long t0 = off < 0 ? (-off + st - 1) / st : 0;
            long t1 = static_cast<long>(t_out) - 1;
            if (t1 * st + off >= tin) t1 = (tin - 1 - off) / st;
            for (long t = t0; t <= t1; ++t) dxrow[t * st + off] += crow[t];
        }
    }
}

}  // namespace detail

// RAII guard: ops inside the scope build no graph.
class NoGradGuard {
public:
    NoGradGuard() : prev_(detail::grad_mode_flag()) { detail::grad_mode_flag() = false; }
    ~NoGradGuard() { detail::grad_mode_flag() = prev_; }
    NoGradGuard(const NoGradGuard&) = delete;
    NoGradGuard& operator=(const NoGradGuard&) = delete;

private:
    bool prev_;
};

inline bool grad_enabled() { return detail::grad_mode_flag(); }

template <typename T>
class Tensor {
public:
    Tensor() : node_(nullptr) {}

    static Tensor zeros(Shape shape) {
        Tensor t;
        t.node_ = std::make_shared<detail::Node<T>>();
        t.node_->value.assign(shape_numel(shape), T(0));
        t.node_->shape = std::move(shape);
        return t;
    }

    static Tensor full(Shape shape, T v) {
        Tensor t = zeros(std::move(shape));
        std::fill(t.data().begin(), t.data().end(), v);
        return t;
    }

    static Tensor scalar(T v) { return full({1}, v); }

    static Tensor from_data(Shape shape, std::vector<T> values) {
        if (shape_numel(shape) != values.size())
            throw ShapeError("tensor: data length " + std::to_string(values.size()) + " does not match shape " +
                             shape_str(shape));
        Tensor t;
        t.node_ = std::make_shared<detail::Node<T>>();
        t.node_->shape = std::move(shape);
        t.node_->value = std::move(values);
        return t;
    }

    bool defined() const { return node_ != nullptr; }
    const Shape& shape() const { return node_->shape; }
    std::size_t ndim() const { return node_->shape.size(); }
    std::size_t dim(std::size_t i) const { return node_->shape[i]; }
    std::size_t size() const { return node_->value.size(); }

    std::vector<T>& data() { return node_->value; }
    const std::vector<T>& data() const { return node_->value; }

    T item() const {
        if (size() != 1) throw ShapeError("item: tensor of shape " + shape_str(shape()) + " is not scalar");
        return node_->value[0];
    }

    bool requires_grad() const { return node_->requires_grad; }
    Tensor& set_requires_grad(bool rg = true) {
        node_->requires_grad = rg;
        return *this;
    }

    bool has_grad() const { return node_->grad.size() == node_->value.size(); }
    std::vector<T>& grad() {
        node_->ensure_grad();
        return node_->grad;
    }
    const std::vector<T>& grad() const {
        node_->ensure_grad();
        return node_->grad;
    }
    void zero_grad() { node_->grad.assign(node_->value.size(), T(0)); }

    std::shared_ptr<detail::Node<T>> node() const { return node_; }

    static Tensor wrap(std::shared_ptr<detail::Node<T>> n) {
        Tensor t;
        t.node_ = std::move(n);
        return t;
    }

private:
    std::shared_ptr<detail::Node<T>> node_;
};

namespace detail {

template <typename T>
Tensor<T> make_result(Shape shape, std::vector<std::shared_ptr<Node<T>>> parents) {
    auto n = std::make_shared<Node<T>>();
    n->value.assign(shape_numel(shape), T(0));
    n->shape = std::move(shape);
    bool rg = false;
    if (grad_mode_flag()) {
        for (const auto& p : parents)
            if (p->requires_grad) rg = true;
    }
    n->requires_grad = rg;
    if (rg) {
        n->is_leaf = false;
        n->parents = std::move(parents);
    }
    return Tensor<T>::wrap(std::move(n));
}

template <typename T>
void set_backward(const Tensor<T>& out, std::function<void()> fn) {
    if (out.node()->requires_grad) out.node()->backward_fn = std::move(fn);
}

template <typename T>
void require_same_shape(const char* op, const Tensor<T>& a, const Tensor<T>& b) {
    if (a.shape() != b.shape())
        throw ShapeError(std::string(op) + ": shapes differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
}

template <typename T>
void require_2d(const char* op, const Tensor<T>& a) {
    if (a.ndim() != 2) throw ShapeError(std::string(op) + ": expected 2-D tensor, got " + shape_str(a.shape()));
}

}  // namespace detail

// --- elementwise -----------------------------------------------------------

template <typename T>
Tensor<T> add(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("add", a, b);
    auto out = detail::make_result<T>(a.shape(), {a.node(), b.node()});
    const auto& av = a.data();
    const auto& bv = b.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + bv[i];
    detail::set_backward(out, [an = a.node(), bn = b.node(), on = out.node().get()] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < bn->grad.size(); ++i) bn->grad[i] += on->grad[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> sub(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("sub", a, b);
    auto out = detail::make_result<T>(a.shape(), {a.node(), b.node()});
    const auto& av = a.data();
    const auto& bv = b.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] - bv[i];
    detail::set_backward(out, [an = a.node(), bn = b.node(), on = out.node().get()] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < bn->grad.size(); ++i) bn->grad[i] -= on->grad[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> mul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_same_shape("mul", a, b);
    auto out = detail::make_result<T>(a.shape(), {a.node(), b.node()});
    const auto& av = a.data();
    const auto& bv = b.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * bv[i];
    detail::set_backward(out, [an = a.node(), bn = b.node(), on = out.node().get()] {
        if (an->requires_grad) {
            an->ensure_grad();
            for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i] * bn->value[i];
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            for (std::size_t i = 0; i < bn->grad.size(); ++i) bn->grad[i] += on->grad[i] * an->value[i];
        }
    });
    return out;
}

template <typename T>
Tensor<T> scale(const Tensor<T>& a, T c) {
    auto out = detail::make_result<T>(a.shape(), {a.node()});
    const auto& av = a.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] * c;
    detail::set_backward(out, [an = a.node(), on = out.node().get(), c] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i] * c;
    });
    return out;
}

template <typename T>
Tensor<T> add_scalar(const Tensor<T>& a, T c) {
    auto out = detail::make_result<T>(a.shape(), {a.node()});
    const auto& av = a.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = av[i] + c;
    detail::set_backward(out, [an = a.node(), on = out.node().get()] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i];
    });
    return out;
}

template <typename T, typename Fwd, typename Bwd>
Tensor<T> unary_op(const Tensor<T>& a, Fwd f, Bwd dfd_out_in) {
    auto out = detail::make_result<T>(a.shape(), {a.node()});
    const auto& av = a.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ov.size(); ++i) ov[i] = f(av[i]);
    detail::set_backward(out, [an = a.node(), on = out.node().get(), dfd_out_in] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < an->grad.size(); ++i)
            an->grad[i] += on->grad[i] * dfd_out_in(on->value[i], an->value[i]);
    });
    return out;
}

template <typename T>
Tensor<T> exp(const Tensor<T>& a) {
    return unary_op(
        a, [](T x) { return std::exp(x); }, [](T y, T) { return y; });
}

template <typename T>
Tensor<T> log(const Tensor<T>& a) {
    return unary_op(
        a, [](T x) { return std::log(x); }, [](T, T x) { return T(1) / x; });
}

template <typename T>
Tensor<T> sin(const Tensor<T>& a) {
    return unary_op(
        a, [](T x) { return std::sin(x); }, [](T, T x) { return std::cos(x); });
}

template <typename T>
Tensor<T> silu(const Tensor<T>& a) {
    return unary_op(
        a, [](T x) { return x / (T(1) + std::exp(-x)); },
        [](T, T x) {
            const T s = T(1) / (T(1) + std::exp(-x));
            return s * (T(1) + x * (T(1) - s));
        });
}

// --- reductions ------------------------------------------------------------

template <typename T>
Tensor<T> sum(const Tensor<T>& a) {
    auto out = detail::make_result<T>(Shape{1}, {a.node()});
    T acc = T(0);
    for (T v : a.data()) acc += v;
    out.data()[0] = acc;
    detail::set_backward(out, [an = a.node(), on = out.node().get()] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        const T g = on->grad[0];
        for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += g;
    });
    return out;
}

template <typename T>
Tensor<T> mean(const Tensor<T>& a) {
    return scale(sum(a), T(1) / static_cast<T>(a.size()));
}

// --- matmul / conv ---------------------------------------------------------

template <typename T>
Tensor<T> matmul(const Tensor<T>& a, const Tensor<T>& b) {
    detail::require_2d("matmul", a);
    detail::require_2d("matmul", b);
    const std::size_t m = a.dim(0), k = a.dim(1), n = b.dim(1);
    if (b.dim(0) != k)
        throw ShapeError("matmul: inner dimensions disagree: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    auto out = detail::make_result<T>(Shape{m, n}, {a.node(), b.node()});
    detail::mm_nn(a.data().data(), b.data().data(), out.data().data(), m, k, n);
    detail::set_backward(out, [an = a.node(), bn = b.node(), on = out.node().get(), m, k, n] {
        if (an->requires_grad) {
            an->ensure_grad();
            detail::mm_nt(on->grad.data(), bn->value.data(), an->grad.data(), m, n, k);
        }
        if (bn->requires_grad) {
            bn->ensure_grad();
            detail::mm_tn(an->value.data(), on->grad.data(), bn->grad.data(), k, m, n);
        }
    });
    return out;
}

// Cross-correlation over [C_in x T] with kernel [C_out x C_in x W].
template <typename T>
Tensor<T> conv1d(const Tensor<T>& x, const Tensor<T>& kernel, std::size_t stride, std::size_t padding) {
    detail::require_2d("conv1d", x);
    if (kernel.ndim() != 3)
        throw ShapeError("conv1d: kernel must be [C_out x C_in x W], got " + shape_str(kernel.shape()));
    const std::size_t c_in = x.dim(0), t_in = x.dim(1);
    const std::size_t c_out = kernel.dim(0), w = kernel.dim(2);
    if (kernel.dim(1) != c_in)
        throw ShapeError("conv1d: input channels disagree: x " + shape_str(x.shape()) + " vs kernel " +
                         shape_str(kernel.shape()));
    if (w < 1 || stride < 1) throw ValueError("conv1d: kernel width and stride must be >= 1");
    const long t_out_l = (static_cast<long>(t_in) + 2 * static_cast<long>(padding) - static_cast<long>(w)) /
                             static_cast<long>(stride) +
                         1;
    if (t_out_l < 1)
        throw ShapeError("conv1d: empty output for input length " + std::to_string(t_in) + ", width " +
                         std::to_string(w) + ", stride " + std::to_string(stride) + ", padding " +
                         std::to_string(padding));
    const std::size_t t_out = static_cast<std::size_t>(t_out_l);
    auto out = detail::make_result<T>(Shape{c_out, t_out}, {x.node(), kernel.node()});

    const T* xp = x.data().data();
    const T* kp = kernel.data().data();
    T* op = out.data().data();
    // The kernel flattens to [C_out x C_in*W], so the conv is a matmul against
    // the gathered patch matrix. Width-1 unpadded convs skip the gather: the
    // patch matrix would be x itself.
    if (w == 1 && stride == 1 && padding == 0) {
        detail::mm_nn(kp, xp, op, c_out, c_in, t_out);
    } else {
        std::vector<T> cols(c_in * w * t_out, T(0));
        detail::im2col(xp, c_in, t_in, w, stride, padding, t_out, cols.data());
        detail::mm_nn(kp, cols.data(), op, c_out, c_in * w, t_out);
    }

    detail::set_backward(out, [xn = x.node(), kn = kernel.node(), on = out.node().get(), c_in, t_in, c_out, w, stride,
                               padding] {
        const std::size_t t_out = on->shape[1];
        const std::size_t kw = c_in * w;
        const bool plain = w == 1 && stride == 1 && padding == 0;
        const T* gp = on->grad.data();
        std::vector<T> cols;
        if (kn->requires_grad && !plain) {
            cols.assign(kw * t_out, T(0));
            detail::im2col(xn->value.data(), c_in, t_in, w, stride, padding, t_out, cols.data());
        }
        if (kn->requires_grad) {
            kn->ensure_grad();
            detail::mm_nt(gp, plain ? xn->value.data() : cols.data(), kn->grad.data(), c_out, t_out, kw);
        }
        if (xn->requires_grad) {
            xn->ensure_grad();
            if (plain) {
                detail::mm_tn(kn->value.data(), gp, xn->grad.data(), c_in, c_out, t_out);
            } else {
                std::vector<T> dcols(kw * t_out, T(0));
                detail::mm_tn(kn->value.data(), gp, dcols.data(), kw, c_out, t_out);
                detail::col2im_add(dcols.data(), c_in, t_in, w, stride, padding, t_out, xn->grad.data());
            }
        }
    });
    return out;
}

// --- structure ops ---------------------------------------------------------

template <typename T>
Tensor<T> transpose(const Tensor<T>& a) {
    detail::require_2d("transpose", a);
    const std::size_t r = a.dim(0), c = a.dim(1);
    auto out = detail::make_result<T>(Shape{c, r}, {a.node()});
    const auto& av = a.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ov[j * r + i] = av[i * c + j];
    detail::set_backward(out, [an = a.node(), on = out.node().get(), r, c] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) an->grad[i * c + j] += on->grad[j * r + i];
    });
    return out;
}

template <typename T>
Tensor<T> reshape(const Tensor<T>& a, Shape shape) {
    if (shape_numel(shape) != a.size())
        throw ShapeError("reshape: cannot view " + shape_str(a.shape()) + " as " + shape_str(shape));
    auto out = detail::make_result<T>(std::move(shape), {a.node()});
    out.data() = a.data();
    detail::set_backward(out, [an = a.node(), on = out.node().get()] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i];
    });
    return out;
}

template <typename T>
Tensor<T> slice(const Tensor<T>& a, std::size_t axis, std::size_t start, std::size_t len) {
    detail::require_2d("slice", a);
    if (axis > 1) throw ShapeError("slice: axis out of range for " + shape_str(a.shape()));
    const std::size_t r = a.dim(0), c = a.dim(1);
    const std::size_t limit = axis == 0 ? r : c;
    if (start + len > limit)
        throw ShapeError("slice: range [" + std::to_string(start) + ", " + std::to_string(start + len) +
                         ") exceeds axis " + std::to_string(axis) + " of " + shape_str(a.shape()));
    Shape os = axis == 0 ? Shape{len, c} : Shape{r, len};
    auto out = detail::make_result<T>(os, {a.node()});
    const auto& av = a.data();
    auto& ov = out.data();
    if (axis == 0) {
        std::copy(av.begin() + static_cast<long>(start * c), av.begin() + static_cast<long>((start + len) * c),
                  ov.begin());
    } else {
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < len; ++j) ov[i * len + j] = av[i * c + start + j];
    }
    detail::set_backward(out, [an = a.node(), on = out.node().get(), axis, start, len, r, c] {
        if (!an->requires_grad) return;
        an->ensure_grad();
        if (axis == 0) {
            for (std::size_t i = 0; i < len * c; ++i) an->grad[start * c + i] += on->grad[i];
        } else {
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < len; ++j) an->grad[i * c + start + j] += on->grad[i * len + j];
        }
    });
    return out;
}

template <typename T>
Tensor<T> concat(const Tensor<T>& a, const Tensor<T>& b, std::size_t axis) {
    detail::require_2d("concat", a);
    detail::require_2d("concat", b);
    if (axis > 1) throw ShapeError("concat: axis out of range");
    if (axis == 0 && a.dim(1) != b.dim(1))
        throw ShapeError("concat: column counts differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    if (axis == 1 && a.dim(0) != b.dim(0))
        throw ShapeError("concat: row counts differ: " + shape_str(a.shape()) + " vs " + shape_str(b.shape()));
    const std::size_t r = a.dim(0), c = a.dim(1);
    Shape os = axis == 0 ? Shape{r + b.dim(0), c} : Shape{r, c + b.dim(1)};
    auto out = detail::make_result<T>(os, {a.node(), b.node()});
    const auto& av = a.data();
    const auto& bv = b.data();
    auto& ov = out.data();
    if (axis == 0) {
        std::copy(av.begin(), av.end(), ov.begin());
        std::copy(bv.begin(), bv.end(), ov.begin() + static_cast<long>(av.size()));
    } else {
        const std::size_t cb = b.dim(1), co = c + cb;
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) ov[i * co + j] = av[i * c + j];
            for (std::size_t j = 0; j < cb; ++j) ov[i * co + c + j] = bv[i * cb + j];
        }
    }
    detail::set_backward(out, [an = a.node(), bn = b.node(), on = out.node().get(), axis, r, c] {
        if (axis == 0) {
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < an->grad.size(); ++i) an->grad[i] += on->grad[i];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                const std::size_t off = r * c;
                for (std::size_t i = 0; i < bn->grad.size(); ++i) bn->grad[i] += on->grad[off + i];
            }
        } else {
            const std::size_t cb = bn->shape[1], co = c + cb;
            if (an->requires_grad) {
                an->ensure_grad();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < c; ++j) an->grad[i * c + j] += on->grad[i * co + j];
            }
            if (bn->requires_grad) {
                bn->ensure_grad();
                for (std::size_t i = 0; i < r; ++i)
                    for (std::size_t j = 0; j < cb; ++j) bn->grad[i * cb + j] += on->grad[i * co + c + j];
            }
        }
    });
    return out;
}

template <typename T>
Tensor<T> detach(const Tensor<T>& a) {
    Tensor<T> out = Tensor<T>::from_data(a.shape(), a.data());
    return out;
}

// Embedding lookup: rows of table [V x D] selected by ids.
template <typename T>
Tensor<T> rows_gather(const Tensor<T>& table, const std::vector<std::size_t>& ids) {
    detail::require_2d("rows_gather", table);
    const std::size_t v = table.dim(0), d = table.dim(1);
    for (std::size_t id : ids)
        if (id >= v)
            throw ValueError("rows_gather: id " + std::to_string(id) + " out of range for table " +
                             shape_str(table.shape()));
    auto out = detail::make_result<T>(Shape{ids.size(), d}, {table.node()});
    const auto& tv = table.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < ids.size(); ++i)
        std::copy(tv.begin() + static_cast<long>(ids[i] * d), tv.begin() + static_cast<long>((ids[i] + 1) * d),
                  ov.begin() + static_cast<long>(i * d));
    detail::set_backward(out, [tn = table.node(), on = out.node().get(), ids, d] {
        if (!tn->requires_grad) return;
        tn->ensure_grad();
        for (std::size_t i = 0; i < ids.size(); ++i)
            for (std::size_t j = 0; j < d; ++j) tn->grad[ids[i] * d + j] += on->grad[i * d + j];
    });
    return out;
}

// Row i of x repeated counts[i] times, order preserved.
template <typename T>
Tensor<T> row_repeat(const Tensor<T>& x, const std::vector<std::size_t>& counts) {
    detail::require_2d("row_repeat", x);
    if (counts.size() != x.dim(0))
        throw ShapeError("row_repeat: " + std::to_string(counts.size()) + " counts for " + shape_str(x.shape()));
    std::size_t total = 0;
    for (std::size_t c : counts) total += c;
    if (total == 0) throw ValueError("row_repeat: all counts are zero");
    const std::size_t d = x.dim(1);
    auto out = detail::make_result<T>(Shape{total, d}, {x.node()});
    const auto& xv = x.data();
    auto& ov = out.data();
    std::size_t r = 0;
    for (std::size_t i = 0; i < counts.size(); ++i)
        for (std::size_t k = 0; k < counts[i]; ++k, ++r)
            std::copy(xv.begin() + static_cast<long>(i * d), xv.begin() + static_cast<long>((i + 1) * d),
                      ov.begin() + static_cast<long>(r * d));
    detail::set_backward(out, [xn = x.node(), on = out.node().get(), counts, d] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        std::size_t r = 0;
        for (std::size_t i = 0; i < counts.size(); ++i)
            for (std::size_t k = 0; k < counts[i]; ++k, ++r)
                for (std::size_t j = 0; j < d; ++j) xn->grad[i * d + j] += on->grad[r * d + j];
    });
    return out;
}

// [C x T] -> [C x 2T], each column doubled.
template <typename T>
Tensor<T> nearest_upsample2_cols(const Tensor<T>& x) {
    detail::require_2d("nearest_upsample2_cols", x);
    const std::size_t c = x.dim(0), t = x.dim(1);
    auto out = detail::make_result<T>(Shape{c, 2 * t}, {x.node()});
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < c; ++i)
        for (std::size_t j = 0; j < t; ++j) {
            ov[i * 2 * t + 2 * j] = xv[i * t + j];
            ov[i * 2 * t + 2 * j + 1] = xv[i * t + j];
        }
    detail::set_backward(out, [xn = x.node(), on = out.node().get(), c, t] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < c; ++i)
            for (std::size_t j = 0; j < t; ++j)
                xn->grad[i * t + j] += on->grad[i * 2 * t + 2 * j] + on->grad[i * 2 * t + 2 * j + 1];
    });
    return out;
}

template <typename T>
Tensor<T> add_rowvec(const Tensor<T>& x, const Tensor<T>& v) {
    detail::require_2d("add_rowvec", x);
    if (v.ndim() != 1 || v.dim(0) != x.dim(1))
        throw ShapeError("add_rowvec: " + shape_str(x.shape()) + " vs " + shape_str(v.shape()));
    const std::size_t r = x.dim(0), c = x.dim(1);
    auto out = detail::make_result<T>(x.shape(), {x.node(), v.node()});
    const auto& xv = x.data();
    const auto& vv = v.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ov[i * c + j] = xv[i * c + j] + vv[j];
    detail::set_backward(out, [xn = x.node(), vn = v.node(), on = out.node().get(), r, c] {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[i];
        }
        if (vn->requires_grad) {
            vn->ensure_grad();
            for (std::size_t i = 0; i < r; ++i)
                for (std::size_t j = 0; j < c; ++j) vn->grad[j] += on->grad[i * c + j];
        }
    });
    return out;
}

template <typename T>
Tensor<T> add_colvec(const Tensor<T>& x, const Tensor<T>& v) {
    detail::require_2d("add_colvec", x);
    if (v.ndim() != 1 || v.dim(0) != x.dim(0))
        throw ShapeError("add_colvec: " + shape_str(x.shape()) + " vs " + shape_str(v.shape()));
    const std::size_t r = x.dim(0), c = x.dim(1);
    auto out = detail::make_result<T>(x.shape(), {x.node(), v.node()});
    const auto& xv = x.data();
    const auto& vv = v.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ov[i * c + j] = xv[i * c + j] + vv[i];
    detail::set_backward(out, [xn = x.node(), vn = v.node(), on = out.node().get(), r, c] {
        if (xn->requires_grad) {
            xn->ensure_grad();
            for (std::size_t i = 0; i < xn->grad.size(); ++i) xn->grad[i] += on->grad[i];
        }
        if (vn->requires_grad) {
            vn->ensure_grad();
            for (std::size_t i = 0; i < r; ++i) {
                T acc = T(0);
                for (std::size_t j = 0; j < c; ++j) acc += on->grad[i * c + j];
                vn->grad[i] += acc;
            }
        }
    });
    return out;
}

// Zero out rows where mask is false; pads stay zero through cross-frame ops.
template <typename T>
Tensor<T> mask_rows(const Tensor<T>& x, const Mask& mask) {
    detail::require_2d("mask_rows", x);
    if (mask.size() != x.dim(0))
        throw ShapeError("mask_rows: mask length " + std::to_string(mask.size()) + " vs " + shape_str(x.shape()));
    const std::size_t r = x.dim(0), c = x.dim(1);
    auto out = detail::make_result<T>(x.shape(), {x.node()});
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < r; ++i) {
        if (mask[i])
            std::copy(xv.begin() + static_cast<long>(i * c), xv.begin() + static_cast<long>((i + 1) * c),
                      ov.begin() + static_cast<long>(i * c));
    }
    detail::set_backward(out, [xn = x.node(), on = out.node().get(), mask, c] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < mask.size(); ++i) {
            if (!mask[i]) continue;
            for (std::size_t j = 0; j < c; ++j) xn->grad[i * c + j] += on->grad[i * c + j];
        }
    });
    return out;
}

template <typename T>
Tensor<T> mask_cols(const Tensor<T>& x, const Mask& mask) {
    detail::require_2d("mask_cols", x);
    if (mask.size() != x.dim(1))
        throw ShapeError("mask_cols: mask length " + std::to_string(mask.size()) + " vs " + shape_str(x.shape()));
    const std::size_t r = x.dim(0), c = x.dim(1);
    auto out = detail::make_result<T>(x.shape(), {x.node()});
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) ov[i * c + j] = mask[j] ? xv[i * c + j] : T(0);
    detail::set_backward(out, [xn = x.node(), on = out.node().get(), mask, r, c] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j)
                if (mask[j]) xn->grad[i * c + j] += on->grad[i * c + j];
    });
    return out;
}

// --- fused rows ops --------------------------------------------------------

// Row-wise softmax over the columns where key_mask is true; masked columns get
// exactly zero weight. Shift-invariant via per-row max subtraction.
template <typename T>
Tensor<T> masked_softmax_rows(const Tensor<T>& x, const Mask& key_mask) {
    detail::require_2d("masked_softmax_rows", x);
    if (key_mask.size() != x.dim(1))
        throw ShapeError("masked_softmax_rows: mask length " + std::to_string(key_mask.size()) + " vs " +
                         shape_str(x.shape()));
    if (mask_count(key_mask) == 0) throw ValueError("masked_softmax_rows: mask has no valid positions");
    const std::size_t r = x.dim(0), c = x.dim(1);
    auto out = detail::make_result<T>(x.shape(), {x.node()});
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t i = 0; i < r; ++i) {
        T mx = -std::numeric_limits<T>::infinity();
        for (std::size_t j = 0; j < c; ++j)
            if (key_mask[j] && xv[i * c + j] > mx) mx = xv[i * c + j];
        T denom = T(0);
        for (std::size_t j = 0; j < c; ++j) {
            if (key_mask[j]) {
                const T e = std::exp(xv[i * c + j] - mx);
                ov[i * c + j] = e;
                denom += e;
            }
        }
        const T inv = T(1) / denom;
        for (std::size_t j = 0; j < c; ++j) ov[i * c + j] *= inv;
    }
    detail::set_backward(out, [xn = x.node(), on = out.node().get(), r, c] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
            T dot = T(0);
            for (std::size_t j = 0; j < c; ++j) dot += on->grad[i * c + j] * on->value[i * c + j];
            for (std::size_t j = 0; j < c; ++j)
                xn->grad[i * c + j] += on->value[i * c + j] * (on->grad[i * c + j] - dot);
        }
    });
    return out;
}

template <typename T>
Tensor<T> softmax_rows(const Tensor<T>& x) {
    return masked_softmax_rows(x, full_mask(x.dim(1)));
}

// Per-row layer norm over columns with learnable gain/bias.
template <typename T>
Tensor<T> layer_norm_rows(const Tensor<T>& x, const Tensor<T>& gain, const Tensor<T>& bias, T eps = T(1e-5)) {
    detail::require_2d("layer_norm_rows", x);
    const std::size_t r = x.dim(0), c = x.dim(1);
    if (gain.ndim() != 1 || gain.dim(0) != c || bias.ndim() != 1 || bias.dim(0) != c)
        throw ShapeError("layer_norm_rows: gain/bias must be length-" + std::to_string(c) + " vectors");
    auto out = detail::make_result<T>(x.shape(), {x.node(), gain.node(), bias.node()});
    const auto& xv = x.data();
    const auto& gv = gain.data();
    const auto& bv = bias.data();
    auto& ov = out.data();
    std::vector<T> inv_std(r), mu(r);
    for (std::size_t i = 0; i < r; ++i) {
        T m = T(0);
        for (std::size_t j = 0; j < c; ++j) m += xv[i * c + j];
        m /= static_cast<T>(c);
        T var = T(0);
        for (std::size_t j = 0; j < c; ++j) {
            const T d = xv[i * c + j] - m;
            var += d * d;
        }
        var /= static_cast<T>(c);
        const T is = T(1) / std::sqrt(var + eps);
        mu[i] = m;
        inv_std[i] = is;
        for (std::size_t j = 0; j < c; ++j) ov[i * c + j] = gv[j] * ((xv[i * c + j] - m) * is) + bv[j];
    }
    detail::set_backward(out, [xn = x.node(), gn = gain.node(), bn = bias.node(), on = out.node().get(), r, c, mu,
                               inv_std] {
        std::vector<T> xhat(c);
        const bool need_x = xn->requires_grad, need_g = gn->requires_grad, need_b = bn->requires_grad;
        if (need_x) xn->ensure_grad();
        if (need_g) gn->ensure_grad();
        if (need_b) bn->ensure_grad();
        for (std::size_t i = 0; i < r; ++i) {
            for (std::size_t j = 0; j < c; ++j) xhat[j] = (xn->value[i * c + j] - mu[i]) * inv_std[i];
            if (need_g)
                for (std::size_t j = 0; j < c; ++j) gn->grad[j] += on->grad[i * c + j] * xhat[j];
            if (need_b)
                for (std::size_t j = 0; j < c; ++j) bn->grad[j] += on->grad[i * c + j];
            if (need_x) {
                T mean_dxh = T(0), mean_dxh_xh = T(0);
                for (std::size_t j = 0; j < c; ++j) {
                    const T dxh = on->grad[i * c + j] * gn->value[j];
                    mean_dxh += dxh;
                    mean_dxh_xh += dxh * xhat[j];
                }
                mean_dxh /= static_cast<T>(c);
                mean_dxh_xh /= static_cast<T>(c);
                for (std::size_t j = 0; j < c; ++j) {
                    const T dxh = on->grad[i * c + j] * gn->value[j];
                    xn->grad[i * c + j] += inv_std[i] * (dxh - mean_dxh - xhat[j] * mean_dxh_xh);
                }
            }
        }
    });
    return out;
}

// y = x + sin^2(alpha*x) / (beta + eps), alpha/beta per channel in log domain.
template <typename T>
Tensor<T> snakebeta(const Tensor<T>& x, const Tensor<T>& log_alpha, const Tensor<T>& log_beta,
                    std::size_t channel_axis) {
    detail::require_2d("snakebeta", x);
    if (channel_axis > 1) throw ShapeError("snakebeta: channel_axis must be 0 or 1");
    const std::size_t channels = x.dim(channel_axis);
    if (log_alpha.ndim() != 1 || log_alpha.dim(0) != channels || log_beta.ndim() != 1 || log_beta.dim(0) != channels)
        throw ShapeError("snakebeta: parameter length must match channel count " + std::to_string(channels));
    const T eps = T(1e-9);
    const std::size_t r = x.dim(0), c = x.dim(1);
    auto out = detail::make_result<T>(x.shape(), {x.node(), log_alpha.node(), log_beta.node()});
    const auto& xv = x.data();
    const auto& lav = log_alpha.data();
    const auto& lbv = log_beta.data();
    auto& ov = out.data();
    std::vector<T> alpha(channels), inv_beta(channels);
    for (std::size_t ch = 0; ch < channels; ++ch) {
        alpha[ch] = std::exp(lav[ch]);
        inv_beta[ch] = T(1) / (std::exp(lbv[ch]) + eps);
    }
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < c; ++j) {
            const std::size_t ch = channel_axis == 0 ? i : j;
            const T s = std::sin(alpha[ch] * xv[i * c + j]);
            ov[i * c + j] = xv[i * c + j] + s * s * inv_beta[ch];
        }
    detail::set_backward(out, [xn = x.node(), lan = log_alpha.node(), lbn = log_beta.node(), on = out.node().get(), r,
                               c, channel_axis, alpha, inv_beta, eps] {
        const bool need_x = xn->requires_grad, need_a = lan->requires_grad, need_b = lbn->requires_grad;
        if (need_x) xn->ensure_grad();
        if (need_a) lan->ensure_grad();
        if (need_b) lbn->ensure_grad();
        for (std::size_t i = 0; i < r; ++i)
            for (std::size_t j = 0; j < c; ++j) {
                const std::size_t ch = channel_axis == 0 ? i : j;
                const T g = on->grad[i * c + j];
                const T xval = xn->value[i * c + j];
                const T a = alpha[ch];
                const T s = std::sin(a * xval);
                const T sin2ax = std::sin(T(2) * a * xval);
                if (need_x) xn->grad[i * c + j] += g * (T(1) + a * inv_beta[ch] * sin2ax);
                if (need_a) lan->grad[ch] += g * a * xval * inv_beta[ch] * sin2ax;
                if (need_b) {
                    const T beta = T(1) / inv_beta[ch] - eps;
                    lbn->grad[ch] += -g * beta * s * s * inv_beta[ch] * inv_beta[ch];
                }
            }
    });
    return out;
}

// --- randomness ------------------------------------------------------------

template <typename T>
Tensor<T> gaussian(Rng& rng, Shape shape) {
    Tensor<T> out = Tensor<T>::zeros(std::move(shape));
    for (auto& v : out.data()) v = static_cast<T>(rng.next_gaussian());
    return out;
}

template <typename T>
Tensor<T> uniform(Rng& rng, Shape shape, T lo, T hi) {
    Tensor<T> out = Tensor<T>::zeros(std::move(shape));
    for (auto& v : out.data()) v = lo + (hi - lo) * static_cast<T>(rng.next_double());
    return out;
}

// --- backward --------------------------------------------------------------

// Reverse-mode pass from a scalar loss. Gradients accumulate into every
// reachable requires_grad leaf; the graph (tape) is released afterwards.
template <typename T>
void backward(const Tensor<T>& loss) {
    if (loss.size() != 1)
        throw ShapeError("backward: loss must be scalar, got shape " + shape_str(loss.shape()));
    auto root = loss.node();
    if (!root->requires_grad) return;

    std::vector<detail::Node<T>*> order;
    std::unordered_set<detail::Node<T>*> seen;
    std::vector<std::pair<detail::Node<T>*, std::size_t>> stack;
    stack.emplace_back(root.get(), 0);
    seen.insert(root.get());
    while (!stack.empty()) {
        auto& [node, idx] = stack.back();
        if (idx < node->parents.size()) {
            detail::Node<T>* p = node->parents[idx].get();
            ++idx;
            if (p->requires_grad && !seen.count(p)) {
                seen.insert(p);
                stack.emplace_back(p, 0);
            }
        } else {
            order.push_back(node);
            stack.pop_back();
        }
    }

    root->ensure_grad();
    root->grad[0] += T(1);
    for (auto it = order.rbegin(); it != order.rend(); ++it) {
        detail::Node<T>* n = *it;
        if (n->backward_fn) n->backward_fn();
    }
    for (detail::Node<T>* n : order) {
        if (!n->is_leaf) {
            n->backward_fn = nullptr;
            n->parents.clear();
            n->grad.clear();
        }
    }
}

}  // namespace flowsynth
