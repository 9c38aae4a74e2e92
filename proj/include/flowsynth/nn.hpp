#pragma once

#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "flowsynth/common.hpp"
#include "flowsynth/rng.hpp"
#include "flowsynth/tensor.hpp"

namespace flowsynth {

// Named parameter handles. Registration order is the serialization order, so
// every block must register deterministically.
template <typename T>
using ParamList = std::vector<std::pair<std::string, Tensor<T>>>;

template <typename T>
struct Linear {
    std::size_t in = 0, out = 0;
    bool has_bias = true;
    Tensor<T> weight;  // [in x out]
    Tensor<T> bias;    // [out]

    Linear() = default;
    Linear(Rng& rng, std::size_t in_, std::size_t out_, bool with_bias = true)
        : in(in_), out(out_), has_bias(with_bias) {
        const T bound = T(1) / std::sqrt(static_cast<T>(in));
        weight = uniform<T>(rng, {in, out}, -bound, bound);
        weight.set_requires_grad();
        if (has_bias) {
            bias = uniform<T>(rng, {out}, -bound, bound);
            bias.set_requires_grad();
        }
    }

    // [N x in] -> [N x out]
    Tensor<T> forward(const Tensor<T>& x) const {
        auto y = matmul(x, weight);
        return has_bias ? add_rowvec(y, bias) : y;
    }

    void register_params(ParamList<T>& dst, const std::string& prefix) {
        dst.emplace_back(prefix + ".w", weight);
        if (has_bias) dst.emplace_back(prefix + ".b", bias);
    }
};

template <typename T>
struct Conv1dLayer {
    std::size_t c_in = 0, c_out = 0, width = 0, stride = 1, padding = 0;
    Tensor<T> kernel;  // [c_out x c_in x width]
    Tensor<T> bias;    // [c_out]

    Conv1dLayer() = default;
    Conv1dLayer(Rng& rng, std::size_t c_in_, std::size_t c_out_, std::size_t width_, std::size_t stride_ = 1,
                std::size_t padding_ = 0)
        : c_in(c_in_), c_out(c_out_), width(width_), stride(stride_), padding(padding_) {
        const T bound = T(1) / std::sqrt(static_cast<T>(c_in * width));
        kernel = uniform<T>(rng, {c_out, c_in, width}, -bound, bound);
        kernel.set_requires_grad();
        bias = uniform<T>(rng, {c_out}, -bound, bound);
        bias.set_requires_grad();
    }

    // [c_in x T] -> [c_out x T']
    Tensor<T> forward(const Tensor<T>& x) const { return add_colvec(conv1d(x, kernel, stride, padding), bias); }

    void register_params(ParamList<T>& dst, const std::string& prefix) {
        dst.emplace_back(prefix + ".k", kernel);
        dst.emplace_back(prefix + ".b", bias);
    }
};

template <typename T>
struct Embedding {
    std::size_t vocab = 0, dim = 0;
    Tensor<T> table;  // [vocab x dim]

    Embedding() = default;
    Embedding(Rng& rng, std::size_t vocab_, std::size_t dim_) : vocab(vocab_), dim(dim_) {
        table = scale(gaussian<T>(rng, {vocab, dim}), T(1) / std::sqrt(static_cast<T>(dim)));
        table.set_requires_grad();
    }

    Tensor<T> forward(const std::vector<std::size_t>& ids) const { return rows_gather(table, ids); }

    void register_params(ParamList<T>& dst, const std::string& prefix) { dst.emplace_back(prefix + ".table", table); }
};

template <typename T>
struct LayerNorm {
    std::size_t dim = 0;
    Tensor<T> gain, bias;

    LayerNorm() = default;
    explicit LayerNorm(std::size_t dim_) : dim(dim_) {
        gain = Tensor<T>::full({dim}, T(1));
        gain.set_requires_grad();
        bias = Tensor<T>::zeros({dim});
        bias.set_requires_grad();
    }

    Tensor<T> forward(const Tensor<T>& x) const { return layer_norm_rows(x, gain, bias); }

    void register_params(ParamList<T>& dst, const std::string& prefix) {
        dst.emplace_back(prefix + ".g", gain);
        dst.emplace_back(prefix + ".b", bias);
    }
};

// Learnable periodic activation y = x + sin^2(alpha x)/(beta + eps), with
// per-channel alpha and beta kept positive by log-domain storage.
template <typename T>
struct SnakeBeta {
    std::size_t channels = 0;
    Tensor<T> log_alpha, log_beta;

    SnakeBeta() = default;
    explicit SnakeBeta(std::size_t channels_) : channels(channels_) {
        log_alpha = Tensor<T>::zeros({channels});
        log_alpha.set_requires_grad();
        log_beta = Tensor<T>::zeros({channels});
        log_beta.set_requires_grad();
    }

    // channel_axis selects which axis of the 2-D input carries channels.
    Tensor<T> forward(const Tensor<T>& x, std::size_t channel_axis) const {
        return snakebeta(x, log_alpha, log_beta, channel_axis);
    }

    void register_params(ParamList<T>& dst, const std::string& prefix) {
        dst.emplace_back(prefix + ".la", log_alpha);
        dst.emplace_back(prefix + ".lb", log_beta);
    }
};

// Rotate channel pairs (2i, 2i+1) of each row by pos * theta_i with
// theta_i = 10000^(-2i/D). Orthogonal per pair, so backward rotates the
// incoming gradient by the opposite angle.
template <typename T>
Tensor<T> rope_apply(const Tensor<T>& x, const std::vector<std::size_t>& positions) {
    if (x.ndim() != 2) throw ShapeError("rope_apply: expected 2-D tensor, got " + shape_str(x.shape()));
    const std::size_t t = x.dim(0), d = x.dim(1);
    if (d % 2 != 0) throw ShapeError("rope_apply: channel count " + std::to_string(d) + " must be even");
    if (positions.size() != t)
        throw ShapeError("rope_apply: " + std::to_string(positions.size()) + " positions for " + shape_str(x.shape()));
    const std::size_t half = d / 2;
    std::vector<T> cosv(t * half), sinv(t * half);
    for (std::size_t i = 0; i < half; ++i) {
        const double theta = std::pow(10000.0, -2.0 * static_cast<double>(i) / static_cast<double>(d));
        for (std::size_t r = 0; r < t; ++r) {
            const double ang = static_cast<double>(positions[r]) * theta;
            cosv[r * half + i] = static_cast<T>(std::cos(ang));
            sinv[r * half + i] = static_cast<T>(std::sin(ang));
        }
    }
    auto out = detail::make_result<T>(x.shape(), {x.node()});
    const auto& xv = x.data();
    auto& ov = out.data();
    for (std::size_t r = 0; r < t; ++r)
        for (std::size_t i = 0; i < half; ++i) {
            const T c = cosv[r * half + i], s = sinv[r * half + i];
            const T x1 = xv[r * d + 2 * i], x2 = xv[r * d + 2 * i + 1];
            ov[r * d + 2 * i] = c * x1 - s * x2;
            ov[r * d + 2 * i + 1] = s * x1 + c * x2;
        }
    detail::set_backward(out, [xn = x.node(), on = out.node().get(), t, d, half, cosv = std::move(cosv),
                               sinv = std::move(sinv)] {
        if (!xn->requires_grad) return;
        xn->ensure_grad();
        for (std::size_t r = 0; r < t; ++r)
            for (std::size_t i = 0; i < half; ++i) {
                const T c = cosv[r * half + i], s = sinv[r * half + i];
                const T g1 = on->grad[r * d + 2 * i], g2 = on->grad[r * d + 2 * i + 1];
                xn->grad[r * d + 2 * i] += c * g1 + s * g2;
                xn->grad[r * d + 2 * i + 1] += -s * g1 + c * g2;
            }
    });
    return out;
}

struct AttentionConfig {
    std::size_t model_dim = 0;
    std::size_t num_heads = 4;
    std::size_t head_dim = 64;
    bool use_rope = false;
};

template <typename T>
struct MultiHeadAttention {
    AttentionConfig cfg;
    Linear<T> wq, wk, wv, wo;

    MultiHeadAttention() = default;
    MultiHeadAttention(Rng& rng, const AttentionConfig& cfg_) : cfg(cfg_) {
        if (cfg.model_dim == 0 || cfg.num_heads == 0 || cfg.head_dim == 0)
            throw ConfigError("attention: model_dim, num_heads and head_dim must be positive");
        if (cfg.use_rope && cfg.head_dim % 2 != 0)
            throw ConfigError("attention: rotary embedding needs an even head_dim, got " +
                              std::to_string(cfg.head_dim));
        const std::size_t width = cfg.num_heads * cfg.head_dim;
        wq = Linear<T>(rng, cfg.model_dim, width);
        wk = Linear<T>(rng, cfg.model_dim, width);
        wv = Linear<T>(rng, cfg.model_dim, width);
        wo = Linear<T>(rng, width, cfg.model_dim);
    }

    // Self-attention over rows of x. mask marks valid frames; masked keys get
    // zero weight, masked query rows still produce (ignored) output.
    Tensor<T> forward(const Tensor<T>& x, const Mask& mask) const {
        const std::size_t t = x.dim(0);
        if (mask.size() != t)
            throw ShapeError("attention: mask length " + std::to_string(mask.size()) + " vs " + shape_str(x.shape()));
        std::vector<std::size_t> positions(t);
        for (std::size_t i = 0; i < t; ++i) positions[i] = i;
        auto q = wq.forward(x);
        auto k = wk.forward(x);
        auto v = wv.forward(x);
        const T inv_sqrt = T(1) / std::sqrt(static_cast<T>(cfg.head_dim));
        Tensor<T> merged;
        for (std::size_t h = 0; h < cfg.num_heads; ++h) {
            auto qh = slice(q, 1, h * cfg.head_dim, cfg.head_dim);
            auto kh = slice(k, 1, h * cfg.head_dim, cfg.head_dim);
            if (cfg.use_rope) {
                qh = rope_apply(qh, positions);
                kh = rope_apply(kh, positions);
            }
            auto vh = slice(v, 1, h * cfg.head_dim, cfg.head_dim);
            auto logits = scale(matmul(qh, transpose(kh)), inv_sqrt);
            auto weights = masked_softmax_rows(logits, mask);
            auto oh = matmul(weights, vh);
            merged = h == 0 ? oh : concat(merged, oh, 1);
        }
        return wo.forward(merged);
    }

    void register_params(ParamList<T>& dst, const std::string& prefix) {
        wq.register_params(dst, prefix + ".q");
        wk.register_params(dst, prefix + ".k");
        wv.register_params(dst, prefix + ".v");
        wo.register_params(dst, prefix + ".o");
    }
};

template <typename T>
struct FeedForward {
    Linear<T> l1, l2;
    SnakeBeta<T> act;

    FeedForward() = default;
    FeedForward(Rng& rng, std::size_t dim, std::size_t mult) {
        l1 = Linear<T>(rng, dim, dim * mult);
        act = SnakeBeta<T>(dim * mult);
        l2 = Linear<T>(rng, dim * mult, dim);
    }

    Tensor<T> forward(const Tensor<T>& x) const { return l2.forward(act.forward(l1.forward(x), 1)); }

    void register_params(ParamList<T>& dst, const std::string& prefix) {
        l1.register_params(dst, prefix + ".l1");
        act.register_params(dst, prefix + ".act");
        l2.register_params(dst, prefix + ".l2");
    }
};

struct TransformerBlockConfig {
    std::size_t model_dim = 0;
    std::size_t num_heads = 4;
    std::size_t head_dim = 64;
    std::size_t ffn_mult = 4;
    bool use_rope = false;
};

// Pre-norm residual block. t_emb (length model_dim) is added to every frame
// first; callers without timestep conditioning pass zeros.
template <typename T>
struct TransformerBlock {
    TransformerBlockConfig cfg;
    LayerNorm<T> ln1, ln2;
    MultiHeadAttention<T> attn;
    FeedForward<T> ffn;

    TransformerBlock() = default;
    TransformerBlock(Rng& rng, const TransformerBlockConfig& cfg_) : cfg(cfg_) {
        ln1 = LayerNorm<T>(cfg.model_dim);
        AttentionConfig acfg;
        acfg.model_dim = cfg.model_dim;
        acfg.num_heads = cfg.num_heads;
        acfg.head_dim = cfg.head_dim;
        acfg.use_rope = cfg.use_rope;
        attn = MultiHeadAttention<T>(rng, acfg);
        ln2 = LayerNorm<T>(cfg.model_dim);
        ffn = FeedForward<T>(rng, cfg.model_dim, cfg.ffn_mult);
    }

    Tensor<T> forward(const Tensor<T>& x, const Tensor<T>& t_emb, const Mask& mask) const {
        auto h = add_rowvec(x, t_emb);
        h = add(h, attn.forward(ln1.forward(h), mask));
        h = add(h, ffn.forward(ln2.forward(h)));
        return h;
    }

    void register_params(ParamList<T>& dst, const std::string& prefix) {
        ln1.register_params(dst, prefix + ".ln1");
        attn.register_params(dst, prefix + ".attn");
        ln2.register_params(dst, prefix + ".ln2");
        ffn.register_params(dst, prefix + ".ffn");
    }
};

// Sinusoids of t at frequencies spaced geometrically from 1 to 10^4, then a
// two-layer projection. t is the flow time in [0,1].
template <typename T>
struct TimestepEmbedding {
    std::size_t freq_dim = 0, out_dim = 0;
    Linear<T> l1, l2;

    TimestepEmbedding() = default;
    TimestepEmbedding(Rng& rng, std::size_t freq_dim_, std::size_t out_dim_) : freq_dim(freq_dim_), out_dim(out_dim_) {
        if (freq_dim < 4 || freq_dim % 2 != 0)
            throw ConfigError("timestep embedding: freq_dim must be even and >= 4");
        l1 = Linear<T>(rng, freq_dim, out_dim);
        l2 = Linear<T>(rng, out_dim, out_dim);
    }

    static std::vector<T> raw_sinusoids(T t, std::size_t freq_dim) {
        if (!(t >= T(0) && t <= T(1)))
            throw ValueError("timestep embedding: t must lie in [0, 1]");
        const std::size_t half = freq_dim / 2;
        std::vector<T> raw(freq_dim);
        for (std::size_t i = 0; i < half; ++i) {
            const double freq = std::pow(10000.0, static_cast<double>(i) / static_cast<double>(half - 1));
            raw[i] = static_cast<T>(std::sin(static_cast<double>(t) * freq));
            raw[half + i] = static_cast<T>(std::cos(static_cast<double>(t) * freq));
        }
        return raw;
    }

    // Returns a length-out_dim vector.
    Tensor<T> forward(T t) const {
        auto raw = Tensor<T>::from_data({1, freq_dim}, raw_sinusoids(t, freq_dim));
        auto h = silu(l1.forward(raw));
        return reshape(l2.forward(h), {out_dim});
    }

    void register_params(ParamList<T>& dst, const std::string& prefix) {
        l1.register_params(dst, prefix + ".l1");
        l2.register_params(dst, prefix + ".l2");
    }
};

}  // namespace flowsynth
