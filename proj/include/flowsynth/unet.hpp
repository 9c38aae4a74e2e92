#pragma once

#include <string>
#include <vector>

#include "flowsynth/common.hpp"
#include "flowsynth/nn.hpp"
#include "flowsynth/rng.hpp"
#include "flowsynth/tensor.hpp"

namespace flowsynth {

struct UNetConfig {
    std::size_t d_joint = 125;
    std::vector<std::size_t> down_dims{256, 512};
    std::vector<std::size_t> mid_dims{512, 512};
    std::vector<std::size_t> up_dims{512, 256};
    std::size_t heads = 4;
    std::size_t head_dim = 64;
    std::size_t ffn_mult = 4;
    std::size_t t_emb_dim = 64;

    bool operator==(const UNetConfig&) const = default;

    std::size_t in_channels() const { return 2 * d_joint; }
    std::size_t length_multiple() const { return std::size_t{1} << down_dims.size(); }
};

inline UNetConfig desk_unet_config(std::size_t d_joint = 13) {
    UNetConfig cfg;
    cfg.d_joint = d_joint;
    cfg.down_dims = {32, 64};
    cfg.mid_dims = {64, 64};
    cfg.up_dims = {64, 32};
    cfg.heads = 4;
    cfg.head_dim = 8;
    cfg.ffn_mult = 2;
    cfg.t_emb_dim = 32;
    return cfg;
}

// Conv sub-block: two width-3 convolutions with a snakebeta between, plus a
// residual path (1x1-projected when channel counts change). Channels-first
// [C x T]; inputs are mask-multiplied before every conv so padded frames
// never leak into valid ones.
template <typename T>
struct ResConvBlock {
    std::size_t c_in = 0, c_out = 0;
    Conv1dLayer<T> conv1, conv2, proj;
    SnakeBeta<T> act;

    ResConvBlock() = default;
    ResConvBlock(Rng& rng, std::size_t c_in_, std::size_t c_out_) : c_in(c_in_), c_out(c_out_) {
        conv1 = Conv1dLayer<T>(rng, c_in, c_out, 3, 1, 1);
        act = SnakeBeta<T>(c_out);
        conv2 = Conv1dLayer<T>(rng, c_out, c_out, 3, 1, 1);
        if (c_in != c_out) proj = Conv1dLayer<T>(rng, c_in, c_out, 1, 1, 0);
    }

    Tensor<T> forward(const Tensor<T>& h, const Mask& mask) const {
        auto x0 = mask_cols(h, mask);
        auto a = act.forward(conv1.forward(x0), 0);
        a = conv2.forward(mask_cols(a, mask));
        return add(a, c_in == c_out ? x0 : proj.forward(x0));
    }

    void register_params(ParamList<T>& dst, const std::string& prefix) {
        conv1.register_params(dst, prefix + ".c1");
        act.register_params(dst, prefix + ".act");
        conv2.register_params(dst, prefix + ".c2");
        if (c_in != c_out) proj.register_params(dst, prefix + ".proj");
    }
};

// One U-Net stage: conv sub-block then a Transformer over frames, with the
// shared timestep embedding projected to this stage's width. No positional
// table anywhere in the decoder path.
template <typename T>
struct UnetStage {
    std::size_t dim = 0, t_emb_dim = 0;
    ResConvBlock<T> conv;
    Linear<T> t_proj;
    TransformerBlock<T> attn;

    UnetStage() = default;
    UnetStage(Rng& rng, std::size_t c_in, std::size_t c_out, std::size_t heads, std::size_t head_dim,
              std::size_t ffn_mult, std::size_t t_emb_dim_)
        : dim(c_out), t_emb_dim(t_emb_dim_) {
        conv = ResConvBlock<T>(rng, c_in, c_out);
        t_proj = Linear<T>(rng, t_emb_dim, c_out);
        TransformerBlockConfig bc;
        bc.model_dim = c_out;
        bc.num_heads = heads;
        bc.head_dim = head_dim;
        bc.ffn_mult = ffn_mult;
        bc.use_rope = false;
        attn = TransformerBlock<T>(rng, bc);
    }

    Tensor<T> forward(const Tensor<T>& h, const Tensor<T>& t_emb_global, const Mask& mask) const {
        auto c = conv.forward(h, mask);
        auto te = reshape(t_proj.forward(reshape(t_emb_global, {1, t_emb_dim})), {dim});
        return transpose(attn.forward(transpose(c), te, mask));
    }

    void register_params(ParamList<T>& dst, const std::string& prefix) {
        conv.register_params(dst, prefix + ".conv");
        t_proj.register_params(dst, prefix + ".tp");
        attn.register_params(dst, prefix + ".attn");
    }
};

// 1D U-Net over joint-feature frames: [x_t || mu] on the channel axis in,
// vector-field value out. Two stride-2 downsamples mean the length is padded
// to a multiple of 4 internally and cropped on the way out.
template <typename T>
struct UNet {
    UNetConfig cfg;
    TimestepEmbedding<T> t_embed;
    Conv1dLayer<T> conv_in;
    std::vector<UnetStage<T>> down_stages;
    std::vector<Conv1dLayer<T>> downsamples;
    std::vector<UnetStage<T>> mid_stages;
    std::vector<UnetStage<T>> up_stages;
    Conv1dLayer<T> conv_out;

    UNet() = default;
    UNet(Rng& rng, const UNetConfig& cfg_) : cfg(cfg_) {
        if (cfg.down_dims.empty() || cfg.down_dims.size() != cfg.up_dims.size())
            throw ConfigError("unet: down/up channel schedules must be non-empty mirror images, got " +
                              std::to_string(cfg.down_dims.size()) + " vs " + std::to_string(cfg.up_dims.size()));
        if (cfg.mid_dims.empty()) throw ConfigError("unet: mid channel schedule must be non-empty");
        if (cfg.d_joint == 0) throw ConfigError("unet: d_joint must be positive");

        t_embed = TimestepEmbedding<T>(rng, cfg.t_emb_dim, cfg.t_emb_dim);
        conv_in = Conv1dLayer<T>(rng, cfg.in_channels(), cfg.down_dims[0], 3, 1, 1);

        std::size_t cur = cfg.down_dims[0];
        for (std::size_t i = 0; i < cfg.down_dims.size(); ++i) {
            down_stages.emplace_back(rng, cur, cfg.down_dims[i], cfg.heads, cfg.head_dim, cfg.ffn_mult, cfg.t_emb_dim);
            downsamples.emplace_back(rng, cfg.down_dims[i], cfg.down_dims[i], 3, 2, 1);
            cur = cfg.down_dims[i];
        }
        for (std::size_t i = 0; i < cfg.mid_dims.size(); ++i) {
            mid_stages.emplace_back(rng, cur, cfg.mid_dims[i], cfg.heads, cfg.head_dim, cfg.ffn_mult, cfg.t_emb_dim);
            cur = cfg.mid_dims[i];
        }
        for (std::size_t i = 0; i < cfg.up_dims.size(); ++i) {
            const std::size_t skip_dim = cfg.down_dims[cfg.down_dims.size() - 1 - i];
            up_stages.emplace_back(rng, cur + skip_dim, cfg.up_dims[i], cfg.heads, cfg.head_dim, cfg.ffn_mult,
                                   cfg.t_emb_dim);
            cur = cfg.up_dims[i];
        }
        conv_out = Conv1dLayer<T>(rng, cur, cfg.d_joint, 1, 1, 0);
    }

    Tensor<T> vector_field(const Tensor<T>& x_t, T t, const Tensor<T>& mu, const Mask& mask) const {
        if (x_t.ndim() != 2 || x_t.shape() != mu.shape())
            throw ShapeError("vector_field: x_t " + shape_str(x_t.shape()) + " and mu " + shape_str(mu.shape()) +
                             " must be equal 2-D shapes");
        if (x_t.dim(1) != cfg.d_joint)
            throw ShapeError("vector_field: expected " + std::to_string(cfg.d_joint) + " channels, got " +
                             shape_str(x_t.shape()));
        if (mask.size() != x_t.dim(0)) throw ShapeError("vector_field: mask length does not match frame count");
        if (!(t >= T(0) && t <= T(1))) throw ValueError("vector_field: t must lie in [0, 1]");

        const std::size_t t_len = x_t.dim(0);
        const std::size_t mult = cfg.length_multiple();
        const std::size_t t_pad = (t_len + mult - 1) / mult * mult;

        auto h = transpose(concat(x_t, mu, 1));  // [2*d_joint x T]
        Mask m0 = mask;
        if (t_pad != t_len) {
            h = concat(h, Tensor<T>::zeros({cfg.in_channels(), t_pad - t_len}), 1);
            m0.resize(t_pad, 0);
        }
        std::vector<Mask> level_masks{m0};
        for (std::size_t i = 0; i < cfg.down_dims.size(); ++i) {
            const Mask& prev = level_masks.back();
            Mask next(prev.size() / 2);
            for (std::size_t j = 0; j < next.size(); ++j) next[j] = prev[2 * j];
            level_masks.push_back(std::move(next));
        }

        auto t_emb = t_embed.forward(t);
        h = conv_in.forward(mask_cols(h, level_masks[0]));

        std::vector<Tensor<T>> skips;
        for (std::size_t i = 0; i < down_stages.size(); ++i) {
            h = down_stages[i].forward(h, t_emb, level_masks[i]);
            skips.push_back(h);
            h = downsamples[i].forward(mask_cols(h, level_masks[i]));
        }
        for (const auto& stage : mid_stages) h = stage.forward(h, t_emb, level_masks.back());
        for (std::size_t i = 0; i < up_stages.size(); ++i) {
            const std::size_t level = cfg.down_dims.size() - i;  // coarse level before upsampling
            h = nearest_upsample2_cols(mask_cols(h, level_masks[level]));
            h = concat(h, skips[skips.size() - 1 - i], 0);
            h = up_stages[i].forward(h, t_emb, level_masks[level - 1]);
        }
        auto out = conv_out.forward(mask_cols(h, level_masks[0]));
        if (t_pad != t_len) out = slice(out, 1, 0, t_len);
        return mask_rows(transpose(out), mask);
    }

    void register_params(ParamList<T>& dst, const std::string& prefix) {
        t_embed.register_params(dst, prefix + ".temb");
        conv_in.register_params(dst, prefix + ".in");
        for (std::size_t i = 0; i < down_stages.size(); ++i) {
            down_stages[i].register_params(dst, prefix + ".down" + std::to_string(i));
            downsamples[i].register_params(dst, prefix + ".ds" + std::to_string(i));
        }
        for (std::size_t i = 0; i < mid_stages.size(); ++i)
            mid_stages[i].register_params(dst, prefix + ".mid" + std::to_string(i));
        for (std::size_t i = 0; i < up_stages.size(); ++i)
            up_stages[i].register_params(dst, prefix + ".up" + std::to_string(i));
        conv_out.register_params(dst, prefix + ".out");
    }

    std::size_t param_count() {
        ParamList<T> params;
        register_params(params, "unet");
        std::size_t n = 0;
        for (auto& [name, p] : params) n += p.size();
        return n;
    }
};

template <typename T>
UNet<T> build_unet(Rng& rng, const UNetConfig& cfg) {
    return UNet<T>(rng, cfg);
}

}  // namespace flowsynth
