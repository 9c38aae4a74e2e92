#pragma once

#include <string>
#include <vector>

#include "flowsynth/common.hpp"
#include "flowsynth/nn.hpp"
#include "flowsynth/rng.hpp"
#include "flowsynth/tensor.hpp"

namespace flowsynth {

struct EncoderConfig {
    std::size_t vocab = 0;
    std::size_t model_dim = 192;
    std::size_t num_blocks = 3;
    std::size_t num_heads = 4;
    std::size_t head_dim = 64;
    std::size_t ffn_mult = 4;
    std::size_t out_dim = 125;  // acoustic_dim + motion_dim
    std::size_t dur_hidden = 128;
    std::size_t dur_width = 3;

    bool operator==(const EncoderConfig&) const = default;
};

template <typename T>
struct EncoderOutput {
    Tensor<T> mu;             // [N x out_dim], both modalities in one head
    Tensor<T> log_durations;  // [N]
    Mask token_mask;
};

// Token embedding, a stack of rotary-attention Transformer blocks, and a
// single linear head covering both modalities at once. The duration head runs
// on stop-gradient features so its loss cannot deform mu.
template <typename T>
struct Encoder {
    EncoderConfig cfg;
    Embedding<T> emb;
    std::vector<TransformerBlock<T>> blocks;
    Linear<T> head;
    Conv1dLayer<T> dur1, dur2;
    Tensor<T> zero_t_emb;

    Encoder() = default;
    Encoder(Rng& rng, const EncoderConfig& cfg_) : cfg(cfg_) {
        if (cfg.vocab == 0 || cfg.model_dim == 0 || cfg.out_dim == 0)
            throw ConfigError("encoder: vocab, model_dim and out_dim must be positive");
        emb = Embedding<T>(rng, cfg.vocab, cfg.model_dim);
        TransformerBlockConfig bc;
        bc.model_dim = cfg.model_dim;
        bc.num_heads = cfg.num_heads;
        bc.head_dim = cfg.head_dim;
        bc.ffn_mult = cfg.ffn_mult;
        bc.use_rope = true;
        for (std::size_t i = 0; i < cfg.num_blocks; ++i) blocks.emplace_back(rng, bc);
        head = Linear<T>(rng, cfg.model_dim, cfg.out_dim);
        const std::size_t pad = cfg.dur_width / 2;
        dur1 = Conv1dLayer<T>(rng, cfg.model_dim, cfg.dur_hidden, cfg.dur_width, 1, pad);
        dur2 = Conv1dLayer<T>(rng, cfg.dur_hidden, 1, cfg.dur_width, 1, pad);
        zero_t_emb = Tensor<T>::zeros({cfg.model_dim});
    }

    EncoderOutput<T> encode(const std::vector<std::size_t>& tokens, const Mask& token_mask) const {
        if (tokens.size() != token_mask.size())
            throw ShapeError("encode: " + std::to_string(tokens.size()) + " tokens vs mask length " +
                             std::to_string(token_mask.size()));
        if (mask_count(token_mask) == 0) throw ValueError("encode: mask has no valid tokens");
        auto x = emb.forward(tokens);
        for (const auto& block : blocks) x = block.forward(x, zero_t_emb, token_mask);

        EncoderOutput<T> out;
        out.mu = mask_rows(head.forward(x), token_mask);
        auto feats = transpose(mask_rows(detach(x), token_mask));
        auto h = silu(dur1.forward(feats));
        auto ld = dur2.forward(mask_cols(h, token_mask));
        out.log_durations = reshape(ld, {tokens.size()});
        out.token_mask = token_mask;
        return out;
    }

    void register_params(ParamList<T>& dst, const std::string& prefix) {
        emb.register_params(dst, prefix + ".emb");
        for (std::size_t i = 0; i < blocks.size(); ++i)
            blocks[i].register_params(dst, prefix + ".block" + std::to_string(i));
        head.register_params(dst, prefix + ".head");
        dur1.register_params(dst, prefix + ".dur1");
        dur2.register_params(dst, prefix + ".dur2");
    }
};

}  // namespace flowsynth
