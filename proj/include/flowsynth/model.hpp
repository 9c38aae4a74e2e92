#pragma once

#include <algorithm>
#include <cmath>
#include <string>
#include <vector>

#include "flowsynth/common.hpp"
#include "flowsynth/encoder.hpp"
#include "flowsynth/rng.hpp"
#include "flowsynth/tensor.hpp"
#include "flowsynth/unet.hpp"

namespace flowsynth {

// One joint sequence: acoustic channels first, motion channels after, per
// frame. frame_rate is carried as metadata for file headers.
template <typename T>
struct JointFrameSequence {
    Tensor<T> frames;  // [T x (acoustic_dim + motion_dim)]
    std::size_t acoustic_dim = 80;
    std::size_t motion_dim = 45;
    Mask mask;
    double frame_rate = 80.0;

    std::size_t d_joint() const { return acoustic_dim + motion_dim; }

    void validate() const {
        if (frames.ndim() != 2 || frames.dim(1) != d_joint())
            throw ShapeError("joint sequence: frames " + shape_str(frames.shape()) + " do not match " +
                             std::to_string(acoustic_dim) + "+" + std::to_string(motion_dim) + " channels");
        if (mask.size() != frames.dim(0))
            throw ShapeError("joint sequence: mask length " + std::to_string(mask.size()) + " vs " +
                             shape_str(frames.shape()));
    }
};

// Which objective the decoder was trained under. The score-matching regime
// keeps the identical decoder interface so the comparison isolates the loss.
enum class Regime { otcfm, score_matching };

inline const char* regime_name(Regime r) { return r == Regime::otcfm ? "otcfm" : "score_matching"; }

inline Regime regime_from_name(const std::string& s) {
    if (s == "otcfm") return Regime::otcfm;
    if (s == "score_matching" || s == "sm") return Regime::score_matching;
    throw ConfigError("unknown regime '" + s + "' (expected otcfm or sm)");
}

struct OtcfmConfig {
    double sigma_min = 1e-4;

    bool operator==(const OtcfmConfig&) const = default;
};

// Linear beta schedule for the score-matching baseline. alpha is the kernel
// mean decay exp(-0.5 * integral of beta), sigma^2 the matching variance.
struct ScoreMatchingConfig {
    double beta_0 = 0.05;
    double beta_1 = 20.0;
    double t_floor = 1e-5;

    bool operator==(const ScoreMatchingConfig&) const = default;

    double beta(double t) const { return beta_0 + (beta_1 - beta_0) * t; }
    double alpha(double t) const { return std::exp(-0.5 * (beta_0 * t + 0.5 * (beta_1 - beta_0) * t * t)); }
    double sigma(double t) const {
        const double a = alpha(t);
        return std::sqrt(std::max(1.0 - a * a, 1e-12));
    }
};

struct ModelConfig {
    std::size_t vocab = 0;
    std::size_t acoustic_dim = 80;
    std::size_t motion_dim = 45;
    Regime regime = Regime::otcfm;
    EncoderConfig encoder;  // out_dim is overwritten with acoustic+motion
    UNetConfig unet;        // d_joint is overwritten with acoustic+motion
    OtcfmConfig otcfm;
    ScoreMatchingConfig sm;

    bool operator==(const ModelConfig&) const = default;

    std::size_t d_joint() const { return acoustic_dim + motion_dim; }
};

// Desk-scale profile: every channel width of the full model divided by 8,
// with 8+5 joint channels instead of 80+45.
inline ModelConfig desk_model_config(std::size_t vocab) {
    ModelConfig cfg;
    cfg.vocab = vocab;
    cfg.acoustic_dim = 8;
    cfg.motion_dim = 5;
    cfg.encoder.model_dim = 48;
    cfg.encoder.num_blocks = 2;
    cfg.encoder.num_heads = 4;
    cfg.encoder.head_dim = 12;
    cfg.encoder.ffn_mult = 2;
    cfg.encoder.dur_hidden = 32;
    cfg.unet = desk_unet_config(cfg.d_joint());
    return cfg;
}

// Encoder plus flow decoder under one parameter namespace.
template <typename T>
struct Model {
    ModelConfig cfg;
    Encoder<T> encoder;
    UNet<T> unet;

    Model() = default;
    Model(Rng& rng, const ModelConfig& cfg_) : cfg(cfg_) {
        if (cfg.vocab == 0) throw ConfigError("model: vocab must be positive");
        cfg.encoder.vocab = cfg.vocab;
        cfg.encoder.out_dim = cfg.d_joint();
        cfg.unet.d_joint = cfg.d_joint();
        encoder = Encoder<T>(rng, cfg.encoder);
        unet = UNet<T>(rng, cfg.unet);
    }

    void register_params(ParamList<T>& dst, const std::string& prefix) {
        encoder.register_params(dst, prefix + ".enc");
        unet.register_params(dst, prefix + ".dec");
    }

    std::size_t param_count() {
        ParamList<T> params;
        register_params(params, "m");
        std::size_t n = 0;
        for (auto& [name, p] : params) n += p.size();
        return n;
    }
};

}  // namespace flowsynth
