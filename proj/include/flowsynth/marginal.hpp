#pragma once

#include <cstddef>
#include <vector>

#include "flowsynth/model.hpp"
#include "flowsynth/sampler.hpp"
#include "flowsynth/toydata.hpp"
#include "flowsynth/train.hpp"

namespace flowsynth {

// The factorized-generation baseline: one flow model per modality, sharing
// only the token input. Synthesis draws independent noise for each, so any
// cross-modal coupling beyond what tokens explain is destroyed by design.
template <typename T>
struct MarginalBaseline {
    Model<T> acoustic;
    Model<T> motion;
};

// Keep one modality's channel block of every utterance; the other modality
// is removed entirely (dim set to zero), not zeroed out.
template <typename T>
std::vector<ToyUtterance<T>> modality_slice(const std::vector<ToyUtterance<T>>& dataset, bool keep_acoustic) {
    std::vector<ToyUtterance<T>> out;
    out.reserve(dataset.size());
    for (const auto& utt : dataset) {
        ToyUtterance<T> cut;
        cut.tokens = utt.tokens;
        cut.latent = utt.latent;
        const std::size_t da = utt.frames.acoustic_dim;
        cut.frames.acoustic_dim = keep_acoustic ? da : 0;
        cut.frames.motion_dim = keep_acoustic ? 0 : utt.frames.motion_dim;
        cut.frames.mask = utt.frames.mask;
        cut.frames.frame_rate = utt.frames.frame_rate;
        cut.frames.frames = keep_acoustic ? slice(utt.frames.frames, 1, 0, da)
                                          : slice(utt.frames.frames, 1, da, utt.frames.motion_dim);
        out.push_back(std::move(cut));
    }
    return out;
}

inline ModelConfig single_modality_config(const ModelConfig& base, bool acoustic) {
    ModelConfig cfg = base;
    cfg.acoustic_dim = acoustic ? base.acoustic_dim : 0;
    cfg.motion_dim = acoustic ? 0 : base.motion_dim;
    cfg.unet.d_joint = cfg.d_joint();
    cfg.encoder.out_dim = cfg.d_joint();
    return cfg;
}

// Trains the two single-modality models on channel slices of the same data.
// The two trainers draw from different rng streams of the same seed so their
// batch orders and noise are decorrelated but reproducible.
template <typename T>
MarginalBaseline<T> marginal_baseline_train(const std::vector<ToyUtterance<T>>& dataset, const ModelConfig& model_cfg,
                                            const TrainConfig& cfg, const TrainSink& sink = {}) {
    MarginalBaseline<T> pair;
    Rng build(cfg.seed, 100);
    Model<T> ac(build, single_modality_config(model_cfg, true));
    Model<T> mo(build, single_modality_config(model_cfg, false));
    pair.acoustic = std::move(ac);
    pair.motion = std::move(mo);

    TrainConfig ac_cfg = cfg;
    ac_cfg.rng_stream = 2;
    Trainer<T> ac_trainer(pair.acoustic, ac_cfg);
    ac_trainer.run(modality_slice(dataset, true), cfg.updates, sink);

    TrainConfig mo_cfg = cfg;
    mo_cfg.rng_stream = 3;
    Trainer<T> mo_trainer(pair.motion, mo_cfg);
    mo_trainer.run(modality_slice(dataset, false), cfg.updates, sink);
    return pair;
}

// Factorized synthesis: the acoustic model leads with its predicted
// durations; the motion model reuses that timeline so the streams can be
// concatenated frame by frame, but its noise is an independent draw.
template <typename T>
SynthesisResult<T> marginal_synthesize(const std::vector<std::size_t>& tokens, MarginalBaseline<T>& pair,
                                       const SamplerConfig& cfg, Rng& rng) {
    Rng ac_rng = rng.child(0);
    Rng mo_rng = rng.child(1);
    auto ac = synthesize(tokens, pair.acoustic, cfg, ac_rng);
    auto mo = synthesize(tokens, pair.motion, cfg, mo_rng, &ac.durations);

    SynthesisResult<T> out;
    out.durations = ac.durations;
    out.encoder_seconds = ac.encoder_seconds + mo.encoder_seconds;
    out.solver_seconds = ac.solver_seconds + mo.solver_seconds;
    out.sequence.acoustic_dim = pair.acoustic.cfg.acoustic_dim;
    out.sequence.motion_dim = pair.motion.cfg.motion_dim;
    out.sequence.mask = ac.sequence.mask;
    out.sequence.frame_rate = ac.sequence.frame_rate;
    out.sequence.frames = concat(ac.sequence.frames, mo.sequence.frames, 1);
    return out;
}

}  // namespace flowsynth
