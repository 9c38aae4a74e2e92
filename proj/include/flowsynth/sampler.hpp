#pragma once

#include <chrono>
#include <cmath>
#include <string>
#include <utility>
#include <vector>

#include "flowsynth/align.hpp"
#include "flowsynth/common.hpp"
#include "flowsynth/model.hpp"
#include "flowsynth/rng.hpp"
#include "flowsynth/tensor.hpp"

namespace flowsynth {

struct SamplerConfig {
    std::size_t n_steps = 50;
    double temperature = 1.0;  // scales the initial noise std; 0 gives a deterministic start

    bool operator==(const SamplerConfig&) const = default;

    void validate() const {
        if (n_steps < 1) throw ConfigError("sampler: n_steps must be at least 1");
        if (temperature < 0.0) throw ConfigError("sampler: temperature must be nonnegative");
    }
};

namespace detail {

template <typename T>
void check_finite_state(const Tensor<T>& x, std::size_t step, std::size_t n_steps) {
    for (T v : x.data())
        if (!std::isfinite(static_cast<double>(v)))
            throw NumericError("euler_solve: non-finite state after step " + std::to_string(step) + " of " +
                               std::to_string(n_steps));
}

}  // namespace detail

// Explicit Euler on the uniform grid t_i = i/n with left-endpoint field
// evaluation. Exact for fields constant in x and t, hence the 1-step ODE
// sampling the flow-matching literature advertises.
template <typename T, typename FieldFn>
Tensor<T> euler_solve(FieldFn&& field, const Tensor<T>& x0, const Tensor<T>& mu, const Mask& mask,
                      const SamplerConfig& cfg) {
    cfg.validate();
    NoGradGuard ng;
    const T h = T(1) / static_cast<T>(cfg.n_steps);
    Tensor<T> x = detach(x0);
    detail::check_finite_state(x, 0, cfg.n_steps);
    for (std::size_t i = 0; i < cfg.n_steps; ++i) {
        const T t = static_cast<T>(i) / static_cast<T>(cfg.n_steps);
        x = add(x, scale(field(x, t, mu, mask), h));
        detail::check_finite_state(x, i + 1, cfg.n_steps);
    }
    return x;
}

template <typename T>
std::pair<Tensor<T>, Tensor<T>> split_modalities(const JointFrameSequence<T>& seq) {
    seq.validate();
    return {slice(seq.frames, 1, 0, seq.acoustic_dim), slice(seq.frames, 1, seq.acoustic_dim, seq.motion_dim)};
}

template <typename T>
struct SynthesisResult {
    JointFrameSequence<T> sequence;
    std::vector<std::size_t> durations;  // per input token, frames
    double encoder_seconds = 0.0;        // encode + duration rounding + upsampling
    double solver_seconds = 0.0;         // ODE integration only
};

// Noise-to-sequence synthesis: encode tokens, upsample the predicted means by
// the predicted durations, then integrate the regime's ODE field from
// temperature-scaled Gaussian noise. The score-matching regime runs its
// probability-flow ODE through the same solver: with s = 1 - t,
// dx/ds = 0.5 beta(1-s) (x + score(x, 1-s)). Passing forced_durations skips
// the model's duration head, which lets two single-modality models share one
// timeline.
template <typename T>
SynthesisResult<T> synthesize(const std::vector<std::size_t>& tokens, Model<T>& model, const SamplerConfig& cfg,
                              Rng& rng, const std::vector<std::size_t>* forced_durations = nullptr) {
    cfg.validate();
    if (tokens.empty()) throw ValueError("synthesize: token sequence is empty");
    NoGradGuard ng;
    using clock = std::chrono::steady_clock;

    SynthesisResult<T> out;
    const auto enc_start = clock::now();
    auto enc = model.encoder.encode(tokens, full_mask(tokens.size()));
    if (forced_durations) {
        if (forced_durations->size() != tokens.size())
            throw ShapeError("synthesize: forced durations must have one entry per token");
        out.durations = *forced_durations;
    } else {
        out.durations = durations_from_log(enc.log_durations, 1.0, DurationMode::synth, enc.token_mask);
    }
    std::size_t total = 0;
    for (std::size_t d : out.durations) total += d;
    if (total == 0) throw ValueError("synthesize: durations sum to zero frames");
    auto mu_frames = upsample(enc.mu, out.durations);
    out.encoder_seconds = std::chrono::duration<double>(clock::now() - enc_start).count();

    const std::size_t d_joint = model.cfg.d_joint();
    auto x0 = scale(gaussian<T>(rng, {total, d_joint}), static_cast<T>(cfg.temperature));
    Mask frame_mask = full_mask(total);

    const auto solve_start = clock::now();
    Tensor<T> x1;
    if (model.cfg.regime == Regime::otcfm) {
        auto field = [&](const Tensor<T>& x, T t, const Tensor<T>& mu, const Mask& mask) {
            return model.unet.vector_field(x, static_cast<double>(t), mu, mask);
        };
        x1 = euler_solve(field, x0, mu_frames, frame_mask, cfg);
    } else {
        const ScoreMatchingConfig sm = model.cfg.sm;
        auto field = [&](const Tensor<T>& x, T s, const Tensor<T>& mu, const Mask& mask) {
            const double t = std::max(sm.t_floor, 1.0 - static_cast<double>(s));
            // The network predicts the perturbation noise; divide by -sigma
            // to recover the score the probability flow needs.
            auto eps = model.unet.vector_field(x, t, mu, mask);
            auto score = scale(eps, static_cast<T>(-1.0 / sm.sigma(t)));
            return scale(add(x, score), static_cast<T>(0.5 * sm.beta(t)));
        };
        x1 = euler_solve(field, x0, mu_frames, frame_mask, cfg);
    }
    out.solver_seconds = std::chrono::duration<double>(clock::now() - solve_start).count();

    out.sequence.frames = x1;
    out.sequence.acoustic_dim = model.cfg.acoustic_dim;
    out.sequence.motion_dim = model.cfg.motion_dim;
    out.sequence.mask = frame_mask;
    return out;
}

}  // namespace flowsynth
