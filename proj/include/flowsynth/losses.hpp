#pragma once

#include <cmath>
#include <string>
#include <vector>

#include "flowsynth/common.hpp"
#include "flowsynth/model.hpp"
#include "flowsynth/rng.hpp"
#include "flowsynth/tensor.hpp"

namespace flowsynth {

// Interpolant and regression target of the optimal-transport flow for one
// (x0, x1, t) triple: x_t = (1-(1-s)t) x0 + t x1, u = x1 - (1-s) x0.
template <typename T>
struct FlowSample {
    Tensor<T> x_t;
    Tensor<T> u;
};

template <typename T>
FlowSample<T> otcfm_interpolate(const Tensor<T>& x0, const Tensor<T>& x1, T t, const OtcfmConfig& cfg) {
    if (x0.shape() != x1.shape())
        throw ShapeError("otcfm: x0 " + shape_str(x0.shape()) + " vs x1 " + shape_str(x1.shape()));
    const T keep = T(1) - (T(1) - static_cast<T>(cfg.sigma_min)) * t;
    FlowSample<T> out;
    out.x_t = add(scale(x0, keep), scale(x1, t));
    out.u = sub(x1, scale(x0, T(1) - static_cast<T>(cfg.sigma_min)));
    return out;
}

namespace detail {

template <typename T>
Tensor<T> masked_mse(const Tensor<T>& pred, const Tensor<T>& target, const Mask& mask) {
    const std::size_t valid = mask_count(mask);
    if (valid == 0) throw ValueError("loss: mask has no valid frames");
    auto diff = mask_rows(sub(pred, target), mask);
    const T denom = static_cast<T>(valid * pred.dim(1));
    return scale(sum(mul(diff, diff)), T(1) / denom);
}

}  // namespace detail

// Flow-matching regression: draw one t and one noise field per sequence, move
// x1 along the optimal-transport path and regress the field network onto the
// constant target velocity. Mean over unmasked frames and all channels.
template <typename T, typename FieldFn>
Tensor<T> otcfm_loss(const JointFrameSequence<T>& x1, const Tensor<T>& mu_frames, FieldFn&& field, Rng& rng,
                     const OtcfmConfig& cfg) {
    x1.validate();
    if (mu_frames.shape() != x1.frames.shape())
        throw ShapeError("otcfm_loss: mu " + shape_str(mu_frames.shape()) + " vs frames " +
                         shape_str(x1.frames.shape()));
    const T t = static_cast<T>(rng.next_double());
    auto x0 = gaussian<T>(rng, x1.frames.shape());
    auto fs = otcfm_interpolate(x0, x1.frames, t, cfg);
    auto pred = field(fs.x_t, t, mu_frames, x1.mask);
    return detail::masked_mse(pred, fs.u, x1.mask);
}

// Denoising score matching under the linear-beta forward process, with the
// sigma_t^2 weighting folded in: || sigma_t * s_theta + z ||^2. The network
// predicts the unit-variance perturbation noise and the score it defines is
// -prediction / sigma_t, so the weighted residual reduces to z minus the
// prediction. Regressing the noise instead of the raw score keeps the target
// O(1) at every t rather than growing like 1/sigma toward t = 0, which is
// what makes the baseline trainable at small step counts of updates.
template <typename T, typename FieldFn>
Tensor<T> score_matching_loss(const JointFrameSequence<T>& x1, const Tensor<T>& mu_frames, FieldFn&& field, Rng& rng,
                              const ScoreMatchingConfig& cfg) {
    x1.validate();
    if (mu_frames.shape() != x1.frames.shape())
        throw ShapeError("score_matching_loss: mu " + shape_str(mu_frames.shape()) + " vs frames " +
                         shape_str(x1.frames.shape()));
    const double t = cfg.t_floor + (1.0 - cfg.t_floor) * rng.next_double();
    const T a = static_cast<T>(cfg.alpha(t));
    const T s = static_cast<T>(cfg.sigma(t));
    auto z = gaussian<T>(rng, x1.frames.shape());
    auto x_t = add(scale(x1.frames, a), scale(z, s));
    auto eps = field(x_t, static_cast<T>(t), mu_frames, x1.mask);
    return detail::masked_mse(eps, z, x1.mask);
}

// Mean over unmasked frames of the Gaussian negative log-likelihood of x1
// under N(mu, I): 0.5 ||x1 - mu||^2 + (D/2) ln 2 pi per frame.
template <typename T>
Tensor<T> prior_loss(const Tensor<T>& mu_frames, const Tensor<T>& x1, const Mask& mask) {
    if (mu_frames.shape() != x1.shape())
        throw ShapeError("prior_loss: mu " + shape_str(mu_frames.shape()) + " vs x1 " + shape_str(x1.shape()));
    const std::size_t valid = mask_count(mask);
    if (valid == 0) throw ValueError("prior_loss: mask has no valid frames");
    auto diff = mask_rows(sub(x1, mu_frames), mask);
    auto half_sq = scale(sum(mul(diff, diff)), T(0.5) / static_cast<T>(valid));
    const T log2pi = static_cast<T>(std::log(2.0 * 3.14159265358979323846));
    return add_scalar(half_sq, static_cast<T>(0.5 * static_cast<double>(x1.dim(1))) * log2pi);
}

// MSE between predicted log durations and log of the aligned durations.
template <typename T>
Tensor<T> duration_loss(const Tensor<T>& predicted_log_dur, const std::vector<std::size_t>& mas_durations,
                        const Mask& token_mask) {
    if (predicted_log_dur.ndim() != 1 || predicted_log_dur.dim(0) != mas_durations.size())
        throw ShapeError("duration_loss: " + std::to_string(mas_durations.size()) + " durations vs predictions " +
                         shape_str(predicted_log_dur.shape()));
    const std::size_t n = mas_durations.size();
    if (token_mask.size() != n) throw ShapeError("duration_loss: mask length does not match token count");
    const std::size_t valid = mask_count(token_mask);
    if (valid == 0) throw ValueError("duration_loss: mask has no valid tokens");
    std::vector<T> target(n, T(0));
    for (std::size_t i = 0; i < n; ++i)
        target[i] = static_cast<T>(std::log(static_cast<double>(mas_durations[i]) + 1e-8));
    auto diff = mask_rows(
        reshape(sub(predicted_log_dur, Tensor<T>::from_data({n}, std::move(target))), {n, 1}), token_mask);
    return scale(sum(mul(diff, diff)), T(1) / static_cast<T>(valid));
}

}  // namespace flowsynth
