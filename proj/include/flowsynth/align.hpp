#pragma once

#include <cmath>
#include <cstddef>
#include <limits>
#include <vector>

#include "flowsynth/common.hpp"
#include "flowsynth/tensor.hpp"

namespace flowsynth {

// durations has one entry per token (0 at masked tokens); assignment has one
// entry per unmasked frame, in frame order, holding the original token index.
struct Alignment {
    std::vector<std::size_t> durations;
    std::vector<std::size_t> assignment;
};

// Monotonic alignment: maximize sum_t log N(target_t; mu_assign(t), I) over
// monotone surjective assignments by dynamic programming. Masked tokens and
// frames are compacted away first. Score ties are broken by preferring to
// stay on the current token during backtracking; the tie set is closed under
// pointwise-earliest transition times, so this lands on the lexicographically
// greatest assignment vector.
template <typename T>
Alignment mas_align(const Tensor<T>& mu, const Tensor<T>& target, const Mask& token_mask, const Mask& frame_mask) {
    if (mu.ndim() != 2 || target.ndim() != 2 || mu.dim(1) != target.dim(1))
        throw ShapeError("mas_align: mu " + shape_str(mu.shape()) + " and target " + shape_str(target.shape()) +
                         " must be 2-D with equal feature width");
    const std::size_t n_full = mu.dim(0), t_full = target.dim(0), d = mu.dim(1);
    if (token_mask.size() != n_full || frame_mask.size() != t_full)
        throw ShapeError("mas_align: mask lengths do not match mu/target row counts");

    std::vector<std::size_t> tok_idx, frm_idx;
    for (std::size_t i = 0; i < n_full; ++i)
        if (token_mask[i]) tok_idx.push_back(i);
    for (std::size_t i = 0; i < t_full; ++i)
        if (frame_mask[i]) frm_idx.push_back(i);
    const std::size_t n = tok_idx.size(), t = frm_idx.size();
    if (n == 0) throw ValueError("mas_align: no unmasked tokens");
    if (t < n)
        throw ValueError("mas_align: " + std::to_string(t) + " frames cannot cover " + std::to_string(n) +
                         " tokens monotonically");

    const double log2pi = std::log(2.0 * 3.14159265358979323846);
    std::vector<double> score(n * t);
    for (std::size_t j = 0; j < n; ++j) {
        const T* mrow = mu.data().data() + tok_idx[j] * d;
        for (std::size_t f = 0; f < t; ++f) {
            const T* xrow = target.data().data() + frm_idx[f] * d;
            double ss = 0.0;
            for (std::size_t k = 0; k < d; ++k) {
                const double diff = static_cast<double>(xrow[k]) - static_cast<double>(mrow[k]);
                ss += diff * diff;
            }
            score[j * t + f] = -0.5 * ss - 0.5 * static_cast<double>(d) * log2pi;
        }
    }

    const double neg_inf = -std::numeric_limits<double>::infinity();
    std::vector<double> q(n * t, neg_inf);
    for (std::size_t f = 0; f < t; ++f) {
        const std::size_t j_lo = (n + f + 1 > t) ? n - (t - f) : 0;
        const std::size_t j_hi = std::min(f, n - 1);
        for (std::size_t j = j_lo; j <= j_hi; ++j) {
            double best;
            if (f == 0) {
                best = 0.0;
            } else {
                const double stay = q[j * t + f - 1];
                const double advance = j > 0 ? q[(j - 1) * t + f - 1] : neg_inf;
                best = stay >= advance ? stay : advance;
            }
            q[j * t + f] = best + score[j * t + f];
        }
    }

    Alignment out;
    out.durations.assign(n_full, 0);
    out.assignment.assign(t, 0);
    std::size_t j = n - 1;
    for (std::size_t f = t; f-- > 0;) {
        out.assignment[f] = tok_idx[j];
        ++out.durations[tok_idx[j]];
        if (f > 0 && j > 0 && q[(j - 1) * t + f - 1] > q[j * t + f - 1]) --j;
    }
    return out;
}

// Row i of mu repeated durations[i] times; total length = sum of durations.
template <typename T>
Tensor<T> upsample(const Tensor<T>& mu, const std::vector<std::size_t>& durations) {
    return row_repeat(mu, durations);
}

enum class DurationMode { train, synth };

// Turns predicted log durations into integer frame counts. Synthesis rounds
// half-up and clamps unmasked tokens to at least one frame; train mode keeps
// the raw rounding (training pipelines take their durations from alignment,
// not from this head). Masked tokens always get zero.
template <typename T>
std::vector<std::size_t> durations_from_log(const Tensor<T>& log_durations, double frame_rate_scale, DurationMode mode,
                                            const Mask& token_mask) {
    if (log_durations.ndim() != 1)
        throw ShapeError("durations_from_log: expected 1-D tensor, got " + shape_str(log_durations.shape()));
    const std::size_t n = log_durations.dim(0);
    if (token_mask.size() != n) throw ShapeError("durations_from_log: mask length does not match token count");
    std::vector<std::size_t> out(n, 0);
    for (std::size_t i = 0; i < n; ++i) {
        if (!token_mask[i]) continue;
        const double v = static_cast<double>(log_durations.data()[i]);
        if (!std::isfinite(v)) throw NumericError("durations_from_log: non-finite log duration at token " +
                                                  std::to_string(i));
        double frames = std::floor(std::exp(v) * frame_rate_scale + 0.5);
        if (frames < 0.0) frames = 0.0;
        if (mode == DurationMode::synth && frames < 1.0) frames = 1.0;
        out[i] = static_cast<std::size_t>(frames);
    }
    return out;
}

}  // namespace flowsynth
