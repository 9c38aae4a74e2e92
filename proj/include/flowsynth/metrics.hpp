#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>
#include <vector>

#include "flowsynth/common.hpp"
#include "flowsynth/model.hpp"
#include "flowsynth/rng.hpp"
#include "flowsynth/sampler.hpp"

namespace flowsynth {
namespace detail {

// Dense symmetric helpers on row-major square matrices, sized for the
// channel counts here (at most a few dozen), not for anything larger.
struct SymEig {
    std::vector<double> values;   // ascending is not guaranteed
    std::vector<double> vectors;  // column i = eigenvector of values[i]
};

inline SymEig jacobi_eigh(std::vector<double> a, std::size_t n) {
    SymEig out;
    out.vectors.assign(n * n, 0.0);
    for (std::size_t i = 0; i < n; ++i) out.vectors[i * n + i] = 1.0;
    auto& v = out.vectors;
    for (int sweep = 0; sweep < 100; ++sweep) {
        double off = 0.0, diag = 0.0;
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j) (i == j ? diag : off) += a[i * n + j] * a[i * n + j];
        if (off <= 1e-28 * std::max(diag, 1e-300)) break;
        for (std::size_t p = 0; p + 1 < n; ++p) {
            for (std::size_t q = p + 1; q < n; ++q) {
                const double apq = a[p * n + q];
                if (std::abs(apq) < 1e-300) continue;
                const double theta = (a[q * n + q] - a[p * n + p]) / (2.0 * apq);
                const double t = (theta >= 0.0 ? 1.0 : -1.0) / (std::abs(theta) + std::sqrt(theta * theta + 1.0));
                const double c = 1.0 / std::sqrt(t * t + 1.0), s = t * c;
                for (std::size_t k = 0; k < n; ++k) {
                    const double akp = a[k * n + p], akq = a[k * n + q];
                    a[k * n + p] = c * akp - s * akq;
                    a[k * n + q] = s * akp + c * akq;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double apk = a[p * n + k], aqk = a[q * n + k];
                    a[p * n + k] = c * apk - s * aqk;
                    a[q * n + k] = s * apk + c * aqk;
                }
                for (std::size_t k = 0; k < n; ++k) {
                    const double vkp = v[k * n + p], vkq = v[k * n + q];
                    v[k * n + p] = c * vkp - s * vkq;
                    v[k * n + q] = s * vkp + c * vkq;
                }
            }
        }
    }
    out.values.resize(n);
    for (std::size_t i = 0; i < n; ++i) out.values[i] = a[i * n + i];
    return out;
}

// Symmetric inverse square root with an eigenvalue floor relative to the
// largest eigenvalue, so near-singular covariances stay usable.
inline std::vector<double> inverse_sqrt(const std::vector<double>& m, std::size_t n) {
    SymEig eig = jacobi_eigh(m, n);
    double top = 0.0;
    for (double l : eig.values) top = std::max(top, l);
    const double floor_val = std::max(top, 1e-300) * 1e-13;
    std::vector<double> out(n * n, 0.0);
    for (std::size_t e = 0; e < n; ++e) {
        const double inv_root = 1.0 / std::sqrt(std::max(eig.values[e], floor_val));
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t j = 0; j < n; ++j)
                out[i * n + j] += inv_root * eig.vectors[i * n + e] * eig.vectors[j * n + e];
    }
    return out;
}

struct PooledFrames {
    std::vector<double> data;  // [n x d] row-major
    std::size_t n = 0, d = 0;
};

template <typename T>
PooledFrames pool_frames(const std::vector<JointFrameSequence<T>>& samples, std::size_t* acoustic_dim = nullptr) {
    PooledFrames out;
    for (const auto& seq : samples) {
        seq.validate();
        if (out.d == 0) {
            out.d = seq.d_joint();
            if (acoustic_dim) *acoustic_dim = seq.acoustic_dim;
        } else if (seq.d_joint() != out.d || (acoustic_dim && seq.acoustic_dim != *acoustic_dim)) {
            throw ShapeError("metrics: inconsistent channel layout across sequences");
        }
        const auto& vals = seq.frames.data();
        for (std::size_t t = 0; t < seq.frames.dim(0); ++t) {
            if (!seq.mask[t]) continue;
            for (std::size_t j = 0; j < out.d; ++j) out.data.push_back(static_cast<double>(vals[t * out.d + j]));
            ++out.n;
        }
    }
    return out;
}

}  // namespace detail

// Canonical-correlation statistic between the acoustic and motion channel
// blocks: whitened cross-covariance, top singular pair estimated on frames
// pooled across all sequences, then the projected per-utterance Pearson
// correlations averaged. Detects factorized generation, which produces
// modality pairs with no correlation beyond what the tokens explain.
template <typename T>
double cross_modal_dependence(const std::vector<JointFrameSequence<T>>& samples) {
    if (samples.size() < 2) throw ValueError("cross_modal_dependence: need at least 2 sequences");
    std::size_t da = 0;
    detail::PooledFrames pool = detail::pool_frames(samples, &da);
    const std::size_t d = pool.d, dm = d - da;
    if (da == 0 || dm == 0) throw ValueError("cross_modal_dependence: both modalities must have channels");
    if (pool.n < d + 2) throw ValueError("cross_modal_dependence: too few frames for a covariance estimate");

    std::vector<double> mean(d, 0.0);
    for (std::size_t i = 0; i < pool.n; ++i)
        for (std::size_t j = 0; j < d; ++j) mean[j] += pool.data[i * d + j];
    for (double& m : mean) m /= static_cast<double>(pool.n);

    std::vector<double> caa(da * da, 0.0), cmm(dm * dm, 0.0), cam(da * dm, 0.0);
    for (std::size_t i = 0; i < pool.n; ++i) {
        const double* row = pool.data.data() + i * d;
        for (std::size_t j = 0; j < da; ++j) {
            const double x = row[j] - mean[j];
            for (std::size_t k = j; k < da; ++k) caa[j * da + k] += x * (row[k] - mean[k]);
            for (std::size_t k = 0; k < dm; ++k) cam[j * dm + k] += x * (row[da + k] - mean[da + k]);
        }
        for (std::size_t j = 0; j < dm; ++j) {
            const double x = row[da + j] - mean[da + j];
            for (std::size_t k = j; k < dm; ++k) cmm[j * dm + k] += x * (row[da + k] - mean[da + k]);
        }
    }
    const double inv_n = 1.0 / static_cast<double>(pool.n);
    for (std::size_t j = 0; j < da; ++j)
        for (std::size_t k = j; k < da; ++k) caa[k * da + j] = caa[j * da + k] *= inv_n;
    for (std::size_t j = 0; j < dm; ++j)
        for (std::size_t k = j; k < dm; ++k) cmm[k * dm + j] = cmm[j * dm + k] *= inv_n;
    for (double& x : cam) x *= inv_n;

    for (std::size_t j = 0; j < da; ++j)
        if (caa[j * da + j] < 1e-12) throw ValueError("cross_modal_dependence: constant acoustic channel " +
                                                      std::to_string(j));
    for (std::size_t j = 0; j < dm; ++j)
        if (cmm[j * dm + j] < 1e-12) throw ValueError("cross_modal_dependence: constant motion channel " +
                                                      std::to_string(j));

    double tr_a = 0.0, tr_m = 0.0;
    for (std::size_t j = 0; j < da; ++j) tr_a += caa[j * da + j];
    for (std::size_t j = 0; j < dm; ++j) tr_m += cmm[j * dm + j];
    for (std::size_t j = 0; j < da; ++j) caa[j * da + j] += 1e-10 * tr_a / static_cast<double>(da);
    for (std::size_t j = 0; j < dm; ++j) cmm[j * dm + j] += 1e-10 * tr_m / static_cast<double>(dm);

    const auto ia = detail::inverse_sqrt(caa, da);
    const auto im = detail::inverse_sqrt(cmm, dm);

    // M = Caa^{-1/2} Cam Cmm^{-1/2}; top right-singular vector from M^T M.
    std::vector<double> m_mat(da * dm, 0.0);
    for (std::size_t i = 0; i < da; ++i)
        for (std::size_t k = 0; k < da; ++k) {
            const double w = ia[i * da + k];
            if (w == 0.0) continue;
            for (std::size_t j = 0; j < dm; ++j) m_mat[i * dm + j] += w * cam[k * dm + j];
        }
    for (std::size_t i = 0; i < da; ++i) {
        std::vector<double> row(m_mat.begin() + i * dm, m_mat.begin() + (i + 1) * dm);
        for (std::size_t j = 0; j < dm; ++j) {
            double acc = 0.0;
            for (std::size_t k = 0; k < dm; ++k) acc += row[k] * im[k * dm + j];
            m_mat[i * dm + j] = acc;
        }
    }
    std::vector<double> mtm(dm * dm, 0.0);
    for (std::size_t j = 0; j < dm; ++j)
        for (std::size_t k = 0; k < dm; ++k) {
            double acc = 0.0;
            for (std::size_t i = 0; i < da; ++i) acc += m_mat[i * dm + j] * m_mat[i * dm + k];
            mtm[j * dm + k] = acc;
        }
    detail::SymEig eig = detail::jacobi_eigh(mtm, dm);
    std::size_t best = 0;
    for (std::size_t e = 1; e < dm; ++e)
        if (eig.values[e] > eig.values[best]) best = e;

    std::vector<double> v_m(dm), u_a(da, 0.0);
    for (std::size_t j = 0; j < dm; ++j) v_m[j] = eig.vectors[j * dm + best];
    for (std::size_t i = 0; i < da; ++i)
        for (std::size_t j = 0; j < dm; ++j) u_a[i] += m_mat[i * dm + j] * v_m[j];

    std::vector<double> w_a(da, 0.0), w_m(dm, 0.0);
    for (std::size_t i = 0; i < da; ++i)
        for (std::size_t k = 0; k < da; ++k) w_a[i] += ia[i * da + k] * u_a[k];
    for (std::size_t j = 0; j < dm; ++j)
        for (std::size_t k = 0; k < dm; ++k) w_m[j] += im[j * dm + k] * v_m[k];

    // Orient so the pooled cross term is nonnegative, then average the
    // per-utterance correlations of the projected series.
    double pooled = 0.0;
    for (std::size_t i = 0; i < da; ++i)
        for (std::size_t j = 0; j < dm; ++j) pooled += w_a[i] * cam[i * dm + j] * w_m[j];
    if (pooled < 0.0)
        for (double& x : w_m) x = -x;

    double corr_sum = 0.0;
    std::size_t used = 0;
    for (const auto& seq : samples) {
        const auto& vals = seq.frames.data();
        double sx = 0.0, sy = 0.0, sxx = 0.0, syy = 0.0, sxy = 0.0;
        std::size_t n = 0;
        for (std::size_t t = 0; t < seq.frames.dim(0); ++t) {
            if (!seq.mask[t]) continue;
            double x = 0.0, y = 0.0;
            for (std::size_t j = 0; j < da; ++j) x += w_a[j] * (static_cast<double>(vals[t * d + j]) - mean[j]);
            for (std::size_t j = 0; j < dm; ++j)
                y += w_m[j] * (static_cast<double>(vals[t * d + da + j]) - mean[da + j]);
            sx += x;
            sy += y;
            sxx += x * x;
            syy += y * y;
            sxy += x * y;
            ++n;
        }
        if (n < 2) continue;
        const double nn = static_cast<double>(n);
        const double var_x = sxx - sx * sx / nn, var_y = syy - sy * sy / nn;
        if (var_x <= 0.0 || var_y <= 0.0) continue;
        corr_sum += (sxy - sx * sy / nn) / std::sqrt(var_x * var_y);
        ++used;
    }
    if (used == 0) throw ValueError("cross_modal_dependence: no utterance had enough frames");
    return std::clamp(corr_sum / static_cast<double>(used), 0.0, 1.0);
}

namespace detail {

// Uniform subsample of max_n row indices; identical inputs (same n) see the
// same index choices because both sets derive the stream the same way,
// which keeps energy_distance(A, A) exactly zero even past the cap.
inline std::vector<std::size_t> subsample_indices(std::size_t n, std::size_t max_n, Rng& base) {
    std::vector<std::size_t> idx(n);
    for (std::size_t i = 0; i < n; ++i) idx[i] = i;
    if (n <= max_n) return idx;
    Rng picker = base.child(0);
    for (std::size_t i = 0; i < max_n; ++i) {
        const std::size_t j = i + picker.next_below(n - i);
        std::swap(idx[i], idx[j]);
    }
    idx.resize(max_n);
    return idx;
}

inline double pair_distance_sum(const PooledFrames& x, const std::vector<std::size_t>& xi, const PooledFrames& y,
                                const std::vector<std::size_t>& yi) {
    const std::size_t d = x.d;
    std::vector<double> row_sums(xi.size(), 0.0);
    parallel_for(0, xi.size(), 64, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t i = lo; i < hi; ++i) {
            const double* a = x.data.data() + xi[i] * d;
            double acc = 0.0;
            for (std::size_t jj = 0; jj < yi.size(); ++jj) {
                const double* b = y.data.data() + yi[jj] * d;
                double dist = 0.0;
                for (std::size_t c = 0; c < d; ++c) {
                    const double delta = a[c] - b[c];
                    dist += delta * delta;
                }
                acc += std::sqrt(dist);
            }
            row_sums[i] = acc;
        }
    });
    double total = 0.0;
    for (double s : row_sums) total += s;
    return total;
}

}  // namespace detail

// Energy distance V-statistic between the pooled frame distributions:
// 2 E|A-B| - E|A-A'| - E|B-B'|. Zero for identical sample lists, positive
// when the distributions differ.
template <typename T>
double energy_distance(const std::vector<JointFrameSequence<T>>& a, const std::vector<JointFrameSequence<T>>& b,
                       Rng& rng, std::size_t max_frames = 10000) {
    if (a.empty() || b.empty()) throw ValueError("energy_distance: both sample sets must be non-empty");
    detail::PooledFrames pa = detail::pool_frames(a);
    detail::PooledFrames pb = detail::pool_frames(b);
    if (pa.d != pb.d) throw ShapeError("energy_distance: channel count mismatch");
    if (pa.n == 0 || pb.n == 0) throw ValueError("energy_distance: a sample set has no valid frames");

    const auto ia = detail::subsample_indices(pa.n, max_frames, rng);
    const auto ib = detail::subsample_indices(pb.n, max_frames, rng);
    const double na = static_cast<double>(ia.size()), nb = static_cast<double>(ib.size());
    const double q_ab = detail::pair_distance_sum(pa, ia, pb, ib) / (na * nb);
    const double q_aa = detail::pair_distance_sum(pa, ia, pa, ia) / (na * na);
    const double q_bb = detail::pair_distance_sum(pb, ib, pb, ib) / (nb * nb);
    const double ed = 2.0 * q_ab - q_aa - q_bb;
    return std::max(0.0, ed);
}

struct RtfEntry {
    std::size_t n_steps = 0;
    double rtf = 0.0;              // wall seconds per second of output
    double solver_seconds = 0.0;   // ODE integration only, best of repeats
    double encoder_seconds = 0.0;  // conditioning path, best of repeats
    double audio_seconds = 0.0;
    std::size_t frames = 0;
};

// Wall-clock scaling of synthesis across solver step counts on fixed token
// inputs. Noise draws are re-derived per config from the same base stream,
// so every row integrates from identical initial states.
template <typename T>
std::vector<RtfEntry> benchmark_rtf(Model<T>& model, const std::vector<SamplerConfig>& cfgs,
                                    const std::vector<std::vector<std::size_t>>& token_seqs, Rng& rng,
                                    double frame_rate = 80.0, std::size_t repeats = 1) {
    if (token_seqs.empty()) throw ValueError("benchmark_rtf: no token sequences");
    if (repeats < 1) throw ConfigError("benchmark_rtf: repeats must be positive");
    std::vector<RtfEntry> out;
    for (const auto& cfg : cfgs) {
        RtfEntry row;
        row.n_steps = cfg.n_steps;
        row.solver_seconds = row.encoder_seconds = -1.0;
        for (std::size_t rep = 0; rep < repeats; ++rep) {
            double solver = 0.0, encoder = 0.0;
            std::size_t frames = 0;
            for (std::size_t s = 0; s < token_seqs.size(); ++s) {
                Rng noise = rng.child(s);
                auto res = synthesize(token_seqs[s], model, cfg, noise);
                solver += res.solver_seconds;
                encoder += res.encoder_seconds;
                frames += res.sequence.frames.dim(0);
            }
            row.frames = frames;
            if (row.solver_seconds < 0.0 || solver < row.solver_seconds) row.solver_seconds = solver;
            if (row.encoder_seconds < 0.0 || encoder < row.encoder_seconds) row.encoder_seconds = encoder;
        }
        row.audio_seconds = static_cast<double>(row.frames) / frame_rate;
        row.rtf = (row.solver_seconds + row.encoder_seconds) / row.audio_seconds;
        out.push_back(row);
    }
    return out;
}

}  // namespace flowsynth
