#pragma once

#include <bit>
#include <cmath>
#include <cstddef>
#include <numeric>
#include <string>
#include <vector>

#include "flowsynth/binio.hpp"
#include "flowsynth/common.hpp"
#include "flowsynth/model.hpp"
#include "flowsynth/rng.hpp"
#include "flowsynth/tensor.hpp"

namespace flowsynth {

// Synthetic corpus with a known cross-modal coupling. Both modalities are
// linear images of one shared per-frame latent (a token-dependent sinusoid
// with a uniformly random phase per segment), so the designed correlation
// rho between the modality blocks is recoverable from the raw data.
struct ToyCorpusConfig {
    std::size_t vocab_size = 8;
    std::size_t acoustic_dim = 8;
    std::size_t motion_dim = 5;
    double cross_modal_rho = 0.8;
    std::size_t n_utterances = 0;
    std::size_t tokens_min = 4;
    std::size_t tokens_max = 12;
    std::uint64_t seed = 0;
    // Token-mean offset and channel-noise scales. Exposed so the degenerate
    // calibration cases (zero noise, zero offsets) stay expressible.
    double mean_scale = 0.35;
    double noise_std = 0.07;
    std::size_t duration_jitter = 1;

    bool operator==(const ToyCorpusConfig&) const = default;

    void validate() const {
        if (vocab_size < 1) throw ConfigError("toy corpus: vocab_size must be positive");
        if (acoustic_dim < 1 || motion_dim < 1) throw ConfigError("toy corpus: both modality dims must be positive");
        if (!(std::abs(cross_modal_rho) <= 1.0)) throw ConfigError("toy corpus: |rho| must be at most 1");
        if (tokens_min < 1 || tokens_max < tokens_min) throw ConfigError("toy corpus: bad token count range");
        if (noise_std < 0.0 || mean_scale < 0.0) throw ConfigError("toy corpus: scales must be nonnegative");
    }
};

template <typename T>
struct ToyUtterance {
    std::vector<std::size_t> tokens;
    JointFrameSequence<T> frames;
    std::vector<T> latent;  // the shared process, kept for evaluation only
};

namespace detail {

// +1 / -1 character of the bit pattern: parity of popcount(v & bits).
inline double walsh(std::size_t v, std::size_t bits) {
    return (std::popcount(v & bits) & 1u) ? -1.0 : 1.0;
}

inline double dot(const std::vector<double>& a, const std::vector<double>& b) {
    return std::inner_product(a.begin(), a.end(), b.begin(), 0.0);
}

inline void normalize(std::vector<double>& v) {
    const double n = std::sqrt(dot(v, v));
    if (n < 1e-12) {
        std::fill(v.begin(), v.end(), 0.0);
        return;
    }
    for (double& x : v) x /= n;
}

inline std::vector<double> cosine_pattern(std::size_t dim, double step, double phase) {
    std::vector<double> v(dim);
    for (std::size_t j = 0; j < dim; ++j) v[j] = std::cos(step * static_cast<double>(j) + phase) + 0.1;
    normalize(v);
    return v;
}

// Remove the components along previously fixed unit vectors, then normalize.
// Collapses to zero when the dimension is too small to hold another
// independent direction; the offset then simply vanishes.
inline std::vector<double> orthogonalized(std::vector<double> v, const std::vector<std::vector<double>>& against) {
    for (const auto& u : against) {
        const double c = dot(v, u);
        for (std::size_t j = 0; j < v.size(); ++j) v[j] -= c * u[j];
    }
    normalize(v);
    return v;
}

// Fixed channel geometry shared by every utterance of a config: unit loading
// vectors for the latent, plus token-mean offset directions orthogonal to
// them so token identity cannot masquerade as cross-modal coupling.
struct CorpusGeometry {
    std::vector<double> load_a, load_m;        // latent loading per modality
    std::vector<double> off_a1, off_a2;        // acoustic offset directions
    std::vector<double> off_m1, off_m2;        // motion offset directions

    CorpusGeometry(std::size_t da, std::size_t dm) {
        load_a = cosine_pattern(da, 0.9, 0.4);
        load_m = cosine_pattern(dm, 1.7, 1.2);
        off_a1 = orthogonalized(cosine_pattern(da, 1.3, 2.0), {load_a});
        off_a2 = orthogonalized(cosine_pattern(da, 0.7, 1.1), {load_a, off_a1});
        off_m1 = orthogonalized(cosine_pattern(dm, 0.8, 0.5), {load_m});
        off_m2 = orthogonalized(cosine_pattern(dm, 1.9, 2.3), {load_m, off_m1});
    }
};

inline double token_amplitude(std::size_t v, std::size_t vocab) {
    return 0.7 + 0.9 * static_cast<double>(v) / static_cast<double>(std::max<std::size_t>(1, vocab - 1));
}

inline double token_frequency(std::size_t v, std::size_t vocab) {
    // Affine re-indexing decorrelates the frequency order from the amplitude
    // order; the multiplier is picked coprime to the vocab so it permutes.
    std::size_t mult = 1;
    for (std::size_t m : {7u, 5u, 3u, 2u}) {
        if (std::gcd(m, vocab) == 1) {
            mult = m;
            break;
        }
    }
    const std::size_t idx = (v * mult + 3) % vocab;
    // The range keeps every frequency fast enough that even the shortest
    // segments cover most of a period. Slow tokens would let an aligner
    // place segment boundaries at phase-coherent points whose window means
    // are a large fraction of the amplitude, and two models trained on the
    // two modality blocks separately would absorb those means with
    // correlated sign, faking cross-modal structure that is not in the
    // conditional distribution. Keeping below pi avoids aliasing on the
    // integer frame grid.
    return 1.7 + 1.2 * static_cast<double>(idx) / static_cast<double>(std::max<std::size_t>(1, vocab - 1));
}

// Base duration 4 + walsh(v, 5) in {3, 5}. The character 5 is chosen so that
// no product of an acoustic offset character {1, 4} with a motion offset
// character {2, 7} equals it (the products are 3 and 6); duration-weighted
// token averages therefore keep the two offset families exactly orthogonal.
inline std::size_t token_duration(std::size_t v) {
    return static_cast<std::size_t>(4 + static_cast<int>(walsh(v, 5)));
}

}  // namespace detail

// Frames for one utterance given its tokens. Acoustic channels load the
// shared latent z directly; motion channels load rho*z + sqrt(1-rho^2)*z~
// with z~ an independent copy of the process, so the per-frame latent
// correlation between the blocks is exactly rho.
template <typename T>
ToyUtterance<T> generate_utterance(const ToyCorpusConfig& cfg, const std::vector<std::size_t>& tokens, Rng& rng) {
    const detail::CorpusGeometry geom(cfg.acoustic_dim, cfg.motion_dim);
    const double rho = cfg.cross_modal_rho;
    const double rho_c = std::sqrt(std::max(0.0, 1.0 - rho * rho));
    const std::size_t d = cfg.acoustic_dim + cfg.motion_dim;

    ToyUtterance<T> utt;
    utt.tokens = tokens;
    std::vector<T> rows;
    for (std::size_t v : tokens) {
        std::size_t dur = detail::token_duration(v);
        if (cfg.duration_jitter > 0) {
            const std::size_t span = 2 * cfg.duration_jitter + 1;
            const long delta = static_cast<long>(rng.next_below(span)) - static_cast<long>(cfg.duration_jitter);
            const long jittered = static_cast<long>(dur) + delta;
            dur = static_cast<std::size_t>(std::max(1l, jittered));
        }
        const double amp = detail::token_amplitude(v, cfg.vocab_size);
        const double omega = detail::token_frequency(v, cfg.vocab_size);
        const double phase = 2.0 * M_PI * rng.next_double();
        const double phase_ind = 2.0 * M_PI * rng.next_double();
        for (std::size_t f = 0; f < dur; ++f) {
            const double z = amp * std::sin(omega * static_cast<double>(f) + phase);
            const double z_ind = amp * std::sin(omega * static_cast<double>(f) + phase_ind);
            const double mix = rho * z + rho_c * z_ind;
            utt.latent.push_back(static_cast<T>(z));
            for (std::size_t j = 0; j < cfg.acoustic_dim; ++j) {
                const double offset = detail::walsh(v, 1) * geom.off_a1[j] + detail::walsh(v, 4) * geom.off_a2[j];
                const double val =
                    cfg.mean_scale * offset + geom.load_a[j] * z + cfg.noise_std * rng.next_gaussian();
                rows.push_back(static_cast<T>(val));
            }
            for (std::size_t k = 0; k < cfg.motion_dim; ++k) {
                const double offset = detail::walsh(v, 2) * geom.off_m1[k] + detail::walsh(v, 7) * geom.off_m2[k];
                const double val =
                    cfg.mean_scale * offset + geom.load_m[k] * mix + cfg.noise_std * rng.next_gaussian();
                rows.push_back(static_cast<T>(val));
            }
        }
    }
    const std::size_t frames = rows.size() / d;
    utt.frames.acoustic_dim = cfg.acoustic_dim;
    utt.frames.motion_dim = cfg.motion_dim;
    utt.frames.frames = Tensor<T>::from_data({frames, d}, rows);
    utt.frames.mask = full_mask(frames);
    return utt;
}

// Whole corpus; each utterance consumes an independent child stream, so the
// result does not depend on generation order.
template <typename T>
std::vector<ToyUtterance<T>> generate_corpus(const ToyCorpusConfig& cfg, Rng& rng) {
    cfg.validate();
    std::vector<ToyUtterance<T>> out(cfg.n_utterances);
    parallel_for(0, cfg.n_utterances, 1, [&](std::size_t lo, std::size_t hi) {
        for (std::size_t u = lo; u < hi; ++u) {
            Rng child = rng.child(u);
            const std::size_t span = cfg.tokens_max - cfg.tokens_min + 1;
            const std::size_t n_tokens = cfg.tokens_min + child.next_below(span);
            std::vector<std::size_t> tokens(n_tokens);
            for (auto& t : tokens) t = child.next_below(cfg.vocab_size);
            out[u] = generate_utterance<T>(cfg, tokens, child);
        }
    });
    return out;
}

// Corpus file layout (little-endian): magic "MMTC", format version, the three
// size fields needed to interpret the payload, then per utterance the token
// ids, the frame matrix in row-major f32, and the scalar latent track.
inline constexpr std::uint32_t kCorpusFormatVersion = 1;

// The header config only needs coherent dims and vocab, not a generation
// config that could produce the data, so synthesized output (including
// single-modality output with one dim zero) can reuse the format.
template <typename T>
void save_corpus(const std::string& path, const std::vector<ToyUtterance<T>>& corpus,
                 const ToyCorpusConfig& cfg) {
    BinWriter w;
    w.raw("MMTC", 4);
    w.u32(kCorpusFormatVersion);
    w.u32(static_cast<std::uint32_t>(cfg.acoustic_dim));
    w.u32(static_cast<std::uint32_t>(cfg.motion_dim));
    w.u32(static_cast<std::uint32_t>(cfg.vocab_size));
    w.u32(static_cast<std::uint32_t>(corpus.size()));
    for (const auto& utt : corpus) {
        utt.frames.validate();
        if (utt.frames.acoustic_dim != cfg.acoustic_dim || utt.frames.motion_dim != cfg.motion_dim)
            throw ShapeError("save_corpus: utterance dims disagree with corpus config");
        w.u32(static_cast<std::uint32_t>(utt.tokens.size()));
        for (std::size_t tok : utt.tokens) w.u32(static_cast<std::uint32_t>(tok));
        const std::size_t frames = utt.frames.frames.shape()[0];
        if (utt.latent.size() != frames)
            throw ShapeError("save_corpus: latent track length disagrees with frame count");
        w.u32(static_cast<std::uint32_t>(frames));
        for (const T& v : utt.frames.frames.data()) w.f32(static_cast<float>(v));
        for (const T& v : utt.latent) w.f32(static_cast<float>(v));
    }
    w.save(path);
}

// Loads a corpus file. Dimensions come from the header; the caller receives
// them through the returned config so downstream code needs no side channel.
template <typename T>
std::vector<ToyUtterance<T>> load_corpus(const std::string& path, ToyCorpusConfig& cfg_out) {
    BinReader r = BinReader::from_file(path);
    if (r.str_raw(4) != "MMTC")
        throw IoError("'" + path + "' is not a corpus file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kCorpusFormatVersion)
        throw IoError("'" + path + "' has unsupported corpus format version " + std::to_string(version));
    cfg_out.acoustic_dim = r.u32();
    cfg_out.motion_dim = r.u32();
    cfg_out.vocab_size = r.u32();
    const std::uint32_t n_utterances = r.u32();
    const std::size_t d = cfg_out.acoustic_dim + cfg_out.motion_dim;
    std::vector<ToyUtterance<T>> corpus(n_utterances);
    for (auto& utt : corpus) {
        const std::uint32_t n_tokens = r.u32();
        utt.tokens.resize(n_tokens);
        for (auto& tok : utt.tokens) tok = r.u32();
        const std::uint32_t frames = r.u32();
        std::vector<T> rows(static_cast<std::size_t>(frames) * d);
        for (auto& v : rows) v = static_cast<T>(r.f32());
        utt.frames.acoustic_dim = cfg_out.acoustic_dim;
        utt.frames.motion_dim = cfg_out.motion_dim;
        utt.frames.frames = Tensor<T>::from_data({frames, d}, rows);
        utt.frames.mask = full_mask(frames);
        utt.latent.resize(frames);
        for (auto& v : utt.latent) v = r.f32();
    }
    if (!r.at_end())
        throw IoError("'" + path + "' has trailing bytes after the last utterance");
    return corpus;
}

}  // namespace flowsynth
