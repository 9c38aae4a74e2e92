#pragma once

#include <cstdint>
#include <string>
#include <vector>

#include "flowsynth/binio.hpp"
#include "flowsynth/common.hpp"
#include "flowsynth/model.hpp"
#include "flowsynth/train.hpp"

namespace flowsynth {

inline constexpr std::uint32_t kCheckpointFormatVersion = 1;

// A checkpoint holds everything needed to either resume training bitwise
// (parameters, optimizer moments, rng position, update counter) or to build
// a synthesis-ready model from the stored config echo alone. Parameters are
// stored as f32 regardless of the in-memory scalar type.
struct CheckpointData {
    ModelConfig model_cfg;
    TrainConfig train_cfg;
    std::uint64_t update_count = 0;
    std::uint64_t rng_seed = 0;
    std::uint64_t rng_stream = 0;
    std::uint64_t rng_counter = 0;
    double seconds_elapsed = 0.0;
    std::vector<std::string> names;
    std::vector<Shape> shapes;
    std::vector<std::vector<float>> params;
    std::vector<std::vector<float>> moment1;
    std::vector<std::vector<float>> moment2;
};

// The model constructor derives encoder.vocab, encoder.out_dim and
// unet.d_joint from the top-level fields. Configs that never passed through
// the constructor (for example, parsed from a file) carry defaults there, so
// comparisons go through this normal form.
inline ModelConfig normalized_model_config(ModelConfig cfg) {
    cfg.encoder.vocab = cfg.vocab;
    cfg.encoder.out_dim = cfg.d_joint();
    cfg.unet.d_joint = cfg.d_joint();
    return cfg;
}

inline void require_same_model_config(const ModelConfig& expected, const ModelConfig& stored) {
    const ModelConfig a = normalized_model_config(expected);
    const ModelConfig b = normalized_model_config(stored);
    if (a == b) return;
    if (a.vocab != b.vocab)
        throw ConfigError("checkpoint config mismatch: vocab " + std::to_string(b.vocab) + " in file, " +
                          std::to_string(a.vocab) + " requested");
    if (a.acoustic_dim != b.acoustic_dim || a.motion_dim != b.motion_dim)
        throw ConfigError("checkpoint config mismatch: channel dims " + std::to_string(b.acoustic_dim) + "+" +
                          std::to_string(b.motion_dim) + " in file, " + std::to_string(a.acoustic_dim) + "+" +
                          std::to_string(a.motion_dim) + " requested");
    if (a.regime != b.regime)
        throw ConfigError(std::string("checkpoint config mismatch: regime ") + regime_name(b.regime) +
                          " in file, " + regime_name(a.regime) + " requested");
    throw ConfigError("checkpoint config mismatch: architecture fields differ from the file");
}

namespace detail {

inline void write_model_config(BinWriter& w, const ModelConfig& m) {
    w.u64(m.vocab);
    w.u64(m.acoustic_dim);
    w.u64(m.motion_dim);
    w.u32(m.regime == Regime::otcfm ? 0u : 1u);
    const auto& e = m.encoder;
    w.u64(e.vocab);
    w.u64(e.model_dim);
    w.u64(e.num_blocks);
    w.u64(e.num_heads);
    w.u64(e.head_dim);
    w.u64(e.ffn_mult);
    w.u64(e.out_dim);
    w.u64(e.dur_hidden);
    w.u64(e.dur_width);
    const auto& u = m.unet;
    w.u64(u.d_joint);
    auto dims = [&](const std::vector<std::size_t>& v) {
        w.u32(static_cast<std::uint32_t>(v.size()));
        for (std::size_t d : v) w.u64(d);
    };
    dims(u.down_dims);
    dims(u.mid_dims);
    dims(u.up_dims);
    w.u64(u.heads);
    w.u64(u.head_dim);
    w.u64(u.ffn_mult);
    w.u64(u.t_emb_dim);
    w.f64(m.otcfm.sigma_min);
    w.f64(m.sm.beta_0);
    w.f64(m.sm.beta_1);
    w.f64(m.sm.t_floor);
}

inline ModelConfig read_model_config(BinReader& r) {
    ModelConfig m;
    m.vocab = r.u64();
    m.acoustic_dim = r.u64();
    m.motion_dim = r.u64();
    m.regime = r.u32() == 0 ? Regime::otcfm : Regime::score_matching;
    auto& e = m.encoder;
    e.vocab = r.u64();
    e.model_dim = r.u64();
    e.num_blocks = r.u64();
    e.num_heads = r.u64();
    e.head_dim = r.u64();
    e.ffn_mult = r.u64();
    e.out_dim = r.u64();
    e.dur_hidden = r.u64();
    e.dur_width = r.u64();
    auto& u = m.unet;
    u.d_joint = r.u64();
    auto dims = [&]() {
        std::vector<std::size_t> v(r.u32());
        for (auto& d : v) d = r.u64();
        return v;
    };
    u.down_dims = dims();
    u.mid_dims = dims();
    u.up_dims = dims();
    u.heads = r.u64();
    u.head_dim = r.u64();
    u.ffn_mult = r.u64();
    u.t_emb_dim = r.u64();
    m.otcfm.sigma_min = r.f64();
    m.sm.beta_0 = r.f64();
    m.sm.beta_1 = r.f64();
    m.sm.t_floor = r.f64();
    return m;
}

inline void write_train_config(BinWriter& w, const TrainConfig& t) {
    w.u64(t.batch_size);
    w.f64(t.learning_rate);
    w.u64(t.updates);
    w.u32(t.regime == Regime::otcfm ? 0u : 1u);
    w.f64(t.prior_weight);
    w.f64(t.duration_weight);
    w.u64(t.seed);
    w.u64(t.log_interval);
    w.u64(t.rng_stream);
}

inline TrainConfig read_train_config(BinReader& r) {
    TrainConfig t;
    t.batch_size = r.u64();
    t.learning_rate = r.f64();
    t.updates = r.u64();
    t.regime = r.u32() == 0 ? Regime::otcfm : Regime::score_matching;
    t.prior_weight = r.f64();
    t.duration_weight = r.f64();
    t.seed = r.u64();
    t.log_interval = r.u64();
    t.rng_stream = r.u64();
    return t;
}

}  // namespace detail

inline void write_checkpoint_file(const std::string& path, const CheckpointData& ckpt) {
    BinWriter w;
    w.raw("FSCK", 4);
    w.u32(kCheckpointFormatVersion);
    detail::write_model_config(w, ckpt.model_cfg);
    detail::write_train_config(w, ckpt.train_cfg);
    w.u64(ckpt.update_count);
    w.u64(ckpt.rng_seed);
    w.u64(ckpt.rng_stream);
    w.u64(ckpt.rng_counter);
    w.f64(ckpt.seconds_elapsed);
    const std::size_t n = ckpt.params.size();
    if (ckpt.names.size() != n || ckpt.shapes.size() != n || ckpt.moment1.size() != n || ckpt.moment2.size() != n)
        throw ValueError("checkpoint: parameter table columns have different lengths");
    w.u32(static_cast<std::uint32_t>(n));
    for (std::size_t i = 0; i < n; ++i) {
        w.str(ckpt.names[i]);
        w.u32(static_cast<std::uint32_t>(ckpt.shapes[i].size()));
        std::size_t numel = 1;
        for (std::size_t d : ckpt.shapes[i]) {
            w.u64(d);
            numel *= d;
        }
        if (ckpt.params[i].size() != numel || ckpt.moment1[i].size() != numel || ckpt.moment2[i].size() != numel)
            throw ValueError("checkpoint: parameter '" + ckpt.names[i] + "' data does not match its shape");
        w.f32_array(ckpt.params[i].data(), numel);
        w.f32_array(ckpt.moment1[i].data(), numel);
        w.f32_array(ckpt.moment2[i].data(), numel);
    }
    w.save(path);
}

inline CheckpointData read_checkpoint_file(const std::string& path) {
    BinReader r = BinReader::from_file(path);
    if (r.remaining() < 8 || r.str_raw(4) != "FSCK")
        throw IoError("'" + path + "' is not a checkpoint file (bad magic)");
    const std::uint32_t version = r.u32();
    if (version != kCheckpointFormatVersion)
        throw IoError("'" + path + "' has unsupported checkpoint format version " + std::to_string(version));
    CheckpointData ckpt;
    ckpt.model_cfg = detail::read_model_config(r);
    ckpt.train_cfg = detail::read_train_config(r);
    ckpt.update_count = r.u64();
    ckpt.rng_seed = r.u64();
    ckpt.rng_stream = r.u64();
    ckpt.rng_counter = r.u64();
    ckpt.seconds_elapsed = r.f64();
    const std::uint32_t n = r.u32();
    ckpt.names.resize(n);
    ckpt.shapes.resize(n);
    ckpt.params.resize(n);
    ckpt.moment1.resize(n);
    ckpt.moment2.resize(n);
    for (std::uint32_t i = 0; i < n; ++i) {
        ckpt.names[i] = r.str();
        Shape shape(r.u32());
        std::size_t numel = 1;
        for (auto& d : shape) {
            d = r.u64();
            numel *= d;
        }
        ckpt.shapes[i] = shape;
        ckpt.params[i].resize(numel);
        ckpt.moment1[i].resize(numel);
        ckpt.moment2[i].resize(numel);
        r.f32_array(ckpt.params[i].data(), numel);
        r.f32_array(ckpt.moment1[i].data(), numel);
        r.f32_array(ckpt.moment2[i].data(), numel);
    }
    if (!r.at_end()) throw IoError("'" + path + "' has trailing bytes after the parameter table");
    return ckpt;
}

// FNV-1a over the serialized normalized config; identifies an architecture
// in result files without embedding the whole config there.
inline std::string config_hash(const ModelConfig& cfg) {
    BinWriter w;
    detail::write_model_config(w, normalized_model_config(cfg));
    std::uint64_t h = 1469598103934665603ull;
    for (unsigned char c : w.buffer()) {
        h ^= c;
        h *= 1099511628211ull;
    }
    char buf[17];
    static const char* hex = "0123456789abcdef";
    for (int i = 15; i >= 0; --i) {
        buf[i] = hex[h & 0xf];
        h >>= 4;
    }
    buf[16] = '\0';
    return std::string(buf);
}

// Captures the full training position of a live trainer.
template <typename T>
CheckpointData snapshot_checkpoint(Trainer<T>& trainer) {
    CheckpointData ckpt;
    ckpt.model_cfg = trainer.model().cfg;
    ckpt.train_cfg = trainer.config();
    ckpt.update_count = trainer.update_count();
    ckpt.rng_seed = trainer.rng().seed();
    ckpt.rng_stream = trainer.rng().stream();
    ckpt.rng_counter = trainer.rng().counter();
    ckpt.seconds_elapsed = trainer.seconds_elapsed();
    auto& params = trainer.params();
    auto& m1 = trainer.optimizer().moment1();
    auto& m2 = trainer.optimizer().moment2();
    for (std::size_t i = 0; i < params.size(); ++i) {
        ckpt.names.push_back(params[i].first);
        ckpt.shapes.push_back(params[i].second.shape());
        const auto& data = params[i].second.data();
        std::vector<float> p(data.size());
        for (std::size_t k = 0; k < data.size(); ++k) p[k] = static_cast<float>(data[k]);
        ckpt.params.push_back(std::move(p));
        std::vector<float> a(m1[i].size()), b(m2[i].size());
        for (std::size_t k = 0; k < a.size(); ++k) a[k] = static_cast<float>(m1[i][k]);
        for (std::size_t k = 0; k < b.size(); ++k) b[k] = static_cast<float>(m2[i][k]);
        ckpt.moment1.push_back(std::move(a));
        ckpt.moment2.push_back(std::move(b));
    }
    return ckpt;
}

namespace detail {

// Copies stored parameter blobs into a registered parameter list, enforcing
// an exact name/shape match in registration order.
template <typename T>
void load_params_into(const CheckpointData& ckpt, ParamList<T>& params) {
    if (params.size() != ckpt.params.size())
        throw ConfigError("checkpoint holds " + std::to_string(ckpt.params.size()) + " parameters, model has " +
                          std::to_string(params.size()));
    for (std::size_t i = 0; i < params.size(); ++i) {
        if (params[i].first != ckpt.names[i])
            throw ConfigError("checkpoint parameter " + std::to_string(i) + " is '" + ckpt.names[i] +
                              "', model expects '" + params[i].first + "'");
        if (params[i].second.shape() != ckpt.shapes[i])
            throw ConfigError("checkpoint parameter '" + ckpt.names[i] + "' has shape " +
                              shape_str(ckpt.shapes[i]) + ", model expects " + shape_str(params[i].second.shape()));
        auto& dst = params[i].second.data();
        const auto& src = ckpt.params[i];
        for (std::size_t k = 0; k < dst.size(); ++k) dst[k] = static_cast<T>(src[k]);
    }
}

}  // namespace detail

// Builds a fresh model from the stored config echo and overwrites every
// parameter with the stored values. The init rng never influences the result.
template <typename T>
Model<T> model_from_checkpoint(const CheckpointData& ckpt) {
    Rng init_rng(0, 0);
    Model<T> model(init_rng, ckpt.model_cfg);
    ParamList<T> params;
    model.register_params(params, "model");
    detail::load_params_into(ckpt, params);
    return model;
}

// Restores a trainer to the exact saved position. The trainer must have been
// constructed over the same model architecture and the same training config
// (the planned update count may differ); both are checked, never assumed.
template <typename T>
void restore_trainer(const CheckpointData& ckpt, Trainer<T>& trainer) {
    require_same_model_config(trainer.model().cfg, ckpt.model_cfg);
    TrainConfig mine = trainer.config();
    TrainConfig theirs = ckpt.train_cfg;
    mine.updates = theirs.updates = 0;
    if (!(mine == theirs))
        throw ConfigError("resume: training configuration differs from the checkpoint");
    if (trainer.rng().seed() != ckpt.rng_seed || trainer.rng().stream() != ckpt.rng_stream)
        throw ConfigError("resume: rng identity differs from the checkpoint");
    detail::load_params_into(ckpt, trainer.params());
    auto& m1 = trainer.optimizer().moment1();
    auto& m2 = trainer.optimizer().moment2();
    if (m1.size() != ckpt.moment1.size())
        throw ConfigError("resume: optimizer state size differs from the checkpoint");
    for (std::size_t i = 0; i < m1.size(); ++i) {
        if (m1[i].size() != ckpt.moment1[i].size() || m2[i].size() != ckpt.moment2[i].size())
            throw ConfigError("resume: optimizer moment shapes differ from the checkpoint");
        for (std::size_t k = 0; k < m1[i].size(); ++k) {
            m1[i][k] = static_cast<T>(ckpt.moment1[i][k]);
            m2[i][k] = static_cast<T>(ckpt.moment2[i][k]);
        }
    }
    trainer.restore_progress(ckpt.update_count, ckpt.rng_counter, ckpt.seconds_elapsed);
}

}  // namespace flowsynth
