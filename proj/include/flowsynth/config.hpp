#pragma once

#include <charconv>
#include <cstdint>
#include <fstream>
#include <sstream>
#include <string>
#include <vector>

#include "flowsynth/common.hpp"
#include "flowsynth/jsonio.hpp"
#include "flowsynth/model.hpp"
#include "flowsynth/sampler.hpp"
#include "flowsynth/toydata.hpp"
#include "flowsynth/train.hpp"

namespace flowsynth {

// Everything a tool run can be configured with, in one bundle. Config files
// are flat `section.field = value` lines whose keys mirror the struct members
// one to one; any key outside that set is a hard error, so a typo cannot
// silently fall back to a default.
struct RunConfig {
    ToyCorpusConfig corpus;
    ModelConfig model;
    TrainConfig train;
    SamplerConfig sampler;
};

namespace detail {

inline std::string trim(const std::string& s) {
    std::size_t a = s.find_first_not_of(" \t\r");
    if (a == std::string::npos) return "";
    std::size_t b = s.find_last_not_of(" \t\r");
    return s.substr(a, b - a + 1);
}

inline std::size_t config_size(const std::string& key, const std::string& value) {
    std::size_t out = 0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        throw ConfigError("config: key '" + key + "' needs a nonnegative integer, got '" + value + "'");
    return out;
}

inline std::uint64_t config_u64(const std::string& key, const std::string& value) {
    std::uint64_t out = 0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        throw ConfigError("config: key '" + key + "' needs a nonnegative integer, got '" + value + "'");
    return out;
}

inline double config_double(const std::string& key, const std::string& value) {
    // GCC 11 ships from_chars for floating point, so parsing matches the
    // canonical to_chars output used when serializing.
    double out = 0.0;
    auto res = std::from_chars(value.data(), value.data() + value.size(), out);
    if (res.ec != std::errc{} || res.ptr != value.data() + value.size())
        throw ConfigError("config: key '" + key + "' needs a number, got '" + value + "'");
    return out;
}

inline std::vector<std::size_t> config_dims(const std::string& key, const std::string& value) {
    std::vector<std::size_t> out;
    std::stringstream ss(value);
    std::string part;
    while (std::getline(ss, part, ',')) {
        part = trim(part);
        if (part.empty()) throw ConfigError("config: key '" + key + "' has an empty list entry");
        out.push_back(config_size(key, part));
    }
    if (out.empty()) throw ConfigError("config: key '" + key + "' needs a comma-separated list");
    return out;
}

inline std::string dims_text(const std::vector<std::size_t>& dims) {
    std::string out;
    for (std::size_t i = 0; i < dims.size(); ++i) {
        if (i) out += ",";
        out += std::to_string(dims[i]);
    }
    return out;
}

}  // namespace detail

// Applies one key. Every recognized key is listed here explicitly; this is
// the authoritative mapping between file keys and struct fields.
inline void apply_config_key(RunConfig& cfg, const std::string& key, const std::string& value) {
    using detail::config_dims;
    using detail::config_double;
    using detail::config_size;
    using detail::config_u64;

    auto& c = cfg.corpus;
    auto& m = cfg.model;
    auto& t = cfg.train;
    auto& s = cfg.sampler;

    if (key == "corpus.vocab_size") c.vocab_size = config_size(key, value);
    else if (key == "corpus.acoustic_dim") c.acoustic_dim = config_size(key, value);
    else if (key == "corpus.motion_dim") c.motion_dim = config_size(key, value);
    else if (key == "corpus.cross_modal_rho") c.cross_modal_rho = config_double(key, value);
    else if (key == "corpus.n_utterances") c.n_utterances = config_size(key, value);
    else if (key == "corpus.tokens_min") c.tokens_min = config_size(key, value);
    else if (key == "corpus.tokens_max") c.tokens_max = config_size(key, value);
    else if (key == "corpus.seed") c.seed = config_u64(key, value);
    else if (key == "corpus.mean_scale") c.mean_scale = config_double(key, value);
    else if (key == "corpus.noise_std") c.noise_std = config_double(key, value);
    else if (key == "corpus.duration_jitter") c.duration_jitter = config_size(key, value);
    else if (key == "model.vocab") m.vocab = config_size(key, value);
    else if (key == "model.acoustic_dim") m.acoustic_dim = config_size(key, value);
    else if (key == "model.motion_dim") m.motion_dim = config_size(key, value);
    else if (key == "model.regime") m.regime = regime_from_name(value);
    else if (key == "model.encoder.model_dim") m.encoder.model_dim = config_size(key, value);
    else if (key == "model.encoder.num_blocks") m.encoder.num_blocks = config_size(key, value);
    else if (key == "model.encoder.num_heads") m.encoder.num_heads = config_size(key, value);
    else if (key == "model.encoder.head_dim") m.encoder.head_dim = config_size(key, value);
    else if (key == "model.encoder.ffn_mult") m.encoder.ffn_mult = config_size(key, value);
    else if (key == "model.encoder.dur_hidden") m.encoder.dur_hidden = config_size(key, value);
    else if (key == "model.encoder.dur_width") m.encoder.dur_width = config_size(key, value);
    else if (key == "model.unet.down_dims") m.unet.down_dims = config_dims(key, value);
    else if (key == "model.unet.mid_dims") m.unet.mid_dims = config_dims(key, value);
    else if (key == "model.unet.up_dims") m.unet.up_dims = config_dims(key, value);
    else if (key == "model.unet.heads") m.unet.heads = config_size(key, value);
    else if (key == "model.unet.head_dim") m.unet.head_dim = config_size(key, value);
    else if (key == "model.unet.ffn_mult") m.unet.ffn_mult = config_size(key, value);
    else if (key == "model.unet.t_emb_dim") m.unet.t_emb_dim = config_size(key, value);
    else if (key == "model.otcfm.sigma_min") m.otcfm.sigma_min = config_double(key, value);
    else if (key == "model.sm.beta_0") m.sm.beta_0 = config_double(key, value);
    else if (key == "model.sm.beta_1") m.sm.beta_1 = config_double(key, value);
    else if (key == "model.sm.t_floor") m.sm.t_floor = config_double(key, value);
    else if (key == "train.batch_size") t.batch_size = config_size(key, value);
    else if (key == "train.learning_rate") t.learning_rate = config_double(key, value);
    else if (key == "train.updates") t.updates = config_size(key, value);
    else if (key == "train.prior_weight") t.prior_weight = config_double(key, value);
    else if (key == "train.duration_weight") t.duration_weight = config_double(key, value);
    else if (key == "train.seed") t.seed = config_u64(key, value);
    else if (key == "train.log_interval") t.log_interval = config_size(key, value);
    else if (key == "sampler.n_steps") s.n_steps = config_size(key, value);
    else if (key == "sampler.temperature") s.temperature = config_double(key, value);
    else throw ConfigError("config: unknown key '" + key + "'");
}

// Parses config text. Lines are `key = value`; '#' starts a comment; blank
// lines are skipped. The training regime is a model property, so there is no
// separate train.regime key: the parsed model regime is copied into the
// train config afterwards and the two can never disagree via a file.
inline RunConfig parse_config_text(const std::string& text, RunConfig base = {}) {
    std::stringstream ss(text);
    std::string line;
    std::size_t lineno = 0;
    while (std::getline(ss, line)) {
        ++lineno;
        const std::size_t hash = line.find('#');
        if (hash != std::string::npos) line = line.substr(0, hash);
        line = detail::trim(line);
        if (line.empty()) continue;
        const std::size_t eq = line.find('=');
        if (eq == std::string::npos)
            throw ConfigError("config line " + std::to_string(lineno) + ": expected 'key = value', got '" + line + "'");
        const std::string key = detail::trim(line.substr(0, eq));
        const std::string value = detail::trim(line.substr(eq + 1));
        if (key.empty() || value.empty())
            throw ConfigError("config line " + std::to_string(lineno) + ": empty key or value");
        apply_config_key(base, key, value);
    }
    base.train.regime = base.model.regime;
    return base;
}

inline RunConfig load_config_file(const std::string& path, RunConfig base = {}) {
    std::ifstream in(path);
    if (!in) throw IoError("cannot open config file '" + path + "'");
    std::stringstream ss;
    ss << in.rdbuf();
    return parse_config_text(ss.str(), std::move(base));
}

// Emits every key in a fixed order with the bundle's current values. Parsing
// the output reproduces the bundle exactly.
inline std::string serialize_config(const RunConfig& cfg) {
    std::string out;
    auto put = [&](const std::string& key, const std::string& value) { out += key + " = " + value + "\n"; };
    auto num = [](double v) { return Json::number_text(v); };

    const auto& c = cfg.corpus;
    put("corpus.vocab_size", std::to_string(c.vocab_size));
    put("corpus.acoustic_dim", std::to_string(c.acoustic_dim));
    put("corpus.motion_dim", std::to_string(c.motion_dim));
    put("corpus.cross_modal_rho", num(c.cross_modal_rho));
    put("corpus.n_utterances", std::to_string(c.n_utterances));
    put("corpus.tokens_min", std::to_string(c.tokens_min));
    put("corpus.tokens_max", std::to_string(c.tokens_max));
    put("corpus.seed", std::to_string(c.seed));
    put("corpus.mean_scale", num(c.mean_scale));
    put("corpus.noise_std", num(c.noise_std));
    put("corpus.duration_jitter", std::to_string(c.duration_jitter));

    const auto& m = cfg.model;
    put("model.vocab", std::to_string(m.vocab));
    put("model.acoustic_dim", std::to_string(m.acoustic_dim));
    put("model.motion_dim", std::to_string(m.motion_dim));
    put("model.regime", regime_name(m.regime));
    put("model.encoder.model_dim", std::to_string(m.encoder.model_dim));
    put("model.encoder.num_blocks", std::to_string(m.encoder.num_blocks));
    put("model.encoder.num_heads", std::to_string(m.encoder.num_heads));
    put("model.encoder.head_dim", std::to_string(m.encoder.head_dim));
    put("model.encoder.ffn_mult", std::to_string(m.encoder.ffn_mult));
    put("model.encoder.dur_hidden", std::to_string(m.encoder.dur_hidden));
    put("model.encoder.dur_width", std::to_string(m.encoder.dur_width));
    put("model.unet.down_dims", detail::dims_text(m.unet.down_dims));
    put("model.unet.mid_dims", detail::dims_text(m.unet.mid_dims));
    put("model.unet.up_dims", detail::dims_text(m.unet.up_dims));
    put("model.unet.heads", std::to_string(m.unet.heads));
    put("model.unet.head_dim", std::to_string(m.unet.head_dim));
    put("model.unet.ffn_mult", std::to_string(m.unet.ffn_mult));
    put("model.unet.t_emb_dim", std::to_string(m.unet.t_emb_dim));
    put("model.otcfm.sigma_min", num(m.otcfm.sigma_min));
    put("model.sm.beta_0", num(m.sm.beta_0));
    put("model.sm.beta_1", num(m.sm.beta_1));
    put("model.sm.t_floor", num(m.sm.t_floor));

    const auto& t = cfg.train;
    put("train.batch_size", std::to_string(t.batch_size));
    put("train.learning_rate", num(t.learning_rate));
    put("train.updates", std::to_string(t.updates));
    put("train.prior_weight", num(t.prior_weight));
    put("train.duration_weight", num(t.duration_weight));
    put("train.seed", std::to_string(t.seed));
    put("train.log_interval", std::to_string(t.log_interval));

    const auto& s = cfg.sampler;
    put("sampler.n_steps", std::to_string(s.n_steps));
    put("sampler.temperature", num(s.temperature));
    return out;
}

}  // namespace flowsynth
