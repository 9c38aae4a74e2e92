// Command line front end: data generation, training, synthesis and
// evaluation over the corpus and checkpoint file formats.

#include <charconv>
#include <cstdio>
#include <iostream>
#include <memory>
#include <sstream>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "flowsynth/checkpoint.hpp"
#include "flowsynth/config.hpp"
#include "flowsynth/jsonio.hpp"
#include "flowsynth/marginal.hpp"
#include "flowsynth/metrics.hpp"
#include "flowsynth/model.hpp"
#include "flowsynth/sampler.hpp"
#include "flowsynth/toydata.hpp"
#include "flowsynth/train.hpp"

using namespace flowsynth;

namespace {

// Exit codes: 0 success, 2 configuration or usage problems (including
// unreadable inputs), 3 runtime numerical failures.
constexpr int kExitUsage = 2;
constexpr int kExitRuntime = 3;

// Dedicated rng streams per tool entry point, so the same seed never feeds
// identical draws into two different pipelines.
constexpr std::uint64_t kStreamGenerate = 10;
constexpr std::uint64_t kStreamSynth = 200;
constexpr std::uint64_t kStreamEvalSynth = 300;
constexpr std::uint64_t kStreamEvalEnergy = 301;
constexpr std::uint64_t kStreamEvalRtf = 302;

std::vector<std::size_t> parse_token_list(const std::string& text) {
    std::vector<std::size_t> tokens;
    std::stringstream ss(text);
    std::string part;
    while (ss >> part) {
        std::size_t value = 0;
        auto res = std::from_chars(part.data(), part.data() + part.size(), value);
        if (res.ec != std::errc{} || res.ptr != part.data() + part.size())
            throw ConfigError("token list: '" + part + "' is not a nonnegative integer");
        tokens.push_back(value);
    }
    if (tokens.empty()) throw ConfigError("token list is empty");
    return tokens;
}

std::vector<std::size_t> parse_steps_list(const std::string& text) {
    std::vector<std::size_t> steps;
    std::stringstream ss(text);
    std::string part;
    while (std::getline(ss, part, ',')) {
        std::size_t value = 0;
        auto res = std::from_chars(part.data(), part.data() + part.size(), value);
        if (res.ec != std::errc{} || res.ptr != part.data() + part.size() || value == 0)
            throw ConfigError("steps list: '" + part + "' is not a positive integer");
        steps.push_back(value);
    }
    if (steps.empty()) throw ConfigError("steps list is empty");
    return steps;
}

void require_tokens_in_vocab(const std::vector<std::size_t>& tokens, std::size_t vocab) {
    for (std::size_t t : tokens)
        if (t >= vocab)
            throw ConfigError("token " + std::to_string(t) + " is outside the model vocabulary of " +
                              std::to_string(vocab));
}

// ---------------------------------------------------------------- generate

struct GenerateOpts {
    std::string config_path;
    std::string out_path;
    std::int64_t seed = -1;  // negative means "use the config file's seed"
};

int cmd_generate(const GenerateOpts& opts) {
    RunConfig rc = load_config_file(opts.config_path);
    if (opts.seed >= 0) rc.corpus.seed = static_cast<std::uint64_t>(opts.seed);
    rc.corpus.validate();
    Rng rng(rc.corpus.seed, kStreamGenerate);
    auto corpus = generate_corpus<float>(rc.corpus, rng);
    save_corpus(opts.out_path, corpus, rc.corpus);
    std::size_t frames = 0;
    for (const auto& utt : corpus) frames += utt.frames.frames.shape()[0];
    std::cout << "wrote " << corpus.size() << " utterances (" << frames << " frames, "
              << rc.corpus.acoustic_dim << "+" << rc.corpus.motion_dim << " channels, seed "
              << rc.corpus.seed << ") to " << opts.out_path << "\n";
    return 0;
}

// ------------------------------------------------------------------- train

struct TrainOpts {
    std::string data_path;
    std::string config_path;
    std::string out_path;
    std::string resume_path;
    std::string metrics_path;
    std::string regime;
    std::string modality = "joint";
    std::int64_t updates = -1;  // negative means "use the configured count"
};

// Builds the model for the requested modality. The single-modality models
// are constructed from the same rng sequence as the library's baseline-pair
// helper (acoustic first, then motion), so a model trained through either
// path has identical initial parameters.
Model<float> build_fresh_model(const ModelConfig& cfg, const std::string& modality, std::uint64_t seed) {
    if (modality == "joint") {
        Rng build(seed, 0);
        return Model<float>(build, cfg);
    }
    Rng build(seed, 100);
    Model<float> acoustic(build, single_modality_config(cfg, true));
    Model<float> motion(build, single_modality_config(cfg, false));
    return modality == "acoustic" ? std::move(acoustic) : std::move(motion);
}

int cmd_train(const TrainOpts& opts) {
    std::string modality = opts.modality;
    if (modality != "joint" && modality != "acoustic" && modality != "motion")
        throw ConfigError("unknown modality '" + modality + "' (valid: joint, acoustic, motion)");

    ToyCorpusConfig data_cfg;
    auto raw_data = load_corpus<float>(opts.data_path, data_cfg);
    if (raw_data.empty()) throw ConfigError("training data '" + opts.data_path + "' holds no utterances");

    ModelConfig model_cfg;
    ModelConfig joint_cfg;
    TrainConfig train_cfg;
    CheckpointData ckpt;
    const bool resuming = !opts.resume_path.empty();
    if (resuming) {
        ckpt = read_checkpoint_file(opts.resume_path);
        model_cfg = ckpt.model_cfg;
        train_cfg = ckpt.train_cfg;
        if (!opts.config_path.empty()) {
            // An explicit config next to --resume is only a cross-check.
            RunConfig rc = load_config_file(opts.config_path);
            if (rc.model.vocab == 0) rc.model.vocab = data_cfg.vocab_size;
            require_same_model_config(rc.model, model_cfg);
            TrainConfig a = rc.train, b = train_cfg;
            a.updates = b.updates = 0;
            a.rng_stream = b.rng_stream;  // the stream is a modality property, not a file key
            if (!(a == b)) throw ConfigError("resume: config file disagrees with the checkpoint's training config");
        }
        if (!opts.regime.empty() && regime_from_name(opts.regime) != model_cfg.regime)
            throw ConfigError(std::string("resume: checkpoint was trained with regime ") +
                              regime_name(model_cfg.regime) + ", cannot switch");
        // The checkpoint knows which channel block it was trained on.
        const std::string stored_modality =
            model_cfg.motion_dim == 0 ? "acoustic" : (model_cfg.acoustic_dim == 0 ? "motion" : "joint");
        if (opts.modality != "joint" && opts.modality != stored_modality)
            throw ConfigError("resume: checkpoint holds a " + stored_modality + " model, not " + opts.modality);
        modality = stored_modality;
    } else {
        if (opts.config_path.empty()) throw ConfigError("train: --config is required unless resuming");
        RunConfig rc = load_config_file(opts.config_path);
        model_cfg = rc.model;
        train_cfg = rc.train;
        if (model_cfg.vocab == 0) model_cfg.vocab = data_cfg.vocab_size;
        if (!opts.regime.empty()) {
            model_cfg.regime = regime_from_name(opts.regime);
            train_cfg.regime = model_cfg.regime;
        }
        joint_cfg = model_cfg;  // the builder derives modality slices from the joint shape
        if (modality == "acoustic") {
            model_cfg = single_modality_config(model_cfg, true);
            train_cfg.rng_stream = 2;
        } else if (modality == "motion") {
            model_cfg = single_modality_config(model_cfg, false);
            train_cfg.rng_stream = 3;
        }
    }
    if (opts.updates >= 0) train_cfg.updates = static_cast<std::size_t>(opts.updates);

    // Slice the data to the model's channels and confirm the dims line up.
    std::vector<ToyUtterance<float>> dataset;
    if (modality == "acoustic") dataset = modality_slice(raw_data, true);
    else if (modality == "motion") dataset = modality_slice(raw_data, false);
    else dataset = std::move(raw_data);
    const auto& probe = dataset.front().frames;
    if (probe.acoustic_dim != model_cfg.acoustic_dim || probe.motion_dim != model_cfg.motion_dim)
        throw ConfigError("data has " + std::to_string(probe.acoustic_dim) + "+" + std::to_string(probe.motion_dim) +
                          " channels, model expects " + std::to_string(model_cfg.acoustic_dim) + "+" +
                          std::to_string(model_cfg.motion_dim));
    if (model_cfg.vocab < data_cfg.vocab_size)
        throw ConfigError("data vocabulary " + std::to_string(data_cfg.vocab_size) +
                          " exceeds model vocabulary " + std::to_string(model_cfg.vocab));

    Model<float> model = resuming ? model_from_checkpoint<float>(ckpt)
                                  : build_fresh_model(joint_cfg, modality, train_cfg.seed);
    Trainer<float> trainer(model, train_cfg);
    if (resuming) restore_trainer(ckpt, trainer);

    std::unique_ptr<JsonLinesWriter> metrics;
    if (!opts.metrics_path.empty())
        metrics = std::make_unique<JsonLinesWriter>(opts.metrics_path, resuming);
    TrainSink sink = [&](const TrainRecord& rec) {
        std::printf("update %zu/%zu  loss %.6f  (regime %.6f  prior %.6f  dur %.6f)  %.1fs\n", rec.update,
                    train_cfg.updates, rec.loss_total, rec.loss_cfm_or_sm, rec.loss_prior, rec.loss_dur,
                    rec.seconds_elapsed);
        if (metrics) {
            Json line = Json::object();
            line.set("update", Json(static_cast<std::uint64_t>(rec.update)));
            line.set("loss_total", Json(rec.loss_total));
            line.set("loss_cfm_or_sm", Json(rec.loss_cfm_or_sm));
            line.set("loss_prior", Json(rec.loss_prior));
            line.set("loss_dur", Json(rec.loss_dur));
            line.set("seconds_elapsed", Json(rec.seconds_elapsed));
            metrics->write(line);
        }
    };

    const std::size_t done = trainer.update_count();
    if (train_cfg.updates > done) {
        trainer.run(dataset, train_cfg.updates - done, sink);
    } else {
        std::cout << "checkpoint already has " << done << " updates, target is " << train_cfg.updates
                  << "; nothing to train\n";
    }
    write_checkpoint_file(opts.out_path, snapshot_checkpoint(trainer));
    std::cout << "saved checkpoint to " << opts.out_path << " (" << model.param_count() << " parameters, "
              << trainer.update_count() << " updates, regime " << regime_name(model_cfg.regime) << ")\n";
    return 0;
}

// ------------------------------------------------------------------- synth

struct SynthOpts {
    std::string ckpt_path;
    std::string tokens_text;
    std::string out_path;
    std::size_t n_steps = 50;
    double temperature = 1.0;
    std::uint64_t seed = 0;
};

int cmd_synth(const SynthOpts& opts) {
    const std::vector<std::size_t> tokens = parse_token_list(opts.tokens_text);
    CheckpointData ckpt = read_checkpoint_file(opts.ckpt_path);
    Model<float> model = model_from_checkpoint<float>(ckpt);
    require_tokens_in_vocab(tokens, model.cfg.vocab);

    SamplerConfig scfg;
    scfg.n_steps = opts.n_steps;
    scfg.temperature = opts.temperature;
    scfg.validate();

    Rng rng(opts.seed, kStreamSynth);
    SynthesisResult<float> result = synthesize(tokens, model, scfg, rng);
    const std::size_t frames = result.sequence.frames.shape()[0];

    ToyUtterance<float> utt;
    utt.tokens = tokens;
    utt.frames = result.sequence;
    utt.latent.assign(frames, 0.0f);  // synthesized data has no reference latent
    ToyCorpusConfig header;
    header.vocab_size = model.cfg.vocab;
    header.acoustic_dim = model.cfg.acoustic_dim;
    header.motion_dim = model.cfg.motion_dim;
    header.seed = opts.seed;
    save_corpus(opts.out_path, std::vector<ToyUtterance<float>>{utt}, header);

    const double audio_seconds = static_cast<double>(frames) / result.sequence.frame_rate;
    const double total_seconds = result.encoder_seconds + result.solver_seconds;
    Json side = Json::object();
    Json token_arr = Json::array();
    for (std::size_t t : tokens) token_arr.push_back(Json(static_cast<std::uint64_t>(t)));
    side.set("tokens", std::move(token_arr));
    Json dur_arr = Json::array();
    for (std::size_t d : result.durations) dur_arr.push_back(Json(static_cast<std::uint64_t>(d)));
    side.set("durations", std::move(dur_arr));
    side.set("n_frames", Json(static_cast<std::uint64_t>(frames)));
    side.set("acoustic_dim", Json(static_cast<std::uint64_t>(model.cfg.acoustic_dim)));
    side.set("motion_dim", Json(static_cast<std::uint64_t>(model.cfg.motion_dim)));
    side.set("regime", Json(regime_name(model.cfg.regime)));
    side.set("n_steps", Json(static_cast<std::uint64_t>(scfg.n_steps)));
    side.set("temperature", Json(scfg.temperature));
    side.set("seed", Json(opts.seed));
    side.set("encoder_seconds", Json(result.encoder_seconds));
    side.set("solver_seconds", Json(result.solver_seconds));
    side.set("total_seconds", Json(total_seconds));
    side.set("audio_seconds", Json(audio_seconds));
    side.set("rtf", Json(total_seconds / audio_seconds));
    side.set("config_hash", Json(config_hash(model.cfg)));
    write_text_file(opts.out_path + ".json", side.dump() + "\n");

    std::cout << "synthesized " << frames << " frames from " << tokens.size() << " tokens in " << total_seconds
              << "s (" << opts.out_path << ", sidecar " << opts.out_path << ".json)\n";
    return 0;
}

// -------------------------------------------------------------------- eval

struct EvalOpts {
    std::string metric;
    std::string data_path;
    std::string ckpt_path;
    std::vector<std::string> marginal_paths;
    std::string out_path;
    std::uint64_t seed = 0;
    std::size_t n_synth = 0;  // 0 means the per-metric default
    std::size_t n_steps = 50;
    std::string rtf_steps = "10,50,100";
    std::size_t rtf_repeats = 3;
    std::size_t max_frames = 10000;
};

MarginalBaseline<float> load_marginal_pair(const std::vector<std::string>& paths) {
    MarginalBaseline<float> pair;
    pair.acoustic = model_from_checkpoint<float>(read_checkpoint_file(paths[0]));
    pair.motion = model_from_checkpoint<float>(read_checkpoint_file(paths[1]));
    if (pair.acoustic.cfg.motion_dim != 0)
        throw ConfigError("'" + paths[0] + "' is not an acoustic-only checkpoint (--marginal-ckpts takes acoustic then motion)");
    if (pair.motion.cfg.acoustic_dim != 0)
        throw ConfigError("'" + paths[1] + "' is not a motion-only checkpoint (--marginal-ckpts takes acoustic then motion)");
    if (pair.acoustic.cfg.vocab != pair.motion.cfg.vocab)
        throw ConfigError("marginal checkpoints disagree on vocabulary size");
    return pair;
}

int cmd_eval(const EvalOpts& opts) {
    if (opts.metric != "xmodal" && opts.metric != "energy" && opts.metric != "rtf")
        throw ConfigError("unknown metric '" + opts.metric + "' (valid: xmodal, energy, rtf)");
    if (!opts.marginal_paths.empty() && opts.marginal_paths.size() != 2)
        throw ConfigError("--marginal-ckpts takes exactly two paths: acoustic then motion");
    const bool marginal = !opts.marginal_paths.empty();
    if (marginal && !opts.ckpt_path.empty())
        throw ConfigError("give either --ckpt or --marginal-ckpts, not both");
    if (!marginal && opts.ckpt_path.empty())
        throw ConfigError("eval needs --ckpt (or --marginal-ckpts for the factorized baseline)");
    if (marginal && opts.metric == "rtf")
        throw ConfigError("the rtf metric needs a single joint checkpoint");

    ToyCorpusConfig data_cfg;
    auto data = load_corpus<float>(opts.data_path, data_cfg);
    if (data.empty()) throw ConfigError("eval data '" + opts.data_path + "' holds no utterances");

    Model<float> model;
    MarginalBaseline<float> pair;
    std::string hash;
    if (marginal) {
        pair = load_marginal_pair(opts.marginal_paths);
        hash = config_hash(pair.acoustic.cfg) + "+" + config_hash(pair.motion.cfg);
    } else {
        model = model_from_checkpoint<float>(read_checkpoint_file(opts.ckpt_path));
        hash = config_hash(model.cfg);
    }
    const std::size_t vocab = marginal ? pair.acoustic.cfg.vocab : model.cfg.vocab;

    SamplerConfig scfg;
    scfg.n_steps = opts.n_steps;
    scfg.validate();

    Json out = Json::object();
    out.set("metric", Json(opts.metric));
    out.set("seed", Json(opts.seed));
    out.set("config_hash", Json(hash));
    out.set("source", Json(marginal ? "marginal" : "joint"));

    // Synthesizes one sequence per kept data utterance, reusing the data's
    // token sequences so the synthesized set matches the corpus token
    // distribution.
    auto synthesize_set = [&](std::size_t count) {
        std::vector<JointFrameSequence<float>> seqs;
        seqs.reserve(count);
        Rng base(opts.seed, kStreamEvalSynth);
        for (std::size_t i = 0; i < count; ++i) {
            const auto& tokens = data[i].tokens;
            require_tokens_in_vocab(tokens, vocab);
            Rng rng = base.child(i);
            seqs.push_back(marginal ? marginal_synthesize(tokens, pair, scfg, rng).sequence
                                    : synthesize(tokens, model, scfg, rng).sequence);
        }
        return seqs;
    };

    if (opts.metric == "xmodal") {
        const std::size_t count = std::min(opts.n_synth ? opts.n_synth : 200, data.size());
        auto seqs = synthesize_set(count);
        const double value = cross_modal_dependence(seqs);
        out.set("value", Json(value));
        out.set("sample_count", Json(static_cast<std::uint64_t>(count)));
        out.set("n_steps", Json(static_cast<std::uint64_t>(scfg.n_steps)));
    } else if (opts.metric == "energy") {
        const std::size_t count = std::min(opts.n_synth ? opts.n_synth : 200, data.size());
        auto seqs = synthesize_set(count);
        std::vector<JointFrameSequence<float>> reference;
        reference.reserve(data.size());
        for (const auto& utt : data) reference.push_back(utt.frames);
        Rng rng(opts.seed, kStreamEvalEnergy);
        const double value = energy_distance(seqs, reference, rng, opts.max_frames);
        out.set("value", Json(value));
        out.set("sample_count", Json(static_cast<std::uint64_t>(count)));
        out.set("reference_count", Json(static_cast<std::uint64_t>(reference.size())));
        out.set("n_steps", Json(static_cast<std::uint64_t>(scfg.n_steps)));
        out.set("max_frames", Json(static_cast<std::uint64_t>(opts.max_frames)));
    } else {
        const std::size_t count = std::min(opts.n_synth ? opts.n_synth : 8, data.size());
        std::vector<std::vector<std::size_t>> token_seqs;
        for (std::size_t i = 0; i < count; ++i) {
            require_tokens_in_vocab(data[i].tokens, vocab);
            token_seqs.push_back(data[i].tokens);
        }
        std::vector<SamplerConfig> cfgs;
        for (std::size_t steps : parse_steps_list(opts.rtf_steps)) {
            SamplerConfig c;
            c.n_steps = steps;
            cfgs.push_back(c);
        }
        Rng rng(opts.seed, kStreamEvalRtf);
        auto entries = benchmark_rtf(model, cfgs, token_seqs, rng, 80.0, opts.rtf_repeats);
        Json arr = Json::array();
        for (const auto& e : entries) {
            Json row = Json::object();
            row.set("n_steps", Json(static_cast<std::uint64_t>(e.n_steps)));
            row.set("rtf", Json(e.rtf));
            row.set("solver_seconds", Json(e.solver_seconds));
            row.set("encoder_seconds", Json(e.encoder_seconds));
            row.set("audio_seconds", Json(e.audio_seconds));
            row.set("frames", Json(static_cast<std::uint64_t>(e.frames)));
            arr.push_back(std::move(row));
        }
        // The headline value is the rtf at the last configured step count.
        out.set("value", Json(entries.back().rtf));
        out.set("sample_count", Json(static_cast<std::uint64_t>(count)));
        out.set("repeats", Json(static_cast<std::uint64_t>(opts.rtf_repeats)));
        out.set("entries", std::move(arr));
    }

    write_text_file(opts.out_path, out.dump() + "\n");
    std::cout << opts.metric << " written to " << opts.out_path << "\n";
    return 0;
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"joint acoustic+motion sequence synthesis"};
    app.require_subcommand(1);

    GenerateOpts gen;
    auto* cmd_gen = app.add_subcommand("generate-data", "generate a synthetic corpus file");
    cmd_gen->add_option("--config", gen.config_path, "config file (corpus.* keys)")->required();
    cmd_gen->add_option("--out", gen.out_path, "output corpus file")->required();
    cmd_gen->add_option("--seed", gen.seed, "override corpus.seed");

    TrainOpts tr;
    auto* cmd_tr = app.add_subcommand("train", "train a model on a corpus file");
    cmd_tr->add_option("--data", tr.data_path, "corpus file")->required();
    cmd_tr->add_option("--config", tr.config_path, "config file (model.* and train.* keys)");
    cmd_tr->add_option("--out", tr.out_path, "output checkpoint")->required();
    cmd_tr->add_option("--resume", tr.resume_path, "checkpoint to continue from");
    cmd_tr->add_option("--metrics", tr.metrics_path, "JSON-lines metrics log");
    cmd_tr->add_option("--regime", tr.regime, "training regime: otcfm or sm");
    cmd_tr->add_option("--modality", tr.modality, "joint (default), acoustic or motion");
    cmd_tr->add_option("--updates", tr.updates, "total update count target");

    SynthOpts sy;
    auto* cmd_sy = app.add_subcommand("synth", "synthesize one utterance from tokens");
    cmd_sy->add_option("--ckpt", sy.ckpt_path, "model checkpoint")->required();
    cmd_sy->add_option("--tokens", sy.tokens_text, "space-separated token ids")->required();
    cmd_sy->add_option("--out", sy.out_path, "output frames file")->required();
    cmd_sy->add_option("--steps", sy.n_steps, "solver steps (default 50)");
    cmd_sy->add_option("--temperature", sy.temperature, "noise temperature (default 1.0)");
    cmd_sy->add_option("--seed", sy.seed, "sampling seed");

    EvalOpts ev;
    auto* cmd_ev = app.add_subcommand("eval", "evaluate a checkpoint against a corpus");
    cmd_ev->add_option("--metric", ev.metric, "xmodal, energy or rtf")->required();
    cmd_ev->add_option("--data", ev.data_path, "corpus file")->required();
    cmd_ev->add_option("--ckpt", ev.ckpt_path, "joint model checkpoint");
    cmd_ev->add_option("--marginal-ckpts", ev.marginal_paths, "acoustic and motion checkpoints")->expected(2);
    cmd_ev->add_option("--out", ev.out_path, "output JSON file")->required();
    cmd_ev->add_option("--seed", ev.seed, "evaluation seed");
    cmd_ev->add_option("--n-synth", ev.n_synth, "utterances to synthesize (default 200, rtf 8)");
    cmd_ev->add_option("--steps", ev.n_steps, "solver steps for synthesis (default 50)");
    cmd_ev->add_option("--rtf-steps", ev.rtf_steps, "comma-separated step counts for rtf");
    cmd_ev->add_option("--repeats", ev.rtf_repeats, "timing repeats for rtf (default 3)");
    cmd_ev->add_option("--max-frames", ev.max_frames, "frame cap for the energy metric");

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? 0 : kExitUsage;
    }

    try {
        if (app.got_subcommand(cmd_gen)) return cmd_generate(gen);
        if (app.got_subcommand(cmd_tr)) return cmd_train(tr);
        if (app.got_subcommand(cmd_sy)) return cmd_synth(sy);
        return cmd_eval(ev);
    } catch (const ConfigError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const IoError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ValueError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const ShapeError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitUsage;
    } catch (const NumericError& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    } catch (const std::exception& e) {
        std::cerr << "error: " << e.what() << "\n";
        return kExitRuntime;
    }
}
