// Acceptance gate: one self-contained check per shipping claim, each printing
// a [PASS]/[FAIL] line with its measured numbers. The exit status is the
// number of failed criteria, so `acceptance` composes with ctest directly.
//
// Criteria 4 and 5 train full desk-scale models and take tens of minutes;
// everything else finishes in seconds. --criteria 1,2,3 style subsets let the
// two groups run as separate ctest entries.

#include <algorithm>
#include <array>
#include <chrono>
#include <cmath>
#include <cstdarg>
#include <cstdio>
#include <cstring>
#include <filesystem>
#include <string>
#include <vector>

#include <unistd.h>

#include "flowsynth/checkpoint.hpp"
#include "flowsynth/marginal.hpp"
#include "flowsynth/metrics.hpp"
#include "flowsynth/model.hpp"
#include "flowsynth/sampler.hpp"
#include "flowsynth/toydata.hpp"
#include "flowsynth/train.hpp"
#include "testutil.hpp"

using namespace flowsynth;

namespace {

double now_s() {
    return std::chrono::duration<double>(std::chrono::steady_clock::now().time_since_epoch()).count();
}

double median3(std::array<double, 3> v) {
    std::sort(v.begin(), v.end());
    return v[1];
}

std::string fmt(const char* format, ...) {
    char buf[512];
    va_list args;
    va_start(args, format);
    std::vsnprintf(buf, sizeof(buf), format, args);
    va_end(args);
    return std::string(buf);
}

struct Outcome {
    bool pass = false;
    std::string detail;
};

// --- shared desk-scale fixtures (criteria 4, 5, 6) -------------------------

constexpr std::array<std::uint64_t, 3> kSeeds = {1, 2, 3};
constexpr std::size_t kSynthSet = 200;      // synthesized utterances per evaluation set
constexpr std::size_t kJointUpdates = 5000;
constexpr std::size_t kMarginalUpdates = 2000;

ModelConfig desk_cfg(Regime regime) {
    ModelConfig cfg = desk_model_config(8);
    cfg.regime = regime;
    return cfg;
}

TrainConfig desk_train_cfg(Regime regime, std::uint64_t seed) {
    TrainConfig tc;
    tc.batch_size = 16;
    tc.learning_rate = 3e-4;
    tc.regime = regime;
    tc.seed = seed;
    tc.log_interval = 1000;
    return tc;
}

ToyCorpusConfig desk_corpus_cfg(std::uint64_t seed) {
    ToyCorpusConfig cc;  // defaults are the desk profile: vocab 8, dims 8+5, rho 0.8
    cc.n_utterances = 2000;
    cc.seed = seed;
    return cc;
}

struct SharedData {
    bool built = false;
    std::vector<ToyUtterance<float>> corpus;                // training split, seed 1
    std::vector<JointFrameSequence<float>> heldout_seqs;    // reference split, seed 2
    std::vector<std::vector<std::size_t>> synth_tokens;     // token inputs for synthesis sets
};

struct RegimeArtifacts {
    bool built = false;
    std::array<double, 3> ed10{}, ed100{};                  // per training seed
    std::vector<std::vector<JointFrameSequence<float>>> synth100;  // kept for coupling checks
    double seconds = 0.0;                                   // train + synth + distance wall time
};

SharedData g_shared;
RegimeArtifacts g_flow, g_score;

void ensure_shared() {
    if (g_shared.built) return;
    {
        Rng rng(1, 10);
        g_shared.corpus = generate_corpus<float>(desk_corpus_cfg(1), rng);
    }
    Rng rng(2, 10);
    auto heldout = generate_corpus<float>(desk_corpus_cfg(2), rng);
    g_shared.heldout_seqs.reserve(heldout.size());
    for (const auto& utt : heldout) g_shared.heldout_seqs.push_back(utt.frames);
    for (std::size_t i = 0; i < kSynthSet; ++i) g_shared.synth_tokens.push_back(heldout[i].tokens);
    g_shared.built = true;
}

std::vector<JointFrameSequence<float>> synthesize_set(Model<float>& model, std::size_t n_steps, Rng base) {
    SamplerConfig sc;
    sc.n_steps = n_steps;
    std::vector<JointFrameSequence<float>> out;
    out.reserve(g_shared.synth_tokens.size());
    for (std::size_t i = 0; i < g_shared.synth_tokens.size(); ++i) {
        Rng noise = base.child(i);
        out.push_back(synthesize(g_shared.synth_tokens[i], model, sc, noise).sequence);
    }
    return out;
}

// Trains the three seeded models for one regime and scores their 10-step and
// 100-step synthesis sets against the held-out reference.
void ensure_regime(Regime regime) {
    RegimeArtifacts& art = regime == Regime::otcfm ? g_flow : g_score;
    if (art.built) return;
    ensure_shared();
    const double t0 = now_s();
    art.synth100.resize(kSeeds.size());
    for (std::size_t si = 0; si < kSeeds.size(); ++si) {
        const std::uint64_t seed = kSeeds[si];
        Rng init(seed, 0);
        Model<float> model(init, desk_cfg(regime));
        Trainer<float> trainer(model, desk_train_cfg(regime, seed));
        double final_loss = 0.0;
        trainer.run(g_shared.corpus, kJointUpdates, [&](const TrainRecord& r) { final_loss = r.loss_total; });
        std::printf("  %s seed %llu: %zu updates in %.0fs (loss %.3f)\n", regime_name(regime),
                    static_cast<unsigned long long>(seed), kJointUpdates, now_s() - t0, final_loss);
        std::fflush(stdout);

        auto set10 = synthesize_set(model, 10, Rng(seed, 310));
        auto set100 = synthesize_set(model, 100, Rng(seed, 311));
        Rng ed10_rng(seed, 320), ed100_rng(seed, 321);
        art.ed10[si] = energy_distance(set10, g_shared.heldout_seqs, ed10_rng);
        art.ed100[si] = energy_distance(set100, g_shared.heldout_seqs, ed100_rng);
        std::printf("  %s seed %llu: distance 10-step %.4f, 100-step %.4f\n", regime_name(regime),
                    static_cast<unsigned long long>(seed), art.ed10[si], art.ed100[si]);
        std::fflush(stdout);
        if (regime == Regime::otcfm) art.synth100[si] = std::move(set100);
    }
    art.seconds = now_s() - t0;
    art.built = true;
}

// --- criterion 1: gradient integrity ---------------------------------------
// Central finite differences at f64 against the full per-utterance training
// objective (encoder, alignment, field network, all three loss terms), both
// regimes, several seeds, random parameter coordinates.

Outcome criterion_gradients() {
    const double t0 = now_s();
    const double h = 1e-5, tol = 1e-4;
    std::size_t instances = 0;
    double worst = 0.0;
    std::string worst_param = "none";

    for (std::uint64_t seed : {11u, 12u, 13u}) {
        for (Regime regime : {Regime::otcfm, Regime::score_matching}) {
            ModelConfig mc;
            mc.vocab = 6;
            mc.acoustic_dim = 4;
            mc.motion_dim = 3;
            mc.regime = regime;
            mc.encoder.model_dim = 24;
            mc.encoder.num_blocks = 1;
            mc.encoder.num_heads = 2;
            mc.encoder.head_dim = 6;
            mc.encoder.ffn_mult = 2;
            mc.encoder.dur_hidden = 16;
            mc.unet.down_dims = {12};
            mc.unet.mid_dims = {12};
            mc.unet.up_dims = {12};
            mc.unet.heads = 1;
            mc.unet.head_dim = 6;
            mc.unet.ffn_mult = 2;
            mc.unet.t_emb_dim = 8;

            Rng init(seed, 0);
            Model<double> model(init, mc);
            TrainConfig tc;
            tc.batch_size = 1;
            tc.learning_rate = 1e-3;
            tc.regime = regime;
            tc.seed = seed;
            Trainer<double> trainer(model, tc);

            ToyCorpusConfig cc;
            cc.vocab_size = 6;
            cc.acoustic_dim = 4;
            cc.motion_dim = 3;
            cc.n_utterances = 2;
            cc.tokens_min = 3;
            cc.tokens_max = 5;
            cc.seed = seed;
            Rng crng(seed, 10);
            auto data = generate_corpus<double>(cc, crng);

            for (const auto& utt : data) {
                ++instances;
                // The alignment is an argmax the objective treats as constant;
                // recomputing it per finite-difference step would let a +-h
                // perturbation flip it and spike the numeric derivative. So it
                // is frozen at the base parameters while everything
                // differentiable (encoder included) stays inside the eval.
                const Mask token_mask = full_mask(utt.tokens.size());
                const Alignment ali = [&] {
                    NoGradGuard ng;
                    auto enc = model.encoder.encode(utt.tokens, token_mask);
                    return mas_align(enc.mu, utt.frames.frames, token_mask, utt.frames.mask);
                }();
                const std::uint64_t c0 = trainer.rng().counter();
                // The duration head reads stop-gradient features, so upstream
                // parameters intentionally get no gradient from the duration
                // term and a finite difference through the whole sum would
                // measure a derivative the implementation defines away. The
                // fully differentiable terms and the duration term are
                // therefore checked as two separate scalars.
                auto eval_flow = [&] {
                    trainer.rng().set_counter(c0);
                    auto enc = model.encoder.encode(utt.tokens, token_mask);
                    auto mu_frames = upsample(enc.mu, ali.durations);
                    auto field = [&](const Tensor<double>& x_t, double t, const Tensor<double>& mu, const Mask& m) {
                        return model.unet.vector_field(x_t, t, mu, m);
                    };
                    Tensor<double> regime_loss =
                        regime == Regime::otcfm
                            ? otcfm_loss(utt.frames, mu_frames, field, trainer.rng(), mc.otcfm)
                            : score_matching_loss(utt.frames, mu_frames, field, trainer.rng(), mc.sm);
                    return add(regime_loss, prior_loss(mu_frames, utt.frames.frames, utt.frames.mask));
                };
                auto eval_dur = [&] {
                    auto enc = model.encoder.encode(utt.tokens, token_mask);
                    return duration_loss(enc.log_durations, ali.durations, token_mask);
                };

                auto& params = trainer.params();
                std::vector<std::size_t> dur_idx;
                for (std::size_t i = 0; i < params.size(); ++i)
                    if (params[i].first.find(".dur") != std::string::npos) dur_idx.push_back(i);

                auto check_coord = [&](std::size_t pi, std::size_t ei, auto&& eval) {
                    auto& tensor = params[pi].second;
                    const double analytic = tensor.grad()[ei];
                    const double keep = tensor.data()[ei];
                    double up, dn;
                    {
                        NoGradGuard ng;
                        tensor.data()[ei] = keep + h;
                        up = eval().item();
                        tensor.data()[ei] = keep - h;
                        dn = eval().item();
                        tensor.data()[ei] = keep;
                    }
                    const double numeric = (up - dn) / (2.0 * h);
                    const double rel =
                        std::abs(analytic - numeric) / std::max({1e-6, std::abs(analytic), std::abs(numeric)});
                    if (rel > worst) {
                        worst = rel;
                        worst_param = params[pi].first;
                    }
                };

                Rng pick(seed * 1000003 + static_cast<std::uint64_t>(regime), 77);

                // Duration term: gradient must reach the duration head and,
                // because of the stop-gradient boundary, nothing else.
                for (auto& [name, p] : params) p.zero_grad();
                backward(eval_dur());
                for (std::size_t i = 0; i < params.size(); ++i) {
                    if (std::find(dur_idx.begin(), dur_idx.end(), i) != dur_idx.end()) continue;
                    for (double g : params[i].second.grad())
                        if (g != 0.0)
                            return Outcome{false, fmt("duration loss leaked into %s", params[i].first.c_str())};
                }
                for (int k = 0; k < 2; ++k) {
                    const std::size_t pi = dur_idx[pick.next_below(dur_idx.size())];
                    check_coord(pi, pick.next_below(params[pi].second.data().size()), eval_dur);
                }

                // Regime plus prior terms: differentiable end to end, checked
                // across every parameter group.
                for (auto& [name, p] : params) p.zero_grad();
                backward(eval_flow());
                for (int k = 0; k < 6; ++k) {
                    const std::size_t pi = pick.next_below(params.size());
                    check_coord(pi, pick.next_below(params[pi].second.data().size()), eval_flow);
                }
            }
        }
    }

    const double secs = now_s() - t0;
    const bool pass = worst < tol && instances >= 10 && secs < 120.0;
    return {pass, fmt("%zu instances, worst rel err %.2e at %s, %.1fs (budget 120s)", instances, worst,
                      worst_param.c_str(), secs)};
}

// --- criterion 2: alignment exactness --------------------------------------
// The alignment DP against exhaustive enumeration of every monotone
// surjective assignment, including the tie rule.

double pair_score(const Tensor<double>& mu, const Tensor<double>& target, std::size_t j, std::size_t t) {
    const std::size_t d = mu.dim(1);
    double ss = 0.0;
    for (std::size_t k = 0; k < d; ++k) {
        const double diff = target.data()[t * d + k] - mu.data()[j * d + k];
        ss += diff * diff;
    }
    return -0.5 * ss - 0.5 * static_cast<double>(d) * std::log(2.0 * M_PI);
}

struct BruteResult {
    double best = -1e300;
    std::vector<std::size_t> assignment;
};

void brute_recurse(const Tensor<double>& mu, const Tensor<double>& target, std::size_t n, std::size_t t,
                   std::size_t token, std::size_t frame, double acc, std::vector<std::size_t>& cur, BruteResult& out) {
    if (token == n) {
        if (frame != t) return;
        if (acc > out.best + 1e-9 ||
            (std::abs(acc - out.best) <= 1e-9 && (out.assignment.empty() || cur > out.assignment))) {
            out.best = acc;
            out.assignment = cur;
        }
        return;
    }
    const std::size_t remaining_tokens = n - token - 1;
    for (std::size_t run = 1; frame + run + remaining_tokens <= t; ++run) {
        double add_score = 0.0;
        for (std::size_t f = frame; f < frame + run; ++f) {
            add_score += pair_score(mu, target, token, f);
            cur.push_back(token);
        }
        brute_recurse(mu, target, n, t, token + 1, frame + run, acc + add_score, cur, out);
        for (std::size_t f = 0; f < run; ++f) cur.pop_back();
    }
}

BruteResult brute_force_align(const Tensor<double>& mu, const Tensor<double>& target) {
    BruteResult out;
    std::vector<std::size_t> cur;
    brute_recurse(mu, target, mu.dim(0), target.dim(0), 0, 0, 0.0, cur, out);
    return out;
}

Outcome criterion_alignment() {
    const double t0 = now_s();
    Rng rng(61, 0);
    std::size_t cases = 0, mismatches = 0;
    for (std::size_t n = 1; n <= 4; ++n) {
        for (std::size_t t = n; t <= 6; ++t) {
            for (int rep = 0; rep < 12; ++rep) {
                auto mu = testutil::rand_tensor(rng, {n, 3});
                auto target = testutil::rand_tensor(rng, {t, 3});
                auto got = mas_align(mu, target, full_mask(n), full_mask(t));
                auto want = brute_force_align(mu, target);
                std::vector<std::size_t> want_durations(n, 0);
                for (std::size_t tok : want.assignment) ++want_durations[tok];
                ++cases;
                if (got.assignment != want.assignment || got.durations != want_durations) ++mismatches;
            }
        }
    }
    const double secs = now_s() - t0;
    const bool pass = mismatches == 0 && cases >= 200 && secs < 60.0;
    return {pass, fmt("%zu exhaustive cases, %zu mismatches, %.1fs (budget 60s)", cases, mismatches, secs)};
}

// --- criterion 3: solver analytics -----------------------------------------
// Closed-form checks on the Euler integrator: a constant field lands exactly,
// and the linear contraction v = -x matches (1 - 1/N)^N.

Outcome criterion_solver() {
    Rng rng(71, 0);
    const std::size_t t_len = 5, d = 4;
    auto x0 = testutil::rand_tensor(rng, {t_len, d});
    auto c = testutil::rand_tensor(rng, {t_len, d});
    const Mask mask = full_mask(t_len);
    double worst = 0.0;

    for (std::size_t n : {1u, 10u, 50u, 500u}) {
        SamplerConfig sc;
        sc.n_steps = n;

        auto constant_field = [](const Tensor<double>& x, double, const Tensor<double>& mu, const Mask&) {
            (void)x;
            return mu;
        };
        auto res_c = euler_solve(constant_field, x0, c, mask, sc);
        for (std::size_t i = 0; i < t_len * d; ++i)
            worst = std::max(worst, std::abs(res_c.data()[i] - (x0.data()[i] + c.data()[i])));

        auto contract_field = [](const Tensor<double>& x, double, const Tensor<double>&, const Mask&) {
            return scale(x, -1.0);
        };
        auto res_l = euler_solve(contract_field, x0, c, mask, sc);
        const double shrink = std::pow(1.0 - 1.0 / static_cast<double>(n), static_cast<double>(n));
        for (std::size_t i = 0; i < t_len * d; ++i)
            worst = std::max(worst, std::abs(res_l.data()[i] - shrink * x0.data()[i]));
    }
    return {worst <= 1e-12, fmt("steps {1,10,50,500}, worst abs err %.2e (tol 1e-12)", worst)};
}

// --- criterion 4: few-step sampling ----------------------------------------
// Flow-matched models keep their sample quality at 10 solver steps while
// score-matched ones degrade, measured as energy distance to held-out data,
// median over three training seeds.

Outcome criterion_few_step() {
    ensure_regime(Regime::otcfm);
    ensure_regime(Regime::score_matching);
    std::array<double, 3> flow_ratio{}, score_ratio{};
    for (std::size_t si = 0; si < 3; ++si) {
        flow_ratio[si] = g_flow.ed10[si] / g_flow.ed100[si];
        score_ratio[si] = g_score.ed10[si] / g_score.ed100[si];
    }
    const double flow_med = median3(flow_ratio);
    const double score_med = median3(score_ratio);
    const double secs = g_flow.seconds + g_score.seconds;
    const bool pass = flow_med <= 1.25 && score_med >= 1.5 && secs < 3600.0;
    return {pass, fmt("10/100-step distance ratio: flow med %.3f (need <=1.25), score med %.3f (need >=1.5), %.0fs "
                      "(budget 3600s)",
                      flow_med, score_med, secs)};
}

// --- criterion 5: cross-modal coupling -------------------------------------
// The unified model keeps the acoustic-motion coupling of rho=0.8 data; two
// independently trained single-modality models lose it.

Outcome criterion_coupling() {
    ensure_regime(Regime::otcfm);
    std::array<double, 3> joint_xm{}, marg_xm{};
    for (std::size_t si = 0; si < kSeeds.size(); ++si) {
        const std::uint64_t seed = kSeeds[si];
        joint_xm[si] = cross_modal_dependence(g_flow.synth100[si]);

        TrainConfig tc = desk_train_cfg(Regime::otcfm, seed);
        tc.updates = kMarginalUpdates;
        auto pair = marginal_baseline_train(g_shared.corpus, desk_cfg(Regime::otcfm), tc);
        SamplerConfig sc;
        sc.n_steps = 100;
        Rng base(seed, 330);
        std::vector<JointFrameSequence<float>> set;
        set.reserve(g_shared.synth_tokens.size());
        for (std::size_t i = 0; i < g_shared.synth_tokens.size(); ++i) {
            Rng noise = base.child(i);
            set.push_back(marginal_synthesize(g_shared.synth_tokens[i], pair, sc, noise).sequence);
        }
        marg_xm[si] = cross_modal_dependence(set);
        std::printf("  seed %llu: unified coupling %.3f, factorized coupling %.3f\n",
                    static_cast<unsigned long long>(seed), joint_xm[si], marg_xm[si]);
        std::fflush(stdout);
    }
    const double joint_med = median3(joint_xm);
    const double marg_med = median3(marg_xm);
    const bool pass = joint_med >= 0.5 && marg_med <= 0.15;
    return {pass,
            fmt("coupling med: unified %.3f (need >=0.5), factorized %.3f (need <=0.15)", joint_med, marg_med)};
}

// --- criterion 6: solver cost scaling --------------------------------------
// Solver wall time is linear in step count (500 vs 50 lands near 10x) and
// the real-time factor grows monotonically with steps.

Outcome criterion_rtf() {
    Rng init(0, 0);
    Model<float> model(init, desk_cfg(Regime::otcfm));
    Rng tok_rng(99, 400);
    std::vector<std::vector<std::size_t>> seqs;
    for (int i = 0; i < 8; ++i) {
        std::vector<std::size_t> s(6 + tok_rng.next_below(7));
        for (auto& v : s) v = tok_rng.next_below(8);
        seqs.push_back(std::move(s));
    }
    std::vector<SamplerConfig> cfgs;
    for (std::size_t n : {10u, 50u, 100u, 500u}) {
        SamplerConfig sc;
        sc.n_steps = n;
        cfgs.push_back(sc);
    }
    Rng rng(7, 302);
    auto entries = benchmark_rtf(model, cfgs, seqs, rng, 80.0, 3);
    const double ratio = entries[3].solver_seconds / entries[1].solver_seconds;
    bool monotone = true;
    for (std::size_t i = 1; i < entries.size(); ++i)
        if (entries[i].rtf <= entries[i - 1].rtf) monotone = false;
    const bool pass = ratio >= 8.0 && ratio <= 12.0 && monotone;
    return {pass, fmt("solver 500/50 ratio %.2f (need 8..12), rtf %s over {10,50,100,500}", ratio,
                      monotone ? "monotone" : "NOT monotone")};
}

// --- criterion 7: determinism and persistence ------------------------------
// Same seed twice gives bitwise-equal parameters; stopping at a checkpoint
// file and resuming matches the uninterrupted run bitwise; corpus and
// checkpoint files survive a save/load/save round trip byte for byte.

ModelConfig persist_cfg() {
    ModelConfig mc;
    mc.vocab = 6;
    mc.acoustic_dim = 4;
    mc.motion_dim = 3;
    mc.encoder.model_dim = 24;
    mc.encoder.num_blocks = 1;
    mc.encoder.num_heads = 2;
    mc.encoder.head_dim = 6;
    mc.encoder.ffn_mult = 2;
    mc.encoder.dur_hidden = 16;
    mc.unet.down_dims = {12};
    mc.unet.mid_dims = {12};
    mc.unet.up_dims = {12};
    mc.unet.heads = 1;
    mc.unet.head_dim = 6;
    mc.unet.ffn_mult = 2;
    mc.unet.t_emb_dim = 8;
    return mc;
}

bool params_equal(ParamList<float>& a, ParamList<float>& b) {
    if (a.size() != b.size()) return false;
    for (std::size_t i = 0; i < a.size(); ++i)
        if (a[i].first != b[i].first || a[i].second.data() != b[i].second.data()) return false;
    return true;
}

std::string slurp(const std::string& path) {
    std::FILE* f = std::fopen(path.c_str(), "rb");
    if (!f) throw IoError("cannot open " + path);
    std::string out;
    char buf[65536];
    std::size_t got;
    while ((got = std::fread(buf, 1, sizeof(buf), f)) > 0) out.append(buf, got);
    std::fclose(f);
    return out;
}

Outcome criterion_persistence() {
    ToyCorpusConfig cc;
    cc.vocab_size = 6;
    cc.acoustic_dim = 4;
    cc.motion_dim = 3;
    cc.n_utterances = 40;
    cc.tokens_min = 3;
    cc.tokens_max = 6;
    cc.seed = 21;
    Rng crng(21, 10);
    auto data = generate_corpus<float>(cc, crng);

    TrainConfig tc;
    tc.batch_size = 4;
    tc.learning_rate = 2e-3;
    tc.seed = 3;
    tc.log_interval = 10;

    // same seed, two independent runs
    Rng ia(3, 0), ib(3, 0);
    Model<float> ma(ia, persist_cfg()), mb(ib, persist_cfg());
    Trainer<float> ta(ma, tc), tb(mb, tc);
    ta.run(data, 30);
    tb.run(data, 30);
    const bool repro = params_equal(ta.params(), tb.params());

    // interrupted run: 18 updates, checkpoint to disk, rebuild, 12 more
    const auto dir = std::filesystem::temp_directory_path() / ("flowsynth_accept_" + std::to_string(getpid()));
    std::filesystem::create_directories(dir);
    const std::string ck1 = (dir / "mid.ckpt").string(), ck2 = (dir / "mid2.ckpt").string();
    const std::string co1 = (dir / "data.corpus").string(), co2 = (dir / "data2.corpus").string();

    Rng ic(3, 0);
    Model<float> mc_model(ic, persist_cfg());
    Trainer<float> tcnr(mc_model, tc);
    tcnr.run(data, 18);
    write_checkpoint_file(ck1, snapshot_checkpoint(tcnr));
    auto ck = read_checkpoint_file(ck1);
    auto md = model_from_checkpoint<float>(ck);
    Trainer<float> td(md, tc);
    restore_trainer(ck, td);
    td.run(data, 12);
    const bool resumed = params_equal(ta.params(), td.params()) &&
                         td.optimizer().moment1() == ta.optimizer().moment1() &&
                         td.optimizer().moment2() == ta.optimizer().moment2() &&
                         td.rng().counter() == ta.rng().counter() && td.update_count() == ta.update_count();

    // byte-stable round trips for both file formats
    write_checkpoint_file(ck2, read_checkpoint_file(ck1));
    const bool ck_stable = slurp(ck1) == slurp(ck2);
    save_corpus(co1, data, cc);
    ToyCorpusConfig cc2;
    auto data2 = load_corpus<float>(co1, cc2);
    save_corpus(co2, data2, cc2);
    // the corpus header stores only what shapes the data, not generator knobs
    const bool corpus_stable = slurp(co1) == slurp(co2) && cc2.vocab_size == cc.vocab_size &&
                               cc2.acoustic_dim == cc.acoustic_dim && cc2.motion_dim == cc.motion_dim;
    std::filesystem::remove_all(dir);

    const bool pass = repro && resumed && ck_stable && corpus_stable;
    return {pass, fmt("repeat-run bitwise %s, resume bitwise %s, checkpoint bytes %s, corpus bytes %s",
                      repro ? "equal" : "DIFFER", resumed ? "equal" : "DIFFER", ck_stable ? "stable" : "UNSTABLE",
                      corpus_stable ? "stable" : "UNSTABLE")};
}

// --- criterion 8: metric calibration ---------------------------------------
// The coupling statistic recovers the generator's rho on raw corpora, the
// distance of a set to itself is exactly zero, and the 1-D Gaussian distance
// matches a large-sample Monte Carlo reference.

double mean_abs_diff_1d(const std::vector<double>& x, std::vector<double> y) {
    std::sort(y.begin(), y.end());
    std::vector<double> pref(y.size() + 1, 0.0);
    for (std::size_t i = 0; i < y.size(); ++i) pref[i + 1] = pref[i] + y[i];
    const double total_y = pref.back();
    const double ny = static_cast<double>(y.size());
    double total = 0.0;
    for (double xi : x) {
        const auto it = std::upper_bound(y.begin(), y.end(), xi);
        const double below = static_cast<double>(it - y.begin());
        const double sum_below = pref[static_cast<std::size_t>(it - y.begin())];
        total += xi * below - sum_below + (total_y - sum_below) - xi * (ny - below);
    }
    return total / (static_cast<double>(x.size()) * ny);
}

std::vector<JointFrameSequence<float>> gaussian_set(std::size_t n, double mean, Rng rng) {
    std::vector<float> vals(n);
    for (auto& v : vals) v = static_cast<float>(mean + rng.next_gaussian());
    JointFrameSequence<float> seq;
    seq.frames = Tensor<float>::from_data({n, 1}, std::move(vals));
    seq.acoustic_dim = 1;
    seq.motion_dim = 0;
    seq.mask = full_mask(n);
    return {std::move(seq)};
}

Outcome criterion_calibration() {
    // rho recovery on raw corpora
    double worst_rho_err = 0.0;
    std::string rho_text;
    std::vector<JointFrameSequence<float>> rho08_seqs;
    const double rhos[] = {0.0, 0.8, 1.0};
    for (int i = 0; i < 3; ++i) {
        ToyCorpusConfig cc;
        cc.n_utterances = 1000;
        cc.cross_modal_rho = rhos[i];
        cc.seed = 31 + static_cast<std::uint64_t>(i);
        Rng rng(cc.seed, 10);
        auto corpus = generate_corpus<float>(cc, rng);
        std::vector<JointFrameSequence<float>> seqs;
        seqs.reserve(corpus.size());
        for (const auto& utt : corpus) seqs.push_back(utt.frames);
        const double xm = cross_modal_dependence(seqs);
        worst_rho_err = std::max(worst_rho_err, std::abs(xm - rhos[i]));
        rho_text += fmt("%s%.1f->%.3f", i ? " " : "", rhos[i], xm);
        if (i == 1) rho08_seqs = std::move(seqs);
    }

    // a set against itself, through the subsampling path
    Rng self_rng(5, 0);
    const double ed_self = energy_distance(rho08_seqs, rho08_seqs, self_rng);

    // 1-D Gaussian estimate vs a 1e6-sample reference; averaging independent
    // subsample draws keeps the estimator noise well inside the 5% band
    auto set_a = gaussian_set(50000, 0.0, Rng(41, 0));
    auto set_b = gaussian_set(50000, 1.0, Rng(42, 0));
    double ed_est = 0.0;
    for (std::uint64_t s = 0; s < 3; ++s) {
        Rng ed_rng(43 + s, 0);
        ed_est += energy_distance(set_a, set_b, ed_rng, 20000);
    }
    ed_est /= 3.0;

    std::vector<double> ra(1000000), rb(1000000);
    Rng ref_a(44, 0), ref_b(45, 0);
    for (auto& v : ra) v = ref_a.next_gaussian();
    for (auto& v : rb) v = 1.0 + ref_b.next_gaussian();
    const double ed_ref = 2.0 * mean_abs_diff_1d(ra, rb) - mean_abs_diff_1d(ra, ra) - mean_abs_diff_1d(rb, rb);
    const double gauss_rel = std::abs(ed_est - ed_ref) / ed_ref;

    const bool pass = worst_rho_err <= 0.05 && ed_self == 0.0 && gauss_rel <= 0.05;
    return {pass, fmt("rho recovery %s (worst err %.3f, tol 0.05); self-distance %.1e (need 0); gaussian %.4f vs "
                      "reference %.4f (rel %.3f, tol 0.05)",
                      rho_text.c_str(), worst_rho_err, ed_self, ed_est, ed_ref, gauss_rel)};
}

struct Criterion {
    int id;
    const char* name;
    Outcome (*fn)();
};

const Criterion kCriteria[] = {
    {1, "gradient integrity", criterion_gradients},
    {2, "alignment exactness", criterion_alignment},
    {3, "solver analytics", criterion_solver},
    {4, "few-step sampling", criterion_few_step},
    {5, "cross-modal coupling", criterion_coupling},
    {6, "solver cost scaling", criterion_rtf},
    {7, "determinism and persistence", criterion_persistence},
    {8, "metric calibration", criterion_calibration},
};

}  // namespace

int main(int argc, char** argv) {
    std::vector<int> wanted;
    for (int i = 1; i < argc; ++i) {
        if (std::strcmp(argv[i], "--criteria") == 0 && i + 1 < argc) {
            const char* p = argv[++i];
            while (*p) {
                char* end = nullptr;
                const long v = std::strtol(p, &end, 10);
                if (end == p || v < 1 || v > 8) {
                    std::fprintf(stderr, "error: --criteria wants a comma list of numbers 1..8, got '%s'\n", argv[i]);
                    return 64;
                }
                wanted.push_back(static_cast<int>(v));
                p = *end == ',' ? end + 1 : end;
            }
        } else {
            std::fprintf(stderr, "usage: %s [--criteria 1,2,...]\n", argv[0]);
            return 64;
        }
    }
    if (wanted.empty())
        for (const auto& c : kCriteria) wanted.push_back(c.id);

    int failures = 0;
    for (int id : wanted) {
        const Criterion& c = kCriteria[id - 1];
        const double t0 = now_s();
        Outcome o;
        try {
            o = c.fn();
        } catch (const std::exception& e) {
            o = {false, fmt("exception: %s", e.what())};
        }
        std::printf("[%s] criterion %d: %s  (%s) [%.1fs]\n", o.pass ? "PASS" : "FAIL", c.id, c.name,
                    o.detail.c_str(), now_s() - t0);
        std::fflush(stdout);
        if (!o.pass) ++failures;
    }
    std::printf("%zu of %zu criteria passed\n", wanted.size() - static_cast<std::size_t>(failures), wanted.size());
    return failures;
}
