#include <catch2/catch_amalgamated.hpp>

#include <algorithm>
#include <cmath>
#include <limits>
#include <vector>

#include "flowsynth/marginal.hpp"
#include "flowsynth/metrics.hpp"
#include "flowsynth/train.hpp"
#include "testutil.hpp"

using namespace flowsynth;

namespace {

ModelConfig tiny_model_cfg(std::size_t vocab, std::size_t acoustic, std::size_t motion) {
    auto cfg = desk_model_config(vocab);
    cfg.acoustic_dim = acoustic;
    cfg.motion_dim = motion;
    cfg.encoder.model_dim = 24;
    cfg.encoder.num_blocks = 1;
    cfg.encoder.num_heads = 2;
    cfg.encoder.head_dim = 6;
    cfg.encoder.dur_hidden = 16;
    cfg.unet.down_dims = {12, 12};
    cfg.unet.mid_dims = {12, 12};
    cfg.unet.up_dims = {12, 12};
    cfg.unet.heads = 1;
    cfg.unet.head_dim = 6;
    cfg.unet.ffn_mult = 2;
    cfg.unet.t_emb_dim = 8;
    return cfg;
}

std::vector<ToyUtterance<double>> tiny_corpus(std::size_t n, std::size_t acoustic, std::size_t motion,
                                              std::uint64_t seed) {
    ToyCorpusConfig cfg;
    cfg.acoustic_dim = acoustic;
    cfg.motion_dim = motion;
    cfg.n_utterances = n;
    cfg.tokens_min = 2;
    cfg.tokens_max = 4;
    Rng rng(seed, 0);
    return generate_corpus<double>(cfg, rng);
}

std::vector<double> snapshot(ParamList<double>& params) {
    std::vector<double> out;
    for (auto& [name, p] : params) out.insert(out.end(), p.data().begin(), p.data().end());
    return out;
}

}  // namespace

TEST_CASE("zero updates leave parameters untouched") {
    auto data = tiny_corpus(8, 2, 2, 130);
    Rng build(131, 0);
    Model<double> model(build, tiny_model_cfg(8, 2, 2));
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.learning_rate = 1e-3;
    Trainer<double> trainer(model, cfg);
    auto before = snapshot(trainer.params());
    trainer.run(data, 0);
    REQUIRE(snapshot(trainer.params()) == before);

    auto records = train(data, model, cfg);  // cfg.updates defaults to 0
    REQUIRE(records.empty());
    REQUIRE(snapshot(trainer.params()) == before);
}

TEST_CASE("training is bitwise deterministic in the seed") {
    auto data = tiny_corpus(8, 2, 2, 132);
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.learning_rate = 1e-3;
    cfg.seed = 7;

    Rng b1(133, 0), b2(133, 0), b3(133, 0);
    Model<double> m1(b1, tiny_model_cfg(8, 2, 2));
    Model<double> m2(b2, tiny_model_cfg(8, 2, 2));
    Model<double> m3(b3, tiny_model_cfg(8, 2, 2));

    Trainer<double> t1(m1, cfg), t2(m2, cfg);
    t1.run(data, 12);
    t2.run(data, 12);
    REQUIRE(snapshot(t1.params()) == snapshot(t2.params()));

    TrainConfig other = cfg;
    other.seed = 8;
    Trainer<double> t3(m3, other);
    t3.run(data, 12);
    REQUIRE(snapshot(t1.params()) != snapshot(t3.params()));
}

TEST_CASE("interrupted and straight runs produce identical parameters") {
    auto data = tiny_corpus(8, 2, 2, 134);
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.learning_rate = 1e-3;

    Rng b1(135, 0), b2(135, 0);
    Model<double> split_model(b1, tiny_model_cfg(8, 2, 2));
    Model<double> straight_model(b2, tiny_model_cfg(8, 2, 2));

    Trainer<double> split_t(split_model, cfg);
    split_t.run(data, 9);
    split_t.run(data, 11);
    Trainer<double> straight_t(straight_model, cfg);
    straight_t.run(data, 20);
    REQUIRE(snapshot(split_t.params()) == snapshot(straight_t.params()));
    REQUIRE(split_t.update_count() == 20);
}

TEST_CASE("flow-matching loss halves on the two-channel toy task") {
    std::vector<double> ratios;
    for (std::uint64_t seed : {136u, 137u, 138u}) {
        auto data = tiny_corpus(64, 1, 1, 1000 + seed);
        Rng build(seed, 0);
        Model<double> model(build, tiny_model_cfg(8, 1, 1));
        TrainConfig cfg;
        cfg.batch_size = 4;
        cfg.learning_rate = 3e-3;
        cfg.seed = seed;
        cfg.log_interval = 10;
        Trainer<double> trainer(model, cfg);
        double at_10 = std::numeric_limits<double>::quiet_NaN();
        double at_end = std::numeric_limits<double>::quiet_NaN();
        trainer.run(data, 2000, [&](const TrainRecord& r) {
            if (r.update == 10) at_10 = r.loss_cfm_or_sm;
            at_end = r.loss_cfm_or_sm;
        });
        REQUIRE(std::isfinite(at_10));
        REQUIRE(std::isfinite(at_end));
        ratios.push_back(at_end / at_10);
    }
    std::sort(ratios.begin(), ratios.end());
    INFO("ratios " << ratios[0] << " " << ratios[1] << " " << ratios[2]);
    REQUIRE(ratios[1] < 0.5);  // median of three seeds
}

TEST_CASE("non-finite losses abort and name the component") {
    auto data = tiny_corpus(4, 2, 2, 139);
    TrainConfig cfg;
    cfg.batch_size = 1;

    SECTION("flow matching") {
        Rng build(140, 0);
        Model<double> model(build, tiny_model_cfg(8, 2, 2));
        Trainer<double> trainer(model, cfg);
        trainer.params()[0].second.data()[0] = std::numeric_limits<double>::quiet_NaN();
        REQUIRE_THROWS_WITH(trainer.run(data, 1), Catch::Matchers::ContainsSubstring("flow-matching loss"));
    }

    SECTION("score matching") {
        auto mcfg = tiny_model_cfg(8, 2, 2);
        mcfg.regime = Regime::score_matching;
        Rng build(141, 0);
        Model<double> model(build, mcfg);
        TrainConfig sm_cfg = cfg;
        sm_cfg.regime = Regime::score_matching;
        Trainer<double> trainer(model, sm_cfg);
        trainer.params()[0].second.data()[0] = std::numeric_limits<double>::quiet_NaN();
        REQUIRE_THROWS_WITH(trainer.run(data, 1), Catch::Matchers::ContainsSubstring("score-matching loss"));
    }

    SECTION("regime mismatch is rejected up front") {
        Rng build(142, 0);
        Model<double> model(build, tiny_model_cfg(8, 2, 2));
        TrainConfig bad = cfg;
        bad.regime = Regime::score_matching;
        REQUIRE_THROWS_AS(Trainer<double>(model, bad), ConfigError);
    }
}

TEST_CASE("metrics records carry every loss component") {
    auto data = tiny_corpus(8, 2, 2, 143);
    Rng build(144, 0);
    Model<double> model(build, tiny_model_cfg(8, 2, 2));
    TrainConfig cfg;
    cfg.batch_size = 2;
    cfg.updates = 7;
    cfg.log_interval = 3;
    auto records = train(data, model, cfg);
    REQUIRE(records.size() == 3);  // updates 3, 6 and the final 7
    REQUIRE(records[0].update == 3);
    REQUIRE(records[1].update == 6);
    REQUIRE(records[2].update == 7);
    for (const auto& r : records) {
        REQUIRE(std::isfinite(r.loss_total));
        REQUIRE(r.loss_total ==
                Catch::Approx(r.loss_cfm_or_sm + r.loss_prior + r.loss_dur).margin(1e-9));
        REQUIRE(r.seconds_elapsed >= 0.0);
    }
}

TEST_CASE("marginal baseline trains both slices and keeps interface parity") {
    auto data = tiny_corpus(48, 8, 5, 145);
    auto mcfg = tiny_model_cfg(8, 8, 5);
    TrainConfig cfg;
    cfg.batch_size = 4;
    cfg.learning_rate = 3e-3;
    cfg.updates = 400;
    cfg.seed = 3;

    // untrained pair for the regression comparison
    auto pair_before = marginal_baseline_train<double>(data, mcfg, [] {
        TrainConfig zero;
        zero.updates = 0;
        return zero;
    }());
    auto pair_after = marginal_baseline_train<double>(data, mcfg, cfg);

    SamplerConfig sampler;
    sampler.n_steps = 12;
    std::vector<JointFrameSequence<double>> synth_before, synth_after, acoustic_data;
    for (std::size_t u = 0; u < 24; ++u) {
        Rng r1(200 + u, 0), r2(200 + u, 0);
        synth_before.push_back(marginal_synthesize(data[u].tokens, pair_before, sampler, r1).sequence);
        synth_after.push_back(marginal_synthesize(data[u].tokens, pair_after, sampler, r2).sequence);
        JointFrameSequence<double> a;
        a.acoustic_dim = 8;
        a.motion_dim = 0;
        a.frames = slice(data[u].frames.frames, 1, 0, 8);
        a.mask = data[u].frames.mask;
        acoustic_data.push_back(a);
    }

    for (const auto& s : synth_after) {
        REQUIRE(s.acoustic_dim == 8);
        REQUIRE(s.motion_dim == 5);
        REQUIRE(s.frames.dim(1) == 13);
        auto [a, m] = split_modalities(s);
        REQUIRE(a.dim(1) == 8);
        REQUIRE(m.dim(1) == 5);
    }

    auto acoustic_only = [](const std::vector<JointFrameSequence<double>>& seqs) {
        std::vector<JointFrameSequence<double>> out;
        for (const auto& s : seqs) {
            JointFrameSequence<double> a;
            a.acoustic_dim = 8;
            a.motion_dim = 0;
            a.frames = slice(s.frames, 1, 0, 8);
            a.mask = s.mask;
            out.push_back(a);
        }
        return out;
    };
    Rng e1(146, 0), e2(146, 0);
    const double ed_before = energy_distance(acoustic_only(synth_before), acoustic_data, e1);
    const double ed_after = energy_distance(acoustic_only(synth_after), acoustic_data, e2);
    INFO("acoustic energy distance untrained " << ed_before << " trained " << ed_after);
    REQUIRE(std::isfinite(ed_after));
    REQUIRE(ed_after < ed_before);
}
