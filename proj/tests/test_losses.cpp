#include <catch2/catch_amalgamated.hpp>

#include <cmath>
#include <vector>

#include "flowsynth/losses.hpp"
#include "flowsynth/optim.hpp"
#include "flowsynth/unet.hpp"
#include "testutil.hpp"

using namespace flowsynth;
using testutil::max_rel_grad_error;
using testutil::rand_tensor;

namespace {

JointFrameSequence<double> make_seq(Rng& rng, std::size_t t, std::size_t ad, std::size_t md) {
    JointFrameSequence<double> seq;
    seq.acoustic_dim = ad;
    seq.motion_dim = md;
    seq.frames = gaussian<double>(rng, {t, ad + md});
    seq.mask = full_mask(t);
    return seq;
}

}  // namespace

TEST_CASE("interpolant hits both endpoints") {
    Rng rng(70, 0);
    auto x0 = rand_tensor(rng, {5, 3});
    auto x1 = rand_tensor(rng, {5, 3});

    OtcfmConfig zero_sigma;
    zero_sigma.sigma_min = 0.0;
    auto at0 = otcfm_interpolate(x0, x1, 0.0, zero_sigma);
    REQUIRE(at0.x_t.data() == x0.data());
    for (std::size_t i = 0; i < x0.size(); ++i)
        REQUIRE(at0.u.data()[i] == Catch::Approx(x1.data()[i] - x0.data()[i]).margin(1e-15));

    OtcfmConfig cfg;  // sigma_min 1e-4
    auto at1 = otcfm_interpolate(x0, x1, 1.0, cfg);
    for (std::size_t i = 0; i < x0.size(); ++i)
        REQUIRE(at1.x_t.data()[i] == Catch::Approx(x1.data()[i] + 1e-4 * x0.data()[i]).margin(1e-15));
    auto mid = otcfm_interpolate(x0, x1, 0.4, cfg);
    for (std::size_t i = 0; i < x0.size(); ++i) {
        const double keep = 1.0 - (1.0 - 1e-4) * 0.4;
        REQUIRE(mid.x_t.data()[i] == Catch::Approx(keep * x0.data()[i] + 0.4 * x1.data()[i]).margin(1e-15));
        REQUIRE(mid.u.data()[i] == Catch::Approx(x1.data()[i] - (1.0 - 1e-4) * x0.data()[i]).margin(1e-15));
    }
}

TEST_CASE("a field that reproduces the target velocity has zero loss") {
    Rng rng(71, 0);
    auto seq = make_seq(rng, 6, 2, 2);
    auto mu = gaussian<double>(rng, {6, 4});
    OtcfmConfig cfg;
    const double s = cfg.sigma_min;
    // Reconstruct u from (x_t, t) and the captured x1; exact inverse of the
    // interpolant as long as t stays below 1/(1-s).
    auto oracle_field = [&](const Tensor<double>& x_t, double t, const Tensor<double>&, const Mask&) {
        const double keep = 1.0 - (1.0 - s) * t;
        auto x0 = scale(sub(x_t, scale(seq.frames, t)), 1.0 / keep);
        return sub(seq.frames, scale(x0, 1.0 - s));
    };
    Rng loss_rng(72, 0);
    auto loss = otcfm_loss(seq, mu, oracle_field, loss_rng, cfg);
    REQUIRE(loss.item() < 1e-20);
}

TEST_CASE("constant-field loss matches the closed-form expectation") {
    Rng rng(73, 0);
    const std::size_t t = 5, d = 5;
    auto seq = make_seq(rng, t, 3, 2);
    auto mu = Tensor<double>::zeros({t, d});
    const double c = 0.3;
    auto const_field = [&](const Tensor<double>& x_t, double, const Tensor<double>&, const Mask&) {
        return Tensor<double>::full(x_t.shape(), c);
    };
    OtcfmConfig cfg;
    // u ~ N(x1, (1-sigma_min)^2) per entry independent of t, so
    // E[(c-u)^2] = (c-x1)^2 + (1-sigma_min)^2 entrywise.
    double expect = 0.0;
    for (double v : seq.frames.data()) expect += (c - v) * (c - v) + (1.0 - cfg.sigma_min) * (1.0 - cfg.sigma_min);
    expect /= static_cast<double>(t * d);

    Rng loss_rng(74, 0);
    const std::size_t calls = 4000;  // 4000 * 25 = 1e5 scalar draws
    double acc = 0.0;
    for (std::size_t i = 0; i < calls; ++i) acc += otcfm_loss(seq, mu, const_field, loss_rng, cfg).item();
    acc /= static_cast<double>(calls);
    REQUIRE(std::abs(acc - expect) / expect < 0.01);
}

TEST_CASE("noise schedule endpoints in closed form") {
    ScoreMatchingConfig cfg;
    // integral of beta over [0,1] = beta_0 + (beta_1 - beta_0)/2
    const double integral = cfg.beta_0 + 0.5 * (cfg.beta_1 - cfg.beta_0);
    REQUIRE(integral == Catch::Approx(10.025).margin(1e-12));
    REQUIRE(cfg.alpha(1.0) == Catch::Approx(std::exp(-5.0125)).margin(1e-12));
    const double s_eps = cfg.sigma(cfg.t_floor);
    REQUIRE(s_eps * s_eps <= 1e-4);
    REQUIRE(cfg.beta(0.0) == Catch::Approx(0.05));
    REQUIRE(cfg.beta(1.0) == Catch::Approx(20.0));
}

TEST_CASE("the exact kernel noise zeroes the score-matching loss") {
    Rng rng(75, 0);
    auto seq = make_seq(rng, 6, 2, 1);
    auto mu = Tensor<double>::zeros({6, 3});
    ScoreMatchingConfig cfg;
    // Inverting the perturbation x_t = a x1 + s z gives the noise the net is
    // asked to predict; -noise / s is then the exact kernel score.
    auto oracle_noise = [&](const Tensor<double>& x_t, double t, const Tensor<double>&, const Mask&) {
        const double a = cfg.alpha(t), s = cfg.sigma(t);
        return scale(sub(x_t, scale(seq.frames, a)), 1.0 / s);
    };
    Rng loss_rng(76, 0);
    for (int i = 0; i < 5; ++i) {
        auto loss = score_matching_loss(seq, mu, oracle_noise, loss_rng, cfg);
        REQUIRE(loss.item() < 1e-18);
    }
}

TEST_CASE("a small net learns the closed-form Gaussian score") {
    const double data_mean = 1.5, data_std = 0.8;
    Rng init_rng(77, 0);
    Linear<double> l1(init_rng, 2, 32), l2(init_rng, 32, 32), l3(init_rng, 32, 1);
    ParamList<double> params;
    l1.register_params(params, "l1");
    l2.register_params(params, "l2");
    l3.register_params(params, "l3");
    auto score_net = [&](const Tensor<double>& x_t, double t, const Tensor<double>&, const Mask&) {
        auto tcol = Tensor<double>::full({x_t.dim(0), 1}, t);
        auto h = concat(x_t, tcol, 1);
        return l3.forward(silu(l2.forward(silu(l1.forward(h)))));
    };

    ScoreMatchingConfig cfg;
    AdamConfig acfg;
    acfg.lr = 5e-3;
    acfg.clip_norm = 0.0;
    Adam<double> opt(params, acfg);
    Rng train_rng(78, 0);
    auto mu = Tensor<double>::zeros({32, 1});
    for (int update = 0; update < 1500; ++update) {
        JointFrameSequence<double> seq;
        seq.acoustic_dim = 1;
        seq.motion_dim = 0;
        seq.frames = add_scalar(scale(gaussian<double>(train_rng, {32, 1}), data_std), data_mean);
        seq.mask = full_mask(32);
        auto loss = score_matching_loss(seq, mu, score_net, train_rng, cfg);
        opt.zero_grad();
        backward(loss);
        opt.step();
    }

    // Optimal score of the perturbed marginal: -(x - a m) / (a^2 s_d^2 + s^2).
    // The net predicts noise, so its implied score is -output / sigma(t).
    double num = 0.0, den = 0.0;
    NoGradGuard ng;
    for (double t : {0.2, 0.4, 0.6, 0.8, 1.0}) {
        const double a = cfg.alpha(t);
        const double var = a * a * data_std * data_std + cfg.sigma(t) * cfg.sigma(t);
        const double center = a * data_mean, spread = 3.0 * std::sqrt(var);
        for (int i = 0; i <= 20; ++i) {
            const double x = center - spread + 2.0 * spread * i / 20.0;
            const double want = -(x - center) / var;
            auto got = score_net(Tensor<double>::full({1, 1}, x), t, mu, full_mask(1));
            const double got_score = -got.item() / cfg.sigma(t);
            num += (got_score - want) * (got_score - want);
            den += want * want;
        }
    }
    REQUIRE(num / den < 0.05);
}

TEST_CASE("prior loss analytic point and formula") {
    auto x = Tensor<double>::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
    auto same = Tensor<double>::from_data({3, 2}, {1, 2, 3, 4, 5, 6});
    auto zero = prior_loss(same, x, full_mask(3));
    REQUIRE(zero.item() == Catch::Approx(std::log(2.0 * M_PI)).margin(1e-12));

    Rng rng(79, 0);
    auto mu = rand_tensor(rng, {4, 3});
    auto x1 = rand_tensor(rng, {4, 3});
    Mask m{1, 0, 1, 1};
    auto loss = prior_loss(mu, x1, m);
    double expect = 0.0;
    for (std::size_t i : {0, 2, 3}) {
        for (std::size_t j = 0; j < 3; ++j) {
            const double d = x1.data()[i * 3 + j] - mu.data()[i * 3 + j];
            expect += 0.5 * d * d;
        }
    }
    expect = expect / 3.0 + 1.5 * std::log(2.0 * M_PI);
    REQUIRE(loss.item() == Catch::Approx(expect).margin(1e-12));

    // content at the masked frame is irrelevant
    auto x1b = Tensor<double>::from_data(x1.shape(), x1.data());
    x1b.data()[1 * 3 + 0] = 100.0;
    REQUIRE(prior_loss(mu, x1b, m).item() == Catch::Approx(loss.item()).margin(1e-12));
}

TEST_CASE("duration loss analytic points and formula") {
    auto perfect = Tensor<double>::from_data({3}, {std::log(2.0 + 1e-8), std::log(5.0 + 1e-8), std::log(1.0 + 1e-8)});
    REQUIRE(duration_loss(perfect, {2, 5, 1}, full_mask(3)).item() < 1e-24);

    auto zeros = Tensor<double>::zeros({1});
    REQUIRE(duration_loss(zeros, {1}, full_mask(1)).item() < 1e-15);

    Rng rng(80, 0);
    auto pred = rand_tensor(rng, {4});
    std::vector<std::size_t> durs{3, 1, 7, 2};
    Mask m{1, 1, 0, 1};
    auto loss = duration_loss(pred, durs, m);
    double expect = 0.0;
    for (std::size_t i : {0, 1, 3}) {
        const double d = pred.data()[i] - std::log(static_cast<double>(durs[i]) + 1e-8);
        expect += d * d;
    }
    expect /= 3.0;
    REQUIRE(loss.item() == Catch::Approx(expect).margin(1e-12));
}

TEST_CASE("masked frames contribute nothing to either regime loss") {
    Rng rng(81, 0);
    UNetConfig ucfg;
    ucfg.d_joint = 3;
    ucfg.down_dims = {4, 6};
    ucfg.mid_dims = {6, 6};
    ucfg.up_dims = {6, 4};
    ucfg.heads = 1;
    ucfg.head_dim = 4;
    ucfg.ffn_mult = 2;
    ucfg.t_emb_dim = 8;
    UNet<double> net(rng, ucfg);
    auto field = [&](const Tensor<double>& x_t, double t, const Tensor<double>& mu, const Mask& mask) {
        return net.vector_field(x_t, t, mu, mask);
    };

    JointFrameSequence<double> seq;
    seq.acoustic_dim = 2;
    seq.motion_dim = 1;
    seq.frames = gaussian<double>(rng, {6, 3});
    seq.mask = Mask{1, 1, 1, 1, 0, 0};
    auto mu = gaussian<double>(rng, {6, 3});

    auto seq2 = seq;
    seq2.frames = Tensor<double>::from_data(seq.frames.shape(), seq.frames.data());
    auto mu2 = Tensor<double>::from_data(mu.shape(), mu.data());
    for (std::size_t j = 0; j < 3; ++j) {
        seq2.frames.data()[5 * 3 + j] = -40.0;
        mu2.data()[4 * 3 + j] = 40.0;
    }

    OtcfmConfig ocfg;
    Rng ra(82, 0), rb(82, 0);
    auto la = otcfm_loss(seq, mu, field, ra, ocfg);
    auto lb = otcfm_loss(seq2, mu2, field, rb, ocfg);
    REQUIRE(la.item() == Catch::Approx(lb.item()).margin(1e-12));

    ScoreMatchingConfig scfg;
    Rng rc(83, 0), rd(83, 0);
    auto lc = score_matching_loss(seq, mu, field, rc, scfg);
    auto ld = score_matching_loss(seq2, mu2, field, rd, scfg);
    REQUIRE(lc.item() == Catch::Approx(ld.item()).margin(1e-12));
}

TEST_CASE("regime losses pass the finite-difference suite at toy dims") {
    Rng rng(84, 0);
    UNetConfig ucfg;
    ucfg.d_joint = 3;
    ucfg.down_dims = {4, 4};
    ucfg.mid_dims = {4, 4};
    ucfg.up_dims = {4, 4};
    ucfg.heads = 1;
    ucfg.head_dim = 4;
    ucfg.ffn_mult = 2;
    ucfg.t_emb_dim = 8;
    UNet<double> net(rng, ucfg);
    ParamList<double> params;
    net.register_params(params, "u");
    std::vector<Tensor<double>> grads;
    for (auto& [name, p] : params) grads.push_back(p);

    JointFrameSequence<double> seq;
    seq.acoustic_dim = 2;
    seq.motion_dim = 1;
    seq.frames = gaussian<double>(rng, {4, 3});
    seq.mask = full_mask(4);
    auto mu = gaussian<double>(rng, {4, 3});
    auto field = [&](const Tensor<double>& x_t, double t, const Tensor<double>& m, const Mask& mask) {
        return net.vector_field(x_t, t, m, mask);
    };

    SECTION("flow matching") {
        OtcfmConfig cfg;
        auto loss = [=, &net] {
            Rng fixed(85, 0);
            auto f = [&](const Tensor<double>& x_t, double t, const Tensor<double>& m, const Mask& mask) {
                return net.vector_field(x_t, t, m, mask);
            };
            return otcfm_loss(seq, mu, f, fixed, cfg);
        };
        REQUIRE(max_rel_grad_error(loss, grads) < 1e-4);
    }

    SECTION("score matching") {
        ScoreMatchingConfig cfg;
        auto loss = [=, &net] {
            Rng fixed(86, 0);
            auto f = [&](const Tensor<double>& x_t, double t, const Tensor<double>& m, const Mask& mask) {
                return net.vector_field(x_t, t, m, mask);
            };
            return score_matching_loss(seq, mu, f, fixed, cfg);
        };
        REQUIRE(max_rel_grad_error(loss, grads) < 1e-4);
    }

    SECTION("duration and prior") {
        Linear<double> head(rng, 3, 1);
        auto loss = [=, &head] {
            auto ld = reshape(head.forward(mu), {4});
            auto dl = duration_loss(ld, {2, 1, 3, 1}, full_mask(4));
            auto pl = prior_loss(head.forward(seq.frames), slice(mu, 1, 0, 1), seq.mask);
            return add(dl, pl);
        };
        REQUIRE(max_rel_grad_error(loss, {head.weight, head.bias}) < 1e-5);
    }
}
