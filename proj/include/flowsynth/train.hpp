#pragma once

#include <chrono>
#include <cmath>
#include <functional>
#include <string>
#include <vector>

#include "flowsynth/align.hpp"
#include "flowsynth/common.hpp"
#include "flowsynth/losses.hpp"
#include "flowsynth/model.hpp"
#include "flowsynth/optim.hpp"
#include "flowsynth/rng.hpp"
#include "flowsynth/toydata.hpp"

namespace flowsynth {

struct TrainConfig {
    std::size_t batch_size = 32;
    double learning_rate = 1e-4;
    std::size_t updates = 0;
    Regime regime = Regime::otcfm;
    double prior_weight = 1.0;
    double duration_weight = 1.0;
    std::uint64_t seed = 0;
    std::size_t log_interval = 50;
    std::uint64_t rng_stream = 1;  // distinct streams keep co-trained models decorrelated

    bool operator==(const TrainConfig&) const = default;

    void validate() const {
        if (batch_size < 1) throw ConfigError("train: batch_size must be positive");
        if (learning_rate <= 0.0) throw ConfigError("train: learning_rate must be positive");
        if (log_interval < 1) throw ConfigError("train: log_interval must be positive");
    }
};

struct TrainRecord {
    std::size_t update = 0;
    double loss_total = 0.0;
    double loss_cfm_or_sm = 0.0;
    double loss_prior = 0.0;
    double loss_dur = 0.0;
    double seconds_elapsed = 0.0;
};

using TrainSink = std::function<void(const TrainRecord&)>;

// Owns the optimization loop state so a run can stop and continue without
// losing bitwise determinism: batches are drawn i.i.d. with replacement from
// one counter-based stream, making the rng counter (plus Adam state) the
// complete resume point.
template <typename T>
class Trainer {
public:
    Trainer(Model<T>& model, const TrainConfig& cfg)
        : model_(model), cfg_(cfg), rng_(cfg.seed, cfg.rng_stream) {
        cfg_.validate();
        if (cfg_.regime != model.cfg.regime)
            throw ConfigError(std::string("train: config regime ") + regime_name(cfg_.regime) +
                              " does not match model regime " + regime_name(model.cfg.regime));
        model_.register_params(params_, "model");
        AdamConfig acfg;
        acfg.lr = cfg_.learning_rate;
        opt_ = Adam<T>(params_, acfg);
    }

    // One full forward pass for a single utterance: encode, hard-align the
    // encoder means to the target frames, then score the three loss parts.
    struct UtteranceLosses {
        Tensor<T> regime, prior, duration;
    };

    UtteranceLosses utterance_losses(const ToyUtterance<T>& utt) {
        const auto& x1 = utt.frames;
        x1.validate();
        const Mask token_mask = full_mask(utt.tokens.size());
        auto enc = model_.encoder.encode(utt.tokens, token_mask);
        const Alignment ali = mas_align(enc.mu, x1.frames, token_mask, x1.mask);
        auto mu_frames = upsample(enc.mu, ali.durations);

        UtteranceLosses out;
        auto field = [this](const Tensor<T>& x_t, T t, const Tensor<T>& mu, const Mask& mask) {
            return model_.unet.vector_field(x_t, static_cast<double>(t), mu, mask);
        };
        if (cfg_.regime == Regime::otcfm)
            out.regime = otcfm_loss(x1, mu_frames, field, rng_, model_.cfg.otcfm);
        else
            out.regime = score_matching_loss(x1, mu_frames, field, rng_, model_.cfg.sm);
        out.prior = prior_loss(mu_frames, x1.frames, x1.mask);
        out.duration = duration_loss(enc.log_durations, ali.durations, token_mask);
        return out;
    }

    // Advances n_updates steps. Emits a record to sink every log_interval
    // updates and on the final one.
    void run(const std::vector<ToyUtterance<T>>& dataset, std::size_t n_updates, const TrainSink& sink = {}) {
        if (dataset.empty()) throw ValueError("train: dataset is empty");
        using clock = std::chrono::steady_clock;
        const auto start = clock::now();
        const T inv_batch = T(1) / static_cast<T>(cfg_.batch_size);

        for (std::size_t step = 0; step < n_updates; ++step) {
            Tensor<T> regime_sum, prior_sum, dur_sum;
            for (std::size_t b = 0; b < cfg_.batch_size; ++b) {
                const std::size_t idx = rng_.next_below(dataset.size());
                auto losses = utterance_losses(dataset[idx]);
                regime_sum = b == 0 ? losses.regime : add(regime_sum, losses.regime);
                prior_sum = b == 0 ? losses.prior : add(prior_sum, losses.prior);
                dur_sum = b == 0 ? losses.duration : add(dur_sum, losses.duration);
            }
            auto regime_mean = scale(regime_sum, inv_batch);
            auto prior_mean = scale(prior_sum, inv_batch);
            auto dur_mean = scale(dur_sum, inv_batch);
            auto total = add(regime_mean, add(scale(prior_mean, static_cast<T>(cfg_.prior_weight)),
                                              scale(dur_mean, static_cast<T>(cfg_.duration_weight))));

            TrainRecord rec;
            rec.update = update_count_ + 1;
            rec.loss_cfm_or_sm = static_cast<double>(regime_mean.item());
            rec.loss_prior = static_cast<double>(prior_mean.item());
            rec.loss_dur = static_cast<double>(dur_mean.item());
            rec.loss_total = static_cast<double>(total.item());
            check_finite(rec);

            opt_.zero_grad();
            backward(total);
            opt_.step();
            ++update_count_;

            if (sink && (update_count_ % cfg_.log_interval == 0 || step + 1 == n_updates)) {
                rec.seconds_elapsed = seconds_base_ + std::chrono::duration<double>(clock::now() - start).count();
                sink(rec);
            }
        }
        seconds_base_ += std::chrono::duration<double>(clock::now() - start).count();
    }

    Model<T>& model() { return model_; }
    ParamList<T>& params() { return params_; }
    Adam<T>& optimizer() { return opt_; }
    Rng& rng() { return rng_; }
    std::size_t update_count() const { return update_count_; }
    double seconds_elapsed() const { return seconds_base_; }
    const TrainConfig& config() const { return cfg_; }

    // Resume support: restore the exact loop position recorded at save time.
    void restore_progress(std::size_t update_count, std::uint64_t rng_counter, double seconds) {
        update_count_ = update_count;
        rng_.set_counter(rng_counter);
        opt_.set_step_count(update_count);
        seconds_base_ = seconds;
    }

private:
    void check_finite(const TrainRecord& rec) const {
        const char* regime_label = cfg_.regime == Regime::otcfm ? "flow-matching loss" : "score-matching loss";
        if (!std::isfinite(rec.loss_cfm_or_sm))
            throw NumericError(std::string("train: ") + regime_label + " became non-finite at update " +
                               std::to_string(rec.update));
        if (!std::isfinite(rec.loss_prior))
            throw NumericError("train: prior loss became non-finite at update " + std::to_string(rec.update));
        if (!std::isfinite(rec.loss_dur))
            throw NumericError("train: duration loss became non-finite at update " + std::to_string(rec.update));
    }

    Model<T>& model_;
    TrainConfig cfg_;
    Rng rng_;
    ParamList<T> params_;
    Adam<T> opt_;
    std::size_t update_count_ = 0;
    double seconds_base_ = 0.0;
};

// One-shot convenience wrapper: cfg.updates steps, records returned.
template <typename T>
std::vector<TrainRecord> train(const std::vector<ToyUtterance<T>>& dataset, Model<T>& model, const TrainConfig& cfg) {
    Trainer<T> trainer(model, cfg);
    std::vector<TrainRecord> records;
    trainer.run(dataset, cfg.updates, [&](const TrainRecord& r) { records.push_back(r); });
    return records;
}

}  // namespace flowsynth
