#pragma once

#include <cmath>
#include <cstddef>
#include <vector>

#include "flowsynth/common.hpp"
#include "flowsynth/nn.hpp"
#include "flowsynth/tensor.hpp"

namespace flowsynth {

struct AdamConfig {
    double lr = 1e-4;
    double beta1 = 0.9;
    double beta2 = 0.999;
    double eps = 1e-8;
    double clip_norm = 1.0;  // global gradient norm; <= 0 disables clipping
};

// Adam over a fixed parameter list with global-norm gradient clipping.
// Moment buffers are exposed for checkpointing.
template <typename T>
class Adam {
public:
    Adam() = default;
    Adam(const ParamList<T>& params, const AdamConfig& cfg) : cfg_(cfg) {
        if (cfg_.lr <= 0) throw ConfigError("adam: learning rate must be positive");
        for (const auto& [name, p] : params) {
            params_.push_back(p);
            m_.emplace_back(p.size(), T(0));
            v_.emplace_back(p.size(), T(0));
        }
    }

    // One update from the currently accumulated gradients. Returns the
    // pre-clip global gradient norm. Gradients are left in place; call
    // zero_grad() before the next accumulation.
    double step() {
        ++step_count_;
        double sq = 0.0;
        for (auto& p : params_) {
            for (T g : p.grad()) sq += static_cast<double>(g) * static_cast<double>(g);
        }
        const double norm = std::sqrt(sq);
        const T scale_g =
            (cfg_.clip_norm > 0 && norm > cfg_.clip_norm) ? static_cast<T>(cfg_.clip_norm / norm) : T(1);
        const double bc1 = 1.0 - std::pow(cfg_.beta1, static_cast<double>(step_count_));
        const double bc2 = 1.0 - std::pow(cfg_.beta2, static_cast<double>(step_count_));
        const T lr = static_cast<T>(cfg_.lr);
        const T b1 = static_cast<T>(cfg_.beta1), b2 = static_cast<T>(cfg_.beta2);
        const T eps = static_cast<T>(cfg_.eps);
        for (std::size_t i = 0; i < params_.size(); ++i) {
            auto& val = params_[i].data();
            const auto& grad = params_[i].grad();
            auto& m = m_[i];
            auto& v = v_[i];
            for (std::size_t j = 0; j < val.size(); ++j) {
                const T g = grad[j] * scale_g;
                m[j] = b1 * m[j] + (T(1) - b1) * g;
                v[j] = b2 * v[j] + (T(1) - b2) * g * g;
                const T mhat = m[j] / static_cast<T>(bc1);
                const T vhat = v[j] / static_cast<T>(bc2);
                val[j] -= lr * mhat / (std::sqrt(vhat) + eps);
            }
        }
        return norm;
    }

    void zero_grad() {
        for (auto& p : params_) p.zero_grad();
    }

    std::size_t step_count() const { return step_count_; }
    void set_step_count(std::size_t n) { step_count_ = n; }
    std::vector<std::vector<T>>& moment1() { return m_; }
    std::vector<std::vector<T>>& moment2() { return v_; }
    const AdamConfig& config() const { return cfg_; }

private:
    AdamConfig cfg_;
    std::vector<Tensor<T>> params_;
    std::vector<std::vector<T>> m_, v_;
    std::size_t step_count_ = 0;
};

}  // namespace flowsynth
