#pragma once

#include <algorithm>
#include <cmath>
#include <cstddef>
#include <string>

#include "smelu/error.hpp"
#include "smelu/net.hpp"

namespace smelu {

struct OptimizerConfig {
    enum class Kind { SgdMomentum, Adagrad, Adam };
    Kind kind = Kind::SgdMomentum;
    double lr = 0.01;
    double momentum = 0.0;         ///< sgd
    double accumulator_init = 0.1; ///< adagrad
    double beta1 = 0.9;            ///< adam
    double beta2 = 0.999;
    double eps = 1e-7;
    std::size_t batch_size = 32;
    double min_beta = 1e-3; ///< floor for trainable SmeLU betas after each step

    static OptimizerConfig sgd(double lr, double momentum = 0.0, std::size_t batch = 32)
    {
        OptimizerConfig c;
        c.kind = Kind::SgdMomentum;
        c.lr = lr;
        c.momentum = momentum;
        c.batch_size = batch;
        return c;
    }

    static OptimizerConfig adagrad(double lr, double accumulator_init = 0.1, std::size_t batch = 32)
    {
        OptimizerConfig c;
        c.kind = Kind::Adagrad;
        c.lr = lr;
        c.accumulator_init = accumulator_init;
        c.batch_size = batch;
        return c;
    }

    static OptimizerConfig adam(double lr, double beta1 = 0.9, double beta2 = 0.999, double eps = 1e-7,
                                std::size_t batch = 32)
    {
        OptimizerConfig c;
        c.kind = Kind::Adam;
        c.lr = lr;
        c.beta1 = beta1;
        c.beta2 = beta2;
        c.eps = eps;
        c.batch_size = batch;
        return c;
    }

    void validate() const
    {
        if (!(lr > 0.0)) throw ParameterError("optimizer: lr must be > 0");
        if (!(momentum >= 0.0 && momentum < 1.0)) throw ParameterError("optimizer: momentum must be in [0, 1)");
        if (!(accumulator_init >= 0.0)) throw ParameterError("optimizer: accumulator_init must be >= 0");
        if (!(beta1 >= 0.0 && beta1 < 1.0) || !(beta2 >= 0.0 && beta2 < 1.0))
            throw ParameterError("optimizer: adam betas must be in [0, 1)");
        if (batch_size == 0) throw ParameterError("optimizer: batch_size must be positive");
    }
};

/// Per-parameter slots: velocity (sgd), accumulator (adagrad), or first and
/// second moments (adam).
struct OptimizerState {
    ParamSet first;
    ParamSet second;
    std::size_t steps = 0;
};

inline OptimizerState make_state(const Network& net, const OptimizerConfig& cfg)
{
    cfg.validate();
    OptimizerState s{zeros_like(net.params()), zeros_like(net.params()), 0};
    if (cfg.kind == OptimizerConfig::Kind::Adagrad) {
        for (auto& l : s.first) {
            std::fill(l.weights.data.begin(), l.weights.data.end(), cfg.accumulator_init);
            std::fill(l.bias.begin(), l.bias.end(), cfg.accumulator_init);
            l.beta = cfg.accumulator_init;
        }
    }
    return s;
}

namespace detail {

struct UpdateRule {
    const OptimizerConfig& cfg;
    double adam_c1 = 1.0; // 1 - beta1^t
    double adam_c2 = 1.0; // 1 - beta2^t

    double operator()(double& w, double g, double& s1, double& s2) const
    {
        double delta = 0.0;
        switch (cfg.kind) {
        case OptimizerConfig::Kind::SgdMomentum:
            s1 = cfg.momentum * s1 - cfg.lr * g;
            delta = s1;
            break;
        case OptimizerConfig::Kind::Adagrad:
            s1 += g * g;
            delta = s1 > 0.0 ? -cfg.lr * g / std::sqrt(s1) : 0.0;
            break;
        case OptimizerConfig::Kind::Adam: {
            s1 = cfg.beta1 * s1 + (1.0 - cfg.beta1) * g;
            s2 = cfg.beta2 * s2 + (1.0 - cfg.beta2) * g * g;
            const double mhat = s1 / adam_c1;
            const double vhat = s2 / adam_c2;
            delta = -cfg.lr * mhat / (std::sqrt(vhat) + cfg.eps);
            break;
        }
        }
        w += delta;
        return w;
    }
};

} // namespace detail

/// Applies one update in place. Parameters are visited in a fixed order
/// (layer, weights row-major, bias, beta), so equal inputs give bit-equal outputs.
inline void step(Network& net, const ParamSet& grads, OptimizerState& state, const OptimizerConfig& cfg)
{
    auto& params = net.mutable_params();
    if (grads.size() != params.size() || state.first.size() != params.size())
        throw DimensionError("optimizer: gradient/state shapes do not match the network");
    ++state.steps;
    detail::UpdateRule rule{cfg};
    if (cfg.kind == OptimizerConfig::Kind::Adam) {
        rule.adam_c1 = 1.0 - std::pow(cfg.beta1, static_cast<double>(state.steps));
        rule.adam_c2 = 1.0 - std::pow(cfg.beta2, static_cast<double>(state.steps));
    }

    bool finite = true;
    for (std::size_t li = 0; li < params.size(); ++li) {
        auto& p = params[li];
        const auto& g = grads[li];
        auto& s1 = state.first[li];
        auto& s2 = state.second[li];
        if (g.weights.data.size() != p.weights.data.size() || g.bias.size() != p.bias.size())
            throw DimensionError("optimizer: gradient shape mismatch in layer " + std::to_string(li));
        for (std::size_t i = 0; i < p.weights.data.size(); ++i)
            finite &= std::isfinite(rule(p.weights.data[i], g.weights.data[i], s1.weights.data[i], s2.weights.data[i]));
        for (std::size_t i = 0; i < p.bias.size(); ++i)
            finite &= std::isfinite(rule(p.bias[i], g.bias[i], s1.bias[i], s2.bias[i]));
        if (net.config().layers[li].trainable_beta) {
            finite &= std::isfinite(rule(p.beta, g.beta, s1.beta, s2.beta));
            p.beta = std::max(p.beta, cfg.min_beta);
        }
    }
    if (!finite) throw NumericFault("non-finite parameter after optimizer step");
}

} // namespace smelu
