#pragma once

#include <algorithm>
#include <cmath>
#include <cstdint>
#include <optional>
#include <span>
#include <string>
#include <utility>
#include <vector>

#include <nlohmann/json.hpp>

#include "smelu/activations.hpp"
#include "smelu/error.hpp"
#include "smelu/grammar.hpp"
#include "smelu/matrix.hpp"
#include "smelu/random.hpp"

namespace smelu {

/// Scaling applied around a layer's affine map.
///   weight: each incoming weight row w_j is replaced by v * w_j / ||w_j||_2
///           (a reparameterization; gradients flow through it).
///   layer:  the pre-activation vector z of each example is replaced by
///           v * z / ||z||_2, without mean centering.
struct Normalization {
    enum class Mode { None, Weight, Layer };
    Mode mode = Mode::None;
    double v = 1.0;

    static Normalization none() { return {}; }
    static Normalization weight(double v = 1.0) { return {Mode::Weight, v}; }
    static Normalization layer(double v = 1.0) { return {Mode::Layer, v}; }
};

struct ClipRange {
    double lo = -6.0;
    double hi = 6.0;
};

struct LayerConfig {
    std::size_t in_dim = 0;
    std::size_t out_dim = 0;
    ActivationSpec activation = ActivationSpec::linear();
    Normalization normalization{};
    std::optional<ClipRange> clip;
    double dropout_keep = 1.0; ///< applied to this layer's output in train mode
    bool trainable_beta = false; ///< SmeLU only

    void validate() const
    {
        if (in_dim == 0 || out_dim == 0) throw ParameterError("layer dims must be positive");
        if (normalization.mode != Normalization::Mode::None && !(normalization.v > 0.0))
            throw ParameterError("normalization norm v must be > 0");
        if (clip && !(clip->lo < clip->hi)) throw ParameterError("clip lo must be < hi");
        if (!(dropout_keep > 0.0 && dropout_keep <= 1.0)) throw ParameterError("dropout_keep must be in (0, 1]");
        if (trainable_beta && activation.kind() != ActivationKind::SmeLU)
            throw ParameterError("trainable_beta requires a smelu activation");
    }
};

enum class InitScheme {
    GlorotUniform, ///< U(-sqrt(6/(fan_in+fan_out)), +...), the Keras default
    StandardNormal,
};

struct NetworkConfig {
    std::vector<LayerConfig> layers;
    double input_keep = 1.0; ///< dropout keep probability on the network input
    InitScheme init = InitScheme::GlorotUniform;

    void validate() const
    {
        if (layers.empty()) throw ParameterError("network needs at least one layer");
        for (std::size_t i = 0; i < layers.size(); ++i) {
            layers[i].validate();
            if (i > 0 && layers[i].in_dim != layers[i - 1].out_dim)
                throw DimensionError("layer " + std::to_string(i) + " in_dim does not match previous out_dim");
        }
        if (!(input_keep > 0.0 && input_keep <= 1.0)) throw ParameterError("input_keep must be in (0, 1]");
    }
};

struct LayerParams {
    Matrix weights; ///< out_dim x in_dim, raw (before weight normalization)
    std::vector<double> bias;
    double beta = 0.0; ///< live SmeLU beta when trainable

    friend bool operator==(const LayerParams&, const LayerParams&) = default;
};

/// Same shape as the parameters; also used for optimizer slots.
using ParamSet = std::vector<LayerParams>;

inline ParamSet zeros_like(const ParamSet& p)
{
    ParamSet z;
    for (const auto& l : p) z.push_back({Matrix(l.weights.rows, l.weights.cols), std::vector<double>(l.bias.size()), 0.0});
    return z;
}

class Network {
public:
    Network(NetworkConfig config, ParamSet params) : config_(std::move(config)), params_(std::move(params))
    {
        config_.validate();
        if (params_.size() != config_.layers.size()) throw DimensionError("parameter count does not match layers");
        for (std::size_t i = 0; i < params_.size(); ++i) {
            const auto& lc = config_.layers[i];
            const auto& p = params_[i];
            if (p.weights.rows != lc.out_dim || p.weights.cols != lc.in_dim || p.bias.size() != lc.out_dim)
                throw DimensionError("layer " + std::to_string(i) + " parameter shape mismatch");
        }
    }

    const NetworkConfig& config() const noexcept { return config_; }
    const ParamSet& params() const noexcept { return params_; }
    std::size_t in_dim() const { return config_.layers.front().in_dim; }
    std::size_t out_dim() const { return config_.layers.back().out_dim; }

    /// Changes on every parameter update; forward caches record it.
    std::uint64_t version() const noexcept { return version_; }

    /// Mutable access for optimizers. Bumps the version.
    ParamSet& mutable_params()
    {
        ++version_;
        return params_;
    }

    /// The activation layer `i` uses right now (trainable beta folded in).
    ActivationSpec activation(std::size_t i) const
    {
        const auto& lc = config_.layers[i];
        return lc.trainable_beta ? lc.activation.with_beta(params_[i].beta) : lc.activation;
    }

    friend bool operator==(const Network& a, const Network& b) { return a.params_ == b.params_; }

private:
    NetworkConfig config_;
    ParamSet params_;
    std::uint64_t version_ = 0;
};

/// Weights drawn from the seeded stream layer by layer, row-major; biases 0.
inline Network init(const NetworkConfig& config, std::uint64_t seed)
{
    config.validate();
    Rng rng(seed);
    ParamSet params;
    for (const auto& lc : config.layers) {
        LayerParams p{Matrix(lc.out_dim, lc.in_dim), std::vector<double>(lc.out_dim, 0.0), lc.activation.beta()};
        const double limit = std::sqrt(6.0 / static_cast<double>(lc.in_dim + lc.out_dim));
        for (double& w : p.weights.data)
            w = config.init == InitScheme::GlorotUniform ? rng.uniform(-limit, limit) : rng.normal();
        params.push_back(std::move(p));
    }
    return Network(config, std::move(params));
}

inline Network init(const std::vector<LayerConfig>& layers, std::uint64_t seed)
{
    return init(NetworkConfig{layers}, seed);
}

enum class Mode { Train, Infer };

/// Everything backward needs from one forward pass.
struct ForwardCache {
    struct Layer {
        Matrix input;              ///< batch x in (after input/previous dropout)
        Matrix effective_weights;  ///< weights actually multiplied (normalized if configured)
        std::vector<double> row_norms;    ///< ||w_j|| for weight norm
        Matrix pre_norm;           ///< z = x W^T + b
        std::vector<double> example_norms; ///< ||z_b|| for layer norm
        Matrix pre_activation;     ///< after normalization and clipping
        std::vector<std::uint8_t> clip_pass;
        std::vector<double> dropout_mask; ///< empty when no dropout
        ActivationSpec activation = ActivationSpec::linear();
    };
    std::vector<Layer> layers;
    std::uint64_t version = 0;
    bool train = false;
};

namespace detail {

inline void check_finite(const Matrix& m, const char* where)
{
    if (!m.all_finite()) throw NumericFault(std::string("non-finite values in ") + where);
}

inline std::vector<double> dropout_mask(std::size_t n, double keep, Rng& rng)
{
    std::vector<double> mask(n);
    const double scale = 1.0 / keep;
    for (double& m : mask) m = rng.bernoulli(keep) ? scale : 0.0;
    return mask;
}

} // namespace detail

/// Forward pass; returns the last layer's output (logits) and fills `cache`.
/// `rng` is required when any dropout is active in train mode.
inline Matrix forward(const Network& net, const Matrix& inputs, Mode mode, Rng* rng, ForwardCache* cache = nullptr)
{
    if (inputs.cols != net.in_dim())
        throw DimensionError("input width " + std::to_string(inputs.cols) + " != " + std::to_string(net.in_dim()));
    detail::check_finite(inputs, "network input");
    const bool train = mode == Mode::Train;
    const auto& cfg = net.config();
    auto need_rng = [&](double keep) {
        if (train && keep < 1.0 && rng == nullptr) throw ParameterError("dropout in train mode needs an rng");
        return train && keep < 1.0;
    };
    if (cache) {
        cache->layers.assign(cfg.layers.size(), {});
        cache->version = net.version();
        cache->train = train;
    }

    const std::size_t batch = inputs.rows;
    Matrix x = inputs;
    if (need_rng(cfg.input_keep)) {
        const auto mask = detail::dropout_mask(x.data.size(), cfg.input_keep, *rng);
        for (std::size_t i = 0; i < x.data.size(); ++i) x.data[i] *= mask[i];
    }

    for (std::size_t li = 0; li < cfg.layers.size(); ++li) {
        const auto& lc = cfg.layers[li];
        const auto& p = net.params()[li];
        const auto act = net.activation(li);
        const std::size_t in = lc.in_dim, out = lc.out_dim;

        Matrix w = p.weights;
        std::vector<double> row_norms;
        if (lc.normalization.mode == Normalization::Mode::Weight) {
            row_norms.resize(out);
            for (std::size_t j = 0; j < out; ++j) {
                double ss = 0.0;
                for (double v : p.weights.row(j)) ss += v * v;
                row_norms[j] = std::sqrt(ss);
                if (row_norms[j] == 0.0) throw NumericFault("weight normalization of a zero row");
                const double s = lc.normalization.v / row_norms[j];
                for (double& v : w.row(j)) v *= s;
            }
        }

        // z = x W^T + b, accumulated over k in order for every (b, j)
        Matrix wt(in, out);
        for (std::size_t j = 0; j < out; ++j)
            for (std::size_t k = 0; k < in; ++k) wt(k, j) = w(j, k);
        Matrix z(batch, out);
        for (std::size_t b = 0; b < batch; ++b) {
            auto zr = z.row(b);
            std::copy(p.bias.begin(), p.bias.end(), zr.begin());
            const auto xr = x.row(b);
            for (std::size_t k = 0; k < in; ++k) {
                const double xv = xr[k];
                if (xv == 0.0) continue;
                const double* wk = wt.data.data() + k * out;
                for (std::size_t j = 0; j < out; ++j) zr[j] += xv * wk[j];
            }
        }

        Matrix a = z;
        std::vector<double> example_norms;
        if (lc.normalization.mode == Normalization::Mode::Layer) {
            example_norms.resize(batch);
            for (std::size_t b = 0; b < batch; ++b) {
                double ss = 0.0;
                for (double v : z.row(b)) ss += v * v;
                example_norms[b] = std::max(std::sqrt(ss), 1e-12);
                const double s = lc.normalization.v / example_norms[b];
                for (double& v : a.row(b)) v *= s;
            }
        }

        std::vector<std::uint8_t> clip_pass;
        if (lc.clip) {
            clip_pass.resize(a.data.size());
            for (std::size_t i = 0; i < a.data.size(); ++i) {
                const double v = a.data[i];
                clip_pass[i] = v >= lc.clip->lo && v <= lc.clip->hi;
                a.data[i] = std::clamp(v, lc.clip->lo, lc.clip->hi);
            }
        }

        Matrix h(batch, out);
        for (std::size_t i = 0; i < a.data.size(); ++i) h.data[i] = eval(act, a.data[i]);

        std::vector<double> mask;
        if (need_rng(lc.dropout_keep)) {
            mask = detail::dropout_mask(h.data.size(), lc.dropout_keep, *rng);
            for (std::size_t i = 0; i < h.data.size(); ++i) h.data[i] *= mask[i];
        }
        detail::check_finite(h, "forward pass");

        if (cache) {
            auto& cl = cache->layers[li];
            cl.input = std::move(x);
            cl.effective_weights = std::move(w);
            cl.row_norms = std::move(row_norms);
            cl.pre_norm = std::move(z);
            cl.example_norms = std::move(example_norms);
            cl.pre_activation = std::move(a);
            cl.clip_pass = std::move(clip_pass);
            cl.dropout_mask = std::move(mask);
            cl.activation = act;
        }
        x = std::move(h);
    }
    return x;
}

/// Gradients of a scalar loss with respect to every parameter, given
/// dLoss/dOutput. Trainable betas get their gradient in `beta`.
inline ParamSet backward(const Network& net, const ForwardCache& cache, const Matrix& loss_grad)
{
    if (cache.layers.size() != net.config().layers.size() || cache.version != net.version())
        throw StaleCacheError("forward cache does not match the network's current parameters");
    const auto& cfg = net.config();
    ParamSet grads = zeros_like(net.params());

    Matrix upstream = loss_grad;
    for (std::size_t li = cfg.layers.size(); li-- > 0;) {
        const auto& lc = cfg.layers[li];
        const auto& cl = cache.layers[li];
        const auto& raw = net.params()[li].weights;
        const std::size_t batch = cl.input.rows, in = lc.in_dim, out = lc.out_dim;
        if (upstream.rows != batch || upstream.cols != out) throw DimensionError("loss gradient shape mismatch");
        auto& g = grads[li];

        // through dropout and the activation
        Matrix da(batch, out);
        double dbeta = 0.0;
        for (std::size_t i = 0; i < da.data.size(); ++i) {
            double dh = upstream.data[i];
            if (!cl.dropout_mask.empty()) dh *= cl.dropout_mask[i];
            const double av = cl.pre_activation.data[i];
            da.data[i] = dh * grad(cl.activation, av);
            if (lc.trainable_beta) dbeta += dh * grad_wrt_beta(cl.activation, av);
        }
        g.beta = dbeta;

        if (!cl.clip_pass.empty())
            for (std::size_t i = 0; i < da.data.size(); ++i)
                if (!cl.clip_pass[i]) da.data[i] = 0.0;

        // layer norm: a = v z / ||z||  =>  dz = (v/||z||) (da - u (u . da)), u = z / ||z||
        Matrix dz = da;
        if (lc.normalization.mode == Normalization::Mode::Layer) {
            for (std::size_t b = 0; b < batch; ++b) {
                const double n = cl.example_norms[b];
                const auto zr = cl.pre_norm.row(b);
                const auto dar = da.row(b);
                double dot = 0.0;
                for (std::size_t j = 0; j < out; ++j) dot += zr[j] / n * dar[j];
                auto dzr = dz.row(b);
                for (std::size_t j = 0; j < out; ++j) dzr[j] = lc.normalization.v / n * (dar[j] - zr[j] / n * dot);
            }
        }

        Matrix dw_eff(out, in);
        for (std::size_t b = 0; b < batch; ++b) {
            const auto dzr = dz.row(b);
            const auto xr = cl.input.row(b);
            for (std::size_t j = 0; j < out; ++j) {
                g.bias[j] += dzr[j];
                const double d = dzr[j];
                if (d == 0.0) continue;
                double* wr = dw_eff.data.data() + j * in;
                for (std::size_t k = 0; k < in; ++k) wr[k] += d * xr[k];
            }
        }

        if (lc.normalization.mode == Normalization::Mode::Weight) {
            // w_eff = v w / r  =>  dw = (v/r) (dw_eff - u (u . dw_eff)), u = w / r
            for (std::size_t j = 0; j < out; ++j) {
                const double r = cl.row_norms[j];
                const auto wr = raw.row(j);
                const auto de = dw_eff.row(j);
                double dot = 0.0;
                for (std::size_t k = 0; k < in; ++k) dot += wr[k] / r * de[k];
                auto gr = g.weights.row(j);
                for (std::size_t k = 0; k < in; ++k) gr[k] = lc.normalization.v / r * (de[k] - wr[k] / r * dot);
            }
        } else {
            g.weights = std::move(dw_eff);
        }

        if (li == 0) break;
        Matrix dx(batch, in);
        for (std::size_t b = 0; b < batch; ++b) {
            const auto dzr = dz.row(b);
            auto dxr = dx.row(b);
            for (std::size_t j = 0; j < out; ++j) {
                const double d = dzr[j];
                if (d == 0.0) continue;
                const double* wr = cl.effective_weights.data.data() + j * in;
                for (std::size_t k = 0; k < in; ++k) dxr[k] += d * wr[k];
            }
        }
        upstream = std::move(dx);
    }
    return grads;
}

/// Row-wise softmax.
inline Matrix softmax(const Matrix& logits)
{
    Matrix p(logits.rows, logits.cols);
    for (std::size_t b = 0; b < logits.rows; ++b) {
        const auto r = logits.row(b);
        const double mx = *std::max_element(r.begin(), r.end());
        double sum = 0.0;
        auto pr = p.row(b);
        for (std::size_t j = 0; j < r.size(); ++j) sum += (pr[j] = std::exp(r[j] - mx));
        for (double& v : pr) v /= sum;
    }
    return p;
}

struct LossResult {
    double mean_loss = 0.0;
    std::vector<double> per_example;
    Matrix probabilities;
    Matrix grad; ///< d(mean loss)/d(logits)
};

/// Fused softmax + cross-entropy over a batch.
inline LossResult softmax_cross_entropy(const Matrix& logits, std::span<const int> labels)
{
    if (labels.size() != logits.rows) throw DimensionError("label count does not match batch");
    LossResult r;
    r.probabilities = softmax(logits);
    r.grad = r.probabilities;
    r.per_example.resize(logits.rows);
    const double inv = 1.0 / static_cast<double>(logits.rows);
    for (std::size_t b = 0; b < logits.rows; ++b) {
        const auto lr = logits.row(b);
        const auto label = static_cast<std::size_t>(labels[b]);
        if (label >= logits.cols) throw DimensionError("label out of range");
        const double mx = *std::max_element(lr.begin(), lr.end());
        double sum = 0.0;
        for (double v : lr) sum += std::exp(v - mx);
        r.per_example[b] = mx + std::log(sum) - lr[label];
        r.mean_loss += r.per_example[b];
        r.grad(b, label) -= 1.0;
        for (double& v : r.grad.row(b)) v *= inv;
    }
    r.mean_loss *= inv;
    return r;
}

// Checkpoint format (JSON, "format": "smelu-network", "version": 1):
//   {input_keep, init, layers: [{in_dim, out_dim, activation, normalization: {mode, v},
//    clip: null|[lo,hi], dropout_keep, trainable_beta, beta, weights: [row-major], bias: [...]}]}
inline constexpr int checkpoint_version = 1;

inline nlohmann::json to_json(const Network& net)
{
    nlohmann::json layers = nlohmann::json::array();
    for (std::size_t i = 0; i < net.config().layers.size(); ++i) {
        const auto& lc = net.config().layers[i];
        const auto& p = net.params()[i];
        const char* mode = lc.normalization.mode == Normalization::Mode::Weight  ? "weight"
                           : lc.normalization.mode == Normalization::Mode::Layer ? "layer"
                                                                                 : "none";
        layers.push_back({{"in_dim", lc.in_dim},
                          {"out_dim", lc.out_dim},
                          {"activation", to_json(lc.activation)},
                          {"normalization", {{"mode", mode}, {"v", lc.normalization.v}}},
                          {"clip", lc.clip ? nlohmann::json::array({lc.clip->lo, lc.clip->hi}) : nlohmann::json()},
                          {"dropout_keep", lc.dropout_keep},
                          {"trainable_beta", lc.trainable_beta},
                          {"beta", p.beta},
                          {"weights", p.weights.data},
                          {"bias", p.bias}});
    }
    return {{"format", "smelu-network"},
            {"version", checkpoint_version},
            {"input_keep", net.config().input_keep},
            {"init", net.config().init == InitScheme::GlorotUniform ? "glorot_uniform" : "standard_normal"},
            {"layers", layers}};
}

inline Normalization normalization_from_json(const nlohmann::json& j)
{
    const auto mode = j.at("mode").get<std::string>();
    const double v = j.value("v", 1.0);
    if (mode == "none") return Normalization::none();
    if (mode == "weight") return Normalization::weight(v);
    if (mode == "layer") return Normalization::layer(v);
    throw FormatError("unknown normalization mode '" + mode + "'");
}

inline Network network_from_json(const nlohmann::json& doc)
{
    try {
        if (doc.at("format") != "smelu-network") throw FormatError("not a network checkpoint");
        if (doc.at("version").get<int>() != checkpoint_version)
            throw FormatError("unsupported checkpoint version " + doc.at("version").dump());
        NetworkConfig cfg;
        cfg.input_keep = doc.value("input_keep", 1.0);
        cfg.init = doc.value("init", "glorot_uniform") == "standard_normal" ? InitScheme::StandardNormal
                                                                          : InitScheme::GlorotUniform;
        ParamSet params;
        for (const auto& j : doc.at("layers")) {
            LayerConfig lc;
            lc.in_dim = j.at("in_dim").get<std::size_t>();
            lc.out_dim = j.at("out_dim").get<std::size_t>();
            lc.activation = activation_from_json(j.at("activation"));
            lc.normalization = normalization_from_json(j.at("normalization"));
            if (!j.at("clip").is_null()) lc.clip = ClipRange{j["clip"][0].get<double>(), j["clip"][1].get<double>()};
            lc.dropout_keep = j.at("dropout_keep").get<double>();
            lc.trainable_beta = j.at("trainable_beta").get<bool>();
            LayerParams p;
            p.weights = Matrix(lc.out_dim, lc.in_dim);
            p.weights.data = j.at("weights").get<std::vector<double>>();
            if (p.weights.data.size() != lc.out_dim * lc.in_dim) throw FormatError("weight array size mismatch");
            p.bias = j.at("bias").get<std::vector<double>>();
            p.beta = j.at("beta").get<double>();
            cfg.layers.push_back(std::move(lc));
            params.push_back(std::move(p));
        }
        return Network(std::move(cfg), std::move(params));
    } catch (const nlohmann::json::exception& e) {
        throw FormatError(std::string("network json: ") + e.what());
    }
}

} // namespace smelu
