#include <gtest/gtest.h>

#include <cmath>
#include <random>
#include <vector>

#include "smelu/data.hpp"
#include "smelu/net.hpp"
#include "smelu/optim.hpp"
#include "zoo.hpp"

using namespace smelu;

namespace {

Matrix filled(std::size_t r, std::size_t c, std::vector<double> values)
{
    Matrix m(r, c);
    m.data = std::move(values);
    return m;
}

Matrix random_matrix(std::size_t r, std::size_t c, std::uint64_t seed, double scale = 1.0)
{
    Rng rng(seed);
    Matrix m(r, c);
    for (double& v : m.data) v = scale * rng.normal();
    return m;
}

LayerConfig layer(std::size_t in, std::size_t out, ActivationSpec act = ActivationSpec::linear(),
                  Normalization norm = Normalization::none())
{
    LayerConfig lc;
    lc.in_dim = in;
    lc.out_dim = out;
    lc.activation = std::move(act);
    lc.normalization = norm;
    return lc;
}

Network with_random_biases(Network net, std::uint64_t seed)
{
    Rng rng(seed);
    for (auto& p : net.mutable_params())
        for (double& b : p.bias) b = 0.3 * rng.normal();
    return net;
}

double loss_of(const Network& net, const Matrix& x, const std::vector<int>& y)
{
    return softmax_cross_entropy(forward(net, x, Mode::Infer, nullptr), y).mean_loss;
}

/// Central differences of the mean loss over every parameter, compared with backward().
double worst_gradient_gap(Network net, const Matrix& x, const std::vector<int>& y)
{
    ForwardCache cache;
    const auto logits = forward(net, x, Mode::Train, nullptr, &cache);
    const auto grads = backward(net, cache, softmax_cross_entropy(logits, y).grad);
    const double h = 1e-5;
    double worst = 0.0;
    auto check = [&](double& param, double analytic) {
        const double keep = param;
        param = keep + h;
        const double up = loss_of(net, x, y);
        param = keep - h;
        const double down = loss_of(net, x, y);
        param = keep;
        const double fd = (up - down) / (2.0 * h);
        worst = std::max(worst, std::abs(analytic - fd) / std::max({std::abs(fd), std::abs(analytic), 1e-3}));
    };
    for (std::size_t li = 0; li < net.params().size(); ++li) {
        auto& p = net.mutable_params()[li];
        for (std::size_t i = 0; i < p.weights.data.size(); ++i) check(p.weights.data[i], grads[li].weights.data[i]);
        for (std::size_t i = 0; i < p.bias.size(); ++i) check(p.bias[i], grads[li].bias[i]);
        if (net.config().layers[li].trainable_beta) check(p.beta, grads[li].beta);
    }
    return worst;
}

} // namespace

TEST(Forward, LinearNetworkIsAffine)
{
    const auto net = with_random_biases(init({layer(3, 5), layer(5, 4), layer(4, 2)}, 1), 2);
    const auto x1 = random_matrix(1, 3, 3), x2 = random_matrix(1, 3, 4);
    const auto f1 = forward(net, x1, Mode::Infer, nullptr), f2 = forward(net, x2, Mode::Infer, nullptr);
    for (double t : {0.0, 0.25, 0.7, 1.0}) {
        Matrix mix(1, 3);
        for (std::size_t k = 0; k < 3; ++k) mix.data[k] = t * x1.data[k] + (1 - t) * x2.data[k];
        const auto fm = forward(net, mix, Mode::Infer, nullptr);
        for (std::size_t j = 0; j < 2; ++j) EXPECT_NEAR(fm.data[j], t * f1.data[j] + (1 - t) * f2.data[j], 1e-9);
    }
}

TEST(Forward, WeightNormRowsHaveNormV)
{
    for (double v : {1.0, 2.5}) {
        NetworkConfig cfg{{layer(7, 6, ActivationSpec::smelu(1.0), Normalization::weight(v)),
                           layer(6, 3, ActivationSpec::linear(), Normalization::weight(v))}};
        cfg.init = InitScheme::StandardNormal;
        const auto net = init(cfg, 9);
        ForwardCache cache;
        forward(net, random_matrix(4, 7, 1), Mode::Infer, nullptr, &cache);
        for (const auto& cl : cache.layers)
            for (std::size_t j = 0; j < cl.effective_weights.rows; ++j) {
                double ss = 0.0;
                for (double w : cl.effective_weights.row(j)) ss += w * w;
                EXPECT_NEAR(std::sqrt(ss), v, 1e-12);
            }
    }
}

TEST(Forward, SmeluUnitAtOrigin)
{
    NetworkConfig cfg{{layer(1, 1, ActivationSpec::smelu(1.0), Normalization::weight(1.0))}};
    Network net(cfg, {{filled(1, 1, {1.0}), {0.0}, 1.0}});
    EXPECT_EQ(forward(net, Matrix(1, 1), Mode::Infer, nullptr).data[0], 0.25);
}

TEST(Forward, WeightNormScaleInvariance)
{
    NetworkConfig cfg{{layer(5, 4, ActivationSpec::gelu(1.0), Normalization::weight(1.0)),
                       layer(4, 3, ActivationSpec::linear(), Normalization::weight(1.0))}};
    const auto net = init(cfg, 12);
    const auto x = random_matrix(6, 5, 13);
    const auto base = forward(net, x, Mode::Infer, nullptr);
    auto scaled = [&](double c) {
        auto params = net.params();
        for (auto& p : params)
            for (double& w : p.weights.data) w *= c;
        return forward(Network(cfg, params), x, Mode::Infer, nullptr);
    };
    // exact for powers of two (scaling is exact in binary floating point)
    for (double c : {0.125, 2.0, 1024.0}) EXPECT_EQ(scaled(c), base) << c;
    for (double c : {0.3, 3.7, 1e3}) {
        const auto y = scaled(c);
        for (std::size_t i = 0; i < y.data.size(); ++i)
            EXPECT_NEAR(y.data[i], base.data[i], 1e-12 * std::max(1.0, std::abs(base.data[i]))) << c;
    }
}

TEST(Forward, Errors)
{
    const auto net = init({layer(3, 2, ActivationSpec::relu())}, 1);
    EXPECT_THROW(forward(net, Matrix(2, 4), Mode::Infer, nullptr), DimensionError);

    auto cfg = NetworkConfig{{layer(3, 2, ActivationSpec::relu())}};
    cfg.layers[0].dropout_keep = 0.5;
    EXPECT_THROW(forward(init(cfg, 1), Matrix(2, 3), Mode::Train, nullptr), ParameterError);
    EXPECT_NO_THROW(forward(init(cfg, 1), Matrix(2, 3), Mode::Infer, nullptr));

    Matrix bad(1, 3);
    bad.data[0] = std::numeric_limits<double>::infinity();
    EXPECT_THROW(forward(net, bad, Mode::Infer, nullptr), NumericFault);

    EXPECT_THROW(init({layer(3, 2), layer(3, 2)}, 1), DimensionError);
    auto clipped = layer(3, 2);
    clipped.clip = ClipRange{1.0, -1.0};
    EXPECT_THROW(init({clipped}, 1), ParameterError);
    auto tb = layer(3, 2, ActivationSpec::relu());
    tb.trainable_beta = true;
    EXPECT_THROW(init({tb}, 1), ParameterError);
}

TEST(Forward, ClipAndLayerNorm)
{
    auto lc = layer(3, 4, ActivationSpec::linear());
    lc.clip = ClipRange{-0.5, 0.5};
    const auto net = with_random_biases(init({lc}, 3), 4);
    const auto y = forward(net, random_matrix(10, 3, 5, 3.0), Mode::Infer, nullptr);
    for (double v : y.data) {
        EXPECT_GE(v, -0.5);
        EXPECT_LE(v, 0.5);
    }

    const auto ln = init({layer(3, 4, ActivationSpec::linear(), Normalization::layer(2.0))}, 3);
    const auto z = forward(ln, random_matrix(10, 3, 5), Mode::Infer, nullptr);
    for (std::size_t b = 0; b < z.rows; ++b) {
        double ss = 0.0;
        for (double v : z.row(b)) ss += v * v;
        EXPECT_NEAR(std::sqrt(ss), 2.0, 1e-12);
    }
}

TEST(Dropout, InvertedScalingAndDeterminism)
{
    auto lc = layer(1, 1, ActivationSpec::linear());
    lc.dropout_keep = 0.25;
    Network net({{lc}}, {{filled(1, 1, {1.0}), {0.0}, 0.0}});
    Matrix x(20000, 1, 1.0);
    Rng a(5), b(5);
    const auto ya = forward(net, x, Mode::Train, &a);
    const auto yb = forward(net, x, Mode::Train, &b);
    EXPECT_EQ(ya, yb);
    double sum = 0.0;
    for (double v : ya.data) {
        EXPECT_TRUE(v == 0.0 || v == 4.0);
        sum += v;
    }
    EXPECT_NEAR(sum / 20000.0, 1.0, 0.05);
    EXPECT_EQ(forward(net, x, Mode::Infer, nullptr), x);
}

TEST(Backward, MatchesFiniteDifferences)
{
    const auto x = random_matrix(5, 3, 21);
    const std::vector<int> y = {0, 1, 1, 0, 1};
    for (double beta : {0.5, 1.0}) {
        for (auto kind : all_activation_kinds) {
            if (kind == ActivationKind::ReLU) continue; // kink: checked separately below
            const auto act = zoo::make(kind, beta);
            const auto net = with_random_biases(init({layer(3, 4, act), layer(4, 2)}, 22), 23);
            EXPECT_LT(worst_gradient_gap(net, x, y), 1e-5) << to_string(kind) << " beta=" << beta;
        }
    }
    // ReLU away from its kink
    const auto relu = with_random_biases(init({layer(3, 4, ActivationSpec::relu()), layer(4, 2)}, 22), 23);
    EXPECT_LT(worst_gradient_gap(relu, x, y), 1e-5);
}

TEST(Backward, NormalizationClipAndTrainableBeta)
{
    const auto x = random_matrix(6, 3, 31);
    const std::vector<int> y = {0, 1, 2, 0, 1, 2};

    auto weight = init({layer(3, 5, ActivationSpec::swish(1.0), Normalization::weight(1.5)),
                        layer(5, 3, ActivationSpec::linear(), Normalization::weight(2.0))},
                       32);
    EXPECT_LT(worst_gradient_gap(with_random_biases(weight, 33), x, y), 1e-5);

    auto layered = init({layer(3, 5, ActivationSpec::smelu(0.7), Normalization::layer(1.5)), layer(5, 3)}, 34);
    EXPECT_LT(worst_gradient_gap(with_random_biases(layered, 35), x, y), 1e-5);

    auto clipped = layer(3, 5, ActivationSpec::mish(1.0));
    clipped.clip = ClipRange{-0.6, 0.6};
    EXPECT_LT(worst_gradient_gap(with_random_biases(init({clipped, layer(5, 3)}, 36), 37), x, y), 1e-5);

    auto tb = layer(3, 5, ActivationSpec::smelu(2.0));
    tb.trainable_beta = true;
    auto tb2 = layer(5, 3, ActivationSpec::smelu(1.5), Normalization::weight(1.0));
    tb2.trainable_beta = true;
    EXPECT_LT(worst_gradient_gap(with_random_biases(init({tb, tb2}, 38), 39), x, y), 1e-5);
}

TEST(Backward, ZeroUpstreamGivesZeroGradients)
{
    const auto net = init({layer(3, 4, ActivationSpec::gelu(1.0)), layer(4, 2)}, 1);
    ForwardCache cache;
    forward(net, random_matrix(3, 3, 2), Mode::Train, nullptr, &cache);
    for (const auto& g : backward(net, cache, Matrix(3, 2))) {
        for (double v : g.weights.data) EXPECT_EQ(v, 0.0);
        for (double v : g.bias) EXPECT_EQ(v, 0.0);
        EXPECT_EQ(g.beta, 0.0);
    }
}

TEST(Backward, StaleCacheRejected)
{
    auto net = init({layer(3, 2)}, 1);
    ForwardCache cache;
    forward(net, random_matrix(2, 3, 2), Mode::Train, nullptr, &cache);
    net.mutable_params()[0].bias[0] = 1.0;
    EXPECT_THROW(backward(net, cache, Matrix(2, 2)), StaleCacheError);
}

TEST(Optimizer, PlainSgd)
{
    auto net = init({layer(2, 2)}, 1);
    const auto before = net.params();
    auto grads = zeros_like(before);
    grads[0].weights.data = {1.0, -2.0, 0.5, 3.0};
    grads[0].bias = {0.25, -1.0};
    const auto cfg = OptimizerConfig::sgd(0.1);
    auto state = make_state(net, cfg);
    step(net, grads, state, cfg);
    for (std::size_t i = 0; i < 4; ++i)
        EXPECT_EQ(net.params()[0].weights.data[i], before[0].weights.data[i] - 0.1 * grads[0].weights.data[i]);
    for (std::size_t i = 0; i < 2; ++i) EXPECT_EQ(net.params()[0].bias[i], before[0].bias[i] - 0.1 * grads[0].bias[i]);
}

TEST(Optimizer, SgdMomentumAccumulatesVelocity)
{
    Network net({{layer(1, 1)}}, {{filled(1, 1, {0.0}), {0.0}, 0.0}});
    auto grads = zeros_like(net.params());
    grads[0].weights.data = {1.0};
    const auto cfg = OptimizerConfig::sgd(0.01, 0.9);
    auto state = make_state(net, cfg);
    step(net, grads, state, cfg);
    step(net, grads, state, cfg);
    // v1 = -0.01, v2 = 0.9 v1 - 0.01
    EXPECT_DOUBLE_EQ(net.params()[0].weights.data[0], -0.01 + (0.9 * -0.01 - 0.01));
}

TEST(Optimizer, AdagradFirstStep)
{
    Network net({{layer(1, 1)}}, {{filled(1, 1, {0.0}), {0.0}, 0.0}});
    auto grads = zeros_like(net.params());
    grads[0].weights.data = {3.0};
    const auto cfg = OptimizerConfig::adagrad(0.02, 0.1);
    auto state = make_state(net, cfg);
    EXPECT_EQ(state.first[0].weights.data[0], 0.1);
    step(net, grads, state, cfg);
    EXPECT_NEAR(net.params()[0].weights.data[0], -0.02 * 3.0 / std::sqrt(0.1 + 9.0), 1e-16);
    EXPECT_EQ(net.params()[0].bias[0], 0.0);
}

TEST(Optimizer, AdamFirstStep)
{
    Network net({{layer(1, 1)}}, {{filled(1, 1, {0.0}), {0.0}, 0.0}});
    auto grads = zeros_like(net.params());
    grads[0].weights.data = {-0.4};
    const auto cfg = OptimizerConfig::adam(0.001);
    auto state = make_state(net, cfg);
    step(net, grads, state, cfg);
    // bias-corrected moments on step 1 are g and g^2
    EXPECT_NEAR(net.params()[0].weights.data[0], -0.001 * -0.4 / (0.4 + 1e-7), 1e-15);
}

TEST(Optimizer, DeterministicAndValidated)
{
    const auto net = init({layer(3, 4, ActivationSpec::smelu(1.0)), layer(4, 2)}, 4);
    ForwardCache cache;
    forward(net, random_matrix(5, 3, 5), Mode::Train, nullptr, &cache);
    const auto grads = backward(net, cache, softmax_cross_entropy(forward(net, random_matrix(5, 3, 5), Mode::Infer, nullptr),
                                                                  std::vector<int>{0, 1, 0, 1, 1})
                                                .grad);
    for (const auto& cfg : {OptimizerConfig::sgd(0.1, 0.9), OptimizerConfig::adagrad(0.02), OptimizerConfig::adam(0.01)}) {
        auto a = net, b = net;
        auto sa = make_state(a, cfg), sb = make_state(b, cfg);
        step(a, grads, sa, cfg);
        step(b, grads, sb, cfg);
        EXPECT_EQ(a, b);
    }
    EXPECT_THROW(OptimizerConfig::sgd(0.0).validate(), ParameterError);
    EXPECT_THROW(OptimizerConfig::sgd(0.1, 1.0).validate(), ParameterError);
    EXPECT_THROW(OptimizerConfig::adagrad(0.1, -1.0).validate(), ParameterError);

    auto n2 = net;
    auto huge = zeros_like(net.params());
    huge[0].weights.data[0] = std::numeric_limits<double>::infinity();
    auto st = make_state(n2, OptimizerConfig::sgd(0.1));
    EXPECT_THROW(step(n2, huge, st, OptimizerConfig::sgd(0.1)), NumericFault);
}

TEST(Optimizer, TrainableBetaStaysPositive)
{
    auto lc = layer(1, 1, ActivationSpec::smelu(0.01));
    lc.trainable_beta = true;
    Network net({{lc}}, {{filled(1, 1, {1.0}), {0.0}, 0.01}});
    auto grads = zeros_like(net.params());
    grads[0].beta = 100.0;
    const auto cfg = OptimizerConfig::sgd(1.0);
    auto state = make_state(net, cfg);
    step(net, grads, state, cfg);
    EXPECT_EQ(net.params()[0].beta, cfg.min_beta);
    EXPECT_EQ(net.activation(0).beta(), cfg.min_beta);
}

TEST(Init, SeededGlorotUniform)
{
    const std::vector<LayerConfig> cfg = {layer(30, 20, ActivationSpec::relu()), layer(20, 10)};
    EXPECT_EQ(init(cfg, 77), init(cfg, 77));
    EXPECT_FALSE(init(cfg, 77) == init(cfg, 78));
    const auto net = init(cfg, 77);
    for (std::size_t i = 0; i < cfg.size(); ++i) {
        const double bound = std::sqrt(6.0 / static_cast<double>(cfg[i].in_dim + cfg[i].out_dim));
        for (double w : net.params()[i].weights.data) {
            EXPECT_LE(std::abs(w), bound);
        }
        for (double b : net.params()[i].bias) EXPECT_EQ(b, 0.0);
    }
}

TEST(Checkpoint, JsonRoundTrip)
{
    auto lc = layer(3, 4, ActivationSpec::gsmelu({0.5, 1.0, -0.1, 1.0, 0.2}), Normalization::weight(1.5));
    lc.clip = ClipRange{-6.0, 6.0};
    lc.dropout_keep = 0.5;
    auto lc2 = layer(4, 2, ActivationSpec::smelu(1.0), Normalization::layer(2.0));
    lc2.trainable_beta = true;
    NetworkConfig cfg{{lc, lc2}, 0.8};
    const auto net = with_random_biases(init(cfg, 5), 6);
    const auto back = network_from_json(nlohmann::json::parse(to_json(net).dump()));
    EXPECT_EQ(back, net);
    const auto x = random_matrix(3, 3, 1);
    EXPECT_EQ(forward(back, x, Mode::Infer, nullptr), forward(net, x, Mode::Infer, nullptr));

    auto doc = to_json(net);
    doc["version"] = 99;
    EXPECT_THROW(network_from_json(doc), FormatError);
    doc["version"] = 1;
    doc["layers"][0]["weights"] = std::vector<double>{1.0};
    EXPECT_THROW(network_from_json(doc), FormatError);
}

TEST(Training, LossHalvesOnSeparableData)
{
    const auto data = synth_blobs(200, 2, 6.0, 41);
    for (auto kind : all_activation_kinds) {
        const auto act = zoo::make(kind, 1.0);
        auto net = init({layer(2, 8, act), layer(8, 2)}, 42);
        const auto cfg = OptimizerConfig::sgd(0.05, 0.9);
        auto state = make_state(net, cfg);
        const double start = loss_of(net, data.features, data.labels);
        BatchPlan plan{derive_seed(43, "shuffle", 0), 20, 1, std::nullopt};
        std::size_t steps = 0;
        for (std::size_t epoch = 1; steps < 200; ++epoch)
            for (const auto& b : batches(data, plan, epoch)) {
                if (steps++ == 200) break;
                ForwardCache cache;
                const auto logits = forward(net, b.features, Mode::Train, nullptr, &cache);
                step(net, backward(net, cache, softmax_cross_entropy(logits, b.labels).grad), state, cfg);
            }
        EXPECT_LT(loss_of(net, data.features, data.labels), 0.5 * start) << to_string(kind);
    }
}
