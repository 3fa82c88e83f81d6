#pragma once

#include <algorithm>
#include <charconv>
#include <cmath>
#include <cstdint>
#include <filesystem>
#include <fstream>
#include <future>
#include <iomanip>
#include <map>
#include <numeric>
#include <optional>
#include <sstream>
#include <string>
#include <vector>

#include <nlohmann/json.hpp>

#include "smelu/activations.hpp"
#include "smelu/data.hpp"
#include "smelu/error.hpp"
#include "smelu/grammar.hpp"
#include "smelu/metrics.hpp"
#include "smelu/net.hpp"
#include "smelu/optim.hpp"
#include "smelu/random.hpp"

namespace smelu {

// ---- randomness regimes ---------------------------------------------------

/// Which seeds differ between replicas. A shared source uses the same stream
/// for every replica; a distinct one derives a stream per replica index.
struct RandomnessRegime {
    enum class Source { Shared, Distinct };
    enum class Shuffle { None, Shared, Distinct };

    Source init = Source::Distinct;
    Shuffle shuffle = Shuffle::Distinct;
    Source dropout = Source::Distinct;
    Source augment = Source::Distinct;

    /// Presets: "shared_init+shuffle", "distinct_init+no_shuffle",
    /// "distinct_init+shuffle", and "all_shared" (no randomness across replicas).
    static RandomnessRegime named(const std::string& name)
    {
        if (name == "shared_init+shuffle") return {Source::Shared, Shuffle::Distinct, Source::Distinct, Source::Distinct};
        if (name == "distinct_init+no_shuffle")
            return {Source::Distinct, Shuffle::None, Source::Distinct, Source::Distinct};
        if (name == "distinct_init+shuffle")
            return {Source::Distinct, Shuffle::Distinct, Source::Distinct, Source::Distinct};
        if (name == "all_shared") return {Source::Shared, Shuffle::None, Source::Shared, Source::Shared};
        throw ConfigError("unknown randomness regime '" + name + "'");
    }
};

struct SeedSet {
    std::uint64_t init = 1;
    std::uint64_t shuffle = 2;
    std::uint64_t dropout = 3;
    std::uint64_t augment = 4;
};

/// Seed replica `replica` uses for one purpose: derive_seed(base, purpose, 0)
/// when shared, derive_seed(base, purpose, replica + 1) when distinct.
inline std::uint64_t replica_seed(std::uint64_t base, std::string_view purpose, bool distinct, std::size_t replica)
{
    return derive_seed(base, purpose, distinct ? replica + 1 : 0);
}

// ---- configuration --------------------------------------------------------

struct DatasetSpec {
    enum class Kind { Blobs, Mnist };
    Kind kind = Kind::Blobs;
    // blobs
    std::size_t n = 400;
    std::size_t test_n = 200;
    std::size_t dim = 2;
    double separation = 3.0;
    std::uint64_t seed = 11;
    // mnist
    std::string dir = "data/mnist10k";
    std::size_t train_limit = 0; ///< 0: all
    std::size_t test_limit = 0;
};

struct NetworkSpec {
    std::vector<std::size_t> hidden = {16};
    std::vector<std::string> activations = {"relu"}; ///< one per hidden layer, or a single entry for all
    std::string output_activation = "linear";
    Normalization normalization{};
    bool normalize_output = false;
    std::optional<ClipRange> clip;
    double input_keep = 1.0;
    double hidden_keep = 1.0;
    bool trainable_beta = false;
};

struct ExperimentConfig {
    std::string label;
    DatasetSpec dataset;
    NetworkSpec network;
    OptimizerConfig optimizer = OptimizerConfig::sgd(0.1);
    std::size_t replicas = 2;
    RandomnessRegime regime;
    std::size_t epochs = 1;
    enum class Evaluation { Holdout, Progressive };
    Evaluation evaluation = Evaluation::Holdout;
    std::optional<ShiftAugmentation> augmentation;
    SeedSet seeds;
    bool parallel = true;
    std::optional<std::filesystem::path> output_dir;

    void validate() const
    {
        if (replicas < 2) throw ConfigError("replicas must be >= 2 for PD metrics");
        if (epochs == 0) throw ConfigError("epochs must be positive");
        if (evaluation == Evaluation::Progressive && epochs != 1)
            throw ConfigError("progressive evaluation is single pass; set epochs to 1");
        if (network.activations.empty()) throw ConfigError("network needs an activation");
        if (network.activations.size() != 1 && network.activations.size() != network.hidden.size())
            throw ConfigError("give one activation, or one per hidden layer");
        optimizer.validate();
    }
};

namespace detail {

template <typename T>
T get_or(const nlohmann::json& j, const char* key, T fallback)
{
    return j.contains(key) && !j.at(key).is_null() ? j.at(key).get<T>() : fallback;
}

inline std::uint64_t seed_from_json(const nlohmann::json& j, const char* key, std::uint64_t fallback)
{
    return get_or<std::uint64_t>(j, key, fallback);
}

} // namespace detail

inline ExperimentConfig experiment_from_json(const nlohmann::json& j)
{
    try {
        ExperimentConfig c;
        c.label = detail::get_or<std::string>(j, "label", "");

        const auto& d = j.at("dataset");
        const auto kind = d.at("kind").get<std::string>();
        if (kind == "blobs") {
            c.dataset.kind = DatasetSpec::Kind::Blobs;
            c.dataset.n = detail::get_or<std::size_t>(d, "n", c.dataset.n);
            c.dataset.test_n = detail::get_or<std::size_t>(d, "test_n", c.dataset.test_n);
            c.dataset.dim = detail::get_or<std::size_t>(d, "dim", c.dataset.dim);
            c.dataset.separation = detail::get_or<double>(d, "separation", c.dataset.separation);
            c.dataset.seed = detail::seed_from_json(d, "seed", c.dataset.seed);
        } else if (kind == "mnist") {
            c.dataset.kind = DatasetSpec::Kind::Mnist;
            c.dataset.dir = detail::get_or<std::string>(d, "dir", c.dataset.dir);
            c.dataset.train_limit = detail::get_or<std::size_t>(d, "train_limit", 0);
            c.dataset.test_limit = detail::get_or<std::size_t>(d, "test_limit", 0);
        } else {
            throw ConfigError("unknown dataset kind '" + kind + "'");
        }

        const auto& n = j.at("network");
        c.network.hidden = detail::get_or<std::vector<std::size_t>>(n, "hidden", c.network.hidden);
        if (n.contains("activation")) {
            const auto& a = n.at("activation");
            c.network.activations =
                a.is_array() ? a.get<std::vector<std::string>>() : std::vector<std::string>{a.get<std::string>()};
        }
        c.network.output_activation = detail::get_or<std::string>(n, "output_activation", "linear");
        if (n.contains("normalization")) c.network.normalization = normalization_from_json(n.at("normalization"));
        c.network.normalize_output = detail::get_or<bool>(n, "normalize_output", false);
        if (n.contains("clip") && !n.at("clip").is_null())
            c.network.clip = ClipRange{n["clip"][0].get<double>(), n["clip"][1].get<double>()};
        c.network.input_keep = detail::get_or<double>(n, "input_keep", 1.0);
        c.network.hidden_keep = detail::get_or<double>(n, "hidden_keep", 1.0);
        c.network.trainable_beta = detail::get_or<bool>(n, "trainable_beta", false);

        const auto& o = j.at("optimizer");
        const auto okind = o.at("kind").get<std::string>();
        const double lr = o.at("lr").get<double>();
        const auto batch = detail::get_or<std::size_t>(o, "batch_size", 32);
        if (okind == "sgd")
            c.optimizer = OptimizerConfig::sgd(lr, detail::get_or<double>(o, "momentum", 0.0), batch);
        else if (okind == "adagrad")
            c.optimizer = OptimizerConfig::adagrad(lr, detail::get_or<double>(o, "accumulator_init", 0.1), batch);
        else if (okind == "adam")
            c.optimizer = OptimizerConfig::adam(lr, detail::get_or<double>(o, "beta1", 0.9),
                                                detail::get_or<double>(o, "beta2", 0.999),
                                                detail::get_or<double>(o, "eps", 1e-7), batch);
        else
            throw ConfigError("unknown optimizer '" + okind + "'");

        c.replicas = detail::get_or<std::size_t>(j, "replicas", 2);
        c.epochs = detail::get_or<std::size_t>(j, "epochs", 1);
        if (j.contains("regime")) {
            const auto& r = j.at("regime");
            if (r.is_string()) {
                c.regime = RandomnessRegime::named(r.get<std::string>());
            } else {
                auto src = [&](const char* key) {
                    const auto v = detail::get_or<std::string>(r, key, "distinct");
                    if (v != "shared" && v != "distinct") throw ConfigError(std::string("regime.") + key + ": shared|distinct");
                    return v == "shared" ? RandomnessRegime::Source::Shared : RandomnessRegime::Source::Distinct;
                };
                c.regime.init = src("init");
                c.regime.dropout = src("dropout");
                c.regime.augment = src("augment");
                const auto sh = detail::get_or<std::string>(r, "shuffle", "distinct");
                if (sh == "none") c.regime.shuffle = RandomnessRegime::Shuffle::None;
                else if (sh == "shared") c.regime.shuffle = RandomnessRegime::Shuffle::Shared;
                else if (sh == "distinct") c.regime.shuffle = RandomnessRegime::Shuffle::Distinct;
                else throw ConfigError("regime.shuffle: none|shared|distinct");
            }
        }
        const auto ev = detail::get_or<std::string>(j, "evaluation", "holdout");
        if (ev == "holdout") c.evaluation = ExperimentConfig::Evaluation::Holdout;
        else if (ev == "progressive") c.evaluation = ExperimentConfig::Evaluation::Progressive;
        else throw ConfigError("evaluation: holdout|progressive");

        if (j.contains("augmentation") && !j.at("augmentation").is_null()) {
            const auto& a = j.at("augmentation");
            ShiftAugmentation s;
            s.probability = detail::get_or<double>(a, "probability", s.probability);
            s.max_offset = detail::get_or<int>(a, "max_offset", s.max_offset);
            s.start_epoch = detail::get_or<std::size_t>(a, "start_epoch", s.start_epoch);
            c.augmentation = s;
        }
        if (j.contains("seeds")) {
            const auto& s = j.at("seeds");
            c.seeds.init = detail::seed_from_json(s, "init", c.seeds.init);
            c.seeds.shuffle = detail::seed_from_json(s, "shuffle", c.seeds.shuffle);
            c.seeds.dropout = detail::seed_from_json(s, "dropout", c.seeds.dropout);
            c.seeds.augment = detail::seed_from_json(s, "augment", c.seeds.augment);
        }
        c.parallel = detail::get_or<bool>(j, "parallel", true);
        if (j.contains("output_dir") && !j.at("output_dir").is_null())
            c.output_dir = j.at("output_dir").get<std::string>();
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("experiment config: ") + e.what());
    } catch (const ParameterError& e) {
        throw ConfigError(e.what());
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
}

// ---- data -----------------------------------------------------------------

struct ExperimentData {
    Dataset train;
    Dataset test;
};

inline ExperimentData load_experiment_data(const DatasetSpec& spec)
{
    if (spec.kind == DatasetSpec::Kind::Blobs) {
        return {synth_blobs(spec.n, spec.dim, spec.separation, spec.seed),
                synth_blobs(spec.test_n, spec.dim, spec.separation, derive_seed(spec.seed, "test", 0))};
    }
    const std::filesystem::path dir = spec.dir;
    auto train = load_mnist_idx(dir / "train-images-idx3-ubyte", dir / "train-labels-idx1-ubyte");
    auto test = load_mnist_idx(dir / "t10k-images-idx3-ubyte", dir / "t10k-labels-idx1-ubyte");
    if (spec.train_limit && spec.train_limit < train.size()) train = train.slice(0, spec.train_limit);
    if (spec.test_limit && spec.test_limit < test.size()) test = test.slice(0, spec.test_limit);
    return {std::move(train), std::move(test)};
}

inline NetworkConfig build_network_config(const NetworkSpec& spec, std::size_t in_dim, std::size_t labels)
{
    NetworkConfig cfg;
    cfg.input_keep = spec.input_keep;
    std::size_t prev = in_dim;
    for (std::size_t i = 0; i < spec.hidden.size(); ++i) {
        LayerConfig lc;
        lc.in_dim = prev;
        lc.out_dim = spec.hidden[i];
        lc.activation = parse_activation(spec.activations.size() == 1 ? spec.activations[0] : spec.activations[i]);
        lc.normalization = spec.normalization;
        lc.clip = spec.clip;
        lc.dropout_keep = spec.hidden_keep;
        lc.trainable_beta = spec.trainable_beta && lc.activation.kind() == ActivationKind::SmeLU;
        cfg.layers.push_back(std::move(lc));
        prev = spec.hidden[i];
    }
    LayerConfig out;
    out.in_dim = prev;
    out.out_dim = labels;
    out.activation = parse_activation(spec.output_activation);
    if (spec.normalize_output) out.normalization = spec.normalization;
    cfg.layers.push_back(std::move(out));
    cfg.validate();
    return cfg;
}

// ---- training -------------------------------------------------------------

/// Predictions of a network on a dataset, row n = label distribution of example n.
inline Matrix predict(const Network& net, const Dataset& ds, std::size_t chunk = 256)
{
    Matrix probs(ds.size(), net.out_dim());
    for (std::size_t start = 0; start < ds.size(); start += chunk) {
        const std::size_t count = std::min(chunk, ds.size() - start);
        std::vector<std::size_t> idx(count);
        std::iota(idx.begin(), idx.end(), start);
        const auto p = softmax(forward(net, gather_rows(ds.features, idx), Mode::Infer, nullptr));
        std::copy(p.data.begin(), p.data.end(), probs.data.begin() + static_cast<std::ptrdiff_t>(start * probs.cols));
    }
    return probs;
}

/// One optimizer step on a batch; returns the batch's mean loss.
inline double train_step(Network& net, const Matrix& features, std::span<const int> labels, OptimizerState& state,
                         const OptimizerConfig& opt, Rng& dropout_rng)
{
    ForwardCache cache;
    const auto logits = forward(net, features, Mode::Train, &dropout_rng, &cache);
    const auto loss = softmax_cross_entropy(logits, labels);
    step(net, backward(net, cache, loss.grad), state, opt);
    return loss.mean_loss;
}

struct ProgressiveResult {
    std::vector<std::size_t> example_ids; ///< stream order
    std::vector<double> losses;           ///< pre-update loss per example, stream order
    Matrix probabilities;                 ///< pre-update predictions, stream order
    double mean_loss = 0.0;               ///< example-weighted mean of the pre-update losses
};

/// Online evaluation: every batch is scored with the current weights, then
/// trained on. `frozen` skips the updates.
inline ProgressiveResult progressive_validate(const std::vector<Batch>& stream, Network& net, OptimizerState& state,
                                              const OptimizerConfig& opt, Rng& dropout_rng, bool frozen = false)
{
    ProgressiveResult r;
    std::size_t total = 0;
    for (const auto& b : stream) total += b.labels.size();
    r.probabilities = Matrix(total, net.out_dim());
    std::size_t row = 0;
    double loss_sum = 0.0;
    for (const auto& b : stream) {
        const auto pre = softmax_cross_entropy(forward(net, b.features, Mode::Infer, nullptr), b.labels);
        for (std::size_t i = 0; i < b.labels.size(); ++i, ++row) {
            r.example_ids.push_back(b.indices.empty() ? row : b.indices[i]);
            r.losses.push_back(pre.per_example[i]);
            loss_sum += pre.per_example[i];
            std::copy(pre.probabilities.row(i).begin(), pre.probabilities.row(i).end(), r.probabilities.row(row).begin());
        }
        if (!frozen) train_step(net, b.features, b.labels, state, opt, dropout_rng);
    }
    r.mean_loss = total ? loss_sum / static_cast<double>(total) : 0.0;
    return r;
}

struct ReplicaResult {
    std::size_t replica = 0;
    Network network;
    Matrix probabilities; ///< indexed by evaluation example id
    std::vector<double> epoch_losses;
};

inline ReplicaResult train_replica(const ExperimentConfig& cfg, const ExperimentData& data, std::size_t replica)
{
    using Src = RandomnessRegime::Source;
    using Shf = RandomnessRegime::Shuffle;
    const auto& rg = cfg.regime;
    const auto net_cfg = build_network_config(cfg.network, data.train.features.cols, static_cast<std::size_t>(data.train.label_count));

    Network net = init(net_cfg, replica_seed(cfg.seeds.init, "init", rg.init == Src::Distinct, replica));
    auto state = make_state(net, cfg.optimizer);
    Rng dropout_rng(replica_seed(cfg.seeds.dropout, "dropout", rg.dropout == Src::Distinct, replica));
    Rng augment_rng(replica_seed(cfg.seeds.augment, "augment", rg.augment == Src::Distinct, replica));

    BatchPlan plan;
    plan.batch_size = std::min(cfg.optimizer.batch_size, data.train.size());
    plan.epochs = cfg.epochs;
    plan.augmentation = cfg.augmentation;
    if (rg.shuffle != Shf::None)
        plan.shuffle_seed = replica_seed(cfg.seeds.shuffle, "shuffle", rg.shuffle == Shf::Distinct, replica);

    ReplicaResult res{replica, net, {}, {}};
    if (cfg.evaluation == ExperimentConfig::Evaluation::Progressive) {
        const auto pv = progressive_validate(batches(data.train, plan, 1), net, state, cfg.optimizer, dropout_rng);
        res.probabilities = Matrix(data.train.size(), net.out_dim());
        for (std::size_t i = 0; i < pv.example_ids.size(); ++i) {
            const auto src = pv.probabilities.row(i);
            std::copy(src.begin(), src.end(), res.probabilities.row(pv.example_ids[i]).begin());
        }
        res.epoch_losses.push_back(pv.mean_loss);
    } else {
        for (std::size_t epoch = 1; epoch <= cfg.epochs; ++epoch) {
            double loss_sum = 0.0;
            std::size_t seen = 0;
            const bool augment = plan.augmentation && epoch >= plan.augmentation->start_epoch;
            for (auto& b : batches(data.train, plan, epoch)) {
                if (augment) b.features = augment_shift(b.features, augment_rng, *plan.augmentation);
                loss_sum += train_step(net, b.features, b.labels, state, cfg.optimizer, dropout_rng) *
                            static_cast<double>(b.labels.size());
                seen += b.labels.size();
            }
            res.epoch_losses.push_back(loss_sum / static_cast<double>(seen));
        }
        res.probabilities = predict(net, data.test);
    }
    res.network = std::move(net);
    return res;
}

/// The replicas' predictions as one N x M x L tensor with true labels.
inline PredictionTensor collect_predictions(const std::vector<ReplicaResult>& replicas, const Dataset& eval)
{
    const std::size_t n = eval.size(), m = replicas.size(), l = replicas.front().probabilities.cols;
    std::vector<double> probs(n * m * l);
    for (std::size_t r = 0; r < m; ++r)
        for (std::size_t i = 0; i < n; ++i)
            for (std::size_t k = 0; k < l; ++k) probs[(i * m + r) * l + k] = replicas[r].probabilities(i, k);
    return PredictionTensor(n, m, l, std::move(probs), eval.labels);
}

/// Prediction CSV: header `example,label,p0,...`, one row per example.
inline void write_predictions_csv(std::ostream& out, const Matrix& probs, std::span<const int> labels)
{
    out << "example,label";
    for (std::size_t k = 0; k < probs.cols; ++k) out << ",p" << k;
    out << '\n' << std::setprecision(17);
    for (std::size_t i = 0; i < probs.rows; ++i) {
        out << i << ',' << labels[i];
        for (double v : probs.row(i)) out << ',' << v;
        out << '\n';
    }
}

struct PredictionFile {
    std::vector<std::size_t> examples;
    std::vector<int> labels;
    Matrix probabilities;
};

inline PredictionFile read_predictions_csv(std::istream& in, const std::string& name = "predictions")
{
    PredictionFile f;
    std::string line;
    if (!std::getline(in, line) || line.rfind("example,label", 0) != 0)
        throw FormatError(name + ": expected header 'example,label,p0,...'");
    const auto cols = static_cast<std::size_t>(std::count(line.begin(), line.end(), ',')) - 1;
    if (cols == 0) throw FormatError(name + ": no probability columns");
    std::vector<double> data;
    std::size_t lineno = 1;
    while (std::getline(in, line)) {
        ++lineno;
        if (line.empty()) continue;
        std::vector<double> fields;
        const char* p = line.data();
        const char* end = p + line.size();
        while (p <= end) {
            const char* comma = std::find(p, end, ',');
            double v = 0.0;
            auto [q, ec] = std::from_chars(p, comma, v);
            if (ec != std::errc{} || q != comma)
                throw FormatError(name + ": bad number on line " + std::to_string(lineno));
            fields.push_back(v);
            p = comma + 1;
        }
        if (fields.size() != cols + 2) throw FormatError(name + ": wrong column count on line " + std::to_string(lineno));
        f.examples.push_back(static_cast<std::size_t>(fields[0]));
        f.labels.push_back(static_cast<int>(fields[1]));
        data.insert(data.end(), fields.begin() + 2, fields.end());
    }
    f.probabilities = Matrix(f.examples.size(), cols);
    f.probabilities.data = std::move(data);
    return f;
}

/// Joins per-replica prediction files on the example column.
inline PredictionTensor tensor_from_prediction_files(const std::vector<PredictionFile>& files)
{
    if (files.size() < 2) throw ConfigError("pd-report needs at least two prediction files");
    std::vector<std::vector<std::size_t>> order;
    for (const auto& f : files) {
        std::vector<std::size_t> idx(f.examples.size());
        std::iota(idx.begin(), idx.end(), std::size_t{0});
        std::sort(idx.begin(), idx.end(), [&](auto a, auto b) { return f.examples[a] < f.examples[b]; });
        order.push_back(std::move(idx));
    }
    const std::size_t n = files[0].examples.size(), l = files[0].probabilities.cols, m = files.size();
    std::vector<double> probs(n * m * l);
    std::vector<int> labels(n);
    for (std::size_t r = 0; r < m; ++r) {
        const auto& f = files[r];
        if (f.examples.size() != n || f.probabilities.cols != l)
            throw FormatError("prediction files disagree in example or label count");
        for (std::size_t i = 0; i < n; ++i) {
            const auto src = order[r][i];
            if (f.examples[src] != files[0].examples[order[0][i]] || f.labels[src] != files[0].labels[order[0][i]])
                throw FormatError("prediction files disagree on example ids or labels");
            for (std::size_t k = 0; k < l; ++k) probs[(i * m + r) * l + k] = f.probabilities(src, k);
            labels[i] = f.labels[src];
        }
    }
    return PredictionTensor(n, m, l, std::move(probs), std::move(labels), 1e-6);
}

struct ExperimentResult {
    PDReport report;
    std::vector<ReplicaResult> replicas;
};

/// Trains all replicas (in parallel when configured; each replica's
/// arithmetic is single threaded, so the result does not depend on it) and
/// scores their predictions. Artifacts go to `output_dir` when set.
inline ExperimentResult run_replicas(const ExperimentConfig& cfg, const ExperimentData& data)
{
    cfg.validate();
    std::vector<ReplicaResult> results;
    results.reserve(cfg.replicas);
    auto run_one = [&](std::size_t r) {
        try {
            return train_replica(cfg, data, r);
        } catch (const NumericFault& e) {
            throw NumericFault("replica " + std::to_string(r) + ": " + e.what());
        }
    };
    if (cfg.parallel) {
        std::vector<std::future<ReplicaResult>> jobs;
        for (std::size_t r = 0; r < cfg.replicas; ++r) jobs.push_back(std::async(std::launch::async, run_one, r));
        for (auto& j : jobs) results.push_back(j.get());
    } else {
        for (std::size_t r = 0; r < cfg.replicas; ++r) results.push_back(run_one(r));
    }

    const Dataset& eval = cfg.evaluation == ExperimentConfig::Evaluation::Progressive ? data.train : data.test;
    ExperimentResult out{make_report(collect_predictions(results, eval)), std::move(results)};

    if (cfg.output_dir) {
        std::filesystem::create_directories(*cfg.output_dir);
        for (const auto& r : out.replicas) {
            const auto stem = "replica_" + std::to_string(r.replica);
            std::ofstream(*cfg.output_dir / (stem + ".json")) << to_json(r.network).dump() << '\n';
            std::ofstream csv(*cfg.output_dir / (stem + "_predictions.csv"));
            write_predictions_csv(csv, r.probabilities, eval.labels);
        }
        std::ofstream(*cfg.output_dir / "report.json") << to_json(out.report).dump(2) << '\n';
    }
    return out;
}

inline ExperimentResult run_replicas(const ExperimentConfig& cfg)
{
    return run_replicas(cfg, load_experiment_data(cfg.dataset));
}

// ---- presets --------------------------------------------------------------

/// Reduced MNIST protocol that runs in minutes on one core: two hidden layers
/// of 256, dropout 0.2 on the input and 0.5 on hidden layers, shift
/// augmentation from epoch 2, SGD (lr 0.01, momentum 0.9, batch 32), 5
/// epochs, 4 identically initialized replicas.
inline ExperimentConfig mnist_desk_preset(const std::string& activation, const std::string& data_dir = "data/mnist10k",
                                          std::uint64_t base_seed = 0)
{
    ExperimentConfig c;
    c.label = "mnist desk-scale (reduced: width 256, 5 epochs, M=4, subset)";
    c.dataset.kind = DatasetSpec::Kind::Mnist;
    c.dataset.dir = data_dir;
    c.network.hidden = {256, 256};
    c.network.activations = {activation};
    c.network.input_keep = 0.8;
    c.network.hidden_keep = 0.5;
    c.optimizer = OptimizerConfig::sgd(0.01, 0.9, 32);
    c.replicas = 4;
    c.regime = RandomnessRegime::named("shared_init+shuffle");
    c.epochs = 5;
    c.augmentation = ShiftAugmentation{};
    c.seeds = {derive_seed(base_seed, "preset-init", 0), derive_seed(base_seed, "preset-shuffle", 0),
               derive_seed(base_seed, "preset-dropout", 0), derive_seed(base_seed, "preset-augment", 0)};
    return c;
}

/// The full-size MNIST protocol (width 1200, 12 replicas). `optimizer` is
/// "sgd" (50 epochs) or "adagrad" (150 epochs).
inline ExperimentConfig mnist_full_preset(const std::string& activation, const std::string& optimizer = "sgd",
                                          const std::string& data_dir = "data/mnist")
{
    auto c = mnist_desk_preset(activation, data_dir);
    c.label = "mnist full protocol";
    c.network.hidden = {1200, 1200};
    c.replicas = 12;
    if (optimizer == "adagrad") {
        c.optimizer = OptimizerConfig::adagrad(0.02, 0.1, 32);
        c.epochs = 150;
    } else {
        c.epochs = 50;
    }
    return c;
}

// ---- surfaces -------------------------------------------------------------

struct SurfaceConfig {
    std::vector<std::size_t> hidden = {256, 128, 64, 32, 16};
    double lo = -6.0;
    double hi = 6.0;
    std::size_t resolution = 121;
    ActivationSpec activation = ActivationSpec::relu();
    Normalization normalization = Normalization::weight(1.0);
    std::optional<ClipRange> clip;
    std::uint64_t seed = 7;

    void validate() const
    {
        if (resolution < 2) throw ConfigError("surface resolution must be >= 2");
        if (!(lo < hi)) throw ConfigError("surface range must have lo < hi");
        if (hidden.empty()) throw ConfigError("surface network needs hidden layers");
    }
};

inline SurfaceConfig surface_from_json(const nlohmann::json& j)
{
    try {
        SurfaceConfig c;
        c.hidden = detail::get_or<std::vector<std::size_t>>(j, "hidden", c.hidden);
        if (j.contains("range")) {
            c.lo = j.at("range")[0].get<double>();
            c.hi = j.at("range")[1].get<double>();
        }
        if (j.contains("input_dims") && j.at("input_dims").get<int>() != 2)
            throw ConfigError("surface inputs must be 2-dimensional");
        c.resolution = detail::get_or<std::size_t>(j, "resolution", c.resolution);
        if (j.contains("activation")) c.activation = activation_from_json(j.at("activation"));
        if (j.contains("normalization")) c.normalization = normalization_from_json(j.at("normalization"));
        if (j.contains("clip") && !j.at("clip").is_null())
            c.clip = ClipRange{j["clip"][0].get<double>(), j["clip"][1].get<double>()};
        c.seed = detail::get_or<std::uint64_t>(j, "seed", c.seed);
        c.validate();
        return c;
    } catch (const nlohmann::json::exception& e) {
        throw ConfigError(std::string("surface config: ") + e.what());
    } catch (const ParseError& e) {
        throw ConfigError(e.what());
    } catch (const FormatError& e) {
        throw ConfigError(e.what());
    }
}

/// The scalar-output network behind a surface: N(0,1) weights, zero biases,
/// the configured activation/normalization/clip on every hidden layer, and a
/// linear (normalized) output unit.
inline Network surface_network(const SurfaceConfig& cfg)
{
    cfg.validate();
    NetworkConfig nc;
    nc.init = InitScheme::StandardNormal;
    std::size_t prev = 2;
    for (auto h : cfg.hidden) {
        LayerConfig lc;
        lc.in_dim = prev;
        lc.out_dim = h;
        lc.activation = cfg.activation;
        lc.normalization = cfg.normalization;
        lc.clip = cfg.clip;
        nc.layers.push_back(std::move(lc));
        prev = h;
    }
    LayerConfig out;
    out.in_dim = prev;
    out.out_dim = 1;
    out.normalization = cfg.normalization;
    nc.layers.push_back(std::move(out));
    return init(nc, cfg.seed);
}

struct SurfaceGrid {
    std::vector<double> axis; ///< grid coordinates, shared by x1 and x2
    Matrix values;            ///< values(i, j) = f(axis[i], axis[j])
};

inline SurfaceGrid sample_surface(const SurfaceConfig& cfg)
{
    const auto net = surface_network(cfg);
    SurfaceGrid g;
    const std::size_t r = cfg.resolution;
    for (std::size_t i = 0; i < r; ++i)
        g.axis.push_back(cfg.lo + (cfg.hi - cfg.lo) * static_cast<double>(i) / static_cast<double>(r - 1));
    Matrix inputs(r * r, 2);
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) {
            inputs(i * r + j, 0) = g.axis[i];
            inputs(i * r + j, 1) = g.axis[j];
        }
    const auto y = forward(net, inputs, Mode::Infer, nullptr);
    g.values = Matrix(r, r);
    g.values.data = y.data;
    return g;
}

inline void write_surface_csv(std::ostream& out, const SurfaceGrid& g)
{
    out << "x1,x2,y\n" << std::setprecision(17);
    for (std::size_t i = 0; i < g.axis.size(); ++i)
        for (std::size_t j = 0; j < g.axis.size(); ++j) out << g.axis[i] << ',' << g.axis[j] << ',' << g.values(i, j) << '\n';
}

/// Mean squared 5-point discrete Laplacian over interior grid points.
inline double mean_squared_laplacian(const SurfaceGrid& g)
{
    const std::size_t r = g.axis.size();
    if (r < 3) return 0.0;
    const double h = g.axis[1] - g.axis[0];
    double sum = 0.0;
    for (std::size_t i = 1; i + 1 < r; ++i)
        for (std::size_t j = 1; j + 1 < r; ++j) {
            const double lap = (g.values(i + 1, j) + g.values(i - 1, j) + g.values(i, j + 1) + g.values(i, j - 1) -
                                4.0 * g.values(i, j)) /
                               (h * h);
            sum += lap * lap;
        }
    return sum / static_cast<double>((r - 2) * (r - 2));
}

/// Max absolute residual of the least-squares plane y = c0 + c1 x1 + c2 x2.
inline double plane_fit_residual(const SurfaceGrid& g)
{
    // normal equations; the grid is symmetric so they are well conditioned
    double s[3][4] = {};
    const std::size_t r = g.axis.size();
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j) {
            const double f[3] = {1.0, g.axis[i], g.axis[j]};
            for (int a = 0; a < 3; ++a) {
                for (int b = 0; b < 3; ++b) s[a][b] += f[a] * f[b];
                s[a][3] += f[a] * g.values(i, j);
            }
        }
    for (int c = 0; c < 3; ++c) {
        int piv = c;
        for (int k = c + 1; k < 3; ++k)
            if (std::abs(s[k][c]) > std::abs(s[piv][c])) piv = k;
        std::swap(s[c], s[piv]);
        for (int k = 0; k < 3; ++k) {
            if (k == c) continue;
            const double f = s[k][c] / s[c][c];
            for (int m = c; m < 4; ++m) s[k][m] -= f * s[c][m];
        }
    }
    const double c0 = s[0][3] / s[0][0], c1 = s[1][3] / s[1][1], c2 = s[2][3] / s[2][2];
    double worst = 0.0;
    for (std::size_t i = 0; i < r; ++i)
        for (std::size_t j = 0; j < r; ++j)
            worst = std::max(worst, std::abs(g.values(i, j) - (c0 + c1 * g.axis[i] + c2 * g.axis[j])));
    return worst;
}

// ---- activation dumps -----------------------------------------------------

struct GridRange {
    double lo = -5.0;
    double hi = 5.0;
    double step = 0.01;

    std::vector<double> points() const
    {
        std::vector<double> xs;
        const auto n = static_cast<std::size_t>(std::floor((hi - lo) / step + 1e-9));
        for (std::size_t i = 0; i <= n; ++i) xs.push_back(lo + step * static_cast<double>(i));
        return xs;
    }
};

/// Parses "a:b:step".
inline GridRange parse_range(const std::string& text)
{
    GridRange r;
    double* dst[3] = {&r.lo, &r.hi, &r.step};
    const char* p = text.data();
    const char* end = p + text.size();
    for (int i = 0; i < 3; ++i) {
        const char* stop = i < 2 ? std::find(p, end, ':') : end;
        if (stop == end && i < 2) throw ParseError("range must look like a:b:step", static_cast<std::size_t>(p - text.data()));
        auto [q, ec] = std::from_chars(p, stop, *dst[i]);
        if (ec != std::errc{} || q != stop) throw ParseError("bad number in range", static_cast<std::size_t>(p - text.data()));
        p = stop + 1;
    }
    if (!(r.step > 0.0) || !(r.lo <= r.hi)) throw ParseError("range needs lo <= hi and step > 0", 0);
    return r;
}

/// CSV rows (x, y, dy_dx) for the activation over the grid.
inline void dump_activation(std::ostream& out, const ActivationSpec& spec, std::span<const double> xs)
{
    out << "x,y,dy_dx\n" << std::setprecision(17);
    for (double x : xs) out << x << ',' << eval(spec, x) << ',' << grad(spec, x) << '\n';
}

inline void dump_activation(std::ostream& out, const std::string& spec, const GridRange& range)
{
    const auto xs = range.points();
    dump_activation(out, parse_activation(spec), xs);
}

} // namespace smelu
