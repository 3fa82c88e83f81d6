// Acceptance run: one PASS/FAIL line per criterion, nonzero exit if any fails.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <functional>
#include <iterator>
#include <random>
#include <sstream>
#include <string>
#include <vector>

#include "metrics_oracle.hpp"
#include "oracles.hpp"
#include "smelu/smelu.hpp"
#include "zoo.hpp"

using namespace smelu;

namespace {

struct Outcome {
    bool pass = false;
    std::string detail;
};

std::string fmt(const char* pattern, double a, double b = 0.0, double c = 0.0, double d = 0.0)
{
    char buf[256];
    std::snprintf(buf, sizeof buf, pattern, a, b, c, d);
    return buf;
}

double seconds_since(std::chrono::steady_clock::time_point t0)
{
    return std::chrono::duration<double>(std::chrono::steady_clock::now() - t0).count();
}

double median(std::vector<double> v)
{
    std::sort(v.begin(), v.end());
    const auto n = v.size();
    return n % 2 ? v[n / 2] : 0.5 * (v[n / 2 - 1] + v[n / 2]);
}

std::vector<double> linspace(double lo, double hi, std::size_t n)
{
    std::vector<double> xs(n);
    for (std::size_t i = 0; i < n; ++i) xs[i] = lo + (hi - lo) * static_cast<double>(i) / static_cast<double>(n - 1);
    return xs;
}

Outcome gradient_suite()
{
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 gen(20240611);
    std::uniform_real_distribution<double> dist(-10.0, 10.0);
    double worst = 0.0;
    std::string worst_case;
    std::size_t checks = 0;
    for (auto kind : all_activation_kinds)
        for (double beta : zoo::betas()) {
            const auto s = zoo::make(kind, beta);
            const auto knots = breakpoints(s);
            auto f = [&](double x) { return eval(s, x); };
            for (int n = 0; n < 1000;) {
                const double x = dist(gen);
                if (std::any_of(knots.begin(), knots.end(), [x](double k) { return std::abs(x - k) < 1e-4; })) continue;
                const double g = grad(s, x);
                const double gap = std::abs(g - oracle::central_difference(f, x)) / std::max(1.0, std::abs(g));
                if (gap > worst) {
                    worst = gap;
                    worst_case = std::string(to_string(kind)) + " beta=" + fmt("%g", beta);
                }
                ++n;
                ++checks;
            }
        }
    const double t = seconds_since(t0);
    return {worst < 1e-6 && t < 30.0,
            fmt("%.0f checks, worst relative gap %.2e", static_cast<double>(checks), worst) + " (" + worst_case + ")" +
                fmt(", %.2f s", t)};
}

Outcome c1_suite()
{
    using namespace rescu;
    const auto t0 = std::chrono::steady_clock::now();
    std::mt19937_64 gen(99);
    std::uniform_real_distribution<double> w(0.01, 10.0), g(-3.0, 3.0), t(-10.0, 10.0), gl(-3.0, 0.99);
    double knot = 0.0;
    auto track = [&](const PiecewiseC1& p) {
        const auto r = p.residuals();
        knot = std::max({knot, r.value, r.slope});
    };
    for (int i = 0; i < 100; ++i) {
        const double al = w(gen), be = w(gen), gm = g(gen), gp = gm + w(gen) * 0.5;
        track(build_smelu(be));
        track(build_gsmelu(al, be, gm, gp, t(gen)));
        track(build_asymmetric_smelu(al, be));
        track(build_leaky_smelu(be, gl(gen)));
        track(build_zero_cross_smelu(al, be, gm, gp));
        track(build_sig_rescu(be));
        track(join_linear_pieces({{g(gen), Point{-al, t(gen)}}, {g(gen), std::nullopt}}, {be}));
    }

    double cross = 0.0;
    const auto xs = linspace(-8.0, 8.0, 10000);
    auto agree = [&](const PiecewiseC1& p, const ActivationSpec& s) {
        for (double x : xs) {
            const double y = eval(s, x);
            cross = std::max(cross, std::abs(p(x) - y) / std::max(1.0, std::abs(y)));
            cross = std::max(cross, std::abs(p.slope(x) - grad(s, x)));
        }
    };
    for (double beta : {0.25, 1.0, 3.0}) agree(build_smelu(beta), ActivationSpec::smelu(beta));
    for (const GSmeLUParams& prm : {GSmeLUParams{0.7, 1.9, -0.3, 1.4, 0.25}, GSmeLUParams{2.0, 0.5, 0.1, 0.8, -1.0}})
        agree(build_gsmelu(prm), ActivationSpec::gsmelu(prm));
    const double secs = seconds_since(t0);
    return {knot < 1e-12 && cross < 1e-12 && secs < 10.0,
            fmt("worst knot residual %.2e, worst cross-implementation gap %.2e, %.2f s", knot, cross, secs)};
}

Outcome identities()
{
    double conv = 0.0;
    for (double beta : {0.5, 1.0, 2.0}) {
        const auto s = ActivationSpec::smelu(beta);
        for (double x : linspace(-4.0, 4.0, 161)) {
            const double box =
                oracle::simpson([&](double u) { return std::max(x - u, 0.0); }, -beta, beta, 10000) / (2.0 * beta);
            conv = std::max(conv, std::abs(eval(s, x) - box));
        }
    }
    double shift = 0.0;
    for (double beta : {0.5, 1.0, 2.0, 4.0}) {
        const double want = beta / 4.0 * std::log(4.0 / std::exp(1.0));
        const double got = eval(ActivationSpec::softplus(2.0 / beta), 0.0) - eval(ActivationSpec::smelu(beta), 0.0);
        shift = std::max(shift, std::abs(got - want));
    }
    return {conv < 1e-6 && shift < 1e-12,
            fmt("convolution gap %.2e, SoftPlus-SmeLU shift gap %.2e", conv, shift)};
}

Outcome metric_oracle()
{
    std::mt19937_64 gen(7);
    std::uniform_int_distribution<std::size_t> nd(1, 20), md(2, 5), ld(2, 4);
    double worst = 0.0;
    for (int trial = 0; trial < 500; ++trial) {
        const auto t = metrics_oracle::random_tensor(gen, nd(gen), md(gen), ld(gen));
        const auto& y = *t.true_labels();
        auto gap = [&](double a, double b) { worst = std::max(worst, std::abs(a - b)); };
        for (double p : {1.0, 2.0, 3.0}) gap(delta_p(t, p), metrics_oracle::delta_p(t, p));
        gap(delta_1_rel(t), metrics_oracle::delta_1_rel(t));
        gap(delta_1_label(t), metrics_oracle::delta_1_label(t, y));
        gap(delta_hamming(t), metrics_oracle::delta_hamming(t));
        if (t.labels() == 2) gap(delta_1_rel_binary(t), metrics_oracle::delta_1_rel_binary(t));
    }
    // two binary models: delta_1 = |p1 - p2| averaged over examples
    double pair = 0.0;
    for (int trial = 0; trial < 200; ++trial) {
        const auto t = metrics_oracle::random_tensor(gen, nd(gen), 2, 2);
        double want = 0.0;
        for (std::size_t n = 0; n < t.examples(); ++n) want += std::abs(t.at(n, 0, 1) - t.at(n, 1, 1));
        want /= static_cast<double>(t.examples());
        pair = std::max(pair, std::abs(delta_p(t, 1.0) - want));
    }
    return {worst < 1e-12 && pair < 1e-12, fmt("worst brute-force gap %.2e, M=2 binary gap %.2e", worst, pair)};
}

ExperimentConfig mnist_config(const std::string& activation, std::uint64_t base)
{
    return mnist_desk_preset(activation, std::string(SMELU_SOURCE_DIR) + "/data/mnist10k", base);
}

Outcome determinism()
{
    const auto t0 = std::chrono::steady_clock::now();
    auto cfg = mnist_config("smelu(beta=1)", 5);
    cfg.dataset.train_limit = 1000;
    cfg.dataset.test_limit = 300;
    cfg.network.hidden = {64, 64};
    cfg.epochs = 3; // dropout, shuffling and augmentation all active
    cfg.replicas = 3;
    const auto data = load_experiment_data(cfg.dataset);

    const auto a = run_replicas(cfg, data);
    const auto b = run_replicas(cfg, data);
    bool identical = true;
    for (std::size_t m = 0; m < a.replicas.size(); ++m)
        identical &= a.replicas[m].probabilities == b.replicas[m].probabilities && a.replicas[m].network == b.replicas[m].network;

    // the same replica from two runs, scored as a pair
    const auto pair = make_report(collect_predictions({a.replicas[0], b.replicas[0]}, data.test));
    const bool zero = pair.delta_1 == 0.0 && pair.delta_2 == 0.0 && pair.delta_1_rel == 0.0 && pair.delta_hamming == 0.0 &&
                      pair.delta_1_label.value_or(0.0) == 0.0;

    auto shared = cfg;
    shared.regime = RandomnessRegime::named("all_shared");
    const auto s = run_replicas(shared, data).report;
    const bool shared_zero = s.delta_1 == 0.0 && s.delta_2 == 0.0 && s.delta_hamming == 0.0;

    auto serial = cfg;
    serial.parallel = false;
    const bool same_report = to_json(run_replicas(serial, data).report).dump() == to_json(a.report).dump();
    std::ostringstream msg;
    msg << "repeat bit-identical=" << identical << ", repeat PD zero=" << zero << ", all_shared PD zero=" << shared_zero
        << ", serial==parallel=" << same_report << fmt(", %.1f s", seconds_since(t0));
    return {identical && zero && shared_zero && same_report, msg.str()};
}

Outcome mnist_direction()
{
    const auto t0 = std::chrono::steady_clock::now();
    const auto data = load_experiment_data(mnist_config("relu", 0).dataset);
    std::vector<double> relu_d1, smelu_d1, relu_err, smelu_err;
    for (std::uint64_t rep = 0; rep < 3; ++rep) {
        const auto r = run_replicas(mnist_config("relu", rep), data).report;
        const auto s = run_replicas(mnist_config("smelu(beta=1)", rep), data).report;
        relu_d1.push_back(r.delta_1);
        smelu_d1.push_back(s.delta_1);
        relu_err.push_back(r.error_rate->mean);
        smelu_err.push_back(s.error_rate->mean);
        std::printf("  repetition %d: ReLU delta_1 %.4f err %.4f | SmeLU delta_1 %.4f err %.4f\n", static_cast<int>(rep),
                    r.delta_1, r.error_rate->mean, s.delta_1, s.error_rate->mean);
        std::fflush(stdout);
    }
    const double d_relu = median(relu_d1), d_smelu = median(smelu_d1);
    const double err_gap = std::abs(median(smelu_err) - median(relu_err));
    const double secs = seconds_since(t0);
    return {d_smelu < d_relu && err_gap <= 0.01 && secs < 15 * 60,
            fmt("median delta_1 SmeLU %.4f vs ReLU %.4f, error-rate gap %.2f pp, %.0f s", d_smelu, d_relu, 100.0 * err_gap,
                secs)};
}

Outcome surfaces()
{
    SurfaceConfig linear;
    linear.activation = ActivationSpec::linear();
    const double residual = plane_fit_residual(sample_surface(linear));

    auto lap = [](ActivationSpec act) {
        SurfaceConfig c;
        c.activation = std::move(act);
        return mean_squared_laplacian(sample_surface(c));
    };
    const double relu = lap(ActivationSpec::relu()), half = lap(ActivationSpec::smelu(0.5)),
                 ten = lap(ActivationSpec::smelu(10.0));

    double norm_gap = 0.0;
    for (double v : {1.0, 2.5}) {
        SurfaceConfig c;
        c.normalization = Normalization::weight(v);
        ForwardCache cache;
        forward(surface_network(c), Matrix(1, 2), Mode::Infer, nullptr, &cache);
        for (const auto& layer : cache.layers)
            for (std::size_t j = 0; j < layer.effective_weights.rows; ++j) {
                double ss = 0.0;
                for (double x : layer.effective_weights.row(j)) ss += x * x;
                norm_gap = std::max(norm_gap, std::abs(std::sqrt(ss) - v));
            }
    }
    return {residual < 1e-9 && relu > half && half > ten && norm_gap < 1e-12,
            fmt("plane residual %.2e, laplacian ReLU %.4g > SmeLU(0.5) %.4g > SmeLU(10) %.4g", residual, relu, half, ten) +
                fmt(", row-norm gap %.2e", norm_gap)};
}

Outcome report_format()
{
    // the two header rows of the Criteo results table, read column-wise
    const std::vector<std::string> expected = {"AUC", "AUC stdev", "Δ1", "Δ1 stdev", "Δ1r %", "Δ1r stdev %"};
    const bool columns = table_columns() == expected;
    const auto header = table_header();
    std::size_t at = 0;
    bool ordered = true;
    for (const auto& c : expected) {
        const auto found = header.find(c, at);
        ordered &= found != std::string::npos;
        at = found == std::string::npos ? at : found + c.size();
    }
    PDReport r;
    r.auc = MeanStd{0.781, 0.0144};
    r.delta_1 = 0.053;
    r.delta_1_std = 0.033;
    r.delta_1_rel = 0.363;
    r.delta_1_rel_std = 0.192;
    std::istringstream row(table_row("ReLU", "", r));
    const std::vector<std::string> cells{std::istream_iterator<std::string>(row), std::istream_iterator<std::string>()};
    const bool row_ok = cells.size() == 1 + expected.size() && cells[5] == "36.3" && cells[6] == "19.2";
    return {columns && ordered && row_ok,
            std::string("Criteo tables not reproduced (dataset not bundled); columns match=") + (columns ? "1" : "0") +
                ", header ordered=" + (ordered ? "1" : "0") + ", row cells=" + std::to_string(cells.size())};
}

} // namespace

int main()
{
    const std::vector<std::pair<const char*, std::function<Outcome()>>> criteria = {
        {"gradient oracle suite", gradient_suite},
        {"C1 construction suite", c1_suite},
        {"closed-form identities", identities},
        {"metric oracle suite", metric_oracle},
        {"determinism", determinism},
        {"MNIST desk-scale direction", mnist_direction},
        {"surface checks", surfaces},
        {"report format / Criteo scope", report_format},
    };
    int failures = 0;
    for (const auto& [name, check] : criteria) {
        Outcome o;
        try {
            o = check();
        } catch (const std::exception& e) {
            o = {false, std::string("exception: ") + e.what()};
        }
        failures += !o.pass;
        std::printf("%s %s: %s\n", o.pass ? "PASS" : "FAIL", name, o.detail.c_str());
        std::fflush(stdout);
    }
    return failures == 0 ? 0 : 1;
}
