// Command line front end for the experiment harness.

#include <filesystem>
#include <fstream>
#include <iostream>
#include <string>
#include <vector>

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include "smelu/smelu.hpp"

namespace {

nlohmann::json read_json(const std::string& path)
{
    std::ifstream in(path);
    if (!in) throw smelu::ConfigError("cannot open " + path);
    try {
        return nlohmann::json::parse(in);
    } catch (const nlohmann::json::parse_error& e) {
        throw smelu::ConfigError(path + ": " + e.what());
    }
}

std::ofstream open_out(const std::string& path)
{
    std::ofstream out(path);
    if (!out) throw smelu::FormatError("cannot write " + path);
    return out;
}

int fail(const std::string& kind, const std::string& message, nlohmann::json extra = nlohmann::json::object())
{
    extra["error"] = kind;
    extra["message"] = message;
    std::cerr << extra.dump() << '\n';
    return 1;
}

} // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Smooth activation reproducibility experiments"};
    app.require_subcommand(1);

    std::string config_path, out_path, spec, range = "-5:5:0.01", out_dir, format = "json", model, param;
    std::vector<std::string> prediction_files;
    bool serial = false;

    auto* train = app.add_subcommand("train-replicas", "train M replicas and print the PD report");
    train->add_option("--config", config_path, "experiment JSON")->required();
    train->add_option("--out-dir", out_dir, "artifact directory (overrides the config)");
    train->add_flag("--serial", serial, "run replicas one after another");

    auto* surface = app.add_subcommand("surface", "sample a random network's output surface");
    surface->add_option("--config", config_path, "surface JSON")->required();
    surface->add_option("--out", out_path, "CSV path (x1,x2,y)")->required();

    auto* dump = app.add_subcommand("dump-activation", "write x, y, dy/dx of an activation");
    dump->add_option("--spec", spec, "activation, e.g. smelu(beta=1)")->required();
    dump->add_option("--range", range, "a:b:step");
    dump->add_option("--out", out_path, "CSV path")->required();

    auto* report = app.add_subcommand("pd-report", "PD metrics of per-replica prediction CSVs");
    report->add_option("--predictions", prediction_files, "one CSV per replica")->required()->expected(2, -1);
    report->add_option("--format", format, "json or table")->check(CLI::IsMember({"json", "table"}));
    report->add_option("--model", model, "model column for table output");
    report->add_option("--param", param, "parameter column for table output");

    try {
        app.parse(argc, argv);
    } catch (const CLI::CallForHelp& e) {
        return app.exit(e);
    } catch (const CLI::Error& e) {
        return fail("usage", e.what());
    }

    try {
        if (*train) {
            auto cfg = smelu::experiment_from_json(read_json(config_path));
            if (!out_dir.empty()) cfg.output_dir = out_dir;
            if (serial) cfg.parallel = false;
            const auto result = smelu::run_replicas(cfg);
            auto doc = smelu::to_json(result.report);
            if (!cfg.label.empty()) doc["label"] = cfg.label;
            std::cout << doc.dump(2) << '\n';
        } else if (*surface) {
            const auto grid = smelu::sample_surface(smelu::surface_from_json(read_json(config_path)));
            auto out = open_out(out_path);
            smelu::write_surface_csv(out, grid);
            std::cout << nlohmann::json{{"mean_squared_laplacian", smelu::mean_squared_laplacian(grid)},
                                        {"plane_fit_residual", smelu::plane_fit_residual(grid)}}
                             .dump()
                      << '\n';
        } else if (*dump) {
            const auto r = smelu::parse_range(range);
            const auto act = smelu::parse_activation(spec);
            auto out = open_out(out_path);
            const auto xs = r.points();
            smelu::dump_activation(out, act, xs);
        } else if (*report) {
            std::vector<smelu::PredictionFile> files;
            for (const auto& path : prediction_files) {
                std::ifstream in(path);
                if (!in) throw smelu::FormatError("cannot open " + path);
                files.push_back(smelu::read_predictions_csv(in, path));
            }
            const auto rep = smelu::make_report(smelu::tensor_from_prediction_files(files));
            if (format == "table")
                std::cout << smelu::table_header() << '\n' << smelu::table_row(model, param, rep) << '\n';
            else
                std::cout << smelu::to_json(rep).dump(2) << '\n';
        }
    } catch (const smelu::ParseError& e) {
        return fail(e.kind(), e.what(), {{"position", e.position()}});
    } catch (const smelu::GeometryError& e) {
        return fail(e.kind(), e.what(), {{"knot", e.knot()}});
    } catch (const smelu::Error& e) {
        return fail(e.kind(), e.what());
    } catch (const std::exception& e) {
        return fail("internal", e.what());
    }
    return 0;
}
