// Batch front end: synthetic dataset generation, activation filtering,
// featurization, base/fusion training, evaluation, the truncation and
// dissimilarity sweeps, and the separability verification harness.

#include <CLI11.hpp>
#include <nlohmann/json.hpp>

#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <string>
#include <vector>

#include "xmd/io_util.hpp"
#include "xmd/pipeline.hpp"

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

struct CommonArgs {
    std::string config_path;
    std::string out_dir = "out";
    std::optional<uint64_t> seed;
};

void add_common(CLI::App* cmd, CommonArgs& args) {
    cmd->add_option("--config", args.config_path, "JSON config file (defaults apply when omitted)");
    cmd->add_option("--out", args.out_dir, "output directory")->capture_default_str();
    cmd->add_option("--seed", args.seed, "master seed (overrides the config seed)");
}

xmd::RunConfig load_config(const CommonArgs& args) {
    json doc = json::object();
    if (!args.config_path.empty()) {
        try {
            doc = json::parse(xmd::read_text_file(args.config_path));
        } catch (const json::parse_error& e) {
            xmd::fail(xmd::ErrorCode::ParseError, std::string("config: ") + e.what());
        }
    }
    return xmd::run_config_from_json(doc, args.seed);
}

void log_outputs(const CommonArgs& args, const std::string& command,
                 const std::vector<std::string>& files) {
    for (const auto& f : files) std::cout << f << '\n';
    // Wall-clock lives only here, never in an artifact.
    std::ofstream log(fs::path(args.out_dir) / "run_log.txt", std::ios::app);
    const auto now = std::chrono::system_clock::now().time_since_epoch();
    log << command << " @"
        << std::chrono::duration_cast<std::chrono::milliseconds>(now).count() << "ms -> "
        << files.size() << " files\n";
}

}  // namespace

int main(int argc, char** argv) {
    CLI::App app{"multi-channel hardware-telemetry malware-detection pipeline"};
    app.require_subcommand(1);

    CommonArgs args;
    double min_runtime = xmd::kDefaultMinRuntimeS;
    std::vector<double> thresholds = {0, 5, 10, 15, 20, 25, 30};
    std::optional<double> truncate_s;
    std::optional<int> instances;

    auto* synth = app.add_subcommand("synth", "generate the synthetic dataset");
    add_common(synth, args);

    auto* filter = app.add_subcommand("filter", "activation-filter report");
    add_common(filter, args);
    filter->add_option("--min-runtime", min_runtime, "runtime threshold in seconds")
        ->capture_default_str();

    auto* gridsearch = app.add_subcommand("gridsearch-filter",
                                          "sweep the activation threshold against test F1");
    add_common(gridsearch, args);
    gridsearch->add_option("--thresholds", thresholds, "thresholds to try")->delimiter(',');

    auto* featurize = app.add_subcommand("featurize", "write per-channel feature matrices");
    add_common(featurize, args);
    featurize->add_option("--truncate", truncate_s, "truncate sessions to the first N seconds");

    auto* train_base = app.add_subcommand("train-base", "train per-channel base classifiers");
    add_common(train_base, args);

    auto* train_fusion = app.add_subcommand("train-fusion", "train stacked-generalization stages");
    add_common(train_fusion, args);

    auto* evaluate = app.add_subcommand("evaluate", "fusion tables and ROC on the test split");
    add_common(evaluate, args);

    auto* sweep = app.add_subcommand("sweep-truncation", "F1 vs truncated duration");
    add_common(sweep, args);

    auto* ds = app.add_subcommand("ds", "dissimilarity score vs channel count");
    add_common(ds, args);

    auto* manifold = app.add_subcommand("manifold-verify",
                                        "hull-union and solution-volume verification");
    add_common(manifold, args);
    manifold->add_option("--instances", instances, "number of random instances");

    auto* report = app.add_subcommand("report", "bundle all artifacts into one JSON");
    add_common(report, args);

    CLI11_PARSE(app, argc, argv);

    try {
        const xmd::RunConfig config = load_config(args);
        const fs::path out_dir(args.out_dir);
        fs::create_directories(out_dir);

        std::vector<std::string> files;
        std::string command;
        if (synth->parsed()) {
            command = "synth";
            files = xmd::cmd_synth(config, out_dir);
        } else if (filter->parsed()) {
            command = "filter";
            files = xmd::cmd_filter(config, out_dir, min_runtime);
        } else if (gridsearch->parsed()) {
            command = "gridsearch-filter";
            files = xmd::cmd_gridsearch_filter(config, out_dir, thresholds);
        } else if (featurize->parsed()) {
            command = "featurize";
            files = xmd::cmd_featurize(config, out_dir, truncate_s);
        } else if (train_base->parsed()) {
            command = "train-base";
            files = xmd::cmd_train_base(config, out_dir);
        } else if (train_fusion->parsed()) {
            command = "train-fusion";
            files = xmd::cmd_train_fusion(config, out_dir);
        } else if (evaluate->parsed()) {
            command = "evaluate";
            files = xmd::cmd_evaluate(config, out_dir);
        } else if (sweep->parsed()) {
            command = "sweep-truncation";
            files = xmd::cmd_sweep_truncation(config, out_dir);
        } else if (ds->parsed()) {
            command = "ds";
            files = xmd::cmd_ds(config, out_dir);
        } else if (manifold->parsed()) {
            command = "manifold-verify";
            files = xmd::cmd_manifold_verify(config, out_dir, instances);
        } else if (report->parsed()) {
            command = "report";
            files = xmd::cmd_report(config, out_dir);
        }
        log_outputs(args, command, files);
        return 0;
    } catch (const xmd::Error& e) {
        std::cerr << json{{"error", xmd::error_code_name(e.code())}, {"message", e.what()}}.dump()
                  << std::endl;
        return 1;
    } catch (const std::exception& e) {
        std::cerr << json{{"error", "Internal"}, {"message", e.what()}}.dump() << std::endl;
        return 1;
    }
}
