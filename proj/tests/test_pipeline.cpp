#include <doctest.h>

#include <filesystem>

#include <nlohmann/json.hpp>

#include "xmd/io_util.hpp"
#include "xmd/pipeline.hpp"

using namespace xmd;
using nlohmann::json;
namespace fs = std::filesystem;

namespace {

json small_config_doc(uint64_t seed) {
    return json{
        {"plant",
         {{"n_benign_apks", 12},
          {"n_malware_apks", 12},
          {"iterations_per_apk", 8},
          {"duration_s", 12.0},
          {"low_runtime_frac_benign", 0.05},
          {"low_runtime_frac_malware", 0.2},
          {"effects",
           {{"globl_2", {{"mean_shift", 0.8}}},
            {"globl_12", {{"mean_shift", 0.6}, {"burst_rate_hz", 0.4}, {"burst_amplitude", 2.5}}},
            {"globl_13", {{"mean_shift", 0.6}, {"burst_rate_hz", 0.4}, {"burst_amplitude", 2.5}}},
            {"hpc1", {{"mean_shift", 0.5}}},
            {"hpc2", {{"mean_shift", 0.5}}},
            {"hpc3", {{"mean_shift", 0.5}}},
            {"hpc4", {{"mean_shift", 0.5}}}}}}},
        {"suite", {{"rf_trees", 25}}},
        {"min_runtime_s", 2.0},
        {"ds_orderings", 4},
        {"manifold_instances", 3},
        {"manifold_box_samples", 4000},
        {"volume_samples", 20000},
        {"seed", seed},
    };
}

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

}  // namespace

TEST_CASE("config parsing: seed override, unknown keys") {
    const auto config = run_config_from_json(small_config_doc(9), std::nullopt);
    CHECK(config.seed == 9);
    CHECK(config.plant.seed == 9);
    const auto overridden = run_config_from_json(small_config_doc(9), 123);
    CHECK(overridden.seed == 123);
    CHECK(overridden.plant.seed == 123);
    CHECK(config_hash(config) != config_hash(overridden));

    auto doc = small_config_doc(9);
    doc["unknown_section"] = 1;
    CHECK_THROWS_AS((void)run_config_from_json(doc, std::nullopt), Error);

    auto bad_suite = small_config_doc(9);
    bad_suite["suite"]["rf_treez"] = 10;
    CHECK_THROWS_AS((void)run_config_from_json(bad_suite, std::nullopt), Error);
}

TEST_CASE("pipeline: staged commands produce artifacts; missing artifacts are named") {
    TempDir tmp("xmd_pipeline_test");
    const auto config = run_config_from_json(small_config_doc(5), std::nullopt);

    // evaluate before anything exists
    try {
        (void)cmd_evaluate(config, tmp.path);
        FAIL("expected MissingArtifact");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingArtifact);
        CHECK(std::string(e.what()).find("manifest.csv") != std::string::npos);
    }

    (void)cmd_synth(config, tmp.path);
    CHECK(fs::exists(tmp.path / "dataset" / "manifest.csv"));

    // evaluate before train-base names the missing model file
    try {
        (void)cmd_evaluate(config, tmp.path);
        FAIL("expected MissingArtifact");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::MissingArtifact);
        CHECK(std::string(e.what()).find("models/base") != std::string::npos);
    }

    (void)cmd_filter(config, tmp.path, 5.0);  // sessions last 12 s; threshold below the pivot
    const auto filter_doc = json::parse(read_text_file(tmp.path / "filter_report.json"));
    CHECK(filter_doc.at("per_label").at("malware").at("session_activation_rate").get<double>() <
          filter_doc.at("per_label").at("benign").at("session_activation_rate").get<double>());

    (void)cmd_featurize(config, tmp.path, std::nullopt);
    CHECK(fs::exists(tmp.path / "features" / "globl_1.csv"));
    CHECK(fs::exists(tmp.path / "features" / "hpc4.csv"));

    (void)cmd_train_base(config, tmp.path);
    CHECK(fs::exists(tmp.path / "models" / "base" / "globl_12.csv") == false);
    CHECK(fs::exists(tmp.path / "models" / "base" / "globl_12.json"));
    CHECK(fs::exists(tmp.path / "figure4_f1.csv"));

    // train-fusion before ... after train-base works
    (void)cmd_train_fusion(config, tmp.path);
    CHECK(fs::exists(tmp.path / "models" / "fusion" / "sg_globl.json"));

    (void)cmd_evaluate(config, tmp.path);
    CHECK(fs::exists(tmp.path / "table6_globl_fusion.csv"));
    CHECK(fs::exists(tmp.path / "table7_hpc_fusion.csv"));
    CHECK(fs::exists(tmp.path / "figure7_roc.csv"));
    const auto eval_doc = json::parse(read_text_file(tmp.path / "evaluation.json"));
    CHECK(eval_doc.at("audit").at("ok").get<bool>());
    CHECK(eval_doc.at("config_hash").get<std::string>() == config_hash(config));

    (void)cmd_ds(config, tmp.path);
    CHECK(fs::exists(tmp.path / "figure5_ds.csv"));
    const auto ds_lines = read_text_file(tmp.path / "figure5_ds.csv");
    CHECK(ds_lines.rfind("k,ds_mean,ds_std,ordering_policy", 0) == 0);

    (void)cmd_manifold_verify(config, tmp.path, 2);
    const auto manifold_doc = json::parse(read_text_file(tmp.path / "manifold_report.json"));
    CHECK(manifold_doc.at("all_pass").get<bool>());

    (void)cmd_report(config, tmp.path);
    const auto report_doc = json::parse(read_text_file(tmp.path / "report.json"));
    CHECK(report_doc.at("artifacts").contains("table7_hpc_fusion.csv"));
    CHECK(report_doc.at("artifacts").contains("manifold_report.json"));
}

TEST_CASE("pipeline: identical config and seed give byte-identical artifacts") {
    TempDir a("xmd_pipeline_det_a");
    TempDir b("xmd_pipeline_det_b");
    const auto config = run_config_from_json(small_config_doc(31), std::nullopt);

    for (const auto* dir : {&a.path, &b.path}) {
        (void)cmd_synth(config, *dir);
        (void)cmd_filter(config, *dir, 15.0);
        (void)cmd_train_base(config, *dir);
        (void)cmd_train_fusion(config, *dir);
        (void)cmd_evaluate(config, *dir);
        (void)cmd_ds(config, *dir);
        (void)cmd_report(config, *dir);
    }
    for (const auto* name :
         {"dataset/manifest.csv", "filter_report.json", "figure4_f1.csv", "split.csv",
          "table6_globl_fusion.csv", "table7_hpc_fusion.csv", "figure7_roc.csv",
          "evaluation.json", "figure5_ds.csv", "report.json"}) {
        CHECK(read_text_file(a.path / name) == read_text_file(b.path / name));
    }
}

TEST_CASE("gridsearch-filter covers the threshold sweep") {
    TempDir tmp("xmd_gridsearch_test");
    const auto config = run_config_from_json(small_config_doc(13), std::nullopt);
    (void)cmd_synth(config, tmp.path);
    (void)cmd_gridsearch_filter(config, tmp.path, {0.0, 8.0});
    const auto csv = read_text_file(tmp.path / "gridsearch_filter.csv");
    CHECK(csv.rfind("threshold_s,sessions_kept,mean_fused_f1,status", 0) == 0);
    CHECK(csv.find("\n0,") != std::string::npos);
    CHECK(csv.find("\n8,") != std::string::npos);
}

TEST_CASE("featurize --truncate restricts the window") {
    TempDir tmp("xmd_trunc_feat_test");
    const auto config = run_config_from_json(small_config_doc(3), std::nullopt);
    (void)cmd_synth(config, tmp.path);
    (void)cmd_featurize(config, tmp.path, 6.0);
    const auto report = json::parse(read_text_file(tmp.path / "featurize_report.json"));
    CHECK(report.at("truncate_s").get<double>() == 6.0);
}
