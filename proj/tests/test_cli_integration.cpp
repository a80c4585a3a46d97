#include <doctest.h>

#include <cstdlib>
#include <filesystem>
#include <fstream>

#include <nlohmann/json.hpp>

#include "xmd/io_util.hpp"

using nlohmann::json;
namespace fs = std::filesystem;

namespace {

struct TempDir {
    fs::path path;
    explicit TempDir(const std::string& name) : path(fs::temp_directory_path() / name) {
        fs::remove_all(path);
        fs::create_directories(path);
    }
    ~TempDir() { fs::remove_all(path); }
};

int run_cli(const std::string& args, const fs::path& stderr_to = {}) {
    std::string command = std::string(XMD_CLI_PATH) + " " + args + " >/dev/null";
    if (!stderr_to.empty()) command += " 2>" + stderr_to.string();
    else command += " 2>/dev/null";
    const int status = std::system(command.c_str());
    return WEXITSTATUS(status);
}

}  // namespace

TEST_CASE("cli: full pipeline smoke on a tiny config") {
    TempDir tmp("xmd_cli_smoke");
    const fs::path config_path = tmp.path / "config.json";
    xmd::write_text_file(config_path, json{
        {"plant", {{"n_benign_apks", 8}, {"n_malware_apks", 8}, {"duration_s", 10.0},
                   {"effects", {{"globl_12", {{"mean_shift", 1.0}}},
                                {"hpc1", {{"mean_shift", 0.8}}},
                                {"hpc2", {{"mean_shift", 0.8}}},
                                {"hpc3", {{"mean_shift", 0.8}}},
                                {"hpc4", {{"mean_shift", 0.8}}}}}}},
        {"suite", {{"rf_trees", 15}}},
        {"min_runtime_s", 2.0},
        {"ds_orderings", 2},
        {"manifold_instances", 2},
        {"manifold_box_samples", 2000},
        {"volume_samples", 10000},
    }.dump());

    const std::string base = "--config " + config_path.string() + " --seed 7 --out " +
                             (tmp.path / "out").string();
    CHECK(run_cli("synth " + base) == 0);
    CHECK(run_cli("filter " + base + " --min-runtime 2") == 0);
    CHECK(run_cli("featurize " + base) == 0);
    CHECK(run_cli("train-base " + base) == 0);
    CHECK(run_cli("train-fusion " + base) == 0);
    CHECK(run_cli("evaluate " + base) == 0);
    CHECK(run_cli("ds " + base) == 0);
    CHECK(run_cli("manifold-verify " + base + " --instances 2") == 0);
    CHECK(run_cli("report " + base) == 0);

    for (const auto* artifact :
         {"dataset/manifest.csv", "filter_report.json", "figure4_f1.csv",
          "table7_hpc_fusion.csv", "figure5_ds.csv", "manifold_report.json", "report.json"}) {
        CHECK(fs::exists(tmp.path / "out" / artifact));
    }
    const auto report = json::parse(xmd::read_text_file(tmp.path / "out" / "report.json"));
    CHECK(report.contains("config_hash"));
    CHECK(report.at("seed").get<uint64_t>() == 7);
}

TEST_CASE("cli: machine-readable error on missing artifacts") {
    TempDir tmp("xmd_cli_error");
    const fs::path err_file = tmp.path / "err.json";
    const int status =
        run_cli("evaluate --out " + (tmp.path / "out").string() + " --seed 3", err_file);
    CHECK(status != 0);
    const auto err = json::parse(xmd::read_text_file(err_file));
    CHECK(err.at("error").get<std::string>() == "MissingArtifact");
    CHECK(err.at("message").get<std::string>().find("manifest.csv") != std::string::npos);
}

TEST_CASE("cli: unknown config keys exit nonzero with a json error") {
    TempDir tmp("xmd_cli_badcfg");
    const fs::path config_path = tmp.path / "config.json";
    xmd::write_text_file(config_path, R"({"plan": {}})");
    const fs::path err_file = tmp.path / "err.json";
    const int status = run_cli("synth --config " + config_path.string() + " --out " +
                                   (tmp.path / "out").string(),
                               err_file);
    CHECK(status != 0);
    const auto err = json::parse(xmd::read_text_file(err_file));
    CHECK(err.at("error").get<std::string>() == "InvalidConfig");
}
