#pragma once

// Batch pipeline behind the CLI: config parsing, staged artifacts (dataset,
// features, models, reports), and one function per subcommand. Every artifact
// is deterministic for a fixed config + seed; wall-clock only ever goes to the
// separate run log.

#include <cstdint>
#include <filesystem>
#include <optional>
#include <string>
#include <vector>

#include "xmd/fusion.hpp"
#include "xmd/ingest.hpp"
#include "xmd/manifold.hpp"
#include "xmd/rng.hpp"
#include "xmd/stats.hpp"
#include "xmd/synthgen.hpp"

#include <nlohmann/json_fwd.hpp>

namespace xmd {

struct RunConfig {
    PlantSpec plant;
    SuiteConfig suite;
    double min_runtime_s = kDefaultMinRuntimeS;
    OrderingPolicy ds_policy = OrderingPolicy::Random;
    int ds_orderings = 20;
    double ds_threshold = kDsThreshold;
    int manifold_instances = 50;
    size_t manifold_box_samples = 20000;   // lemma box sampling per instance
    size_t volume_samples = 100000;        // sphere sampling per volume estimate
    uint64_t seed = 0;
};

// Unknown keys anywhere in the document are errors. A seed given on the
// command line overrides the config seed everywhere.
RunConfig run_config_from_json(const nlohmann::json& doc, std::optional<uint64_t> seed_override);
nlohmann::json run_config_to_json(const RunConfig& config);

// FNV-1a over the canonical dump of the effective config.
std::string config_hash(const RunConfig& config);

// Subcommand bodies. All write under out_dir and return the paths they wrote.
std::vector<std::string> cmd_synth(const RunConfig& config, const std::filesystem::path& out_dir);
std::vector<std::string> cmd_filter(const RunConfig& config, const std::filesystem::path& out_dir,
                                    double min_runtime_s);
std::vector<std::string> cmd_gridsearch_filter(const RunConfig& config,
                                               const std::filesystem::path& out_dir,
                                               const std::vector<double>& thresholds);
std::vector<std::string> cmd_featurize(const RunConfig& config,
                                       const std::filesystem::path& out_dir,
                                       std::optional<double> truncate_s);
std::vector<std::string> cmd_train_base(const RunConfig& config,
                                        const std::filesystem::path& out_dir);
std::vector<std::string> cmd_train_fusion(const RunConfig& config,
                                          const std::filesystem::path& out_dir);
std::vector<std::string> cmd_evaluate(const RunConfig& config,
                                      const std::filesystem::path& out_dir);
std::vector<std::string> cmd_sweep_truncation(const RunConfig& config,
                                              const std::filesystem::path& out_dir);
std::vector<std::string> cmd_ds(const RunConfig& config, const std::filesystem::path& out_dir);
std::vector<std::string> cmd_manifold_verify(const RunConfig& config,
                                             const std::filesystem::path& out_dir,
                                             std::optional<int> instances_override);
std::vector<std::string> cmd_report(const RunConfig& config, const std::filesystem::path& out_dir);

// Deterministic random fixtures shared by the manifold-verify command and the
// verification suites.
HullSet random_hull_set(Rng& rng, int dimension, int n_generators);
ManifoldInstance random_manifold_instance(Rng& rng, int dimension, int n_points, double margin);
// Channel instances whose classes are separable in a consistent direction.
std::vector<ManifoldInstance> informative_channel_instances(Rng& rng, int n_channels,
                                                            int dimension, int n_points);

}  // namespace xmd
