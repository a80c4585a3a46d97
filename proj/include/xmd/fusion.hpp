#pragma once

// Late-stage fusion of per-channel base classifiers (majority vote and stacked
// generalization) and the experiment drivers: per-channel suite, GLOBL/DVFS
// fusion, HPC fusion table, and the truncated-duration sweep.

#include <array>
#include <cstdint>
#include <optional>
#include <span>
#include <vector>

#include "xmd/features.hpp"
#include "xmd/learn.hpp"
#include "xmd/telemetry.hpp"

#include <nlohmann/json_fwd.hpp>

namespace xmd {

// Strict majority; an exact tie goes to tie_break.
ClassLabel fuse_vote(const std::vector<ClassLabel>& decisions,
                     ClassLabel tie_break = ClassLabel::Malware);

struct FusionModel {
    enum class Kind { EnsembleVote, StackedGeneralization };

    Kind kind = Kind::EnsembleVote;
    std::vector<ChannelId> members;  // ordered, no duplicates
    ClassLabel tie_break = ClassLabel::Malware;
    std::optional<LogisticModel> sg;
    bool use_probabilities = true;  // SG input: member probabilities vs hard decisions

    void validate() const;
};

// Base-classifier outputs on one split, with the audit trail needed to reject
// contaminated stacking inputs.
struct BaseOutputs {
    std::vector<ChannelId> members;
    std::vector<std::string> apk_ids;             // per row
    std::vector<ClassLabel> labels;               // per row
    std::vector<std::vector<double>> probas;      // [row][member], in [0,1]
    Split split_tag = Split::TrainSG;
    std::vector<std::string> base_train_apks;     // union of member models' training APKs
};

FusionModel fuse_sg_train(const BaseOutputs& outputs, double l2_lambda, uint64_t seed,
                          bool use_probabilities = true);

struct FusedPrediction {
    ClassLabel label = ClassLabel::Benign;
    double score = 0.0;  // vote fraction or SG probability
};

FusedPrediction fuse_predict(const FusionModel& model, std::span<const double> member_probas);

struct SuiteConfig {
    FeatureConfig features;
    RfHyperparams rf;
    double sg_lambda = 0.01;
    bool sg_use_probabilities = true;
};

struct HygieneAudit {
    bool base_only_train = false;     // every base model fitted on Train APKs only
    bool sg_only_trainsg = false;     // every SG stage fitted on TrainSG rows only
    bool eval_only_test = false;      // every metric row comes from a Test APK
    bool contamination_free = false;  // TrainSG rows disjoint from base training APKs
    bool ok() const { return base_only_train && sg_only_trainsg && eval_only_test && contamination_free; }
};

struct FusionCell {
    EvalReport per_session;
    EvalReport per_apk;  // APK label = majority over its session decisions
};

struct ChannelEval {
    ChannelId channel;
    FusionCell eval;
};

struct ChannelSuiteResult {
    std::vector<ChannelEval> channels;  // 15 GLOBL then 4 HPC groups
    HygieneAudit audit;
};

ChannelSuiteResult run_channel_suite(const std::vector<TelemetrySession>& sessions,
                                     const SplitAssignment& split, const SuiteConfig& config,
                                     uint64_t seed);

struct GloblFusionResult {
    FusionCell dvfs_ensemble;   // members: GLOBL 1-11
    FusionCell dvfs_sg;
    FusionCell globl_ensemble;  // members: GLOBL 1-15
    FusionCell globl_sg;
    HygieneAudit audit;
};

GloblFusionResult run_globl_fusion(const std::vector<TelemetrySession>& sessions,
                                   const SplitAssignment& split, const SuiteConfig& config,
                                   uint64_t seed);

struct GroupFusionRow {
    int group = 0;
    FusionCell standalone;
    FusionCell dvfs_ensemble;   // GLOBL 1-11 + the group, 12 voters
    FusionCell dvfs_sg;
    FusionCell globl_ensemble;  // GLOBL 1-15 + the group, 16 voters
    FusionCell globl_sg;
};

struct FusionSuiteResult {
    std::vector<GroupFusionRow> rows;  // groups 1..4
    HygieneAudit audit;
};

FusionSuiteResult run_fusion_suite(const std::vector<TelemetrySession>& sessions,
                                   const SplitAssignment& split, const SuiteConfig& config,
                                   uint64_t seed);

enum class DetectorKind { HpcOnly, HpcDvfsEnsemble, HpcGloblEnsemble };
const char* detector_name(DetectorKind kind);

struct TruncationPoint {
    double window_s = 0.0;
    // f1[detector][group-1], session-level
    std::array<std::array<double, kHpcGroupCount>, 3> group_f1{};
    double mean_f1(DetectorKind kind) const;
    double min_f1(DetectorKind kind) const;
    double max_f1(DetectorKind kind) const;
};

struct TruncationSweepResult {
    std::vector<TruncationPoint> points;
};

std::vector<double> default_truncation_windows();  // 5, 10, ..., 40

TruncationSweepResult truncation_sweep(const std::vector<TelemetrySession>& sessions,
                                       const SplitAssignment& split, const SuiteConfig& config,
                                       const std::vector<double>& windows_s, uint64_t seed);

}  // namespace xmd
