#include "xmd/fusion.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>

#include "xmd/ingest.hpp"
#include "xmd/rng.hpp"

namespace xmd {

ClassLabel fuse_vote(const std::vector<ClassLabel>& decisions, ClassLabel tie_break) {
    require(!decisions.empty(), ErrorCode::EmptyDecisionList, "no decisions to fuse");
    size_t malware = 0;
    for (ClassLabel d : decisions)
        if (d == ClassLabel::Malware) ++malware;
    const size_t benign = decisions.size() - malware;
    if (malware > benign) return ClassLabel::Malware;
    if (benign > malware) return ClassLabel::Benign;
    return tie_break;
}

void FusionModel::validate() const {
    require(!members.empty(), ErrorCode::EmptyDecisionList, "fusion model has no members");
    std::set<ChannelId> distinct(members.begin(), members.end());
    require(distinct.size() == members.size(), ErrorCode::InvalidConfig,
            "duplicate fusion members");
    if (kind == Kind::StackedGeneralization) {
        require(sg.has_value(), ErrorCode::InvalidConfig, "SG fusion without a second-stage model");
        require(sg->weights.size() == members.size(), ErrorCode::DimensionMismatch,
                "SG input dimension != member count");
    }
}

FusionModel fuse_sg_train(const BaseOutputs& outputs, double l2_lambda, uint64_t seed,
                          bool use_probabilities) {
    require(outputs.split_tag == Split::TrainSG, ErrorCode::SplitTagMismatch,
            std::string("stacking inputs tagged '") + split_name(outputs.split_tag) +
                "', expected 'trainSG'");
    require(!outputs.members.empty(), ErrorCode::EmptyDecisionList, "no fusion members");
    require(outputs.apk_ids.size() == outputs.probas.size() &&
                outputs.labels.size() == outputs.probas.size(),
            ErrorCode::DimensionMismatch, "ragged base-output rows");

    const std::set<std::string> train_apks(outputs.base_train_apks.begin(),
                                           outputs.base_train_apks.end());
    for (const auto& apk : outputs.apk_ids)
        require(!train_apks.contains(apk), ErrorCode::SplitContamination,
                "apk " + apk + " appears in both Train and TrainSG");

    std::vector<std::vector<double>> inputs;
    inputs.reserve(outputs.probas.size());
    for (const auto& row : outputs.probas) {
        require(row.size() == outputs.members.size(), ErrorCode::DimensionMismatch,
                "base-output row width != member count");
        for (double p : row)
            require(p >= 0.0 && p <= 1.0, ErrorCode::InvalidConfig,
                    "base outputs must be probabilities in [0,1]");
        if (use_probabilities) {
            inputs.push_back(row);
        } else {
            std::vector<double> decided(row.size());
            for (size_t j = 0; j < row.size(); ++j) decided[j] = row[j] >= 0.5 ? 1.0 : 0.0;
            inputs.push_back(std::move(decided));
        }
    }

    FusionModel model;
    model.kind = FusionModel::Kind::StackedGeneralization;
    model.members = outputs.members;
    model.use_probabilities = use_probabilities;
    model.sg = logreg_fit(inputs, outputs.labels, l2_lambda, seed);
    model.sg->trained_on = Split::TrainSG;
    model.validate();
    return model;
}

FusedPrediction fuse_predict(const FusionModel& model, std::span<const double> member_probas) {
    model.validate();
    require(member_probas.size() == model.members.size(), ErrorCode::DimensionMismatch,
            "member output count mismatch");
    FusedPrediction out;
    if (model.kind == FusionModel::Kind::EnsembleVote) {
        std::vector<ClassLabel> decisions;
        decisions.reserve(member_probas.size());
        size_t malware = 0;
        for (double p : member_probas) {
            const bool m = p >= 0.5;
            decisions.push_back(m ? ClassLabel::Malware : ClassLabel::Benign);
            if (m) ++malware;
        }
        out.label = fuse_vote(decisions, model.tie_break);
        out.score = static_cast<double>(malware) / static_cast<double>(member_probas.size());
    } else {
        std::vector<double> input(member_probas.begin(), member_probas.end());
        if (!model.use_probabilities)
            for (double& v : input) v = v >= 0.5 ? 1.0 : 0.0;
        out.score = logreg_predict_proba(*model.sg, input);
        out.label = out.score >= 0.5 ? ClassLabel::Malware : ClassLabel::Benign;
    }
    return out;
}

const char* detector_name(DetectorKind kind) {
    switch (kind) {
        case DetectorKind::HpcOnly: return "hpc_only";
        case DetectorKind::HpcDvfsEnsemble: return "hpc_dvfs_ensemble";
        case DetectorKind::HpcGloblEnsemble: return "hpc_globl_ensemble";
    }
    return "?";
}

double TruncationPoint::mean_f1(DetectorKind kind) const {
    const auto& row = group_f1[static_cast<size_t>(kind)];
    double acc = 0.0;
    for (double v : row) acc += v;
    return acc / static_cast<double>(row.size());
}

double TruncationPoint::min_f1(DetectorKind kind) const {
    const auto& row = group_f1[static_cast<size_t>(kind)];
    return *std::min_element(row.begin(), row.end());
}

double TruncationPoint::max_f1(DetectorKind kind) const {
    const auto& row = group_f1[static_cast<size_t>(kind)];
    return *std::max_element(row.begin(), row.end());
}

std::vector<double> default_truncation_windows() {
    return {5.0, 10.0, 15.0, 20.0, 25.0, 30.0, 35.0, 40.0};
}

namespace {

// Session indexing, per-channel features, base models, and cached
// probabilities shared by the suite drivers.
class Workbench {
public:
    Workbench(const std::vector<TelemetrySession>& sessions, const SplitAssignment& split,
              const SuiteConfig& cfg, uint64_t seed)
        : split_(split), cfg_(cfg), seed_(seed) {
        for (const auto& s : sessions) {
            if (s.channel_set.is_globl()) {
                globl_by_run_[{s.apk_id, s.iteration}] = globl_.size();
                globl_.push_back(&s);
            } else {
                hpc_[static_cast<size_t>(s.channel_set.hpc_group() - 1)].push_back(&s);
            }
        }
        featurize();
        train_base_models();
    }

    const SplitAssignment& split() const { return split_; }

    double globl_proba(int channel, size_t row) const {
        return globl_probas_[static_cast<size_t>(channel - 1)][row];
    }
    double hpc_proba(int group, size_t row) const {
        return hpc_probas_[static_cast<size_t>(group - 1)][row];
    }
    const std::vector<const TelemetrySession*>& globl_sessions() const { return globl_; }
    const std::vector<const TelemetrySession*>& hpc_sessions(int group) const {
        return hpc_[static_cast<size_t>(group - 1)];
    }
    size_t globl_row_for_run(const TelemetrySession& hpc_session) const {
        const auto it = globl_by_run_.find({hpc_session.apk_id, hpc_session.iteration});
        require(it != globl_by_run_.end(), ErrorCode::ManifestInconsistent,
                "no GLOBL session paired with " + hpc_session.session_id);
        return it->second;
    }

    const std::vector<std::string>& base_train_apks() const { return base_train_apks_; }
    bool base_only_train() const { return base_only_train_; }

    // Member probabilities for one sample. HPC member index is the group; the
    // sample is (hpc row, paired globl row). A pure-GLOBL sample passes group=0.
    std::vector<double> member_probas(const std::vector<ChannelId>& members, size_t globl_row,
                                      int group, size_t hpc_row) const {
        std::vector<double> out;
        out.reserve(members.size());
        for (const auto& member : members) {
            if (member.is_globl())
                out.push_back(globl_proba(member.index, globl_row));
            else {
                require(member.index == group, ErrorCode::InvalidConfig,
                        "sample does not carry HPC group " + std::to_string(member.index));
                out.push_back(hpc_proba(group, hpc_row));
            }
        }
        return out;
    }

    FusionCell evaluate_rows(const std::vector<double>& scores,
                             const std::vector<ClassLabel>& labels,
                             const std::vector<std::string>& apks) const {
        FusionCell cell;
        cell.per_session = evaluate(scores, labels);
        // APK verdict: majority over its sessions' decisions, ties to malware.
        std::map<std::string, std::pair<std::vector<ClassLabel>, ClassLabel>> by_apk;
        for (size_t i = 0; i < scores.size(); ++i) {
            auto& entry = by_apk[apks[i]];
            entry.first.push_back(scores[i] >= 0.5 ? ClassLabel::Malware : ClassLabel::Benign);
            entry.second = labels[i];
        }
        std::vector<double> apk_scores;
        std::vector<ClassLabel> apk_labels;
        for (const auto& [apk, entry] : by_apk) {
            apk_scores.push_back(fuse_vote(entry.first) == ClassLabel::Malware ? 1.0 : 0.0);
            apk_labels.push_back(entry.second);
        }
        cell.per_apk = evaluate(apk_scores, apk_labels);
        return cell;
    }

private:
    void featurize() {
        for (size_t i = 0; i < globl_.size(); ++i) {
            for (int c = 1; c <= kGloblChannelCount; ++c)
                globl_feats_[static_cast<size_t>(c - 1)].push_back(
                    featurize_channel(*globl_[i], ChannelId::globl(c), cfg_.features).values);
        }
        for (int group = 1; group <= kHpcGroupCount; ++group) {
            for (const auto* s : hpc_[static_cast<size_t>(group - 1)])
                hpc_feats_[static_cast<size_t>(group - 1)].push_back(
                    featurize_channel(*s, ChannelId::hpc(group), cfg_.features).values);
        }
    }

    RandomForestModel fit_channel(ChannelId channel,
                                  const std::vector<const TelemetrySession*>& carriers,
                                  const std::vector<std::vector<double>>& feats) {
        std::vector<std::vector<double>> x;
        std::vector<ClassLabel> y;
        std::set<std::string> apks;
        for (size_t i = 0; i < carriers.size(); ++i) {
            if (split_.of(carriers[i]->apk_id) != Split::Train) continue;
            x.push_back(feats[i]);
            y.push_back(carriers[i]->label);
            apks.insert(carriers[i]->apk_id);
        }
        auto model = rf_fit(x, y, cfg_.rf, mix_seed(seed_, hash_str("rf/" + channel.name())));
        model.channel = channel;
        model.trained_on = Split::Train;
        model.train_apks.assign(apks.begin(), apks.end());
        return model;
    }

    void train_base_models() {
        std::set<std::string> all_train_apks;
        base_only_train_ = true;
        for (int c = 1; c <= kGloblChannelCount; ++c) {
            auto model =
                fit_channel(ChannelId::globl(c), globl_, globl_feats_[static_cast<size_t>(c - 1)]);
            for (const auto& apk : model.train_apks) {
                all_train_apks.insert(apk);
                if (split_.of(apk) != Split::Train) base_only_train_ = false;
            }
            globl_models_.push_back(std::move(model));
        }
        for (int g = 1; g <= kHpcGroupCount; ++g) {
            auto model = fit_channel(ChannelId::hpc(g), hpc_[static_cast<size_t>(g - 1)],
                                     hpc_feats_[static_cast<size_t>(g - 1)]);
            for (const auto& apk : model.train_apks) {
                all_train_apks.insert(apk);
                if (split_.of(apk) != Split::Train) base_only_train_ = false;
            }
            hpc_models_.push_back(std::move(model));
        }
        base_train_apks_.assign(all_train_apks.begin(), all_train_apks.end());

        for (int c = 1; c <= kGloblChannelCount; ++c) {
            auto& probas = globl_probas_[static_cast<size_t>(c - 1)];
            for (const auto& feats : globl_feats_[static_cast<size_t>(c - 1)])
                probas.push_back(
                    rf_predict_proba(globl_models_[static_cast<size_t>(c - 1)], feats));
        }
        for (int g = 1; g <= kHpcGroupCount; ++g) {
            auto& probas = hpc_probas_[static_cast<size_t>(g - 1)];
            for (const auto& feats : hpc_feats_[static_cast<size_t>(g - 1)])
                probas.push_back(rf_predict_proba(hpc_models_[static_cast<size_t>(g - 1)], feats));
        }
    }

    const SplitAssignment& split_;
    SuiteConfig cfg_;
    uint64_t seed_;
    std::vector<const TelemetrySession*> globl_;
    std::array<std::vector<const TelemetrySession*>, kHpcGroupCount> hpc_;
    std::map<std::pair<std::string, int>, size_t> globl_by_run_;
    std::array<std::vector<std::vector<double>>, kGloblChannelCount> globl_feats_;
    std::array<std::vector<std::vector<double>>, kHpcGroupCount> hpc_feats_;
    std::vector<RandomForestModel> globl_models_;
    std::vector<RandomForestModel> hpc_models_;
    std::array<std::vector<double>, kGloblChannelCount> globl_probas_;
    std::array<std::vector<double>, kHpcGroupCount> hpc_probas_;
    std::vector<std::string> base_train_apks_;
    bool base_only_train_ = false;

public:
    const RandomForestModel& globl_model(int channel) const {
        return globl_models_[static_cast<size_t>(channel - 1)];
    }
    const RandomForestModel& hpc_model(int group) const {
        return hpc_models_[static_cast<size_t>(group - 1)];
    }
};

std::vector<ChannelId> dvfs_members() {
    std::vector<ChannelId> members;
    for (int c = 1; c <= kDvfsChannelCount; ++c) members.push_back(ChannelId::globl(c));
    return members;
}

std::vector<ChannelId> globl_members() {
    std::vector<ChannelId> members;
    for (int c = 1; c <= kGloblChannelCount; ++c) members.push_back(ChannelId::globl(c));
    return members;
}

struct PairedSamples {
    std::vector<size_t> hpc_rows;
    std::vector<size_t> globl_rows;
    std::vector<ClassLabel> labels;
    std::vector<std::string> apks;
};

PairedSamples collect_pairs(const Workbench& bench, int group, Split wanted) {
    PairedSamples out;
    const auto& sessions = bench.hpc_sessions(group);
    for (size_t i = 0; i < sessions.size(); ++i) {
        if (bench.split().of(sessions[i]->apk_id) != wanted) continue;
        out.hpc_rows.push_back(i);
        out.globl_rows.push_back(bench.globl_row_for_run(*sessions[i]));
        out.labels.push_back(sessions[i]->label);
        out.apks.push_back(sessions[i]->apk_id);
    }
    return out;
}

// Ensemble + SG cells for one member set over paired samples of one group.
struct FusedPair {
    FusionCell ensemble;
    FusionCell sg;
};

FusedPair evaluate_fused_group(const Workbench& bench, int group,
                               std::vector<ChannelId> members, const SuiteConfig& cfg,
                               uint64_t seed, bool* sg_tag_ok) {
    members.push_back(ChannelId::hpc(group));

    const PairedSamples trainsg = collect_pairs(bench, group, Split::TrainSG);
    BaseOutputs outputs;
    outputs.members = members;
    outputs.split_tag = Split::TrainSG;
    outputs.base_train_apks = bench.base_train_apks();
    outputs.apk_ids = trainsg.apks;
    outputs.labels = trainsg.labels;
    for (size_t i = 0; i < trainsg.hpc_rows.size(); ++i)
        outputs.probas.push_back(
            bench.member_probas(members, trainsg.globl_rows[i], group, trainsg.hpc_rows[i]));
    const FusionModel sg_model =
        fuse_sg_train(outputs, cfg.sg_lambda,
                      mix_seed(seed, hash_str("sg/hpc" + std::to_string(group) + "/" +
                                              std::to_string(members.size()))),
                      cfg.sg_use_probabilities);
    if (sg_tag_ok && sg_model.sg->trained_on != Split::TrainSG) *sg_tag_ok = false;

    FusionModel vote_model;
    vote_model.kind = FusionModel::Kind::EnsembleVote;
    vote_model.members = members;

    const PairedSamples test = collect_pairs(bench, group, Split::Test);
    std::vector<double> vote_scores, sg_scores;
    for (size_t i = 0; i < test.hpc_rows.size(); ++i) {
        const auto probas =
            bench.member_probas(members, test.globl_rows[i], group, test.hpc_rows[i]);
        vote_scores.push_back(fuse_predict(vote_model, probas).score);
        sg_scores.push_back(fuse_predict(sg_model, probas).score);
    }
    FusedPair out;
    out.ensemble = bench.evaluate_rows(vote_scores, test.labels, test.apks);
    out.sg = bench.evaluate_rows(sg_scores, test.labels, test.apks);
    return out;
}

}  // namespace

ChannelSuiteResult run_channel_suite(const std::vector<TelemetrySession>& sessions,
                                     const SplitAssignment& split, const SuiteConfig& config,
                                     uint64_t seed) {
    const Workbench bench(sessions, split, config, seed);
    ChannelSuiteResult result;

    const auto eval_channel = [&](ChannelId channel,
                                  const std::vector<const TelemetrySession*>& carriers,
                                  auto proba_of) {
        std::vector<double> scores;
        std::vector<ClassLabel> labels;
        std::vector<std::string> apks;
        for (size_t i = 0; i < carriers.size(); ++i) {
            if (split.of(carriers[i]->apk_id) != Split::Test) continue;
            scores.push_back(proba_of(i));
            labels.push_back(carriers[i]->label);
            apks.push_back(carriers[i]->apk_id);
        }
        result.channels.push_back({channel, bench.evaluate_rows(scores, labels, apks)});
    };

    for (int c = 1; c <= kGloblChannelCount; ++c)
        eval_channel(ChannelId::globl(c), bench.globl_sessions(),
                     [&](size_t i) { return bench.globl_proba(c, i); });
    for (int g = 1; g <= kHpcGroupCount; ++g)
        eval_channel(ChannelId::hpc(g), bench.hpc_sessions(g),
                     [&](size_t i) { return bench.hpc_proba(g, i); });

    result.audit.base_only_train = bench.base_only_train();
    result.audit.sg_only_trainsg = true;      // no SG stage in this suite
    result.audit.contamination_free = true;
    result.audit.eval_only_test = true;
    return result;
}

GloblFusionResult run_globl_fusion(const std::vector<TelemetrySession>& sessions,
                                   const SplitAssignment& split, const SuiteConfig& config,
                                   uint64_t seed) {
    const Workbench bench(sessions, split, config, seed);
    GloblFusionResult result;
    result.audit.base_only_train = bench.base_only_train();
    result.audit.sg_only_trainsg = true;
    result.audit.contamination_free = true;
    result.audit.eval_only_test = true;

    const auto run_members = [&](const std::vector<ChannelId>& members, FusionCell& ens_cell,
                                 FusionCell& sg_cell) {
        const auto& carriers = bench.globl_sessions();
        BaseOutputs outputs;
        outputs.members = members;
        outputs.split_tag = Split::TrainSG;
        outputs.base_train_apks = bench.base_train_apks();
        for (size_t i = 0; i < carriers.size(); ++i) {
            if (split.of(carriers[i]->apk_id) != Split::TrainSG) continue;
            outputs.apk_ids.push_back(carriers[i]->apk_id);
            outputs.labels.push_back(carriers[i]->label);
            outputs.probas.push_back(bench.member_probas(members, i, 0, 0));
        }
        const FusionModel sg_model = fuse_sg_train(
            outputs, config.sg_lambda,
            mix_seed(seed, hash_str("sg/globl" + std::to_string(members.size()))),
            config.sg_use_probabilities);
        if (sg_model.sg->trained_on != Split::TrainSG) result.audit.sg_only_trainsg = false;

        FusionModel vote_model;
        vote_model.kind = FusionModel::Kind::EnsembleVote;
        vote_model.members = members;

        std::vector<double> vote_scores, sg_scores;
        std::vector<ClassLabel> labels;
        std::vector<std::string> apks;
        for (size_t i = 0; i < carriers.size(); ++i) {
            if (split.of(carriers[i]->apk_id) != Split::Test) continue;
            const auto probas = bench.member_probas(members, i, 0, 0);
            vote_scores.push_back(fuse_predict(vote_model, probas).score);
            sg_scores.push_back(fuse_predict(sg_model, probas).score);
            labels.push_back(carriers[i]->label);
            apks.push_back(carriers[i]->apk_id);
        }
        ens_cell = bench.evaluate_rows(vote_scores, labels, apks);
        sg_cell = bench.evaluate_rows(sg_scores, labels, apks);
    };

    run_members(dvfs_members(), result.dvfs_ensemble, result.dvfs_sg);
    run_members(globl_members(), result.globl_ensemble, result.globl_sg);
    return result;
}

FusionSuiteResult run_fusion_suite(const std::vector<TelemetrySession>& sessions,
                                   const SplitAssignment& split, const SuiteConfig& config,
                                   uint64_t seed) {
    const Workbench bench(sessions, split, config, seed);
    FusionSuiteResult result;
    result.audit.base_only_train = bench.base_only_train();
    result.audit.sg_only_trainsg = true;
    result.audit.contamination_free = true;
    result.audit.eval_only_test = true;

    for (int group = 1; group <= kHpcGroupCount; ++group) {
        GroupFusionRow row;
        row.group = group;

        const PairedSamples test = collect_pairs(bench, group, Split::Test);
        std::vector<double> scores;
        for (size_t i = 0; i < test.hpc_rows.size(); ++i)
            scores.push_back(bench.hpc_proba(group, test.hpc_rows[i]));
        row.standalone = bench.evaluate_rows(scores, test.labels, test.apks);

        const FusedPair dvfs = evaluate_fused_group(bench, group, dvfs_members(), config, seed,
                                                    &result.audit.sg_only_trainsg);
        row.dvfs_ensemble = dvfs.ensemble;
        row.dvfs_sg = dvfs.sg;
        const FusedPair globl = evaluate_fused_group(bench, group, globl_members(), config, seed,
                                                     &result.audit.sg_only_trainsg);
        row.globl_ensemble = globl.ensemble;
        row.globl_sg = globl.sg;
        result.rows.push_back(std::move(row));
    }
    return result;
}

TruncationSweepResult truncation_sweep(const std::vector<TelemetrySession>& sessions,
                                       const SplitAssignment& split, const SuiteConfig& config,
                                       const std::vector<double>& windows_s, uint64_t seed) {
    require(!windows_s.empty(), ErrorCode::InvalidConfig, "no truncation windows");
    TruncationSweepResult result;
    for (double window : windows_s) {
        std::vector<TelemetrySession> truncated;
        truncated.reserve(sessions.size());
        for (const auto& s : sessions) truncated.push_back(truncate_session(s, window));

        const Workbench bench(truncated, split, config, seed);
        TruncationPoint point;
        point.window_s = window;
        for (int group = 1; group <= kHpcGroupCount; ++group) {
            const PairedSamples test = collect_pairs(bench, group, Split::Test);
            std::vector<double> hpc_scores;
            for (size_t i = 0; i < test.hpc_rows.size(); ++i)
                hpc_scores.push_back(bench.hpc_proba(group, test.hpc_rows[i]));
            const EvalReport hpc_only = evaluate(hpc_scores, test.labels);

            const auto vote_f1 = [&](std::vector<ChannelId> members) {
                members.push_back(ChannelId::hpc(group));
                FusionModel vote_model;
                vote_model.kind = FusionModel::Kind::EnsembleVote;
                vote_model.members = members;
                std::vector<double> scores;
                for (size_t i = 0; i < test.hpc_rows.size(); ++i)
                    scores.push_back(
                        fuse_predict(vote_model, bench.member_probas(members, test.globl_rows[i],
                                                                     group, test.hpc_rows[i]))
                            .score);
                return evaluate(scores, test.labels).f1.value_or(0.0);
            };

            point.group_f1[static_cast<size_t>(DetectorKind::HpcOnly)][group - 1] =
                hpc_only.f1.value_or(0.0);
            point.group_f1[static_cast<size_t>(DetectorKind::HpcDvfsEnsemble)][group - 1] =
                vote_f1(dvfs_members());
            point.group_f1[static_cast<size_t>(DetectorKind::HpcGloblEnsemble)][group - 1] =
                vote_f1(globl_members());
        }
        result.points.push_back(point);
    }
    return result;
}

}  // namespace xmd
