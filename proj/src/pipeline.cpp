#include "xmd/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <map>
#include <set>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xmd/io_util.hpp"

namespace xmd {

namespace fs = std::filesystem;
using nlohmann::json;

namespace {

SuiteConfig suite_config_from_json(const json& j) {
    SuiteConfig cfg;
    for (const auto& [key, value] : j.items()) {
        if (key == "stft_window") cfg.features.stft_window = value.get<int>();
        else if (key == "stft_hop") cfg.features.stft_hop = value.get<int>();
        else if (key == "log_floor") cfg.features.log_floor = value.get<double>();
        else if (key == "hpc_first_difference") cfg.features.hpc_first_difference = value.get<bool>();
        else if (key == "rf_trees") cfg.rf.n_trees = value.get<int>();
        else if (key == "rf_max_depth") cfg.rf.max_depth = value.get<int>();
        else if (key == "rf_min_leaf") cfg.rf.min_leaf = value.get<int>();
        else if (key == "rf_bootstrap") cfg.rf.bootstrap = value.get<bool>();
        else if (key == "sg_lambda") cfg.sg_lambda = value.get<double>();
        else if (key == "sg_use_probabilities") cfg.sg_use_probabilities = value.get<bool>();
        else fail(ErrorCode::InvalidConfig, "unknown suite key '" + key + "'");
    }
    cfg.features.validate();
    return cfg;
}

json suite_config_to_json(const SuiteConfig& cfg) {
    return json{
        {"stft_window", cfg.features.stft_window},
        {"stft_hop", cfg.features.stft_hop},
        {"log_floor", cfg.features.log_floor},
        {"hpc_first_difference", cfg.features.hpc_first_difference},
        {"rf_trees", cfg.rf.n_trees},
        {"rf_max_depth", cfg.rf.max_depth},
        {"rf_min_leaf", cfg.rf.min_leaf},
        {"rf_bootstrap", cfg.rf.bootstrap},
        {"sg_lambda", cfg.sg_lambda},
        {"sg_use_probabilities", cfg.sg_use_probabilities},
    };
}

}  // namespace

RunConfig run_config_from_json(const json& doc, std::optional<uint64_t> seed_override) {
    RunConfig config;
    config.plant = default_paper_shaped_spec(0);
    for (const auto& [key, value] : doc.items()) {
        if (key == "plant") config.plant = plant_spec_from_json(value);
        else if (key == "suite") config.suite = suite_config_from_json(value);
        else if (key == "min_runtime_s") config.min_runtime_s = value.get<double>();
        else if (key == "ds_policy") {
            const auto name = value.get<std::string>();
            if (name == "fixed") config.ds_policy = OrderingPolicy::FixedCatalog;
            else if (name == "random") config.ds_policy = OrderingPolicy::Random;
            else fail(ErrorCode::InvalidConfig, "ds_policy must be 'fixed' or 'random'");
        } else if (key == "ds_orderings") config.ds_orderings = value.get<int>();
        else if (key == "ds_threshold") config.ds_threshold = value.get<double>();
        else if (key == "manifold_instances") config.manifold_instances = value.get<int>();
        else if (key == "manifold_box_samples") config.manifold_box_samples = value.get<size_t>();
        else if (key == "volume_samples") config.volume_samples = value.get<size_t>();
        else if (key == "seed") config.seed = value.get<uint64_t>();
        else fail(ErrorCode::InvalidConfig, "unknown config key '" + key + "'");
    }
    if (seed_override) config.seed = *seed_override;
    config.plant.seed = config.seed;
    return config;
}

json run_config_to_json(const RunConfig& config) {
    return json{
        {"plant", plant_spec_to_json(config.plant)},
        {"suite", suite_config_to_json(config.suite)},
        {"min_runtime_s", config.min_runtime_s},
        {"ds_policy", config.ds_policy == OrderingPolicy::Random ? "random" : "fixed"},
        {"ds_orderings", config.ds_orderings},
        {"ds_threshold", config.ds_threshold},
        {"manifold_instances", config.manifold_instances},
        {"manifold_box_samples", config.manifold_box_samples},
        {"volume_samples", config.volume_samples},
        {"seed", config.seed},
    };
}

std::string config_hash(const RunConfig& config) {
    std::ostringstream out;
    out << std::hex << hash_str(run_config_to_json(config).dump());
    return out.str();
}

namespace {

struct StagedData {
    Dataset dataset;
    std::vector<TelemetrySession> kept;
    std::vector<TelemetrySession> rejected;
    SplitAssignment split;
};

fs::path dataset_dir(const fs::path& out_dir) { return out_dir / "dataset"; }

StagedData stage_dataset(const RunConfig& config, const fs::path& out_dir, double min_runtime_s) {
    const fs::path manifest_path = dataset_dir(out_dir) / "manifest.csv";
    require(fs::exists(manifest_path), ErrorCode::MissingArtifact,
            "dataset manifest not found: " + manifest_path.string() + " (run 'synth' first)");
    StagedData staged;
    staged.dataset = load_dataset(manifest_path);
    auto filtered = activation_filter(staged.dataset.sessions, min_runtime_s);
    staged.kept = std::move(filtered.kept);
    staged.rejected = std::move(filtered.rejected);
    staged.split = split_dataset(staged.dataset.manifest, config.seed);
    return staged;
}

std::string rel(const fs::path& out_dir, const fs::path& p) {
    return fs::relative(p, out_dir).string();
}

void write_report_json(const fs::path& path, const RunConfig& config, json body) {
    body["config_hash"] = config_hash(config);
    body["seed"] = config.seed;
    write_text_file(path, body.dump(2) + "\n");
}

json eval_to_json(const EvalReport& r) { return r.to_json(); }

json cell_to_json(const FusionCell& cell) {
    return json{{"per_session", eval_to_json(cell.per_session)},
                {"per_apk", eval_to_json(cell.per_apk)}};
}

json audit_to_json(const HygieneAudit& audit) {
    return json{{"base_only_train", audit.base_only_train},
                {"sg_only_trainsg", audit.sg_only_trainsg},
                {"eval_only_test", audit.eval_only_test},
                {"contamination_free", audit.contamination_free},
                {"ok", audit.ok()}};
}

std::string f1_str(const EvalReport& r) { return r.f1 ? fmt_double(*r.f1) : ""; }

// ---- model staging shared by train-base / train-fusion / evaluate ----------

struct FeatureBank {
    std::vector<const TelemetrySession*> globl;
    std::array<std::vector<const TelemetrySession*>, kHpcGroupCount> hpc;
    std::map<std::pair<std::string, int>, size_t> globl_by_run;
    std::array<std::vector<std::vector<double>>, kGloblChannelCount> globl_feats;
    std::array<std::vector<std::vector<double>>, kHpcGroupCount> hpc_feats;
};

FeatureBank build_feature_bank(const std::vector<TelemetrySession>& sessions,
                               const FeatureConfig& cfg) {
    FeatureBank bank;
    for (const auto& s : sessions) {
        if (s.channel_set.is_globl()) {
            bank.globl_by_run[{s.apk_id, s.iteration}] = bank.globl.size();
            bank.globl.push_back(&s);
        } else {
            bank.hpc[static_cast<size_t>(s.channel_set.hpc_group() - 1)].push_back(&s);
        }
    }
    for (const auto* s : bank.globl)
        for (int c = 1; c <= kGloblChannelCount; ++c)
            bank.globl_feats[static_cast<size_t>(c - 1)].push_back(
                featurize_channel(*s, ChannelId::globl(c), cfg).values);
    for (int g = 1; g <= kHpcGroupCount; ++g)
        for (const auto* s : bank.hpc[static_cast<size_t>(g - 1)])
            bank.hpc_feats[static_cast<size_t>(g - 1)].push_back(
                featurize_channel(*s, ChannelId::hpc(g), cfg).values);
    return bank;
}

std::vector<ChannelId> all_channels() {
    std::vector<ChannelId> out;
    for (int c = 1; c <= kGloblChannelCount; ++c) out.push_back(ChannelId::globl(c));
    for (int g = 1; g <= kHpcGroupCount; ++g) out.push_back(ChannelId::hpc(g));
    return out;
}

fs::path base_model_path(const fs::path& out_dir, ChannelId channel) {
    return out_dir / "models" / "base" / (channel.name() + ".json");
}

struct SgSpec {
    std::string name;      // artifact stem
    std::vector<ChannelId> members;
    int hpc_group = 0;     // 0 = pure-GLOBL fusion over globl sessions
};

std::vector<SgSpec> sg_specs() {
    std::vector<SgSpec> specs;
    std::vector<ChannelId> dvfs, globl;
    for (int c = 1; c <= kDvfsChannelCount; ++c) dvfs.push_back(ChannelId::globl(c));
    for (int c = 1; c <= kGloblChannelCount; ++c) globl.push_back(ChannelId::globl(c));
    specs.push_back({"sg_dvfs", dvfs, 0});
    specs.push_back({"sg_globl", globl, 0});
    for (int g = 1; g <= kHpcGroupCount; ++g) {
        auto with_group = [g](std::vector<ChannelId> members) {
            members.push_back(ChannelId::hpc(g));
            return members;
        };
        specs.push_back({"sg_hpc" + std::to_string(g) + "_dvfs", with_group(dvfs), g});
        specs.push_back({"sg_hpc" + std::to_string(g) + "_globl", with_group(globl), g});
    }
    return specs;
}

fs::path sg_model_path(const fs::path& out_dir, const SgSpec& spec) {
    return out_dir / "models" / "fusion" / (spec.name + ".json");
}

RandomForestModel load_base_model(const fs::path& out_dir, ChannelId channel) {
    const auto path = base_model_path(out_dir, channel);
    require(fs::exists(path), ErrorCode::MissingArtifact,
            "base model not found: " + path.string() + " (run 'train-base' first)");
    return RandomForestModel::from_json(json::parse(read_text_file(path)));
}

// Base-model probabilities for every session in the bank.
struct ProbaTable {
    std::array<std::vector<double>, kGloblChannelCount> globl;
    std::array<std::vector<double>, kHpcGroupCount> hpc;
};

ProbaTable predict_all(const FeatureBank& bank,
                       const std::map<std::string, RandomForestModel>& models) {
    ProbaTable table;
    for (int c = 1; c <= kGloblChannelCount; ++c) {
        const auto& model = models.at(ChannelId::globl(c).name());
        for (const auto& feats : bank.globl_feats[static_cast<size_t>(c - 1)])
            table.globl[static_cast<size_t>(c - 1)].push_back(rf_predict_proba(model, feats));
    }
    for (int g = 1; g <= kHpcGroupCount; ++g) {
        const auto& model = models.at(ChannelId::hpc(g).name());
        for (const auto& feats : bank.hpc_feats[static_cast<size_t>(g - 1)])
            table.hpc[static_cast<size_t>(g - 1)].push_back(rf_predict_proba(model, feats));
    }
    return table;
}

std::vector<double> member_probas_for_sample(const ProbaTable& table,
                                             const std::vector<ChannelId>& members,
                                             size_t globl_row, int group, size_t hpc_row) {
    std::vector<double> out;
    out.reserve(members.size());
    for (const auto& m : members) {
        if (m.is_globl()) out.push_back(table.globl[static_cast<size_t>(m.index - 1)][globl_row]);
        else out.push_back(table.hpc[static_cast<size_t>(group - 1)][hpc_row]);
    }
    return out;
}

FusionCell evaluate_rows_cell(const std::vector<double>& scores,
                              const std::vector<ClassLabel>& labels,
                              const std::vector<std::string>& apks) {
    FusionCell cell;
    cell.per_session = evaluate(scores, labels);
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

}  // namespace

std::vector<std::string> cmd_synth(const RunConfig& config, const fs::path& out_dir) {
    const auto manifest = generate_dataset(config.plant, dataset_dir(out_dir));
    write_report_json(out_dir / "synth_report.json", config,
                      json{{"sessions", manifest.entries.size()},
                           {"manifest", "dataset/manifest.csv"}});
    return {"dataset/manifest.csv", "synth_report.json"};
}

std::vector<std::string> cmd_filter(const RunConfig& config, const fs::path& out_dir,
                                    double min_runtime_s) {
    const StagedData staged = stage_dataset(config, out_dir, min_runtime_s);

    json per_label = json::object();
    for (ClassLabel label : {ClassLabel::Benign, ClassLabel::Malware}) {
        std::set<std::string> apks, active_apks;
        size_t kept = 0, rejected = 0;
        std::map<std::string, size_t> kept_by_set;
        for (const auto& s : staged.kept) {
            if (s.label != label) continue;
            ++kept;
            apks.insert(s.apk_id);
            active_apks.insert(s.apk_id);
            ++kept_by_set[s.channel_set.name()];
        }
        for (const auto& s : staged.rejected) {
            if (s.label != label) continue;
            ++rejected;
            apks.insert(s.apk_id);
        }
        const double session_rate =
            kept + rejected > 0
                ? static_cast<double>(kept) / static_cast<double>(kept + rejected)
                : 0.0;
        per_label[label_name(label)] = json{
            {"apks", apks.size()},
            {"apks_with_active_run", active_apks.size()},
            {"apk_activation_rate",
             apks.empty() ? 0.0
                          : static_cast<double>(active_apks.size()) /
                                static_cast<double>(apks.size())},
            {"sessions_kept", kept},
            {"sessions_rejected", rejected},
            {"session_activation_rate", session_rate},
            {"files_kept", kept_by_set},
        };
    }
    write_report_json(out_dir / "filter_report.json", config,
                      json{{"min_runtime_s", min_runtime_s}, {"per_label", std::move(per_label)}});
    return {"filter_report.json"};
}

std::vector<std::string> cmd_gridsearch_filter(const RunConfig& config, const fs::path& out_dir,
                                               const std::vector<double>& thresholds) {
    require(!thresholds.empty(), ErrorCode::InvalidConfig, "no thresholds given");
    std::ostringstream csv;
    csv << "threshold_s,sessions_kept,mean_fused_f1,status\n";
    json rows = json::array();
    for (double threshold : thresholds) {
        const StagedData staged = stage_dataset(config, out_dir, threshold);
        std::string status = "ok";
        double objective = 0.0;
        try {
            const FusionSuiteResult suite =
                run_fusion_suite(staged.kept, staged.split, config.suite, config.seed);
            double acc = 0.0;
            for (const auto& row : suite.rows) acc += row.globl_ensemble.per_session.f1.value_or(0.0);
            objective = acc / static_cast<double>(suite.rows.size());
        } catch (const Error& e) {
            status = error_code_name(e.code());
        }
        csv << fmt_double(threshold) << ',' << staged.kept.size() << ','
            << (status == "ok" ? fmt_double(objective) : "") << ',' << status << '\n';
        rows.push_back(json{{"threshold_s", threshold},
                            {"sessions_kept", staged.kept.size()},
                            {"mean_fused_f1", objective},
                            {"status", status}});
    }
    write_text_file(out_dir / "gridsearch_filter.csv", csv.str());
    write_report_json(out_dir / "gridsearch_filter.json", config, json{{"rows", std::move(rows)}});
    return {"gridsearch_filter.csv", "gridsearch_filter.json"};
}

std::vector<std::string> cmd_featurize(const RunConfig& config, const fs::path& out_dir,
                                       std::optional<double> truncate_s) {
    StagedData staged = stage_dataset(config, out_dir, config.min_runtime_s);
    std::vector<TelemetrySession> sessions;
    sessions.reserve(staged.kept.size());
    for (const auto& s : staged.kept)
        sessions.push_back(truncate_s ? truncate_session(s, *truncate_s) : s);

    const FeatureBank bank = build_feature_bank(sessions, config.suite.features);
    std::vector<std::string> written;
    const auto write_matrix = [&](ChannelId channel,
                                  const std::vector<const TelemetrySession*>& carriers,
                                  const std::vector<std::vector<double>>& feats) {
        std::ostringstream csv;
        csv << "session_id,apk_id,label,channel";
        const size_t dim = feats.empty() ? 0 : feats.front().size();
        for (size_t j = 0; j < dim; ++j) csv << ",f_" << j;
        csv << '\n';
        for (size_t i = 0; i < carriers.size(); ++i) {
            csv << carriers[i]->session_id << ',' << carriers[i]->apk_id << ','
                << label_name(carriers[i]->label) << ',' << channel.name();
            for (double v : feats[i]) csv << ',' << fmt_double(v);
            csv << '\n';
        }
        const auto path = out_dir / "features" / (channel.name() + ".csv");
        write_text_file(path, csv.str());
        written.push_back(rel(out_dir, path));
    };

    for (int c = 1; c <= kGloblChannelCount; ++c)
        write_matrix(ChannelId::globl(c), bank.globl, bank.globl_feats[static_cast<size_t>(c - 1)]);
    for (int g = 1; g <= kHpcGroupCount; ++g)
        write_matrix(ChannelId::hpc(g), bank.hpc[static_cast<size_t>(g - 1)],
                     bank.hpc_feats[static_cast<size_t>(g - 1)]);

    write_report_json(out_dir / "featurize_report.json", config,
                      json{{"truncate_s", truncate_s ? json(*truncate_s) : json()},
                           {"files", written}});
    written.push_back("featurize_report.json");
    return written;
}

std::vector<std::string> cmd_train_base(const RunConfig& config, const fs::path& out_dir) {
    const StagedData staged = stage_dataset(config, out_dir, config.min_runtime_s);
    const FeatureBank bank = build_feature_bank(staged.kept, config.suite.features);

    // Persist the split for the record.
    std::ostringstream split_csv;
    split_csv << "apk_id,split\n";
    for (const auto& [apk, split] : staged.split.by_apk)
        split_csv << apk << ',' << split_name(split) << '\n';
    write_text_file(out_dir / "split.csv", split_csv.str());

    std::vector<std::string> written{"split.csv"};
    std::ostringstream fig4;
    fig4 << "channel,f1_session,f1_apk,auc_session\n";

    const auto train_and_eval = [&](ChannelId channel,
                                    const std::vector<const TelemetrySession*>& carriers,
                                    const std::vector<std::vector<double>>& feats) {
        std::vector<std::vector<double>> x;
        std::vector<ClassLabel> y;
        std::set<std::string> apks;
        for (size_t i = 0; i < carriers.size(); ++i) {
            if (staged.split.of(carriers[i]->apk_id) != Split::Train) continue;
            x.push_back(feats[i]);
            y.push_back(carriers[i]->label);
            apks.insert(carriers[i]->apk_id);
        }
        auto model =
            rf_fit(x, y, config.suite.rf, mix_seed(config.seed, hash_str("rf/" + channel.name())));
        model.channel = channel;
        model.trained_on = Split::Train;
        model.train_apks.assign(apks.begin(), apks.end());

        std::vector<double> scores;
        std::vector<ClassLabel> labels;
        std::vector<std::string> test_apks;
        for (size_t i = 0; i < carriers.size(); ++i) {
            if (staged.split.of(carriers[i]->apk_id) != Split::Test) continue;
            scores.push_back(rf_predict_proba(model, feats[i]));
            labels.push_back(carriers[i]->label);
            test_apks.push_back(carriers[i]->apk_id);
        }
        const FusionCell cell = evaluate_rows_cell(scores, labels, test_apks);
        fig4 << channel.name() << ',' << f1_str(cell.per_session) << ',' << f1_str(cell.per_apk)
             << ',' << (cell.per_session.auc ? fmt_double(*cell.per_session.auc) : "") << '\n';

        const auto path = base_model_path(out_dir, channel);
        write_text_file(path, model.to_json().dump());
        written.push_back(rel(out_dir, path));
    };

    for (int c = 1; c <= kGloblChannelCount; ++c)
        train_and_eval(ChannelId::globl(c), bank.globl,
                       bank.globl_feats[static_cast<size_t>(c - 1)]);
    for (int g = 1; g <= kHpcGroupCount; ++g)
        train_and_eval(ChannelId::hpc(g), bank.hpc[static_cast<size_t>(g - 1)],
                       bank.hpc_feats[static_cast<size_t>(g - 1)]);

    write_text_file(out_dir / "figure4_f1.csv", fig4.str());
    written.push_back("figure4_f1.csv");
    write_report_json(out_dir / "train_base_report.json", config, json{{"files", written}});
    written.push_back("train_base_report.json");
    return written;
}

std::vector<std::string> cmd_train_fusion(const RunConfig& config, const fs::path& out_dir) {
    const StagedData staged = stage_dataset(config, out_dir, config.min_runtime_s);
    const FeatureBank bank = build_feature_bank(staged.kept, config.suite.features);

    std::map<std::string, RandomForestModel> models;
    std::set<std::string> base_train_apks;
    for (const auto& channel : all_channels()) {
        auto model = load_base_model(out_dir, channel);
        for (const auto& apk : model.train_apks) base_train_apks.insert(apk);
        models.emplace(channel.name(), std::move(model));
    }
    const ProbaTable table = predict_all(bank, models);

    std::vector<std::string> written;
    for (const auto& spec : sg_specs()) {
        BaseOutputs outputs;
        outputs.members = spec.members;
        outputs.split_tag = Split::TrainSG;
        outputs.base_train_apks.assign(base_train_apks.begin(), base_train_apks.end());
        if (spec.hpc_group == 0) {
            for (size_t i = 0; i < bank.globl.size(); ++i) {
                if (staged.split.of(bank.globl[i]->apk_id) != Split::TrainSG) continue;
                outputs.apk_ids.push_back(bank.globl[i]->apk_id);
                outputs.labels.push_back(bank.globl[i]->label);
                outputs.probas.push_back(member_probas_for_sample(table, spec.members, i, 0, 0));
            }
        } else {
            const auto& carriers = bank.hpc[static_cast<size_t>(spec.hpc_group - 1)];
            for (size_t i = 0; i < carriers.size(); ++i) {
                if (staged.split.of(carriers[i]->apk_id) != Split::TrainSG) continue;
                const auto it = bank.globl_by_run.find({carriers[i]->apk_id, carriers[i]->iteration});
                require(it != bank.globl_by_run.end(), ErrorCode::ManifestInconsistent,
                        "no GLOBL session paired with " + carriers[i]->session_id);
                outputs.apk_ids.push_back(carriers[i]->apk_id);
                outputs.labels.push_back(carriers[i]->label);
                outputs.probas.push_back(member_probas_for_sample(table, spec.members, it->second,
                                                                  spec.hpc_group, i));
            }
        }
        const FusionModel model =
            fuse_sg_train(outputs, config.suite.sg_lambda,
                          mix_seed(config.seed, hash_str("sg/" + spec.name)),
                          config.suite.sg_use_probabilities);
        const auto path = sg_model_path(out_dir, spec);
        json j = model.sg->to_json();
        j["members"] = json::array();
        for (const auto& m : spec.members) j["members"].push_back(m.name());
        write_text_file(path, j.dump());
        written.push_back(rel(out_dir, path));
    }
    write_report_json(out_dir / "train_fusion_report.json", config, json{{"files", written}});
    written.push_back("train_fusion_report.json");
    return written;
}

std::vector<std::string> cmd_evaluate(const RunConfig& config, const fs::path& out_dir) {
    const StagedData staged = stage_dataset(config, out_dir, config.min_runtime_s);
    const FeatureBank bank = build_feature_bank(staged.kept, config.suite.features);

    std::map<std::string, RandomForestModel> models;
    std::set<std::string> base_train_apks;
    HygieneAudit audit;
    audit.base_only_train = true;
    audit.sg_only_trainsg = true;
    audit.eval_only_test = true;
    audit.contamination_free = true;
    for (const auto& channel : all_channels()) {
        auto model = load_base_model(out_dir, channel);
        if (model.trained_on != Split::Train) audit.base_only_train = false;
        for (const auto& apk : model.train_apks) {
            base_train_apks.insert(apk);
            if (staged.split.of(apk) != Split::Train) audit.base_only_train = false;
        }
        models.emplace(channel.name(), std::move(model));
    }
    std::map<std::string, LogisticModel> sg_models;
    for (const auto& spec : sg_specs()) {
        const auto path = sg_model_path(out_dir, spec);
        require(fs::exists(path), ErrorCode::MissingArtifact,
                "fusion model not found: " + path.string() + " (run 'train-fusion' first)");
        auto model = LogisticModel::from_json(json::parse(read_text_file(path)));
        if (model.trained_on != Split::TrainSG) audit.sg_only_trainsg = false;
        sg_models.emplace(spec.name, std::move(model));
    }
    for (const auto& [apk, split] : staged.split.by_apk) {
        if (split == Split::TrainSG && base_train_apks.contains(apk))
            audit.contamination_free = false;
    }
    const ProbaTable table = predict_all(bank, models);

    const auto fused_cells = [&](const SgSpec& spec) -> std::pair<FusionCell, FusionCell> {
        FusionModel vote;
        vote.kind = FusionModel::Kind::EnsembleVote;
        vote.members = spec.members;
        FusionModel sg;
        sg.kind = FusionModel::Kind::StackedGeneralization;
        sg.members = spec.members;
        sg.sg = sg_models.at(spec.name);
        sg.use_probabilities = config.suite.sg_use_probabilities;

        std::vector<double> vote_scores, sg_scores;
        std::vector<ClassLabel> labels;
        std::vector<std::string> apks;
        if (spec.hpc_group == 0) {
            for (size_t i = 0; i < bank.globl.size(); ++i) {
                if (staged.split.of(bank.globl[i]->apk_id) != Split::Test) continue;
                const auto probas = member_probas_for_sample(table, spec.members, i, 0, 0);
                vote_scores.push_back(fuse_predict(vote, probas).score);
                sg_scores.push_back(fuse_predict(sg, probas).score);
                labels.push_back(bank.globl[i]->label);
                apks.push_back(bank.globl[i]->apk_id);
            }
        } else {
            const auto& carriers = bank.hpc[static_cast<size_t>(spec.hpc_group - 1)];
            for (size_t i = 0; i < carriers.size(); ++i) {
                if (staged.split.of(carriers[i]->apk_id) != Split::Test) continue;
                const auto it = bank.globl_by_run.find({carriers[i]->apk_id, carriers[i]->iteration});
                require(it != bank.globl_by_run.end(), ErrorCode::ManifestInconsistent,
                        "no GLOBL session paired with " + carriers[i]->session_id);
                const auto probas = member_probas_for_sample(table, spec.members, it->second,
                                                             spec.hpc_group, i);
                vote_scores.push_back(fuse_predict(vote, probas).score);
                sg_scores.push_back(fuse_predict(sg, probas).score);
                labels.push_back(carriers[i]->label);
                apks.push_back(carriers[i]->apk_id);
            }
        }
        return {evaluate_rows_cell(vote_scores, labels, apks),
                evaluate_rows_cell(sg_scores, labels, apks)};
    };

    json report = json::object();
    const auto specs = sg_specs();

    // Table 6 analog: pure-GLOBL fusions.
    std::ostringstream table6;
    table6 << "fused_group,participating_channels,f1_ensemble,f1_sg,f1_apk_ensemble,f1_apk_sg\n";
    json table6_json = json::object();
    for (size_t i = 0; i < 2; ++i) {
        const auto [ens, sg] = fused_cells(specs[i]);
        const std::string group = specs[i].name == "sg_dvfs" ? "DVFS" : "GLOBL";
        const std::string channels = specs[i].name == "sg_dvfs" ? "1-11" : "1-15";
        table6 << group << ',' << channels << ',' << f1_str(ens.per_session) << ','
               << f1_str(sg.per_session) << ',' << f1_str(ens.per_apk) << ',' << f1_str(sg.per_apk)
               << '\n';
        table6_json[group] = json{{"ensemble", cell_to_json(ens)}, {"sg", cell_to_json(sg)}};
    }
    write_text_file(out_dir / "table6_globl_fusion.csv", table6.str());

    // Table 7 analog: per-group standalone + fusions; Figure 7 analog: ROC of
    // the HPC+GLOBL ensembles.
    std::ostringstream table7, roc_csv;
    table7 << "hpc_group,standalone,dvfs_ensemble,dvfs_sg,globl_ensemble,globl_sg,"
              "standalone_apk,dvfs_ensemble_apk,dvfs_sg_apk,globl_ensemble_apk,globl_sg_apk\n";
    roc_csv << "group,fpr,tpr,threshold\n";
    json table7_json = json::object();
    for (int g = 1; g <= kHpcGroupCount; ++g) {
        std::vector<double> scores;
        std::vector<ClassLabel> labels;
        std::vector<std::string> apks;
        const auto& carriers = bank.hpc[static_cast<size_t>(g - 1)];
        for (size_t i = 0; i < carriers.size(); ++i) {
            if (staged.split.of(carriers[i]->apk_id) != Split::Test) continue;
            scores.push_back(table.hpc[static_cast<size_t>(g - 1)][i]);
            labels.push_back(carriers[i]->label);
            apks.push_back(carriers[i]->apk_id);
        }
        const FusionCell standalone = evaluate_rows_cell(scores, labels, apks);

        const auto find_spec = [&](const std::string& name) {
            for (const auto& s : specs)
                if (s.name == name) return s;
            fail(ErrorCode::MissingArtifact, "no fusion spec " + name);
        };
        const auto [dvfs_ens, dvfs_sg] = fused_cells(find_spec("sg_hpc" + std::to_string(g) + "_dvfs"));
        const auto [globl_ens, globl_sg] =
            fused_cells(find_spec("sg_hpc" + std::to_string(g) + "_globl"));

        table7 << "group-" << g << ',' << f1_str(standalone.per_session) << ','
               << f1_str(dvfs_ens.per_session) << ',' << f1_str(dvfs_sg.per_session) << ','
               << f1_str(globl_ens.per_session) << ',' << f1_str(globl_sg.per_session) << ','
               << f1_str(standalone.per_apk) << ',' << f1_str(dvfs_ens.per_apk) << ','
               << f1_str(dvfs_sg.per_apk) << ',' << f1_str(globl_ens.per_apk) << ','
               << f1_str(globl_sg.per_apk) << '\n';
        for (const auto& point : globl_ens.per_session.roc)
            roc_csv << "group-" << g << ',' << fmt_double(point.fpr) << ','
                    << fmt_double(point.tpr) << ',' << fmt_double(point.threshold) << '\n';
        table7_json["group-" + std::to_string(g)] =
            json{{"standalone", cell_to_json(standalone)},
                 {"dvfs_ensemble", cell_to_json(dvfs_ens)},
                 {"dvfs_sg", cell_to_json(dvfs_sg)},
                 {"globl_ensemble", cell_to_json(globl_ens)},
                 {"globl_sg", cell_to_json(globl_sg)}};
    }
    write_text_file(out_dir / "table7_hpc_fusion.csv", table7.str());
    write_text_file(out_dir / "figure7_roc.csv", roc_csv.str());

    report["table6"] = std::move(table6_json);
    report["table7"] = std::move(table7_json);
    report["audit"] = audit_to_json(audit);
    write_report_json(out_dir / "evaluation.json", config, std::move(report));
    return {"table6_globl_fusion.csv", "table7_hpc_fusion.csv", "figure7_roc.csv",
            "evaluation.json"};
}

std::vector<std::string> cmd_sweep_truncation(const RunConfig& config, const fs::path& out_dir) {
    const StagedData staged = stage_dataset(config, out_dir, config.min_runtime_s);
    const TruncationSweepResult sweep = truncation_sweep(
        staged.kept, staged.split, config.suite, default_truncation_windows(), config.seed);

    std::ostringstream csv;
    csv << "window_s,detector,mean_f1,min_f1,max_f1\n";
    json points = json::array();
    for (const auto& point : sweep.points) {
        for (DetectorKind kind : {DetectorKind::HpcOnly, DetectorKind::HpcDvfsEnsemble,
                                  DetectorKind::HpcGloblEnsemble}) {
            csv << fmt_double(point.window_s) << ',' << detector_name(kind) << ','
                << fmt_double(point.mean_f1(kind)) << ',' << fmt_double(point.min_f1(kind)) << ','
                << fmt_double(point.max_f1(kind)) << '\n';
            points.push_back(json{{"window_s", point.window_s},
                                  {"detector", detector_name(kind)},
                                  {"mean_f1", point.mean_f1(kind)},
                                  {"min_f1", point.min_f1(kind)},
                                  {"max_f1", point.max_f1(kind)}});
        }
    }
    write_text_file(out_dir / "figure6_truncation.csv", csv.str());
    write_report_json(out_dir / "truncation_report.json", config, json{{"points", std::move(points)}});
    return {"figure6_truncation.csv", "truncation_report.json"};
}

std::vector<std::string> cmd_ds(const RunConfig& config, const fs::path& out_dir) {
    const StagedData staged = stage_dataset(config, out_dir, config.min_runtime_s);
    const GloblFeatureTable table = build_globl_feature_table(staged.kept, config.suite.features);
    const DissimilarityReport report = ds_channel_sweep(
        table, config.ds_policy, config.ds_orderings, config.seed, config.ds_threshold);

    const char* policy = config.ds_policy == OrderingPolicy::Random ? "random" : "fixed";
    std::ostringstream csv;
    csv << "k,ds_mean,ds_std,ordering_policy\n";
    json points = json::array();
    for (const auto& point : report.points) {
        csv << point.k << ',' << fmt_double(point.ds_mean) << ',' << fmt_double(point.ds_std)
            << ',' << policy << '\n';
        points.push_back(json{{"k", point.k},
                              {"ds_mean", point.ds_mean},
                              {"ds_std", point.ds_std},
                              {"per_ordering", point.per_ordering}});
    }
    write_text_file(out_dir / "figure5_ds.csv", csv.str());
    write_report_json(out_dir / "ds_report.json", config,
                      json{{"threshold", report.threshold},
                           {"ordering_policy", policy},
                           {"n_orderings", report.n_orderings},
                           {"points", std::move(points)}});
    return {"figure5_ds.csv", "ds_report.json"};
}

HullSet random_hull_set(Rng& rng, int dimension, int n_generators) {
    HullSet set;
    std::vector<double> center(static_cast<size_t>(dimension));
    for (auto& v : center) v = rng.uniform(-0.5, 0.5);
    for (int i = 0; i < n_generators; ++i) {
        std::vector<double> g(static_cast<size_t>(dimension));
        for (size_t j = 0; j < g.size(); ++j) g[j] = center[j] + rng.uniform(-1.0, 1.0);
        set.generators.push_back(std::move(g));
    }
    return set;
}

ManifoldInstance random_manifold_instance(Rng& rng, int dimension, int n_points, double margin) {
    ManifoldInstance inst;
    inst.dimension = dimension;
    inst.margin = margin;
    for (int i = 0; i < n_points; ++i) {
        std::vector<double> x(static_cast<size_t>(dimension));
        for (auto& v : x) v = rng.normal();
        inst.points.push_back(std::move(x));
        inst.labels.push_back(rng.uniform() < 0.5 ? 1 : -1);
    }
    return inst;
}

std::vector<ManifoldInstance> informative_channel_instances(Rng& rng, int n_channels,
                                                            int dimension, int n_points) {
    // Channels are gain-scaled views of one latent labeled signature, the way
    // several sensors see the same activity at different amplitudes. At zero
    // margin every channel then has the same feasible fraction, and the
    // concatenated problem reparameterizes to the latent one.
    std::vector<int> labels;
    for (int i = 0; i < n_points; ++i) labels.push_back(i % 2 == 0 ? 1 : -1);

    std::vector<double> direction(static_cast<size_t>(dimension));
    double norm_sq = 0.0;
    for (auto& v : direction) {
        v = rng.normal();
        norm_sq += v * v;
    }
    for (auto& v : direction) v /= std::sqrt(norm_sq);

    std::vector<std::vector<double>> latent;
    for (int i = 0; i < n_points; ++i) {
        std::vector<double> z(static_cast<size_t>(dimension));
        for (size_t j = 0; j < z.size(); ++j)
            z[j] = static_cast<double>(labels[static_cast<size_t>(i)]) *
                   (direction[j] + 0.25 * rng.normal());
        latent.push_back(std::move(z));
    }

    std::vector<ManifoldInstance> instances;
    for (int c = 0; c < n_channels; ++c) {
        ManifoldInstance inst;
        inst.dimension = dimension;
        inst.margin = 0.0;
        inst.labels = labels;
        const double gain = rng.uniform(0.5, 2.0);
        for (const auto& z : latent) {
            std::vector<double> x(z.size());
            for (size_t j = 0; j < z.size(); ++j) x[j] = gain * z[j];
            inst.points.push_back(std::move(x));
        }
        instances.push_back(std::move(inst));
    }
    return instances;
}

std::vector<std::string> cmd_manifold_verify(const RunConfig& config, const fs::path& out_dir,
                                             std::optional<int> instances_override) {
    const int n_instances = instances_override.value_or(config.manifold_instances);
    require(n_instances >= 1, ErrorCode::InvalidConfig, "instance count must be >= 1");

    json lemma_runs = json::array();
    size_t lemma_failures = 0, monotonicity_violations = 0;
    for (int i = 0; i < n_instances; ++i) {
        Rng rng(mix_seed(config.seed, hash_str("lemma/" + std::to_string(i))));
        const int d = 2 + static_cast<int>(rng.uniform_index(7));  // 2..8
        const int n_sets = 2 + static_cast<int>(rng.uniform_index(3));
        std::vector<HullSet> sets;
        for (int s = 0; s < n_sets; ++s)
            sets.push_back(random_hull_set(rng, d, d + 2 + static_cast<int>(rng.uniform_index(4))));
        const Lemma1Report report = verify_lemma1(sets, config.manifold_box_samples,
                                                  mix_seed(config.seed, static_cast<uint64_t>(i)));
        if (!report.inequality_holds) ++lemma_failures;
        monotonicity_violations += report.monotonicity_violations;
        lemma_runs.push_back(report.to_json());
    }

    // Channel-concatenation check on planted separable instances.
    json theorem_runs = json::array();
    size_t theorem_failures = 0, dominance_violations = 0;
    const int n_theorem = std::max(1, n_instances / 5);
    for (int i = 0; i < n_theorem; ++i) {
        Rng rng(mix_seed(config.seed, hash_str("theorem/" + std::to_string(i))));
        const int n_channels = 2 + static_cast<int>(rng.uniform_index(2));
        const int dim = 2 + static_cast<int>(rng.uniform_index(2));
        const auto instances = informative_channel_instances(rng, n_channels, dim, 6);
        const Theorem1Report report =
            verify_theorem1(instances, 0.0, std::max<size_t>(config.volume_samples / 10, 1000),
                            mix_seed(config.seed, hash_str("theorem-mc/" + std::to_string(i))));
        if (!report.union_bound_holds || !report.concat_bound_holds) ++theorem_failures;
        dominance_violations += report.dominance_violations;
        theorem_runs.push_back(report.to_json());
    }

    // Analytic anchors for the volume estimator.
    ManifoldInstance half;
    half.dimension = 2;
    half.points = {{std::sqrt(2.0), 0.0}};
    half.labels = {1};
    half.margin = 0.0;
    const auto half_est = estimate_solution_volume(half, config.volume_samples,
                                                   mix_seed(config.seed, hash_str("half")));
    half.margin = std::sqrt(2.0);
    const auto quarter_est = estimate_solution_volume(half, config.volume_samples,
                                                      mix_seed(config.seed, hash_str("quarter")));
    const bool half_ok = std::fabs(half_est.fraction - 0.5) <= 3.0 * half_est.std_error;
    const bool quarter_ok = std::fabs(quarter_est.fraction - 0.25) <= 3.0 * quarter_est.std_error;

    write_report_json(
        out_dir / "manifold_report.json", config,
        json{{"lemma_instances", n_instances},
             {"lemma_failures", lemma_failures},
             {"lemma_monotonicity_violations", monotonicity_violations},
             {"lemma_runs", std::move(lemma_runs)},
             {"theorem_instances", n_theorem},
             {"theorem_failures", theorem_failures},
             {"theorem_dominance_violations", dominance_violations},
             {"theorem_runs", std::move(theorem_runs)},
             {"half_circle", {{"estimate", half_est.fraction},
                              {"std_error", half_est.std_error},
                              {"expected", 0.5},
                              {"pass", half_ok}}},
             {"margin_arc", {{"estimate", quarter_est.fraction},
                             {"std_error", quarter_est.std_error},
                             {"expected", 0.25},
                             {"pass", quarter_ok}}},
             {"all_pass", lemma_failures == 0 && theorem_failures == 0 &&
                              monotonicity_violations == 0 && dominance_violations == 0 &&
                              half_ok && quarter_ok}});
    return {"manifold_report.json"};
}

std::vector<std::string> cmd_report(const RunConfig& config, const fs::path& out_dir) {
    const std::vector<std::string> candidates = {
        "dataset/manifest.csv", "synth_report.json",     "filter_report.json",
        "gridsearch_filter.csv", "gridsearch_filter.json", "featurize_report.json",
        "split.csv",            "figure4_f1.csv",        "train_base_report.json",
        "train_fusion_report.json", "table6_globl_fusion.csv", "table7_hpc_fusion.csv",
        "figure7_roc.csv",      "evaluation.json",       "figure6_truncation.csv",
        "truncation_report.json", "figure5_ds.csv",      "ds_report.json",
        "manifold_report.json",
    };
    json artifacts = json::object();
    for (const auto& name : candidates) {
        const fs::path path = out_dir / name;
        if (!fs::exists(path)) continue;
        std::ostringstream h;
        h << std::hex << hash_str(read_text_file(path));
        artifacts[name] = json{{"content_hash", h.str()}};
    }
    write_report_json(out_dir / "report.json", config,
                      json{{"artifacts", std::move(artifacts)},
                           {"config", run_config_to_json(config)}});
    return {"report.json"};
}

}  // namespace xmd
