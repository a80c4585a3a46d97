#include "xmd/telemetry.hpp"

#include <algorithm>
#include <cmath>
#include <set>
#include <sstream>

#include "xmd/io_util.hpp"
#include "xmd/rng.hpp"

namespace xmd {

const char* label_name(ClassLabel label) {
    return label == ClassLabel::Benign ? "benign" : "malware";
}

ClassLabel parse_label(const std::string& text) {
    if (text == "benign") return ClassLabel::Benign;
    if (text == "malware") return ClassLabel::Malware;
    fail(ErrorCode::ParseError, "unknown label '" + text + "'");
}

ChannelId ChannelId::globl(int index) {
    require(index >= 1 && index <= kGloblChannelCount, ErrorCode::SchemaViolation,
            "GLOBL channel index out of range: " + std::to_string(index));
    return ChannelId{ChannelKind::Globl, index};
}

ChannelId ChannelId::hpc(int group) {
    require(group >= 1 && group <= kHpcGroupCount, ErrorCode::SchemaViolation,
            "HPC group index out of range: " + std::to_string(group));
    return ChannelId{ChannelKind::HpcGroup, group};
}

std::string ChannelId::name() const {
    return is_globl() ? "globl_" + std::to_string(index) : "hpc" + std::to_string(index);
}

namespace {

std::vector<ChannelInfo> build_catalog() {
    std::vector<ChannelInfo> catalog;
    const char* globl_rows[kGloblChannelCount][2] = {
        {"/sys/class/devfreq/5000000.qcom,kgsl-3d0/gpu_load", "GPU controller"},
        {"/sys/devices/system/cpu/cpu0/cpufreq/scaling_cur_freq", "CPU controller : lower cluster"},
        {"/sys/devices/system/cpu/cpu7/cpufreq/scaling_cur_freq", "CPU controller : higher cluster"},
        {"/sys/class/devfreq/soc:qcom,cpubw/cur_freq", "CPU bus bandwidth controller"},
        {"/sys/class/devfreq/soc:qcom,gpubw/cur_freq", "GPU bus bandwidth controller"},
        {"/sys/class/devfreq/soc:qcom,kgsl-busmon/cur-freq", "GPU bus bandwidth controller"},
        {"/sys/class/devfreq/soc:qcom,l3-cpu0/cur-freq", "Latency controller L3 cache : lower cluster"},
        {"/sys/class/devfreq/soc:qcom,l3-cpu4/cur-freq", "Latency controller L3 cache : higher cluster"},
        {"/sys/class/devfreq/soc:qcom,llccbw/cur-freq", "Last level cache controller"},
        {"/sys/class/devfreq/soc:qcom,memlat-cpu0/cur-freq", "Memory latency controller : lower cluster"},
        {"/sys/class/devfreq/soc:qcom,memlat-cpu4/cur-freq", "Memory latency controller : higher cluster"},
        {"/sys/class/net/tun0/statistics/rx_bytes", "Network : received bytes"},
        {"/sys/class/net/tun0/statistics/tx_bytes", "Network : transmitted bytes"},
        {"/sys/class/power_supply/battery/current_now", "Device current"},
        {"/sys/class/power_supply/battery/voltage_now", "Device voltage"},
    };
    for (int i = 0; i < kGloblChannelCount; ++i) {
        ChannelInfo info;
        info.id = ChannelId::globl(i + 1);
        info.sysfs_location = globl_rows[i][0];
        info.description = globl_rows[i][1];
        catalog.push_back(std::move(info));
    }
    const char* hpc_rows[kHpcGroupCount][kHpcEventsPerGroup] = {
        {"cpu-cycles", "instructions", "raw-bus-accesses"},
        {"branch-instructions", "branch-misses", "raw-mem-access"},
        {"cache-references", "cache-misses", "raw-crypto-spec"},
        {"bus-cycles", "raw-mem-access-rd", "raw-mem-access-wr"},
    };
    for (int g = 0; g < kHpcGroupCount; ++g) {
        ChannelInfo info;
        info.id = ChannelId::hpc(g + 1);
        info.description = "HPC group-" + std::to_string(g + 1);
        info.hpc_events.assign(hpc_rows[g], hpc_rows[g] + kHpcEventsPerGroup);
        catalog.push_back(std::move(info));
    }
    return catalog;
}

}  // namespace

const std::vector<ChannelInfo>& catalog_channels() {
    static const std::vector<ChannelInfo> catalog = build_catalog();
    return catalog;
}

const ChannelInfo& channel_info(ChannelId id) {
    const auto& catalog = catalog_channels();
    const size_t offset = id.is_globl() ? static_cast<size_t>(id.index - 1)
                                        : static_cast<size_t>(kGloblChannelCount + id.index - 1);
    return catalog[offset];
}

ChannelSet ChannelSet::hpc(int group) {
    require(group >= 1 && group <= kHpcGroupCount, ErrorCode::SchemaViolation,
            "HPC group out of range: " + std::to_string(group));
    return ChannelSet(group);
}

ChannelSet ChannelSet::parse(const std::string& text) {
    if (text == "globl") return globl();
    if (text.size() == 4 && text.compare(0, 3, "hpc") == 0 && text[3] >= '1' && text[3] <= '4')
        return hpc(text[3] - '0');
    fail(ErrorCode::ParseError, "unknown channel_set '" + text + "'");
}

int ChannelSet::hpc_group() const {
    require(code_ != 0, ErrorCode::SchemaViolation, "channel set is GLOBL, not an HPC group");
    return code_;
}

std::string ChannelSet::name() const {
    return is_globl() ? "globl" : "hpc" + std::to_string(code_);
}

std::vector<std::string> channel_series_names(ChannelSet set) {
    std::vector<std::string> names;
    if (set.is_globl()) {
        for (int i = 1; i <= kGloblChannelCount; ++i) names.push_back("globl_" + std::to_string(i));
    } else {
        for (const auto& event : channel_info(ChannelId::hpc(set.hpc_group())).hpc_events)
            names.push_back("hpc_" + event);
    }
    return names;
}

size_t TelemetrySession::expected_samples() const {
    return static_cast<size_t>(std::llround(duration_s * sample_rate_hz));
}

const std::vector<double>& TelemetrySession::series_for(const std::string& channel_name) const {
    for (size_t i = 0; i < channel_names.size(); ++i)
        if (channel_names[i] == channel_name) return series[i];
    fail(ErrorCode::UnknownChannelName,
         "session " + session_id + " has no channel '" + channel_name + "'");
}

void TelemetrySession::validate() const {
    require(!session_id.empty(), ErrorCode::SchemaViolation, "empty session_id");
    require(!apk_id.empty(), ErrorCode::SchemaViolation, "empty apk_id in " + session_id);
    require(iteration >= 1, ErrorCode::SchemaViolation, "iteration < 1 in " + session_id);
    require(sample_rate_hz > 0.0, ErrorCode::SchemaViolation, "non-positive sample rate in " + session_id);
    require(runtime_s >= 0.0 && duration_s >= 0.0, ErrorCode::SchemaViolation,
            "negative runtime/duration in " + session_id);
    require(runtime_s <= duration_s, ErrorCode::SchemaViolation,
            "runtime_s > duration_s in " + session_id);
    require(channel_names.size() == series.size(), ErrorCode::SchemaViolation,
            "channel name/series count mismatch in " + session_id);

    const auto expected_names = channel_series_names(channel_set);
    require(channel_names.size() == expected_names.size(), ErrorCode::SchemaViolation,
            session_id + ": expected " + std::to_string(expected_names.size()) + " channels, got " +
                std::to_string(channel_names.size()));
    for (const auto& name : channel_names) {
        if (std::find(expected_names.begin(), expected_names.end(), name) == expected_names.end())
            fail(ErrorCode::UnknownChannelName, session_id + ": unexpected channel '" + name + "'");
    }
    std::set<std::string> distinct(channel_names.begin(), channel_names.end());
    require(distinct.size() == channel_names.size(), ErrorCode::SchemaViolation,
            session_id + ": duplicate channel names");

    const size_t expected_len = expected_samples();
    for (size_t i = 0; i < series.size(); ++i) {
        require(series[i].size() == expected_len, ErrorCode::SchemaViolation,
                session_id + ": channel '" + channel_names[i] + "' has " +
                    std::to_string(series[i].size()) + " samples, expected " +
                    std::to_string(expected_len));
    }
}

std::string DatasetManifest::to_csv() const {
    std::ostringstream out;
    out << "session_id,apk_id,label,iteration,channel_set,file_path,runtime_s\n";
    for (const auto& e : entries) {
        out << e.session_id << ',' << e.apk_id << ',' << label_name(e.label) << ',' << e.iteration
            << ',' << e.channel_set.name() << ',' << e.file_path << ',' << fmt_double(e.runtime_s)
            << '\n';
    }
    return out.str();
}

DatasetManifest DatasetManifest::from_csv(const std::string& text) {
    std::istringstream in(text);
    std::string line;
    require(static_cast<bool>(std::getline(in, line)), ErrorCode::ParseError, "empty manifest file");
    const auto header = split_csv_line(line);
    const std::vector<std::string> expected = {"session_id", "apk_id",    "label",    "iteration",
                                               "channel_set", "file_path", "runtime_s"};
    require(header == expected, ErrorCode::ParseError, "bad manifest header: " + line);

    DatasetManifest manifest;
    while (std::getline(in, line)) {
        if (line.empty()) continue;
        const auto fields = split_csv_line(line);
        require(fields.size() == expected.size(), ErrorCode::ParseError,
                "manifest row has " + std::to_string(fields.size()) + " fields: " + line);
        ManifestEntry e;
        e.session_id = fields[0];
        e.apk_id = fields[1];
        e.label = parse_label(fields[2]);
        e.iteration = static_cast<int>(parse_long(fields[3], "iteration"));
        e.channel_set = ChannelSet::parse(fields[4]);
        e.file_path = fields[5];
        e.runtime_s = parse_double(fields[6], "runtime_s");
        manifest.entries.push_back(std::move(e));
    }
    std::set<std::string> ids;
    for (const auto& e : manifest.entries)
        require(ids.insert(e.session_id).second, ErrorCode::ManifestInconsistent,
                "duplicate session_id " + e.session_id);
    return manifest;
}

void DatasetManifest::save(const std::filesystem::path& path) const {
    write_text_file(path, to_csv());
}

DatasetManifest DatasetManifest::load(const std::filesystem::path& path) {
    return from_csv(read_text_file(path));
}

const char* split_name(Split split) {
    switch (split) {
        case Split::Train: return "train";
        case Split::TrainSG: return "trainSG";
        case Split::Test: return "test";
    }
    return "?";
}

Split SplitAssignment::of(const std::string& apk_id) const {
    const auto it = by_apk.find(apk_id);
    require(it != by_apk.end(), ErrorCode::ManifestInconsistent,
            "apk_id not in split assignment: " + apk_id);
    return it->second;
}

SplitAssignment split_dataset(const DatasetManifest& manifest, uint64_t seed) {
    require(!manifest.entries.empty(), ErrorCode::EmptyManifest, "manifest has no entries");

    // Distinct APKs per label; an APK may not carry two labels.
    std::map<std::string, ClassLabel> apk_label;
    for (const auto& e : manifest.entries) {
        const auto [it, inserted] = apk_label.emplace(e.apk_id, e.label);
        require(inserted || it->second == e.label, ErrorCode::ManifestInconsistent,
                "apk " + e.apk_id + " appears with both labels");
    }
    std::vector<std::string> apks_by_label[2];
    for (const auto& [apk, label] : apk_label)
        apks_by_label[label == ClassLabel::Malware ? 1 : 0].push_back(apk);

    SplitAssignment assignment;
    for (int li = 0; li < 2; ++li) {
        auto& apks = apks_by_label[li];
        require(apks.size() >= 3, ErrorCode::InsufficientApks,
                std::string("fewer than 3 APKs labeled ") +
                    label_name(li == 0 ? ClassLabel::Benign : ClassLabel::Malware));
        std::sort(apks.begin(), apks.end());  // map order is sorted already; be explicit
        Rng rng(mix_seed(seed, hash_str(li == 0 ? "split/benign" : "split/malware")));
        rng.shuffle(apks);

        const size_t n = apks.size();
        const size_t n_trainsg = static_cast<size_t>(std::floor(0.15 * static_cast<double>(n)));
        const size_t n_test = n_trainsg;
        const size_t n_train = n - n_trainsg - n_test;  // floor(0.70 n) plus the remainder
        for (size_t i = 0; i < n; ++i) {
            Split split = Split::Train;
            if (i >= n_train && i < n_train + n_trainsg) split = Split::TrainSG;
            if (i >= n_train + n_trainsg) split = Split::Test;
            assignment.by_apk.emplace(apks[i], split);
        }
    }
    return assignment;
}

}  // namespace xmd
