#pragma once

// Core data model: channel identities and catalog, telemetry sessions, the
// dataset manifest, and the train / trainSG / test split.

#include <cstdint>
#include <filesystem>
#include <map>
#include <string>
#include <vector>

#include "xmd/error.hpp"

namespace xmd {

enum class ClassLabel { Benign, Malware };

const char* label_name(ClassLabel label);          // "benign" / "malware"
ClassLabel parse_label(const std::string& text);

inline constexpr int kGloblChannelCount = 15;
inline constexpr int kDvfsChannelCount = 11;       // GLOBL 1-11; 12-15 are SYSFS
inline constexpr int kHpcGroupCount = 4;
inline constexpr int kHpcEventsPerGroup = 3;

enum class ChannelKind { Globl, HpcGroup };

struct ChannelId {
    ChannelKind kind = ChannelKind::Globl;
    int index = 1;  // Globl: 1..15, HpcGroup: 1..4

    static ChannelId globl(int index);
    static ChannelId hpc(int group);

    bool is_globl() const { return kind == ChannelKind::Globl; }
    bool is_dvfs() const { return is_globl() && index <= kDvfsChannelCount; }
    std::string name() const;  // "globl_7", "hpc3"

    friend bool operator==(const ChannelId&, const ChannelId&) = default;
    friend auto operator<=>(const ChannelId&, const ChannelId&) = default;
};

struct ChannelInfo {
    ChannelId id;
    std::string description;                // catalog description
    std::string sysfs_location;             // GLOBL channels only
    std::vector<std::string> hpc_events;    // HPC groups only, exactly 3
};

// The fixed 15 GLOBL + 4 HPC-group catalog.
const std::vector<ChannelInfo>& catalog_channels();
const ChannelInfo& channel_info(ChannelId id);

// Which channels one collection run carries: all 15 GLOBL, or one HPC group.
class ChannelSet {
public:
    static ChannelSet globl() { return ChannelSet(0); }
    static ChannelSet hpc(int group);
    static ChannelSet parse(const std::string& text);  // "globl", "hpc1".."hpc4"

    bool is_globl() const { return code_ == 0; }
    int hpc_group() const;
    std::string name() const;
    int channel_count() const { return is_globl() ? kGloblChannelCount : kHpcEventsPerGroup; }

    friend bool operator==(const ChannelSet&, const ChannelSet&) = default;
    friend auto operator<=>(const ChannelSet&, const ChannelSet&) = default;

private:
    explicit ChannelSet(int code) : code_(code) {}
    int code_;  // 0 = globl, 1..4 = hpc group
};

// Expected per-channel series names inside a session ("globl_1".. or "hpc_<event>").
std::vector<std::string> channel_series_names(ChannelSet set);

struct TelemetrySession {
    std::string session_id;
    std::string apk_id;
    ClassLabel label = ClassLabel::Benign;
    int iteration = 1;
    ChannelSet channel_set = ChannelSet::globl();
    double sample_rate_hz = 10.0;
    double runtime_s = 0.0;   // foreground runtime, drives the activation filter
    double duration_s = 0.0;  // recorded wall duration
    std::vector<std::string> channel_names;
    std::vector<std::vector<double>> series;  // parallel to channel_names, equal lengths

    size_t expected_samples() const;
    const std::vector<double>& series_for(const std::string& channel_name) const;
    void validate() const;  // throws SchemaViolation / UnknownChannelName
};

struct ManifestEntry {
    std::string session_id;
    std::string apk_id;
    ClassLabel label = ClassLabel::Benign;
    int iteration = 1;
    ChannelSet channel_set = ChannelSet::globl();
    std::string file_path;
    double runtime_s = 0.0;
};

struct DatasetManifest {
    std::vector<ManifestEntry> entries;

    std::string to_csv() const;
    static DatasetManifest from_csv(const std::string& text);
    void save(const std::filesystem::path& path) const;
    static DatasetManifest load(const std::filesystem::path& path);
};

enum class Split { Train, TrainSG, Test };

const char* split_name(Split split);

struct SplitAssignment {
    std::map<std::string, Split> by_apk;

    Split of(const std::string& apk_id) const;
};

// Stratified-by-label 70/15/15 split at APK granularity, deterministic in seed.
SplitAssignment split_dataset(const DatasetManifest& manifest, uint64_t seed);

}  // namespace xmd
