#pragma once

// Synthetic telemetry generator. Produces labeled sessions whose class
// separability is planted per channel, so pipeline behavior is reproducible
// without a device-collection campaign. Benign signal is an AR(1) baseline
// plus white noise; malware adds the channel's EffectSpec on top.

#include <cstdint>
#include <filesystem>
#include <map>
#include <optional>

#include "xmd/telemetry.hpp"

#include <nlohmann/json_fwd.hpp>

namespace xmd {

struct EffectSpec {
    double mean_shift = 0.0;       // added to the malware-class signal mean, channel units
    double burst_rate_hz = 0.0;    // Poisson rate of malware activity bursts
    double burst_amplitude = 0.0;  // burst height; also the tone amplitude when tone_hz is set
    std::optional<double> tone_hz; // periodic component injected for malware
};

struct PlantSpec {
    int n_benign_apks = 0;
    int n_malware_apks = 0;
    int iterations_per_apk = 8;
    double duration_s = 40.0;
    double sample_rate_hz = 10.0;
    std::map<ChannelId, EffectSpec> effects;  // must cover all 15 GLOBL + 4 HPC groups
    double noise_floor = 0.05;                // white measurement noise on top of the AR baseline
    // Fraction of (apk, iteration) runs whose foreground runtime lands below the
    // 15 s activation pivot, per label; exercises the activation filter.
    double low_runtime_frac_benign = 0.10;
    double low_runtime_frac_malware = 0.30;
    uint64_t seed = 0;

    void validate() const;  // throws InvalidSpec
};

// Zero-filled effect map over the full channel catalog.
std::map<ChannelId, EffectSpec> zero_effects();

// Reduced-scale dataset with the collection shape of a full campaign: 8 GLOBL
// iterations per APK, 2 iterations per HPC group, 40 s at 10 Hz, effects spread
// over CPU, cache, memory, network, and power channels so that no single
// channel separates the classes on its own.
PlantSpec default_paper_shaped_spec(uint64_t seed);

struct GeneratedDataset {
    DatasetManifest manifest;
    std::vector<TelemetrySession> sessions;  // same order as manifest entries
};

// In-memory generation; deterministic for a fixed spec (seed included).
GeneratedDataset generate_sessions(const PlantSpec& spec);

// Writes manifest.csv plus sessions/<session_id>.json under out_dir.
DatasetManifest generate_dataset(const PlantSpec& spec, const std::filesystem::path& out_dir);

nlohmann::json session_to_json(const TelemetrySession& session);

// Config (de)serialization for the CLI; unknown keys are errors.
PlantSpec plant_spec_from_json(const nlohmann::json& j);
nlohmann::json plant_spec_to_json(const PlantSpec& spec);

}  // namespace xmd
