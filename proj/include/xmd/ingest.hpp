#pragma once

// Session loading, the activation filter, and execution-window truncation.

#include <filesystem>
#include <vector>

#include "xmd/telemetry.hpp"

#include <nlohmann/json_fwd.hpp>

namespace xmd {

inline constexpr double kDefaultMinRuntimeS = 15.0;

TelemetrySession session_from_json(const nlohmann::json& j);
TelemetrySession load_session(const std::filesystem::path& path);

struct FilterResult {
    std::vector<TelemetrySession> kept;      // runtime_s >= min_runtime_s, input order
    std::vector<TelemetrySession> rejected;  // complement, input order
};

FilterResult activation_filter(std::vector<TelemetrySession> sessions,
                               double min_runtime_s = kDefaultMinRuntimeS);

// First round(keep_s * rate) samples of every channel; identity when
// keep_s >= duration_s. runtime_s is clamped to the new duration.
TelemetrySession truncate_session(const TelemetrySession& session, double keep_s);

// Manifest + all referenced session files, validated.
struct Dataset {
    DatasetManifest manifest;
    std::vector<TelemetrySession> sessions;  // manifest order
};

Dataset load_dataset(const std::filesystem::path& manifest_path);

}  // namespace xmd
