#include "xmd/ingest.hpp"

#include <cmath>

#include <nlohmann/json.hpp>

#include "xmd/io_util.hpp"

namespace xmd {

TelemetrySession session_from_json(const nlohmann::json& j) {
    TelemetrySession s;
    bool have_channels = false;
    for (const auto& [key, value] : j.items()) {
        try {
            if (key == "session_id") s.session_id = value.get<std::string>();
            else if (key == "apk_id") s.apk_id = value.get<std::string>();
            else if (key == "label") s.label = parse_label(value.get<std::string>());
            else if (key == "iteration") s.iteration = value.get<int>();
            else if (key == "channel_set") s.channel_set = ChannelSet::parse(value.get<std::string>());
            else if (key == "sample_rate_hz") s.sample_rate_hz = value.get<double>();
            else if (key == "runtime_s") s.runtime_s = value.get<double>();
            else if (key == "duration_s") s.duration_s = value.get<double>();
            else if (key == "channels") {
                have_channels = true;
                for (const auto& [name, samples] : value.items()) {
                    s.channel_names.push_back(name);
                    s.series.push_back(samples.get<std::vector<double>>());
                }
            } else {
                fail(ErrorCode::SchemaViolation, "unknown session field '" + key + "'");
            }
        } catch (const Error&) {
            throw;
        } catch (const std::exception& e) {
            fail(ErrorCode::SchemaViolation, "bad value for session field '" + key + "': " + e.what());
        }
    }
    require(have_channels, ErrorCode::SchemaViolation, "session has no 'channels' object");
    s.validate();
    return s;
}

TelemetrySession load_session(const std::filesystem::path& path) {
    require(std::filesystem::exists(path), ErrorCode::IoFailure,
            "session file not found: " + path.string());
    nlohmann::json j;
    try {
        j = nlohmann::json::parse(read_text_file(path));
    } catch (const nlohmann::json::parse_error& e) {
        fail(ErrorCode::ParseError, path.string() + ": " + e.what());
    }
    try {
        return session_from_json(j);
    } catch (const Error& e) {
        throw Error(e.code(), path.string() + ": " + e.what());
    }
}

FilterResult activation_filter(std::vector<TelemetrySession> sessions, double min_runtime_s) {
    require(min_runtime_s >= 0.0, ErrorCode::InvalidConfig, "min_runtime_s must be nonnegative");
    FilterResult result;
    for (auto& session : sessions) {
        // "less than" is strict: runtime_s == threshold is kept.
        if (session.runtime_s < min_runtime_s)
            result.rejected.push_back(std::move(session));
        else
            result.kept.push_back(std::move(session));
    }
    return result;
}

TelemetrySession truncate_session(const TelemetrySession& session, double keep_s) {
    require(keep_s > 0.0, ErrorCode::NonPositiveWindow,
            "truncation window must be positive, got " + fmt_double(keep_s));
    if (keep_s >= session.duration_s) return session;

    TelemetrySession out = session;
    const size_t keep_n =
        static_cast<size_t>(std::llround(keep_s * session.sample_rate_hz));
    for (auto& channel : out.series) {
        if (channel.size() > keep_n) channel.resize(keep_n);
    }
    out.duration_s = keep_s;
    out.runtime_s = std::min(session.runtime_s, keep_s);
    out.validate();
    return out;
}

Dataset load_dataset(const std::filesystem::path& manifest_path) {
    Dataset data;
    data.manifest = DatasetManifest::load(manifest_path);
    const auto base = manifest_path.parent_path();
    data.sessions.reserve(data.manifest.entries.size());
    for (const auto& entry : data.manifest.entries) {
        TelemetrySession s = load_session(base / entry.file_path);
        require(s.session_id == entry.session_id, ErrorCode::ManifestInconsistent,
                "manifest/session id mismatch for " + entry.file_path);
        data.sessions.push_back(std::move(s));
    }
    return data;
}

}  // namespace xmd
