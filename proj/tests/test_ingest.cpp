#include <doctest.h>

#include <filesystem>

#include <nlohmann/json.hpp>

#include "xmd/ingest.hpp"
#include "xmd/io_util.hpp"
#include "xmd/synthgen.hpp"

using namespace xmd;
using nlohmann::json;

namespace {

TelemetrySession make_globl_session(double duration_s = 40.0, double rate = 10.0,
                                    double runtime_s = 20.0) {
    TelemetrySession s;
    s.session_id = "sess";
    s.apk_id = "apk";
    s.iteration = 1;
    s.channel_set = ChannelSet::globl();
    s.sample_rate_hz = rate;
    s.duration_s = duration_s;
    s.runtime_s = runtime_s;
    s.channel_names = channel_series_names(s.channel_set);
    const size_t n = s.expected_samples();
    for (size_t c = 0; c < s.channel_names.size(); ++c) {
        std::vector<double> x(n);
        for (size_t t = 0; t < n; ++t) x[t] = static_cast<double>(c) + 0.01 * static_cast<double>(t);
        s.series.push_back(std::move(x));
    }
    return s;
}

TelemetrySession with_runtime(double runtime_s) {
    auto s = make_globl_session(40.0, 10.0, runtime_s);
    s.session_id = "r" + std::to_string(runtime_s);
    return s;
}

}  // namespace

TEST_CASE("session json round trip and schema errors") {
    const auto session = make_globl_session();
    const auto doc = session_to_json(session);
    const auto parsed = session_from_json(doc);
    CHECK(parsed.session_id == session.session_id);
    // JSON objects order keys lexicographically; compare per channel name.
    for (const auto& name : session.channel_names)
        CHECK(parsed.series_for(name) == session.series_for(name));

    // 14 channels
    auto broken = doc;
    broken["channels"].erase("globl_7");
    CHECK_THROWS_AS((void)session_from_json(broken), Error);

    // runtime above duration
    broken = doc;
    broken["runtime_s"] = 41.0;
    try {
        (void)session_from_json(broken);
        FAIL("expected SchemaViolation");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::SchemaViolation);
    }

    // unknown channel name
    broken = doc;
    broken["channels"]["globl_99"] = broken["channels"]["globl_1"];
    broken["channels"].erase("globl_1");
    try {
        (void)session_from_json(broken);
        FAIL("expected UnknownChannelName");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::UnknownChannelName);
    }

    // unequal channel lengths
    broken = doc;
    broken["channels"]["globl_1"].erase(0);
    CHECK_THROWS_AS((void)session_from_json(broken), Error);

    // unknown top-level field
    broken = doc;
    broken["surprise"] = 1;
    CHECK_THROWS_AS((void)session_from_json(broken), Error);
}

TEST_CASE("load_session from disk, parse errors") {
    const auto dir = std::filesystem::temp_directory_path() / "xmd_ingest_test";
    std::filesystem::create_directories(dir);
    const auto good = dir / "good.json";
    write_text_file(good, session_to_json(make_globl_session()).dump());
    CHECK(load_session(good).session_id == "sess");

    const auto bad = dir / "bad.json";
    write_text_file(bad, "{not json");
    try {
        (void)load_session(bad);
        FAIL("expected ParseError");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::ParseError);
    }

    try {
        (void)load_session(dir / "absent.json");
        FAIL("expected IoFailure");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::IoFailure);
    }
    std::filesystem::remove_all(dir);
}

TEST_CASE("activation filter boundary is strict less-than") {
    std::vector<TelemetrySession> sessions = {with_runtime(14.999), with_runtime(15.0),
                                              with_runtime(15.001)};
    const auto result = activation_filter(sessions, 15.0);
    REQUIRE(result.kept.size() == 2);
    REQUIRE(result.rejected.size() == 1);
    CHECK(result.rejected[0].runtime_s == 14.999);
    CHECK(result.kept[0].runtime_s == 15.0);
    CHECK(result.kept[1].runtime_s == 15.001);
}

TEST_CASE("activation filter: partition, order, degenerate threshold") {
    std::vector<TelemetrySession> sessions;
    for (double r : {30.0, 3.0, 18.0, 14.0, 22.0}) sessions.push_back(with_runtime(r));
    const auto result = activation_filter(sessions, 15.0);
    CHECK(result.kept.size() + result.rejected.size() == sessions.size());
    CHECK(result.kept[0].runtime_s == 30.0);  // input order preserved
    CHECK(result.kept[1].runtime_s == 18.0);
    CHECK(result.rejected[0].runtime_s == 3.0);

    const auto everything = activation_filter(sessions, 0.0);
    CHECK(everything.kept.size() == sessions.size());
    CHECK(everything.rejected.empty());

    CHECK_THROWS_AS((void)activation_filter(sessions, -1.0), Error);
}

TEST_CASE("truncate: arithmetic, identity, clamping") {
    const auto session = make_globl_session(40.0, 10.0, 38.0);

    const auto half = truncate_session(session, 20.0);
    CHECK(half.duration_s == 20.0);
    CHECK(half.runtime_s == 20.0);  // clamped to the new window
    for (const auto& channel : half.series) CHECK(channel.size() == 200);

    const auto same = truncate_session(session, 40.0);
    CHECK(same.series == session.series);
    CHECK(same.duration_s == session.duration_s);

    const auto beyond = truncate_session(session, 60.0);
    CHECK(beyond.series == session.series);
    CHECK(beyond.duration_s == session.duration_s);

    try {
        (void)truncate_session(session, 0.0);
        FAIL("expected NonPositiveWindow");
    } catch (const Error& e) {
        CHECK(e.code() == ErrorCode::NonPositiveWindow);
    }
}

TEST_CASE("truncate: prefix monotone and idempotent") {
    const auto session = make_globl_session();
    const auto a = truncate_session(session, 12.3);
    const auto b = truncate_session(session, 31.7);
    for (size_t c = 0; c < a.series.size(); ++c) {
        REQUIRE(a.series[c].size() <= b.series[c].size());
        for (size_t t = 0; t < a.series[c].size(); ++t) CHECK(a.series[c][t] == b.series[c][t]);
    }
    const auto again = truncate_session(a, 12.3);
    CHECK(again.series == a.series);
    CHECK(again.duration_s == a.duration_s);
}

TEST_CASE("load_dataset resolves manifest paths") {
    const auto dir = std::filesystem::temp_directory_path() / "xmd_dataset_test";
    std::filesystem::remove_all(dir);
    PlantSpec spec;
    spec.n_benign_apks = 2;
    spec.n_malware_apks = 2;
    spec.iterations_per_apk = 2;
    spec.duration_s = 8.0;
    spec.effects = zero_effects();
    spec.seed = 5;
    (void)generate_dataset(spec, dir);

    const auto data = load_dataset(dir / "manifest.csv");
    CHECK(data.sessions.size() == data.manifest.entries.size());
    CHECK(data.sessions.size() == 2 * 2 * 2 * 2);  // (globl + hpc) per (apk, iteration)
    std::filesystem::remove_all(dir);
}
