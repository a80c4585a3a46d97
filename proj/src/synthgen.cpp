#include "xmd/synthgen.hpp"

#include <algorithm>
#include <cmath>
#include <iomanip>
#include <sstream>

#include <nlohmann/json.hpp>

#include "xmd/io_util.hpp"
#include "xmd/rng.hpp"

namespace xmd {

namespace {

constexpr double kAr1Coeff = 0.7;
constexpr double kRuntimePivotS = 15.0;   // activation-filter pivot the runtime mix is built around
constexpr double kApkOffsetScale = 0.3;   // per-APK baseline offset, in units of channel sigma
constexpr double kBurstLengthS = 0.5;
// One latent activity level per run, seen by every channel at a per-channel
// gain: busy sessions raise CPU, GPU, memory, and network telemetry together,
// which is what couples channels within a class on a real device.
constexpr double kActivityGainLo = 0.20;
constexpr double kActivityGainHi = 0.45;

struct ChannelParams {
    double base_mean;
    double sigma;       // AR(1) innovation scale
    bool nonnegative;   // HPC counters are rectified
};

// Fixed per-channel baseline parameters, derived from the series name so both
// classes share them exactly.
ChannelParams channel_params(const std::string& series_name, bool is_hpc) {
    const uint64_t h = hash_str(series_name);
    ChannelParams p;
    p.base_mean = 2.0 + static_cast<double>(h % 7) * 0.5;
    p.sigma = 0.6 + 0.1 * static_cast<double>((h >> 8) % 9);
    p.nonnegative = is_hpc;
    return p;
}

double activity_gain(const std::string& series_name) {
    const uint64_t h = hash_str("gain/" + series_name);
    return kActivityGainLo +
           (kActivityGainHi - kActivityGainLo) * static_cast<double>(h % 1000) / 999.0;
}

std::vector<double> generate_series(Rng& rng, const ChannelParams& params, const EffectSpec& effect,
                                    bool malware, double apk_offset, double session_activity,
                                    size_t n_samples, double sample_rate_hz, double noise_floor) {
    std::vector<double> out(n_samples);
    const double stationary_sd = params.sigma / std::sqrt(1.0 - kAr1Coeff * kAr1Coeff);
    double ar = stationary_sd * rng.normal();
    const double tone_phase = rng.uniform() * 6.283185307179586;

    int burst_left = 0;
    const int burst_len = std::max(1, static_cast<int>(std::lround(kBurstLengthS * sample_rate_hz)));
    const double burst_p = malware ? effect.burst_rate_hz / sample_rate_hz : 0.0;

    for (size_t t = 0; t < n_samples; ++t) {
        ar = kAr1Coeff * ar + params.sigma * rng.normal();
        double x = params.base_mean + apk_offset + session_activity + ar +
                   noise_floor * rng.normal();
        if (malware) {
            x += effect.mean_shift;
            if (burst_p > 0.0 && rng.uniform() < burst_p) burst_left = burst_len;
            if (burst_left > 0) {
                x += effect.burst_amplitude;
                --burst_left;
            }
            if (effect.tone_hz) {
                x += effect.burst_amplitude *
                     std::sin(6.283185307179586 * (*effect.tone_hz) *
                                  (static_cast<double>(t) / sample_rate_hz) +
                              tone_phase);
            }
        }
        out[t] = params.nonnegative ? std::max(0.0, x) : x;
    }
    return out;
}

// Session-mean noise scale of one channel at the default 40 s / 10 Hz shape:
// APK offset + activity common mode + averaged AR(1) innovation noise.
double level_noise_sd(const std::string& series_name, bool is_hpc) {
    const ChannelParams p = channel_params(series_name, is_hpc);
    const double gain = activity_gain(series_name);
    const double ar_session_var = (1.0 + kAr1Coeff) / (400.0 * (1.0 - kAr1Coeff));
    return p.sigma *
           std::sqrt(kApkOffsetScale * kApkOffsetScale + gain * gain + ar_session_var);
}

double hpc_group_noise_sd(int group) {
    double acc = 0.0;
    for (const auto& event : channel_info(ChannelId::hpc(group)).hpc_events)
        acc += level_noise_sd("hpc_" + event, true);
    return acc / static_cast<double>(kHpcEventsPerGroup);
}

double draw_runtime(Rng& rng, double low_frac, double duration_s) {
    const double pivot = std::min(kRuntimePivotS, duration_s);
    if (rng.uniform() < low_frac) return rng.uniform(0.5, pivot);
    return rng.uniform(pivot, duration_s);
}

}  // namespace

std::map<ChannelId, EffectSpec> zero_effects() {
    std::map<ChannelId, EffectSpec> effects;
    for (const auto& info : catalog_channels()) effects[info.id] = EffectSpec{};
    return effects;
}

void PlantSpec::validate() const {
    require(n_benign_apks > 0 && n_malware_apks > 0, ErrorCode::InvalidSpec,
            "APK counts must be positive");
    require(iterations_per_apk > 0, ErrorCode::InvalidSpec, "iterations_per_apk must be positive");
    require(duration_s > 0.0 && sample_rate_hz > 0.0, ErrorCode::InvalidSpec,
            "duration and sample rate must be positive");
    require(noise_floor >= 0.0, ErrorCode::InvalidSpec, "noise_floor must be nonnegative");
    require(low_runtime_frac_benign >= 0.0 && low_runtime_frac_benign <= 1.0 &&
                low_runtime_frac_malware >= 0.0 && low_runtime_frac_malware <= 1.0,
            ErrorCode::InvalidSpec, "low-runtime fractions must be in [0,1]");
    for (const auto& info : catalog_channels()) {
        const auto it = effects.find(info.id);
        require(it != effects.end(), ErrorCode::InvalidSpec,
                "effect map missing channel " + info.id.name());
        const auto& e = it->second;
        require(e.burst_rate_hz >= 0.0, ErrorCode::InvalidSpec, "negative burst rate");
        require(e.burst_rate_hz < sample_rate_hz / 2.0, ErrorCode::InvalidSpec,
                "burst_rate_hz must stay below sample_rate_hz/2 on " + info.id.name());
        if (e.tone_hz)
            require(*e.tone_hz > 0.0 && *e.tone_hz < sample_rate_hz / 2.0, ErrorCode::InvalidSpec,
                    "tone_hz must stay below sample_rate_hz/2 on " + info.id.name());
    }
    require(effects.size() == catalog_channels().size(), ErrorCode::InvalidSpec,
            "effect map carries unknown channels");
}

PlantSpec default_paper_shaped_spec(uint64_t seed) {
    PlantSpec spec;
    spec.n_benign_apks = 120;
    spec.n_malware_apks = 120;
    spec.iterations_per_apk = 8;
    spec.duration_s = 40.0;
    spec.sample_rate_hz = 10.0;
    spec.noise_floor = 0.05;
    spec.low_runtime_frac_benign = 0.10;
    spec.low_runtime_frac_malware = 0.30;
    spec.seed = seed;
    spec.effects = zero_effects();

    // Shifts sized per channel against its own session-level noise so the
    // planted separability survives the baseline constants: buses and GPU
    // weakest, CPU and memory moderate, network and power strongest.
    auto& fx = spec.effects;
    const double dvfs_strength[kDvfsChannelCount] = {1.15, 1.40, 1.30, 1.20, 1.15, 1.10,
                                                     1.30, 1.15, 1.35, 1.25, 1.35};
    for (int c = 1; c <= kDvfsChannelCount; ++c)
        fx[ChannelId::globl(c)].mean_shift =
            dvfs_strength[c - 1] * level_noise_sd("globl_" + std::to_string(c), false);
    // Network rx/tx: C2-style traffic, the strongest channels.
    for (int c : {12, 13}) {
        const double noise = level_noise_sd("globl_" + std::to_string(c), false);
        fx[ChannelId::globl(c)].mean_shift = 1.5 * noise;
        fx[ChannelId::globl(c)].burst_rate_hz = 0.30;
        fx[ChannelId::globl(c)].burst_amplitude = 2.6 * noise;
    }
    // Power rails: periodic activity plus a moderate shift.
    for (int c : {14, 15}) {
        const double noise = level_noise_sd("globl_" + std::to_string(c), false);
        fx[ChannelId::globl(c)].mean_shift = 1.35 * noise;
        fx[ChannelId::globl(c)].burst_amplitude = 1.1 * noise;
        fx[ChannelId::globl(c)].tone_hz = 1.5;
    }
    // HPC groups: thread-level shifts, clearly below the fused detectors.
    fx[ChannelId::hpc(1)].mean_shift = 1.10 * hpc_group_noise_sd(1);
    fx[ChannelId::hpc(2)].mean_shift = 1.25 * hpc_group_noise_sd(2);
    fx[ChannelId::hpc(3)].mean_shift = 1.20 * hpc_group_noise_sd(3);
    fx[ChannelId::hpc(4)].mean_shift = 1.05 * hpc_group_noise_sd(4);
    return spec;
}

GeneratedDataset generate_sessions(const PlantSpec& spec) {
    spec.validate();
    GeneratedDataset out;

    const size_t n_samples =
        static_cast<size_t>(std::llround(spec.duration_s * spec.sample_rate_hz));
    const int total_apks = spec.n_benign_apks + spec.n_malware_apks;

    for (int apk_idx = 0; apk_idx < total_apks; ++apk_idx) {
        const bool malware = apk_idx >= spec.n_benign_apks;
        const int ordinal = malware ? apk_idx - spec.n_benign_apks + 1 : apk_idx + 1;
        std::ostringstream apk_name;
        apk_name << (malware ? "malware" : "benign") << std::setw(4) << std::setfill('0') << ordinal;
        const std::string apk_id = apk_name.str();
        const ClassLabel label = malware ? ClassLabel::Malware : ClassLabel::Benign;

        // Per-APK baseline offsets keep iterations of one APK correlated.
        Rng apk_rng(mix_seed(spec.seed, hash_str("apk/" + apk_id)));
        std::map<std::string, double> apk_offset;
        for (const auto& info : catalog_channels()) {
            if (info.id.is_globl()) {
                const std::string name = info.id.name();
                apk_offset[name] =
                    kApkOffsetScale * channel_params(name, false).sigma * apk_rng.normal();
            } else {
                for (const auto& event : info.hpc_events) {
                    const std::string name = "hpc_" + event;
                    apk_offset[name] =
                        kApkOffsetScale * channel_params(name, true).sigma * apk_rng.normal();
                }
            }
        }

        for (int iteration = 1; iteration <= spec.iterations_per_apk; ++iteration) {
            // GLOBL and the iteration's HPC group are collected in the same run,
            // so they share one foreground runtime.
            Rng run_rng(mix_seed(spec.seed,
                                 hash_str("run/" + apk_id + "/" + std::to_string(iteration))));
            const double runtime_s = draw_runtime(
                run_rng,
                malware ? spec.low_runtime_frac_malware : spec.low_runtime_frac_benign,
                spec.duration_s);

            const int group = (iteration - 1) % kHpcGroupCount + 1;
            for (const ChannelSet& set : {ChannelSet::globl(), ChannelSet::hpc(group)}) {
                TelemetrySession s;
                s.apk_id = apk_id;
                s.label = label;
                s.iteration = iteration;
                s.channel_set = set;
                s.sample_rate_hz = spec.sample_rate_hz;
                s.duration_s = spec.duration_s;
                s.runtime_s = runtime_s;
                s.session_id = apk_id + "_it" + std::to_string(iteration) + "_" + set.name();
                s.channel_names = channel_series_names(set);

                Rng session_rng(mix_seed(spec.seed, hash_str("session/" + s.session_id)));
                const double activity = session_rng.normal();
                for (const auto& name : s.channel_names) {
                    const ChannelId effect_id =
                        set.is_globl()
                            ? ChannelId::globl(static_cast<int>(
                                  parse_long(name.substr(name.find('_') + 1), "channel index")))
                            : ChannelId::hpc(set.hpc_group());
                    const auto& effect = spec.effects.at(effect_id);
                    const double gain = activity_gain(name) * channel_params(name, !set.is_globl()).sigma;
                    s.series.push_back(generate_series(
                        session_rng, channel_params(name, !set.is_globl()), effect, malware,
                        apk_offset.at(name), gain * activity, n_samples, spec.sample_rate_hz,
                        spec.noise_floor));
                }
                s.validate();

                ManifestEntry entry;
                entry.session_id = s.session_id;
                entry.apk_id = apk_id;
                entry.label = label;
                entry.iteration = iteration;
                entry.channel_set = set;
                entry.file_path = "sessions/" + s.session_id + ".json";
                entry.runtime_s = runtime_s;
                out.manifest.entries.push_back(std::move(entry));
                out.sessions.push_back(std::move(s));
            }
        }
    }
    return out;
}

nlohmann::json session_to_json(const TelemetrySession& s) {
    nlohmann::json channels = nlohmann::json::object();
    for (size_t i = 0; i < s.channel_names.size(); ++i) channels[s.channel_names[i]] = s.series[i];
    return nlohmann::json{
        {"session_id", s.session_id},
        {"apk_id", s.apk_id},
        {"label", label_name(s.label)},
        {"iteration", s.iteration},
        {"channel_set", s.channel_set.name()},
        {"sample_rate_hz", s.sample_rate_hz},
        {"runtime_s", s.runtime_s},
        {"duration_s", s.duration_s},
        {"channels", std::move(channels)},
    };
}

DatasetManifest generate_dataset(const PlantSpec& spec, const std::filesystem::path& out_dir) {
    GeneratedDataset data = generate_sessions(spec);
    std::error_code ec;
    std::filesystem::create_directories(out_dir / "sessions", ec);
    if (ec) fail(ErrorCode::IoFailure, "cannot create " + (out_dir / "sessions").string());
    for (const auto& session : data.sessions) {
        const auto path = out_dir / "sessions" / (session.session_id + ".json");
        write_text_file(path, session_to_json(session).dump());
    }
    data.manifest.save(out_dir / "manifest.csv");
    return data.manifest;
}

namespace {

EffectSpec effect_from_json(const nlohmann::json& j) {
    EffectSpec e;
    for (const auto& [key, value] : j.items()) {
        if (key == "mean_shift") e.mean_shift = value.get<double>();
        else if (key == "burst_rate_hz") e.burst_rate_hz = value.get<double>();
        else if (key == "burst_amplitude") e.burst_amplitude = value.get<double>();
        else if (key == "tone_hz") { if (!value.is_null()) e.tone_hz = value.get<double>(); }
        else fail(ErrorCode::InvalidConfig, "unknown effect key '" + key + "'");
    }
    return e;
}

nlohmann::json effect_to_json(const EffectSpec& e) {
    nlohmann::json j{{"mean_shift", e.mean_shift},
                     {"burst_rate_hz", e.burst_rate_hz},
                     {"burst_amplitude", e.burst_amplitude}};
    if (e.tone_hz) j["tone_hz"] = *e.tone_hz;
    return j;
}

ChannelId channel_id_from_name(const std::string& name) {
    for (const auto& info : catalog_channels())
        if (info.id.name() == name) return info.id;
    fail(ErrorCode::InvalidConfig, "unknown channel '" + name + "'");
}

}  // namespace

PlantSpec plant_spec_from_json(const nlohmann::json& j) {
    PlantSpec spec;
    spec.effects = zero_effects();
    for (const auto& [key, value] : j.items()) {
        if (key == "n_benign_apks") spec.n_benign_apks = value.get<int>();
        else if (key == "n_malware_apks") spec.n_malware_apks = value.get<int>();
        else if (key == "iterations_per_apk") spec.iterations_per_apk = value.get<int>();
        else if (key == "duration_s") spec.duration_s = value.get<double>();
        else if (key == "sample_rate_hz") spec.sample_rate_hz = value.get<double>();
        else if (key == "noise_floor") spec.noise_floor = value.get<double>();
        else if (key == "low_runtime_frac_benign") spec.low_runtime_frac_benign = value.get<double>();
        else if (key == "low_runtime_frac_malware") spec.low_runtime_frac_malware = value.get<double>();
        else if (key == "seed") spec.seed = value.get<uint64_t>();
        else if (key == "effects") {
            for (const auto& [channel, effect] : value.items())
                spec.effects[channel_id_from_name(channel)] = effect_from_json(effect);
        } else {
            fail(ErrorCode::InvalidConfig, "unknown plant-spec key '" + key + "'");
        }
    }
    return spec;
}

nlohmann::json plant_spec_to_json(const PlantSpec& spec) {
    nlohmann::json effects = nlohmann::json::object();
    for (const auto& [id, effect] : spec.effects) effects[id.name()] = effect_to_json(effect);
    return nlohmann::json{
        {"n_benign_apks", spec.n_benign_apks},
        {"n_malware_apks", spec.n_malware_apks},
        {"iterations_per_apk", spec.iterations_per_apk},
        {"duration_s", spec.duration_s},
        {"sample_rate_hz", spec.sample_rate_hz},
        {"noise_floor", spec.noise_floor},
        {"low_runtime_frac_benign", spec.low_runtime_frac_benign},
        {"low_runtime_frac_malware", spec.low_runtime_frac_malware},
        {"seed", spec.seed},
        {"effects", std::move(effects)},
    };
}

}  // namespace xmd
