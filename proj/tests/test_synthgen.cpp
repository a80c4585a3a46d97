#include <doctest.h>

#include <cmath>
#include <filesystem>
#include <map>
#include <set>

#include <nlohmann/json.hpp>

#include "oracles.hpp"
#include "xmd/features.hpp"
#include "xmd/io_util.hpp"
#include "xmd/stats.hpp"
#include "xmd/synthgen.hpp"

using namespace xmd;

namespace {

PlantSpec base_spec(uint64_t seed, int apks = 10) {
    PlantSpec spec;
    spec.n_benign_apks = apks;
    spec.n_malware_apks = apks;
    spec.iterations_per_apk = 8;
    spec.duration_s = 20.0;
    spec.effects = zero_effects();
    spec.seed = seed;
    return spec;
}

// Welch |t| of the per-session mean of one GLOBL channel across classes.
double channel_mean_abs_t(const GeneratedDataset& data, int channel) {
    std::vector<double> benign, malware;
    const std::string name = "globl_" + std::to_string(channel);
    for (const auto& s : data.sessions) {
        if (!s.channel_set.is_globl()) continue;
        const auto& x = s.series_for(name);
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= static_cast<double>(x.size());
        (s.label == ClassLabel::Malware ? malware : benign).push_back(mean);
    }
    return std::fabs(welch_t(benign, malware).t);
}

}  // namespace

TEST_CASE("generate_sessions: collection shape") {
    const auto data = generate_sessions(base_spec(1, 6));
    // per apk: 8 globl + 8 hpc sessions, 2 per group
    CHECK(data.sessions.size() == 12u * 16u);
    CHECK(data.manifest.entries.size() == data.sessions.size());

    std::map<std::string, std::map<std::string, int>> per_apk;
    for (const auto& s : data.sessions) per_apk[s.apk_id][s.channel_set.name()]++;
    REQUIRE(per_apk.size() == 12);
    for (const auto& [apk, counts] : per_apk) {
        CHECK(counts.at("globl") == 8);
        for (int g = 1; g <= 4; ++g) CHECK(counts.at("hpc" + std::to_string(g)) == 2);
    }

    // session invariants hold and runtime is shared within one run
    std::map<std::pair<std::string, int>, std::set<double>> runtimes;
    for (const auto& s : data.sessions) {
        s.validate();
        runtimes[{s.apk_id, s.iteration}].insert(s.runtime_s);
    }
    for (const auto& [run, values] : runtimes) CHECK(values.size() == 1);
}

TEST_CASE("generate_dataset: deterministic byte-identical output") {
    const auto dir_a = std::filesystem::temp_directory_path() / "xmd_synth_a";
    const auto dir_b = std::filesystem::temp_directory_path() / "xmd_synth_b";
    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);

    const auto spec = base_spec(42, 3);
    (void)generate_dataset(spec, dir_a);
    (void)generate_dataset(spec, dir_b);

    CHECK(read_text_file(dir_a / "manifest.csv") == read_text_file(dir_b / "manifest.csv"));
    const auto manifest = DatasetManifest::load(dir_a / "manifest.csv");
    for (const auto& entry : manifest.entries) {
        CHECK(read_text_file(dir_a / entry.file_path) == read_text_file(dir_b / entry.file_path));
    }

    // a different seed changes the bytes
    auto other = spec;
    other.seed = 43;
    std::filesystem::remove_all(dir_b);
    (void)generate_dataset(other, dir_b);
    CHECK(read_text_file(dir_a / manifest.entries[0].file_path) !=
          read_text_file(dir_b / manifest.entries[0].file_path));

    std::filesystem::remove_all(dir_a);
    std::filesystem::remove_all(dir_b);
}

TEST_CASE("zero effects: per-channel distributions match across labels (KS)") {
    // One session per APK per channel set keeps the 200-vs-200 KS samples
    // independent (iterations of one APK share its baseline offset).
    auto spec = base_spec(7, 200);
    spec.iterations_per_apk = 4;  // iteration k carries HPC group k
    const auto data = generate_sessions(spec);

    for (int channel : {1, 5, 12, 15}) {
        std::vector<double> benign, malware;
        const std::string name = "globl_" + std::to_string(channel);
        for (const auto& s : data.sessions) {
            if (!s.channel_set.is_globl() || s.iteration != 1) continue;
            const auto& x = s.series_for(name);
            double mean = 0.0;
            for (double v : x) mean += v;
            (s.label == ClassLabel::Malware ? malware : benign)
                .push_back(mean / static_cast<double>(x.size()));
        }
        REQUIRE(benign.size() == 200);
        REQUIRE(malware.size() == 200);
        CHECK(oracles::ks_two_sample_p(benign, malware) > 0.01);
    }
    // HPC channels too: each APK contributes exactly one session per group.
    for (int group : {1, 3}) {
        std::vector<double> benign, malware;
        for (const auto& s : data.sessions) {
            if (s.channel_set.is_globl() || s.channel_set.hpc_group() != group) continue;
            const auto& x = s.series[0];
            double mean = 0.0;
            for (double v : x) mean += v;
            (s.label == ClassLabel::Malware ? malware : benign)
                .push_back(mean / static_cast<double>(x.size()));
        }
        REQUIRE(benign.size() == 200);
        CHECK(oracles::ks_two_sample_p(benign, malware) > 0.01);
    }
}

TEST_CASE("mean_shift monotonicity: larger shift never lowers downstream |t|") {
    double previous = -1.0;
    for (double shift : {0.0, 0.6, 2.0}) {
        auto spec = base_spec(9, 20);
        spec.effects[ChannelId::globl(4)].mean_shift = shift;
        const auto data = generate_sessions(spec);
        const double t = channel_mean_abs_t(data, 4);
        CHECK(t >= previous - 1e-9);
        previous = t;
    }
}

TEST_CASE("bursts and tones move session statistics") {
    auto spec = base_spec(12, 12);
    spec.effects[ChannelId::globl(12)].burst_rate_hz = 0.4;
    spec.effects[ChannelId::globl(12)].burst_amplitude = 3.0;
    spec.effects[ChannelId::globl(14)].burst_amplitude = 1.0;
    spec.effects[ChannelId::globl(14)].tone_hz = 1.5;
    const auto data = generate_sessions(spec);

    // Bursts raise the malware-class mean and std on the burst channel.
    CHECK(channel_mean_abs_t(data, 12) > 4.0);
    // The tone raises variance, not the mean: compare stds.
    std::vector<double> benign_sd, malware_sd;
    for (const auto& s : data.sessions) {
        if (!s.channel_set.is_globl()) continue;
        const auto stats = time_stats(s.series_for("globl_14"));
        (s.label == ClassLabel::Malware ? malware_sd : benign_sd).push_back(stats[1]);
    }
    CHECK(std::fabs(welch_t(benign_sd, malware_sd).t) > 4.0);
}

TEST_CASE("runtime mix: malware activation below benign activation") {
    auto spec = base_spec(3, 30);
    spec.low_runtime_frac_benign = 0.10;
    spec.low_runtime_frac_malware = 0.35;
    const auto data = generate_sessions(spec);
    std::map<ClassLabel, std::pair<int, int>> counts;  // label -> (kept, total)
    for (const auto& s : data.sessions) {
        auto& [kept, total] = counts[s.label];
        ++total;
        if (s.runtime_s >= 15.0) ++kept;
    }
    const auto [bk, bt] = counts[ClassLabel::Benign];
    const auto [mk, mt] = counts[ClassLabel::Malware];
    CHECK(static_cast<double>(mk) / mt < static_cast<double>(bk) / bt);
    for (const auto& s : data.sessions) CHECK(s.runtime_s <= s.duration_s);
}

TEST_CASE("default paper-shaped spec") {
    const auto spec = default_paper_shaped_spec(5);
    CHECK(spec.iterations_per_apk == 8);
    CHECK(spec.duration_s == 40.0);
    CHECK(spec.n_benign_apks == 120);
    CHECK(spec.n_malware_apks == 120);
    CHECK(spec.low_runtime_frac_malware > spec.low_runtime_frac_benign);
    CHECK_NOTHROW(spec.validate());
    // effects are spread: several informative channels, network strongest
    int informative = 0;
    for (const auto& [id, effect] : spec.effects) {
        if (effect.mean_shift > 0.0 || effect.burst_rate_hz > 0.0 || effect.tone_hz) ++informative;
    }
    CHECK(informative >= 10);
    CHECK(spec.effects.at(ChannelId::globl(12)).burst_rate_hz > 0.0);
    CHECK(spec.effects.at(ChannelId::globl(13)).burst_rate_hz > 0.0);
}

TEST_CASE("invalid specs are rejected") {
    auto spec = base_spec(1);
    spec.n_benign_apks = 0;
    CHECK_THROWS_AS(spec.validate(), Error);

    spec = base_spec(1);
    spec.effects.erase(ChannelId::globl(7));
    CHECK_THROWS_AS(spec.validate(), Error);

    spec = base_spec(1);
    spec.effects[ChannelId::globl(1)].burst_rate_hz = 6.0;  // >= rate/2
    CHECK_THROWS_AS(spec.validate(), Error);

    spec = base_spec(1);
    spec.effects[ChannelId::globl(1)].tone_hz = 5.0;  // >= Nyquist
    CHECK_THROWS_AS(spec.validate(), Error);
}

TEST_CASE("plant spec json round trip, unknown keys rejected") {
    const auto spec = default_paper_shaped_spec(17);
    const auto parsed = plant_spec_from_json(plant_spec_to_json(spec));
    CHECK(parsed.n_benign_apks == spec.n_benign_apks);
    CHECK(parsed.seed == spec.seed);
    CHECK(parsed.effects.at(ChannelId::globl(12)).burst_amplitude ==
          spec.effects.at(ChannelId::globl(12)).burst_amplitude);
    CHECK(parsed.effects.at(ChannelId::globl(14)).tone_hz ==
          spec.effects.at(ChannelId::globl(14)).tone_hz);

    auto doc = plant_spec_to_json(spec);
    doc["surprise_key"] = 1;
    CHECK_THROWS_AS((void)plant_spec_from_json(doc), Error);
}
