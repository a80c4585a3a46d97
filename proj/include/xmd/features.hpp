#pragma once

// Feature engineering: the GLOBL spectrogram pipeline, the HPC
// summary-statistics pipeline, and PCA.

#include <array>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "xmd/linalg.hpp"
#include "xmd/telemetry.hpp"

namespace xmd {

inline constexpr int kTimeStatCount = 9;

struct FeatureConfig {
    int stft_window = 32;  // power of two
    int stft_hop = 16;     // <= stft_window
    double log_floor = 1e-12;
    // Real counters are cumulative and need differencing; the synthetic
    // generator emits rates, so this defaults off.
    bool hpc_first_difference = false;

    int globl_dim() const { return stft_window / 2 + 1 + kTimeStatCount; }
    static constexpr int hpc_dim() { return kHpcEventsPerGroup * kTimeStatCount; }
    void validate() const;
};

struct FeatureVector {
    ChannelId channel;
    std::string session_id;
    double truncation_s = 0.0;  // 0 = full window
    std::vector<double> values;
};

// mean, std, min, max, median, skewness, kurtosis (excess), rms, lag-1
// autocorrelation. Skewness / kurtosis / lag-1 of a zero-variance series are 0.
std::array<double, kTimeStatCount> time_stats(std::span<const double> samples);

// Per-frame Hann STFT of the mean-subtracted series, log magnitude (floored),
// averaged over frames: stft_window/2 + 1 values.
std::vector<double> avg_log_spectrogram(std::span<const double> samples, const FeatureConfig& cfg);

// Spectrogram bins of the mean-subtracted series followed by the 9 time stats
// of the raw series. Dimension = stft_window/2 + 10.
std::vector<double> featurize_globl_series(std::span<const double> samples, double rate_hz,
                                           const FeatureConfig& cfg);

// Per event: optional first difference, then the 9 time stats; 27 values.
std::vector<double> featurize_hpc_series(std::span<const double> e0, std::span<const double> e1,
                                         std::span<const double> e2, const FeatureConfig& cfg);

// Session-level entry point; channel selects the GLOBL series or the HPC group.
FeatureVector featurize_channel(const TelemetrySession& session, ChannelId channel,
                                const FeatureConfig& cfg);

struct PcaModel {
    std::vector<double> mean;
    std::vector<std::vector<double>> components;  // k rows, orthonormal
    std::vector<double> explained_variance;       // non-increasing
    int requested_k = 0;
    bool rank_limited = false;  // requested k exceeded the usable rank and was downgraded

    size_t dim() const { return mean.size(); }
    int k() const { return static_cast<int>(components.size()); }
};

PcaModel fit_pca(const std::vector<std::vector<double>>& samples, int k);
// Same model from precomputed first/second moments (covariance with n-1).
PcaModel fit_pca_from_moments(const std::vector<double>& mean, const Matrix& covariance, int k);
std::vector<double> pca_project(const PcaModel& model, std::span<const double> x);

}  // namespace xmd
