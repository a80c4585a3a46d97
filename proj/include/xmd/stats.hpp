#pragma once

// Welch's t-statistic, the dissimilarity score, and the channel-augmentation
// sweep: concatenate the first k channels' features, PCA back down to
// single-channel dimension, and count features whose |t| clears the threshold.

#include <cstdint>
#include <span>
#include <vector>

#include "xmd/features.hpp"
#include "xmd/telemetry.hpp"

namespace xmd {

inline constexpr double kDsThreshold = 4.5;

struct WelchResult {
    double t = 0.0;  // (mean1 - mean2) / sqrt(var1/n1 + var2/n2), unbiased variances
    size_t n1 = 0;
    size_t n2 = 0;
};

// Both samples degenerate with equal means gives t = 0; zero variance with
// differing means gives +-infinity, which counts as a rejection downstream.
WelchResult welch_t(std::span<const double> sample_a, std::span<const double> sample_b);

// Fraction of entries with |t| strictly above the threshold.
double dissimilarity_score(std::span<const double> t_stats, double threshold = kDsThreshold);

enum class OrderingPolicy { FixedCatalog, Random };

// Aligned per-session GLOBL features: one row per session, one block of
// `dim` features per channel, plus the session labels.
struct GloblFeatureTable {
    size_t dim = 0;  // per-channel feature dimension
    std::vector<ClassLabel> labels;
    // channels[c][row] is the feature vector of GLOBL channel c+1 for session `row`
    std::array<std::vector<std::vector<double>>, kGloblChannelCount> channels;

    size_t n_rows() const { return labels.size(); }
};

GloblFeatureTable build_globl_feature_table(const std::vector<TelemetrySession>& sessions,
                                            const FeatureConfig& cfg);

struct DsSweepPoint {
    int k = 0;
    double ds_mean = 0.0;
    double ds_std = 0.0;  // 0 under the fixed policy
    std::vector<double> per_ordering;
};

struct DissimilarityReport {
    double threshold = kDsThreshold;
    OrderingPolicy policy = OrderingPolicy::FixedCatalog;
    int n_orderings = 1;
    std::vector<DsSweepPoint> points;             // k = 1..15
    std::vector<double> full_stack_tstats;        // per-PCA-feature t at k = 15, catalog order
};

DissimilarityReport ds_channel_sweep(const GloblFeatureTable& table, OrderingPolicy policy,
                                     int n_orderings, uint64_t seed,
                                     double threshold = kDsThreshold);

}  // namespace xmd
