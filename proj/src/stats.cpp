#include "xmd/stats.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <numeric>

#include "xmd/rng.hpp"

namespace xmd {

namespace {

double welch_from_moments(double mean1, double var1, double n1, double mean2, double var2,
                          double n2) {
    const double denom_sq = var1 / n1 + var2 / n2;
    if (denom_sq <= 0.0) {
        if (mean1 == mean2) return 0.0;  // both degenerate, equal means
        return mean1 > mean2 ? std::numeric_limits<double>::infinity()
                             : -std::numeric_limits<double>::infinity();
    }
    return (mean1 - mean2) / std::sqrt(denom_sq);
}

}  // namespace

WelchResult welch_t(std::span<const double> a, std::span<const double> b) {
    require(a.size() >= 2 && b.size() >= 2, ErrorCode::TooFewSamples,
            "Welch t needs at least 2 samples per side, got " + std::to_string(a.size()) + " and " +
                std::to_string(b.size()));
    const auto moments = [](std::span<const double> x) {
        double mean = 0.0;
        for (double v : x) mean += v;
        mean /= static_cast<double>(x.size());
        double ss = 0.0;
        for (double v : x) ss += (v - mean) * (v - mean);
        return std::pair<double, double>{mean, ss / (static_cast<double>(x.size()) - 1.0)};
    };
    const auto [m1, v1] = moments(a);
    const auto [m2, v2] = moments(b);
    return WelchResult{welch_from_moments(m1, v1, static_cast<double>(a.size()), m2, v2,
                                          static_cast<double>(b.size())),
                       a.size(), b.size()};
}

double dissimilarity_score(std::span<const double> t_stats, double threshold) {
    require(!t_stats.empty(), ErrorCode::EmptyFeatureSet, "no t-statistics given");
    size_t rejected = 0;
    for (double t : t_stats)
        if (std::fabs(t) > threshold) ++rejected;
    return static_cast<double>(rejected) / static_cast<double>(t_stats.size());
}

GloblFeatureTable build_globl_feature_table(const std::vector<TelemetrySession>& sessions,
                                            const FeatureConfig& cfg) {
    GloblFeatureTable table;
    table.dim = static_cast<size_t>(cfg.globl_dim());
    for (const auto& session : sessions) {
        if (!session.channel_set.is_globl()) continue;
        table.labels.push_back(session.label);
        for (int c = 1; c <= kGloblChannelCount; ++c) {
            table.channels[static_cast<size_t>(c - 1)].push_back(
                featurize_channel(session, ChannelId::globl(c), cfg).values);
        }
    }
    return table;
}

namespace {

struct ClassMoments {
    double n_benign = 0;
    double n_malware = 0;
    std::vector<double> mean_benign, mean_malware, mean_pooled;
    Matrix cov_benign, cov_malware, cov_pooled;  // unbiased
};

// One pass over the full 15-channel stack; every (ordering, k) combination is
// a principal submatrix of these moments, so nothing else rescans the rows.
ClassMoments compute_moments(const GloblFeatureTable& table) {
    const size_t full_dim = table.dim * kGloblChannelCount;
    const size_t n = table.n_rows();

    ClassMoments m;
    m.mean_benign.assign(full_dim, 0.0);
    m.mean_malware.assign(full_dim, 0.0);
    m.mean_pooled.assign(full_dim, 0.0);
    m.cov_benign = Matrix(full_dim, full_dim);
    m.cov_malware = Matrix(full_dim, full_dim);
    m.cov_pooled = Matrix(full_dim, full_dim);

    std::vector<double> row(full_dim);
    const auto fill_row = [&](size_t r) {
        for (int c = 0; c < kGloblChannelCount; ++c) {
            const auto& values = table.channels[static_cast<size_t>(c)][r];
            std::copy(values.begin(), values.end(),
                      row.begin() + static_cast<long>(static_cast<size_t>(c) * table.dim));
        }
    };

    for (size_t r = 0; r < n; ++r) {
        fill_row(r);
        auto& mean = table.labels[r] == ClassLabel::Malware ? m.mean_malware : m.mean_benign;
        (table.labels[r] == ClassLabel::Malware ? m.n_malware : m.n_benign) += 1.0;
        for (size_t j = 0; j < full_dim; ++j) mean[j] += row[j];
    }
    require(m.n_benign >= 2 && m.n_malware >= 2, ErrorCode::TooFewSamples,
            "dissimilarity sweep needs at least 2 sessions per class");
    for (size_t j = 0; j < full_dim; ++j) {
        m.mean_pooled[j] = (m.mean_benign[j] + m.mean_malware[j]) / static_cast<double>(n);
        m.mean_benign[j] /= m.n_benign;
        m.mean_malware[j] /= m.n_malware;
    }

    std::vector<double> centered(full_dim);
    for (size_t r = 0; r < n; ++r) {
        fill_row(r);
        const bool malware = table.labels[r] == ClassLabel::Malware;
        const auto& mean = malware ? m.mean_malware : m.mean_benign;
        Matrix& cov = malware ? m.cov_malware : m.cov_benign;
        for (size_t j = 0; j < full_dim; ++j) centered[j] = row[j] - mean[j];
        for (size_t i = 0; i < full_dim; ++i) {
            const double ci = centered[i];
            double* cov_row = &cov.data[i * full_dim];
            for (size_t j = i; j < full_dim; ++j) cov_row[j] += ci * centered[j];
        }
    }

    // Pooled covariance from the within-class scatter plus the between-class term.
    for (size_t i = 0; i < full_dim; ++i) {
        const double db_i = m.mean_benign[i] - m.mean_pooled[i];
        const double dm_i = m.mean_malware[i] - m.mean_pooled[i];
        for (size_t j = i; j < full_dim; ++j) {
            const double within = m.cov_benign.at(i, j) + m.cov_malware.at(i, j);
            const double between = m.n_benign * db_i * (m.mean_benign[j] - m.mean_pooled[j]) +
                                   m.n_malware * dm_i * (m.mean_malware[j] - m.mean_pooled[j]);
            const double pooled = (within + between) / (static_cast<double>(n) - 1.0);
            m.cov_pooled.at(i, j) = pooled;
            m.cov_pooled.at(j, i) = pooled;
            m.cov_benign.at(i, j) /= (m.n_benign - 1.0);
            m.cov_benign.at(j, i) = m.cov_benign.at(i, j);
            m.cov_malware.at(i, j) /= (m.n_malware - 1.0);
            m.cov_malware.at(j, i) = m.cov_malware.at(i, j);
        }
    }
    return m;
}

std::vector<size_t> selected_indices(const std::vector<int>& ordering, int k, size_t dim) {
    std::vector<size_t> idx;
    idx.reserve(static_cast<size_t>(k) * dim);
    for (int c = 0; c < k; ++c)
        for (size_t j = 0; j < dim; ++j)
            idx.push_back(static_cast<size_t>(ordering[static_cast<size_t>(c)]) * dim + j);
    return idx;
}

// DS of the first k channels of `ordering`: PCA (pooled moments, single-channel
// dimension) then per-component Welch t across classes. Returns the t-stats.
std::vector<double> sweep_tstats(const ClassMoments& m, const std::vector<int>& ordering, int k,
                                 size_t dim) {
    const auto idx = selected_indices(ordering, k, dim);
    const size_t sub = idx.size();

    std::vector<double> mean_sub(sub);
    Matrix cov_sub(sub, sub);
    for (size_t i = 0; i < sub; ++i) {
        mean_sub[i] = m.mean_pooled[idx[i]];
        for (size_t j = 0; j < sub; ++j) cov_sub.at(i, j) = m.cov_pooled.at(idx[i], idx[j]);
    }
    const PcaModel pca = fit_pca_from_moments(mean_sub, cov_sub, static_cast<int>(dim));

    std::vector<double> t_stats;
    t_stats.reserve(static_cast<size_t>(pca.k()));
    for (const auto& comp : pca.components) {
        double mean_b = 0.0, mean_m = 0.0, var_b = 0.0, var_m = 0.0;
        std::vector<double> cov_b_v(sub, 0.0), cov_m_v(sub, 0.0);
        for (size_t i = 0; i < sub; ++i) {
            mean_b += comp[i] * (m.mean_benign[idx[i]] - mean_sub[i]);
            mean_m += comp[i] * (m.mean_malware[idx[i]] - mean_sub[i]);
            for (size_t j = 0; j < sub; ++j) {
                cov_b_v[i] += m.cov_benign.at(idx[i], idx[j]) * comp[j];
                cov_m_v[i] += m.cov_malware.at(idx[i], idx[j]) * comp[j];
            }
        }
        for (size_t i = 0; i < sub; ++i) {
            var_b += comp[i] * cov_b_v[i];
            var_m += comp[i] * cov_m_v[i];
        }
        t_stats.push_back(welch_from_moments(mean_b, std::max(var_b, 0.0), m.n_benign, mean_m,
                                             std::max(var_m, 0.0), m.n_malware));
    }
    return t_stats;
}

}  // namespace

DissimilarityReport ds_channel_sweep(const GloblFeatureTable& table, OrderingPolicy policy,
                                     int n_orderings, uint64_t seed, double threshold) {
    require(table.n_rows() >= 4, ErrorCode::TooFewSamples, "too few sessions for the sweep");
    require(n_orderings >= 1, ErrorCode::InvalidConfig, "n_orderings must be >= 1");

    const ClassMoments moments = compute_moments(table);

    std::vector<std::vector<int>> orderings;
    std::vector<int> identity(kGloblChannelCount);
    std::iota(identity.begin(), identity.end(), 0);
    if (policy == OrderingPolicy::FixedCatalog) {
        orderings.push_back(identity);
    } else {
        for (int o = 0; o < n_orderings; ++o) {
            auto perm = identity;
            Rng rng(mix_seed(seed, static_cast<uint64_t>(o)));
            rng.shuffle(perm);
            orderings.push_back(std::move(perm));
        }
    }

    DissimilarityReport report;
    report.threshold = threshold;
    report.policy = policy;
    report.n_orderings = static_cast<int>(orderings.size());

    for (int k = 1; k <= kGloblChannelCount; ++k) {
        DsSweepPoint point;
        point.k = k;
        for (const auto& ordering : orderings) {
            const auto t_stats = sweep_tstats(moments, ordering, k, table.dim);
            point.per_ordering.push_back(dissimilarity_score(t_stats, threshold));
        }
        const double n = static_cast<double>(point.per_ordering.size());
        point.ds_mean =
            std::accumulate(point.per_ordering.begin(), point.per_ordering.end(), 0.0) / n;
        double ss = 0.0;
        for (double v : point.per_ordering) ss += (v - point.ds_mean) * (v - point.ds_mean);
        point.ds_std = std::sqrt(ss / n);
        report.points.push_back(std::move(point));
    }

    report.full_stack_tstats = sweep_tstats(moments, identity, kGloblChannelCount, table.dim);
    return report;
}

}  // namespace xmd
