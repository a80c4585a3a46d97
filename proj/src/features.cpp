#include "xmd/features.hpp"

#include <algorithm>
#include <cmath>

#include "xmd/io_util.hpp"

namespace xmd {

void FeatureConfig::validate() const {
    require(stft_window > 0 && (stft_window & (stft_window - 1)) == 0, ErrorCode::InvalidConfig,
            "stft_window must be a power of two");
    require(stft_hop > 0 && stft_hop <= stft_window, ErrorCode::InvalidConfig,
            "stft_hop must be in [1, stft_window]");
    require(log_floor > 0.0, ErrorCode::InvalidConfig, "log_floor must be positive");
}

std::array<double, kTimeStatCount> time_stats(std::span<const double> x) {
    require(!x.empty(), ErrorCode::SeriesTooShort, "time_stats on empty series");
    const double n = static_cast<double>(x.size());

    double sum = 0.0, min_v = x[0], max_v = x[0], sum_sq = 0.0;
    for (double v : x) {
        sum += v;
        sum_sq += v * v;
        min_v = std::min(min_v, v);
        max_v = std::max(max_v, v);
    }
    const double mean = sum / n;
    const double rms = std::sqrt(sum_sq / n);

    double m2 = 0.0, m3 = 0.0, m4 = 0.0;
    for (double v : x) {
        const double d = v - mean;
        m2 += d * d;
        m3 += d * d * d;
        m4 += d * d * d * d;
    }
    const double var_unbiased = x.size() > 1 ? m2 / (n - 1.0) : 0.0;
    const double sd = std::sqrt(var_unbiased);
    const double m2n = m2 / n;

    double skew = 0.0, kurt = 0.0, lag1 = 0.0;
    if (m2n > 0.0) {
        skew = (m3 / n) / std::pow(m2n, 1.5);
        kurt = (m4 / n) / (m2n * m2n) - 3.0;
        double num = 0.0;
        for (size_t t = 0; t + 1 < x.size(); ++t) num += (x[t] - mean) * (x[t + 1] - mean);
        lag1 = num / m2;
    }

    std::vector<double> sorted(x.begin(), x.end());
    std::sort(sorted.begin(), sorted.end());
    const size_t h = sorted.size() / 2;
    const double median =
        sorted.size() % 2 == 1 ? sorted[h] : 0.5 * (sorted[h - 1] + sorted[h]);

    return {mean, sd, min_v, max_v, median, skew, kurt, rms, lag1};
}

namespace {

// Iterative radix-2 FFT, in-place on interleaved re/im pairs.
void fft_radix2(std::vector<double>& re, std::vector<double>& im) {
    const size_t n = re.size();
    for (size_t i = 1, j = 0; i < n; ++i) {  // bit reversal
        size_t bit = n >> 1;
        for (; j & bit; bit >>= 1) j ^= bit;
        j ^= bit;
        if (i < j) {
            std::swap(re[i], re[j]);
            std::swap(im[i], im[j]);
        }
    }
    for (size_t len = 2; len <= n; len <<= 1) {
        const double ang = -6.283185307179586476925286766559 / static_cast<double>(len);
        const double wr = std::cos(ang), wi = std::sin(ang);
        for (size_t i = 0; i < n; i += len) {
            double cr = 1.0, ci = 0.0;
            for (size_t k = 0; k < len / 2; ++k) {
                const size_t a = i + k, b = i + k + len / 2;
                const double tr = re[b] * cr - im[b] * ci;
                const double ti = re[b] * ci + im[b] * cr;
                re[b] = re[a] - tr;
                im[b] = im[a] - ti;
                re[a] += tr;
                im[a] += ti;
                const double ncr = cr * wr - ci * wi;
                ci = cr * wi + ci * wr;
                cr = ncr;
            }
        }
    }
}

std::vector<double> hann_window(int n) {
    std::vector<double> w(static_cast<size_t>(n));
    for (int i = 0; i < n; ++i)
        w[static_cast<size_t>(i)] =
            0.5 * (1.0 - std::cos(6.283185307179586 * static_cast<double>(i) / n));
    return w;
}

}  // namespace

std::vector<double> avg_log_spectrogram(std::span<const double> samples, const FeatureConfig& cfg) {
    cfg.validate();
    const int w = cfg.stft_window;
    require(samples.size() >= static_cast<size_t>(w), ErrorCode::SeriesTooShort,
            "series length " + std::to_string(samples.size()) + " < stft_window " +
                std::to_string(w));

    double mean = 0.0;
    for (double v : samples) mean += v;
    mean /= static_cast<double>(samples.size());

    const auto window = hann_window(w);
    const size_t bins = static_cast<size_t>(w / 2 + 1);
    std::vector<double> acc(bins, 0.0);
    size_t frames = 0;

    std::vector<double> re(static_cast<size_t>(w)), im(static_cast<size_t>(w));
    for (size_t start = 0; start + static_cast<size_t>(w) <= samples.size();
         start += static_cast<size_t>(cfg.stft_hop)) {
        for (int i = 0; i < w; ++i) {
            re[static_cast<size_t>(i)] =
                (samples[start + static_cast<size_t>(i)] - mean) * window[static_cast<size_t>(i)];
            im[static_cast<size_t>(i)] = 0.0;
        }
        fft_radix2(re, im);
        for (size_t k = 0; k < bins; ++k) {
            const double mag = std::sqrt(re[k] * re[k] + im[k] * im[k]);
            acc[k] += std::log(std::max(mag, cfg.log_floor));
        }
        ++frames;
    }
    for (double& v : acc) v /= static_cast<double>(frames);
    return acc;
}

std::vector<double> featurize_globl_series(std::span<const double> samples, double /*rate_hz*/,
                                           const FeatureConfig& cfg) {
    std::vector<double> out = avg_log_spectrogram(samples, cfg);
    const auto stats = time_stats(samples);
    out.insert(out.end(), stats.begin(), stats.end());
    return out;
}

std::vector<double> featurize_hpc_series(std::span<const double> e0, std::span<const double> e1,
                                         std::span<const double> e2, const FeatureConfig& cfg) {
    cfg.validate();
    require(e0.size() == e1.size() && e1.size() == e2.size(), ErrorCode::LengthMismatch,
            "HPC event series lengths differ");
    require(e0.size() >= 4, ErrorCode::SeriesTooShort,
            "HPC series length " + std::to_string(e0.size()) + " < 4");

    std::vector<double> out;
    out.reserve(FeatureConfig::hpc_dim());
    for (const auto& series : {e0, e1, e2}) {
        if (cfg.hpc_first_difference) {
            std::vector<double> diff(series.size() - 1);
            for (size_t i = 0; i + 1 < series.size(); ++i) diff[i] = series[i + 1] - series[i];
            const auto stats = time_stats(diff);
            out.insert(out.end(), stats.begin(), stats.end());
        } else {
            const auto stats = time_stats(series);
            out.insert(out.end(), stats.begin(), stats.end());
        }
    }
    return out;
}

FeatureVector featurize_channel(const TelemetrySession& session, ChannelId channel,
                                const FeatureConfig& cfg) {
    FeatureVector fv;
    fv.channel = channel;
    fv.session_id = session.session_id;
    fv.truncation_s = session.duration_s;
    if (channel.is_globl()) {
        require(session.channel_set.is_globl(), ErrorCode::UnknownChannelName,
                session.session_id + " is not a GLOBL session");
        fv.values = featurize_globl_series(session.series_for(channel.name()),
                                           session.sample_rate_hz, cfg);
    } else {
        require(!session.channel_set.is_globl() && session.channel_set.hpc_group() == channel.index,
                ErrorCode::UnknownChannelName,
                session.session_id + " does not carry HPC group " + std::to_string(channel.index));
        const auto names = channel_series_names(session.channel_set);
        fv.values = featurize_hpc_series(session.series_for(names[0]), session.series_for(names[1]),
                                         session.series_for(names[2]), cfg);
    }
    return fv;
}

PcaModel fit_pca_from_moments(const std::vector<double>& mean, const Matrix& covariance, int k) {
    const size_t dim = mean.size();
    require(covariance.rows == dim && covariance.cols == dim, ErrorCode::DimensionMismatch,
            "covariance shape does not match mean");
    require(k >= 1, ErrorCode::InvalidConfig, "k must be >= 1");

    const SymEig eig = sym_eig(covariance);

    // Usable rank: eigenvalues above a relative floor. A request beyond it is
    // downgraded and flagged rather than rejected.
    const double top = std::max(eig.values.empty() ? 0.0 : eig.values.front(), 0.0);
    const double floor = std::max(top * 1e-12, 1e-300);
    int usable = 0;
    for (double v : eig.values)
        if (v > floor) ++usable;

    PcaModel model;
    model.requested_k = k;
    int effective = std::min<int>(k, static_cast<int>(dim));
    if (usable > 0 && effective > usable) {
        effective = usable;
        model.rank_limited = true;
    }
    model.mean = mean;
    for (int i = 0; i < effective; ++i) {
        model.components.push_back(eig.vectors[static_cast<size_t>(i)]);
        model.explained_variance.push_back(std::max(eig.values[static_cast<size_t>(i)], 0.0));
    }
    return model;
}

PcaModel fit_pca(const std::vector<std::vector<double>>& samples, int k) {
    require(samples.size() >= 2, ErrorCode::TooFewSamples, "PCA needs at least 2 samples");
    const size_t dim = samples.front().size();
    require(dim >= 1, ErrorCode::DimensionMismatch, "PCA on zero-dimensional samples");
    for (const auto& row : samples)
        require(row.size() == dim, ErrorCode::DimensionMismatch, "ragged PCA input");
    require(k >= 1 && static_cast<size_t>(k) <= std::min(samples.size() - 1, dim),
            ErrorCode::InvalidConfig, "k must satisfy 1 <= k <= min(n-1, dim)");

    const double n = static_cast<double>(samples.size());
    std::vector<double> mean(dim, 0.0);
    for (const auto& row : samples)
        for (size_t j = 0; j < dim; ++j) mean[j] += row[j];
    for (double& v : mean) v /= n;

    Matrix cov(dim, dim);
    for (const auto& row : samples) {
        for (size_t i = 0; i < dim; ++i) {
            const double di = row[i] - mean[i];
            for (size_t j = i; j < dim; ++j) cov.at(i, j) += di * (row[j] - mean[j]);
        }
    }
    for (size_t i = 0; i < dim; ++i)
        for (size_t j = i; j < dim; ++j) {
            cov.at(i, j) /= (n - 1.0);
            cov.at(j, i) = cov.at(i, j);
        }
    return fit_pca_from_moments(mean, cov, k);
}

std::vector<double> pca_project(const PcaModel& model, std::span<const double> x) {
    require(x.size() == model.dim(), ErrorCode::DimensionMismatch,
            "PCA projection dimension mismatch");
    std::vector<double> out(static_cast<size_t>(model.k()), 0.0);
    for (size_t r = 0; r < out.size(); ++r) {
        double acc = 0.0;
        const auto& comp = model.components[r];
        for (size_t j = 0; j < x.size(); ++j) acc += comp[j] * (x[j] - model.mean[j]);
        out[r] = acc;
    }
    return out;
}

}  // namespace xmd
