#pragma once

// Test-only oracles, written independently of the library code paths they
// check: naive DFT, Mann-Whitney AUC, Kolmogorov-Smirnov, exact 2-D hull area,
// a memorizing decision tree, Spearman rank correlation, and a label-free
// prediction null for F1.

#include <algorithm>
#include <cmath>
#include <complex>
#include <map>
#include <numeric>
#include <vector>

#include "xmd/rng.hpp"
#include "xmd/telemetry.hpp"

namespace oracles {

// Magnitudes of the DFT of one windowed frame, by direct complex sum.
inline std::vector<double> naive_dft_magnitudes(const std::vector<double>& frame) {
    const size_t n = frame.size();
    std::vector<double> mags(n / 2 + 1);
    for (size_t k = 0; k < mags.size(); ++k) {
        std::complex<double> acc(0.0, 0.0);
        for (size_t t = 0; t < n; ++t) {
            const double ang = -2.0 * M_PI * static_cast<double>(k) * static_cast<double>(t) /
                               static_cast<double>(n);
            acc += frame[t] * std::complex<double>(std::cos(ang), std::sin(ang));
        }
        mags[k] = std::abs(acc);
    }
    return mags;
}

// AUC as the normalized Mann-Whitney U statistic with midranks for ties.
inline double mann_whitney_auc(const std::vector<double>& scores,
                               const std::vector<xmd::ClassLabel>& labels) {
    const size_t n = scores.size();
    std::vector<size_t> order(n);
    std::iota(order.begin(), order.end(), size_t{0});
    std::sort(order.begin(), order.end(),
              [&](size_t a, size_t b) { return scores[a] < scores[b]; });

    std::vector<double> ranks(n);
    size_t i = 0;
    while (i < n) {
        size_t j = i;
        while (j < n && scores[order[j]] == scores[order[i]]) ++j;
        const double midrank = 0.5 * static_cast<double>(i + 1 + j);  // average of ranks i+1..j
        for (size_t t = i; t < j; ++t) ranks[order[t]] = midrank;
        i = j;
    }
    double rank_sum_pos = 0.0;
    size_t n_pos = 0;
    for (size_t t = 0; t < n; ++t) {
        if (labels[t] == xmd::ClassLabel::Malware) {
            rank_sum_pos += ranks[t];
            ++n_pos;
        }
    }
    const size_t n_neg = n - n_pos;
    const double u = rank_sum_pos - static_cast<double>(n_pos) * (static_cast<double>(n_pos) + 1.0) / 2.0;
    return u / (static_cast<double>(n_pos) * static_cast<double>(n_neg));
}

// Two-sample Kolmogorov-Smirnov p-value (asymptotic).
inline double ks_two_sample_p(std::vector<double> a, std::vector<double> b) {
    std::sort(a.begin(), a.end());
    std::sort(b.begin(), b.end());
    double d = 0.0;
    size_t i = 0, j = 0;
    while (i < a.size() && j < b.size()) {
        const double x = std::min(a[i], b[j]);
        while (i < a.size() && a[i] <= x) ++i;
        while (j < b.size() && b[j] <= x) ++j;
        d = std::max(d, std::fabs(static_cast<double>(i) / static_cast<double>(a.size()) -
                                  static_cast<double>(j) / static_cast<double>(b.size())));
    }
    const double ne = static_cast<double>(a.size()) * static_cast<double>(b.size()) /
                      static_cast<double>(a.size() + b.size());
    const double lambda = (std::sqrt(ne) + 0.12 + 0.11 / std::sqrt(ne)) * d;
    double p = 0.0;
    for (int k = 1; k <= 100; ++k)
        p += 2.0 * (k % 2 == 1 ? 1.0 : -1.0) * std::exp(-2.0 * k * k * lambda * lambda);
    return std::clamp(p, 0.0, 1.0);
}

// Exact area of the convex hull of 2-D points: monotone chain + shoelace.
inline double hull_area_2d(std::vector<std::vector<double>> pts) {
    std::sort(pts.begin(), pts.end());
    pts.erase(std::unique(pts.begin(), pts.end()), pts.end());
    const size_t n = pts.size();
    if (n < 3) return 0.0;
    const auto cross = [](const std::vector<double>& o, const std::vector<double>& a,
                          const std::vector<double>& b) {
        return (a[0] - o[0]) * (b[1] - o[1]) - (a[1] - o[1]) * (b[0] - o[0]);
    };
    std::vector<std::vector<double>> hull(2 * n);
    size_t k = 0;
    for (size_t p = 0; p < n; ++p) {
        while (k >= 2 && cross(hull[k - 2], hull[k - 1], pts[p]) <= 0) --k;
        hull[k++] = pts[p];
    }
    for (size_t p = n - 1, lower = k + 1; p-- > 0;) {
        while (k >= lower && cross(hull[k - 2], hull[k - 1], pts[p]) <= 0) --k;
        hull[k++] = pts[p];
    }
    hull.resize(k - 1);
    double area = 0.0;
    for (size_t p = 0; p < hull.size(); ++p) {
        const auto& u = hull[p];
        const auto& v = hull[(p + 1) % hull.size()];
        area += u[0] * v[1] - v[0] * u[1];
    }
    return 0.5 * std::fabs(area);
}

// Unlimited-depth greedy tree, no bagging, no feature subsampling: memorizes
// any training set without duplicate-feature label conflicts.
class ExhaustiveTree {
public:
    void fit(const std::vector<std::vector<double>>& x, const std::vector<xmd::ClassLabel>& y) {
        std::vector<size_t> rows(x.size());
        std::iota(rows.begin(), rows.end(), size_t{0});
        root_ = build(x, y, rows);
    }

    xmd::ClassLabel predict(const std::vector<double>& v) const {
        size_t idx = 0;
        for (;;) {
            const Node& node = nodes_[idx];
            if (node.feature < 0)
                return node.malware >= node.benign ? xmd::ClassLabel::Malware
                                                   : xmd::ClassLabel::Benign;
            idx = v[static_cast<size_t>(node.feature)] < node.threshold
                      ? static_cast<size_t>(node.left)
                      : static_cast<size_t>(node.right);
        }
    }

private:
    struct Node {
        int feature = -1;
        double threshold = 0.0;
        int left = -1, right = -1;
        long benign = 0, malware = 0;
    };

    size_t build(const std::vector<std::vector<double>>& x, const std::vector<xmd::ClassLabel>& y,
                 const std::vector<size_t>& rows) {
        const size_t idx = nodes_.size();
        nodes_.emplace_back();
        long benign = 0, malware = 0;
        for (size_t r : rows) (y[r] == xmd::ClassLabel::Malware ? malware : benign)++;
        nodes_[idx].benign = benign;
        nodes_[idx].malware = malware;
        if (benign == 0 || malware == 0) return idx;

        const size_t dim = x.front().size();
        double best_gini = 1e300;
        int best_f = -1;
        double best_thr = 0.0;
        for (size_t f = 0; f < dim; ++f) {
            std::vector<std::pair<double, int>> vals;
            for (size_t r : rows)
                vals.emplace_back(x[r][f], y[r] == xmd::ClassLabel::Malware ? 1 : 0);
            std::sort(vals.begin(), vals.end());
            long lm = 0;
            for (size_t i = 0; i + 1 < vals.size(); ++i) {
                lm += vals[i].second;
                if (vals[i].first == vals[i + 1].first) continue;
                const double ln = static_cast<double>(i + 1);
                const double rn = static_cast<double>(vals.size()) - ln;
                const double pl = static_cast<double>(lm) / ln;
                const double pr = static_cast<double>(malware - lm) / rn;
                const double gini = ln * 2 * pl * (1 - pl) + rn * 2 * pr * (1 - pr);
                if (gini < best_gini) {
                    best_gini = gini;
                    best_f = static_cast<int>(f);
                    best_thr = 0.5 * (vals[i].first + vals[i + 1].first);
                }
            }
        }
        if (best_f < 0) return idx;
        std::vector<size_t> left_rows, right_rows;
        for (size_t r : rows)
            (x[r][static_cast<size_t>(best_f)] < best_thr ? left_rows : right_rows).push_back(r);
        if (left_rows.empty() || right_rows.empty()) return idx;
        const size_t l = build(x, y, left_rows);
        const size_t r = build(x, y, right_rows);
        nodes_[idx].feature = best_f;
        nodes_[idx].threshold = best_thr;
        nodes_[idx].left = static_cast<int>(l);
        nodes_[idx].right = static_cast<int>(r);
        return idx;
    }

    std::vector<Node> nodes_;
    size_t root_ = 0;
};

inline double f1_of(const std::vector<xmd::ClassLabel>& predicted,
                    const std::vector<xmd::ClassLabel>& actual) {
    long tp = 0, fp = 0, fn = 0;
    for (size_t i = 0; i < predicted.size(); ++i) {
        const bool p = predicted[i] == xmd::ClassLabel::Malware;
        const bool a = actual[i] == xmd::ClassLabel::Malware;
        if (p && a) ++tp;
        else if (p && !a) ++fp;
        else if (!p && a) ++fn;
    }
    return 2.0 * tp / static_cast<double>(2 * tp + fp + fn);
}

inline double spearman_rho(const std::vector<double>& xs, const std::vector<double>& ys) {
    const auto ranks = [](const std::vector<double>& v) {
        std::vector<size_t> order(v.size());
        std::iota(order.begin(), order.end(), size_t{0});
        std::sort(order.begin(), order.end(), [&](size_t a, size_t b) { return v[a] < v[b]; });
        std::vector<double> r(v.size());
        size_t i = 0;
        while (i < v.size()) {
            size_t j = i;
            while (j < v.size() && v[order[j]] == v[order[i]]) ++j;
            const double midrank = 0.5 * static_cast<double>(i + 1 + j);
            for (size_t t = i; t < j; ++t) r[order[t]] = midrank;
            i = j;
        }
        return r;
    };
    const auto rx = ranks(xs), ry = ranks(ys);
    const double n = static_cast<double>(xs.size());
    double mx = 0, my = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        mx += rx[i];
        my += ry[i];
    }
    mx /= n;
    my /= n;
    double sxy = 0, sxx = 0, syy = 0;
    for (size_t i = 0; i < xs.size(); ++i) {
        sxy += (rx[i] - mx) * (ry[i] - my);
        sxx += (rx[i] - mx) * (rx[i] - mx);
        syy += (ry[i] - my) * (ry[i] - my);
    }
    return sxy / std::sqrt(sxx * syy);
}

// F1 null distribution for label-independent predictions at a fixed positive
// rate; returns the [lo, hi] central interval at the given quantile.
inline std::pair<double, double> null_f1_interval(const std::vector<xmd::ClassLabel>& labels,
                                                  double positive_rate, double central_mass,
                                                  int n_sims, uint64_t seed) {
    std::vector<double> f1s;
    xmd::Rng rng(seed);
    for (int s = 0; s < n_sims; ++s) {
        std::vector<xmd::ClassLabel> predicted(labels.size());
        for (auto& p : predicted)
            p = rng.uniform() < positive_rate ? xmd::ClassLabel::Malware : xmd::ClassLabel::Benign;
        f1s.push_back(f1_of(predicted, labels));
    }
    std::sort(f1s.begin(), f1s.end());
    const double tail = (1.0 - central_mass) / 2.0;
    const size_t lo = static_cast<size_t>(tail * static_cast<double>(n_sims));
    const size_t hi = static_cast<size_t>((1.0 - tail) * static_cast<double>(n_sims)) - 1;
    return {f1s[lo], f1s[hi]};
}

}  // namespace oracles
