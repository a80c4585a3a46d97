#include "xmd/manifold.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

#include <nlohmann/json.hpp>

#include "xmd/rng.hpp"

namespace xmd {

namespace {

double dot(std::span<const double> a, std::span<const double> b) {
    double acc = 0.0;
    for (size_t i = 0; i < a.size(); ++i) acc += a[i] * b[i];
    return acc;
}

double norm(std::span<const double> a) { return std::sqrt(dot(a, a)); }

}  // namespace

void ManifoldInstance::validate() const {
    require(dimension >= 2, ErrorCode::DegenerateDimension,
            "manifold dimension must be >= 2, got " + std::to_string(dimension));
    require(points.size() == labels.size(), ErrorCode::DimensionMismatch,
            "points/labels count mismatch");
    for (const auto& p : points)
        require(p.size() == static_cast<size_t>(dimension), ErrorCode::DimensionMismatch,
                "point length does not match dimension");
    for (int y : labels)
        require(y == 1 || y == -1, ErrorCode::DimensionMismatch, "labels must be +1 or -1");
    if (subspace) {
        for (const auto& u : subspace->basis)
            require(u.size() == static_cast<size_t>(dimension), ErrorCode::DimensionMismatch,
                    "basis vector length does not match dimension");
        for (size_t i = 0; i < subspace->basis.size(); ++i) {
            for (size_t j = 0; j <= i; ++j) {
                const double d = dot(subspace->basis[i], subspace->basis[j]);
                const double expect = i == j ? 1.0 : 0.0;
                require(std::fabs(d - expect) <= 1e-8, ErrorCode::DimensionMismatch,
                        "subspace basis is not orthonormal");
            }
        }
        for (const auto& s : subspace->coords)
            require(s.size() == subspace->basis.size(), ErrorCode::DimensionMismatch,
                    "coordinate sample length does not match basis count");
    }
}

std::vector<std::vector<double>> points_from_subspace(const SubspaceSpec& spec) {
    std::vector<std::vector<double>> points;
    require(!spec.basis.empty(), ErrorCode::DimensionMismatch, "empty subspace basis");
    const size_t n = spec.basis.front().size();
    for (const auto& coords : spec.coords) {
        std::vector<double> x(n, 0.0);
        for (size_t i = 0; i < coords.size(); ++i)
            for (size_t j = 0; j < n; ++j) x[j] += coords[i] * spec.basis[i][j];
        points.push_back(std::move(x));
    }
    return points;
}

std::vector<double> sphere_sample(int dimension, uint64_t seed, size_t index) {
    Rng rng(mix_seed(mix_seed(seed, static_cast<uint64_t>(dimension)), index));
    std::vector<double> w(static_cast<size_t>(dimension));
    double norm_sq = 0.0;
    do {
        norm_sq = 0.0;
        for (auto& v : w) {
            v = rng.normal();
            norm_sq += v * v;
        }
    } while (norm_sq == 0.0);
    const double scale = std::sqrt(static_cast<double>(dimension) / norm_sq);
    for (auto& v : w) v *= scale;
    return w;
}

bool margin_feasible(const std::vector<std::vector<double>>& points,
                     const std::vector<int>& labels, double margin, std::span<const double> w) {
    for (size_t mu = 0; mu < points.size(); ++mu) {
        if (static_cast<double>(labels[mu]) * dot(points[mu], w) < margin) return false;
    }
    return true;
}

std::vector<char> solution_volume_indicators(const ManifoldInstance& instance, size_t n_samples,
                                             uint64_t seed) {
    instance.validate();
    require(n_samples >= 1000, ErrorCode::InvalidConfig, "n_samples must be >= 1000");
    std::vector<char> feasible(n_samples);
    for (size_t i = 0; i < n_samples; ++i) {
        const auto w = sphere_sample(instance.dimension, seed, i);
        feasible[i] = margin_feasible(instance.points, instance.labels, instance.margin, w) ? 1 : 0;
    }
    return feasible;
}

SolutionVolumeEstimate estimate_solution_volume(const ManifoldInstance& instance, size_t n_samples,
                                                uint64_t seed) {
    const auto feasible = solution_volume_indicators(instance, n_samples, seed);
    size_t hits = 0;
    for (char f : feasible) hits += static_cast<size_t>(f);
    const double n = static_cast<double>(n_samples);
    const double p = static_cast<double>(hits) / n;
    return SolutionVolumeEstimate{p, n_samples, std::sqrt(p * (1.0 - p) / n)};
}

size_t HullSet::dim() const {
    require(!generators.empty(), ErrorCode::DimensionMismatch, "empty hull set");
    return generators.front().size();
}

void HullSet::validate() const {
    const size_t d = dim();
    require(d >= 1, ErrorCode::DimensionMismatch, "zero-dimensional hull set");
    for (const auto& g : generators)
        require(g.size() == d, ErrorCode::DimensionMismatch, "hull generators have mixed dimensions");
}

namespace {

// Affine minimizer of ||sum_i beta_i h_i|| subject to sum beta = 1 (signs
// free) over the active rows; KKT system solved by Gaussian elimination with
// partial pivoting. A tiny ridge keeps transiently dependent sets solvable.
std::vector<double> affine_minimizer(const std::vector<std::vector<double>>& h,
                                     const std::vector<size_t>& active) {
    const size_t k = active.size();
    const size_t n = k + 1;
    std::vector<std::vector<double>> a(n, std::vector<double>(n + 1, 0.0));
    double trace = 0.0;
    for (size_t i = 0; i < k; ++i) trace += dot(h[active[i]], h[active[i]]);
    const double ridge = 1e-13 * std::max(trace, 1e-30);
    for (size_t i = 0; i < k; ++i) {
        for (size_t j = 0; j < k; ++j) a[i][j] = 2.0 * dot(h[active[i]], h[active[j]]);
        a[i][i] += ridge;
        a[i][k] = 1.0;
        a[i][n] = 0.0;
    }
    for (size_t j = 0; j < k; ++j) a[k][j] = 1.0;
    a[k][k] = 0.0;
    a[k][n] = 1.0;

    for (size_t col = 0; col < n; ++col) {
        size_t pivot = col;
        for (size_t row = col + 1; row < n; ++row)
            if (std::fabs(a[row][col]) > std::fabs(a[pivot][col])) pivot = row;
        std::swap(a[col], a[pivot]);
        if (std::fabs(a[col][col]) < 1e-300) continue;
        for (size_t row = 0; row < n; ++row) {
            if (row == col) continue;
            const double factor = a[row][col] / a[col][col];
            for (size_t j = col; j <= n; ++j) a[row][j] -= factor * a[col][j];
        }
    }
    std::vector<double> beta(k, 0.0);
    for (size_t i = 0; i < k; ++i)
        beta[i] = std::fabs(a[i][i]) < 1e-300 ? 0.0 : a[i][n] / a[i][i];
    return beta;
}

}  // namespace

// Wolfe-style minimum-norm-point search over the convex coefficients: support
// steps add the most violating generator, affine sub-solves project onto the
// active set's affine hull, minor cycles prune until the iterate is a proper
// convex combination.
HullCertificate hull_contains(const HullSet& hull, std::span<const double> point, double tol) {
    hull.validate();
    const size_t d = hull.dim();
    require(point.size() == d, ErrorCode::DimensionMismatch,
            "query dimension " + std::to_string(point.size()) + " != hull dimension " +
                std::to_string(d));
    const auto& g = hull.generators;
    const size_t m = g.size();

    // Shifted generators h_i = g_i - p; the minimum-norm point of their hull
    // is the projection residual.
    std::vector<std::vector<double>> h(m, std::vector<double>(d));
    double scale_sq = 0.0;
    for (size_t i = 0; i < m; ++i) {
        for (size_t j = 0; j < d; ++j) h[i][j] = g[i][j] - point[j];
        scale_sq = std::max(scale_sq, dot(h[i], h[i]));
    }
    const double support_eps = 1e-12 * std::max(scale_sq, 1.0);

    size_t start = 0;
    for (size_t i = 1; i < m; ++i)
        if (dot(h[i], h[i]) < dot(h[start], h[start])) start = i;
    std::vector<size_t> active{start};
    std::vector<double> alpha{1.0};

    std::vector<double> x = h[start];
    HullCertificate cert;
    constexpr int kMaxMajor = 2000;

    const auto finish = [&](bool inside, double dist) {
        cert.inside = inside;
        cert.distance_upper = dist;
        if (inside) {
            cert.coefficients.assign(m, 0.0);
            double total = 0.0;
            for (size_t i = 0; i < active.size(); ++i) {
                const double v = std::max(alpha[i], 0.0);
                cert.coefficients[active[i]] = v;
                total += v;
            }
            for (auto& v : cert.coefficients) v /= total;
            cert.distance_lower = 0.0;
        } else if (dist > 0.0) {
            // Unit direction from the hull's nearest point toward the query.
            cert.direction.assign(d, 0.0);
            for (size_t j = 0; j < d; ++j) cert.direction[j] = -x[j] / dist;
            double lower = std::numeric_limits<double>::infinity();
            for (size_t i = 0; i < m; ++i) lower = std::min(lower, dot(h[i], x) / dist);
            cert.distance_lower = std::max(lower, 0.0);
        }
        return cert;
    };

    double previous_dist = std::numeric_limits<double>::infinity();
    for (int major = 0;; ++major) {
        const double dist = norm(x);
        cert.iterations = major;
        if (dist <= tol) return finish(true, dist);

        size_t support = 0;
        double min_score = std::numeric_limits<double>::infinity();
        for (size_t i = 0; i < m; ++i) {
            const double score = dot(h[i], x);
            if (score < min_score) {
                min_score = score;
                support = i;
            }
        }
        // Early exit: the support bound already certifies the query outside.
        if (min_score / dist > tol) return finish(false, dist);
        // Optimality: no generator improves on x, so x is the projection residual.
        if (dot(x, x) - min_score <= support_eps) return finish(dist <= tol, dist);
        // Numerical stall: distance stopped moving at floating-point resolution.
        if (previous_dist - dist <= 1e-15 * std::sqrt(std::max(scale_sq, 1.0)) && major > 0)
            return finish(dist <= tol, dist);
        previous_dist = dist;
        if (major >= kMaxMajor)
            fail(ErrorCode::IterationLimit,
                 "hull_contains: distance upper bound " + std::to_string(dist) + " after " +
                     std::to_string(major) + " iterations");

        if (std::find(active.begin(), active.end(), support) == active.end()) {
            active.push_back(support);
            alpha.push_back(0.0);
        }

        for (int minor = 0; minor < 200; ++minor) {
            const auto beta = affine_minimizer(h, active);
            bool all_positive = true;
            for (double b : beta)
                if (b <= 1e-12) all_positive = false;
            if (all_positive) {
                alpha = beta;
                break;
            }
            // Move toward beta until the first coefficient hits zero, drop it.
            double gamma = 1.0;
            for (size_t i = 0; i < active.size(); ++i) {
                if (beta[i] <= 1e-12 && alpha[i] > beta[i])
                    gamma = std::min(gamma, alpha[i] / (alpha[i] - beta[i]));
            }
            std::vector<size_t> next_active;
            std::vector<double> next_alpha;
            for (size_t i = 0; i < active.size(); ++i) {
                const double v = (1.0 - gamma) * alpha[i] + gamma * beta[i];
                if (v > 1e-12) {
                    next_active.push_back(active[i]);
                    next_alpha.push_back(v);
                }
            }
            if (next_active.empty()) {  // numerical corner: keep the best vertex
                next_active.push_back(active[0]);
                next_alpha.push_back(1.0);
            }
            active = std::move(next_active);
            alpha = std::move(next_alpha);
        }
        double total = 0.0;
        for (double v : alpha) total += v;
        for (auto& v : alpha) v /= total;
        std::fill(x.begin(), x.end(), 0.0);
        for (size_t i = 0; i < active.size(); ++i)
            for (size_t j = 0; j < d; ++j) x[j] += alpha[i] * h[active[i]][j];
    }
}

Lemma1Report verify_lemma1(const std::vector<HullSet>& sets, size_t n_samples, uint64_t seed,
                           const ExactVolumeOracle& exact_oracle) {
    require(sets.size() >= 2, ErrorCode::InvalidConfig, "need at least 2 hull sets");
    const size_t d = sets.front().dim();
    require(d >= 1 && d <= 8, ErrorCode::DegenerateDimension,
            "lemma verification supports dimensions 1..8, got " + std::to_string(d));
    for (const auto& s : sets) {
        s.validate();
        require(s.dim() == d, ErrorCode::DimensionMismatch, "hull sets have mixed dimensions");
    }

    HullSet union_hull;
    std::vector<double> lo(d, std::numeric_limits<double>::infinity());
    std::vector<double> hi(d, -std::numeric_limits<double>::infinity());
    for (const auto& s : sets) {
        for (const auto& gen : s.generators) {
            union_hull.generators.push_back(gen);
            for (size_t j = 0; j < d; ++j) {
                lo[j] = std::min(lo[j], gen[j]);
                hi[j] = std::max(hi[j], gen[j]);
            }
        }
    }
    double box_volume = 1.0;
    for (size_t j = 0; j < d; ++j) box_volume *= std::max(hi[j] - lo[j], 0.0);

    Lemma1Report report;
    report.dimension = static_cast<int>(d);
    report.n_samples = n_samples;
    report.box_volume = box_volume;

    std::vector<size_t> set_hits(sets.size(), 0);
    size_t union_hits = 0;
    std::vector<double> pt(d);
    for (size_t i = 0; i < n_samples; ++i) {
        Rng rng(mix_seed(mix_seed(seed, 0x626f78ULL), i));  // shared box-sample stream
        for (size_t j = 0; j < d; ++j) pt[j] = rng.uniform(lo[j], hi[j]);
        bool in_any_member = false;
        for (size_t s = 0; s < sets.size(); ++s) {
            if (hull_contains(sets[s], pt).inside) {
                ++set_hits[s];
                in_any_member = true;
            }
        }
        const bool in_union = hull_contains(union_hull, pt).inside;
        if (in_union) ++union_hits;
        if (in_any_member && !in_union) ++report.monotonicity_violations;
    }

    const double n = static_cast<double>(n_samples);
    const auto to_volume = [&](size_t hits, double& vol, double& se) {
        const double p = static_cast<double>(hits) / n;
        vol = box_volume * p;
        se = box_volume * std::sqrt(p * (1.0 - p) / n);
    };
    report.set_volumes.resize(sets.size());
    report.set_std_errors.resize(sets.size());
    for (size_t s = 0; s < sets.size(); ++s)
        to_volume(set_hits[s], report.set_volumes[s], report.set_std_errors[s]);
    to_volume(union_hits, report.union_volume, report.union_std_error);

    report.inequality_holds = true;
    for (size_t s = 0; s < sets.size(); ++s) {
        const double slack = 3.0 * std::sqrt(report.union_std_error * report.union_std_error +
                                             report.set_std_errors[s] * report.set_std_errors[s]);
        if (report.union_volume < report.set_volumes[s] - slack) report.inequality_holds = false;
    }

    if (exact_oracle) {
        report.has_exact = true;
        report.exact_within_3se = true;
        for (size_t s = 0; s < sets.size(); ++s) {
            report.exact_volumes.push_back(exact_oracle(sets[s]));
            if (std::fabs(report.exact_volumes[s] - report.set_volumes[s]) >
                3.0 * report.set_std_errors[s] + 1e-12)
                report.exact_within_3se = false;
        }
        report.union_exact = exact_oracle(union_hull);
        if (std::fabs(report.union_exact - report.union_volume) >
            3.0 * report.union_std_error + 1e-12)
            report.exact_within_3se = false;
    }
    return report;
}

Theorem1Report verify_theorem1(const std::vector<ManifoldInstance>& channel_instances,
                               double margin, size_t n_samples, uint64_t seed) {
    require(channel_instances.size() >= 2, ErrorCode::InvalidConfig,
            "need at least 2 channel instances");
    const size_t n_points = channel_instances.front().points.size();
    int total_dim = 0;
    for (const auto& inst : channel_instances) {
        inst.validate();
        require(inst.points.size() == n_points, ErrorCode::DimensionMismatch,
                "channel instances must share their point count");
        require(inst.labels == channel_instances.front().labels, ErrorCode::DimensionMismatch,
                "channel instances must share labels");
        total_dim += inst.dimension;
    }
    const auto& labels = channel_instances.front().labels;

    Theorem1Report report;
    report.total_dimension = total_dim;
    report.n_samples = n_samples;
    report.margin = margin;

    const size_t n_channels = channel_instances.size();
    std::vector<size_t> channel_hits(n_channels, 0);
    size_t union_hits = 0, concat_hits = 0;

    for (size_t i = 0; i < n_samples; ++i) {
        const auto w = sphere_sample(total_dim, seed, i);
        bool any = false;
        std::vector<double> concat_margin(n_points, 0.0);
        size_t offset = 0;
        for (size_t c = 0; c < n_channels; ++c) {
            const auto& inst = channel_instances[c];
            const std::span<const double> block(w.data() + offset,
                                                static_cast<size_t>(inst.dimension));
            bool feasible = true;
            for (size_t mu = 0; mu < n_points; ++mu) {
                const double proj = dot(inst.points[mu], block);
                concat_margin[mu] += proj;
                if (static_cast<double>(labels[mu]) * proj < margin) feasible = false;
            }
            if (feasible) {
                ++channel_hits[c];
                any = true;
            }
            offset += static_cast<size_t>(inst.dimension);
        }
        bool concat_ok = true;
        for (size_t mu = 0; mu < n_points; ++mu)
            if (static_cast<double>(labels[mu]) * concat_margin[mu] < margin) concat_ok = false;
        if (any) ++union_hits;
        if (concat_ok) ++concat_hits;
    }

    const double n = static_cast<double>(n_samples);
    const auto finish = [&](size_t hits, double& vol, double& se) {
        const double p = static_cast<double>(hits) / n;
        vol = p;
        se = std::sqrt(p * (1.0 - p) / n);
    };
    report.channel_volumes.resize(n_channels);
    report.channel_std_errors.resize(n_channels);
    double max_v = 0.0, max_se = 0.0;
    for (size_t c = 0; c < n_channels; ++c) {
        finish(channel_hits[c], report.channel_volumes[c], report.channel_std_errors[c]);
        if (report.channel_volumes[c] > max_v) {
            max_v = report.channel_volumes[c];
            max_se = report.channel_std_errors[c];
        }
    }
    finish(union_hits, report.union_volume, report.union_std_error);
    finish(concat_hits, report.concat_volume, report.concat_std_error);

    for (size_t c = 0; c < n_channels; ++c)
        if (channel_hits[c] > union_hits) ++report.dominance_violations;

    const double union_slack =
        3.0 * std::sqrt(report.union_std_error * report.union_std_error + max_se * max_se);
    const double concat_slack =
        3.0 * std::sqrt(report.concat_std_error * report.concat_std_error + max_se * max_se);
    report.union_bound_holds = report.union_volume >= max_v - union_slack;
    report.concat_bound_holds = report.concat_volume >= max_v - concat_slack;
    return report;
}

nlohmann::json Lemma1Report::to_json() const {
    nlohmann::json j{
        {"dimension", dimension},
        {"n_samples", n_samples},
        {"box_volume", box_volume},
        {"set_volumes", set_volumes},
        {"set_std_errors", set_std_errors},
        {"union_volume", union_volume},
        {"union_std_error", union_std_error},
        {"monotonicity_violations", monotonicity_violations},
        {"inequality_holds", inequality_holds},
    };
    if (has_exact) {
        j["exact_volumes"] = exact_volumes;
        j["union_exact"] = union_exact;
        j["exact_within_3se"] = exact_within_3se;
    }
    return j;
}

nlohmann::json Theorem1Report::to_json() const {
    return nlohmann::json{
        {"total_dimension", total_dimension},
        {"n_samples", n_samples},
        {"margin", margin},
        {"channel_volumes", channel_volumes},
        {"channel_std_errors", channel_std_errors},
        {"union_volume", union_volume},
        {"union_std_error", union_std_error},
        {"concat_volume", concat_volume},
        {"concat_std_error", concat_std_error},
        {"dominance_violations", dominance_violations},
        {"union_bound_holds", union_bound_holds},
        {"concat_bound_holds", concat_bound_holds},
    };
}

}  // namespace xmd
