#pragma once

// Separability analysis: Monte-Carlo estimation of the margin solution volume
// on the sphere ||w||^2 = N, convex-hull membership with certificates, and the
// hull-union / channel-concatenation verification harnesses.

#include <cstdint>
#include <functional>
#include <optional>
#include <span>
#include <vector>

#include "xmd/error.hpp"

#include <nlohmann/json_fwd.hpp>

namespace xmd {

struct SubspaceSpec {
    std::vector<std::vector<double>> basis;   // D+1 orthonormal vectors of length N
    std::vector<std::vector<double>> coords;  // coordinate samples, length D+1 each
};

struct ManifoldInstance {
    int dimension = 0;                        // N
    std::vector<std::vector<double>> points;  // length-N vectors
    std::vector<int> labels;                  // +1 / -1, parallel to points
    double margin = 0.0;                      // kappa
    std::optional<SubspaceSpec> subspace;

    void validate() const;
};

// x(S) = sum_i S_i u_i for every coordinate sample.
std::vector<std::vector<double>> points_from_subspace(const SubspaceSpec& spec);

struct SolutionVolumeEstimate {
    double fraction = 0.0;
    size_t n_samples = 0;
    double std_error = 0.0;  // sqrt(p (1-p) / n)
};

// Deterministic weight stream: sample index i of (seed, N) always yields the
// same w, so estimates over a shared stream can be compared sample-by-sample.
std::vector<double> sphere_sample(int dimension, uint64_t seed, size_t index);

bool margin_feasible(const std::vector<std::vector<double>>& points,
                     const std::vector<int>& labels, double margin, std::span<const double> w);

// Feasibility of each streamed w; estimate_solution_volume tallies this.
std::vector<char> solution_volume_indicators(const ManifoldInstance& instance, size_t n_samples,
                                             uint64_t seed);

SolutionVolumeEstimate estimate_solution_volume(const ManifoldInstance& instance, size_t n_samples,
                                                uint64_t seed);

struct HullSet {
    std::vector<std::vector<double>> generators;

    size_t dim() const;
    void validate() const;
};

struct HullCertificate {
    bool inside = false;
    std::vector<double> coefficients;  // convex combination when inside
    std::vector<double> direction;     // unit separating direction when outside
    double distance_upper = 0.0;
    double distance_lower = 0.0;
    int iterations = 0;
};

// Distance-to-hull test by away-step Frank-Wolfe over the convex coefficients.
HullCertificate hull_contains(const HullSet& hull, std::span<const double> point,
                              double tol = 1e-9);

struct Lemma1Report {
    int dimension = 0;
    size_t n_samples = 0;
    double box_volume = 0.0;
    std::vector<double> set_volumes;
    std::vector<double> set_std_errors;
    double union_volume = 0.0;
    double union_std_error = 0.0;
    size_t monotonicity_violations = 0;  // samples in some member hull but not the union hull
    bool inequality_holds = false;       // union >= max member - 3 sigma (combined)
    bool has_exact = false;              // oracle cross-checks below, when provided
    std::vector<double> exact_volumes;
    double union_exact = 0.0;
    bool exact_within_3se = false;

    nlohmann::json to_json() const;
};

using ExactVolumeOracle = std::function<double(const HullSet&)>;

// Shared uniform samples over the common bounding box; member-hull and
// union-hull membership per sample.
Lemma1Report verify_lemma1(const std::vector<HullSet>& sets, size_t n_samples, uint64_t seed,
                           const ExactVolumeOracle& exact_oracle = nullptr);

struct Theorem1Report {
    int total_dimension = 0;
    size_t n_samples = 0;
    double margin = 0.0;
    std::vector<double> channel_volumes;      // V_i, block coordinates only
    std::vector<double> channel_std_errors;
    double union_volume = 0.0;                // fraction feasible for at least one channel
    double union_std_error = 0.0;
    double concat_volume = 0.0;               // fraction feasible for the concatenated points
    double concat_std_error = 0.0;
    size_t dominance_violations = 0;          // exact, should be 0
    bool union_bound_holds = false;           // union >= max V_i - 3 sigma
    bool concat_bound_holds = false;          // concat >= max V_i - 3 sigma (planted-data corollary)

    nlohmann::json to_json() const;
};

// Channel instances share labels; instance i occupies basis block i of the
// joint space. Weights are drawn once on the joint sphere and reused for every
// per-channel, union, and concatenated check.
Theorem1Report verify_theorem1(const std::vector<ManifoldInstance>& channel_instances,
                               double margin, size_t n_samples, uint64_t seed);

}  // namespace xmd
