#pragma once

#include "atelier/numerics.hpp"
#include "atelier/style_stats.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace atelier {

struct ArchetypeFitOptions {
    std::uint64_t seed = 0;
    int max_iterations = 200;
    /// Stop once the relative objective decrease of an outer iteration falls below this.
    double tolerance = 1e-6;
    SimplexLsqOptions solver;
};

/// Result of alternating minimization on a reduced corpus X (r x n).
struct ArchetypeFit {
    Matrix archetypes;  // Z, r x k; column j equals X * beta.col(j)
    Matrix beta;        // n x k, column j is the simplex code of archetype j
    Matrix alpha;       // k x n, column i is the simplex code of sample i
    std::vector<Eigen::Index> initial_points;
    /// (1/n) sum ||x_i - Z alpha_i||^2; entry 0 is after the first alpha step,
    /// then one entry per completed outer iteration.
    std::vector<double> objective_curve;
    int iterations = 0;
    bool converged = false;

    [[nodiscard]] double objective() const { return objective_curve.empty() ? 0.0 : objective_curve.back(); }
};

/// FurthestSum: first the point farthest from the corpus mean, then repeatedly the
/// point maximizing the summed distance to those already chosen. Ties pick the lowest index.
std::vector<Eigen::Index> furthest_sum(const Matrix& x, Eigen::Index k);

/// Archetypal analysis: min over alpha_i in simplex_k, beta_j in simplex_n of
/// (1/n) sum ||x_i - X B alpha_i||^2, by alternating exact block minimization.
ArchetypeFit fit_archetypes(const Matrix& x, Eigen::Index k, const ArchetypeFitOptions& options = {});

/// Same, starting from the given beta codes (n x k, columns on the simplex).
ArchetypeFit fit_archetypes_from(const Matrix& x, const Matrix& initial_beta, const ArchetypeFitOptions& options = {});

/// (1/n) ||X - Z A||_F^2
double archetype_objective(const Matrix& x, const Matrix& z, const Matrix& alpha);

/// 32 below 2000 training images, 256 from there on; never more than n.
Eigen::Index default_archetype_count(Eigen::Index n);

/// Convex combination sum_i weights[i] * items[i], layer by layer. Zero weights are skipped.
StyleStats combine_stats(const std::vector<StyleStats>& items, const Vector& weights);

/// Per-layer statistics of one archetype from its beta code and the raw
/// per-image statistics of the training corpus.
StyleStats compute_archetype_stats(const Vector& beta, const std::vector<StyleStats>& corpus_stats);

struct FitTelemetry {
    std::vector<double> objective_curve;
    int iterations = 0;
    bool converged = false;
    std::uint64_t seed = 0;
    double explained_variance_ratio = 0.0;
    bool centered = true;
};

/// A fitted archetypal style model. Immutable after construction; self-contained
/// for stylization (archetype statistics are embedded).
struct ArchetypeModel {
    StyleSchema schema;
    std::vector<std::string> image_ids;
    Reducer reducer;
    Matrix reduced_corpus;  // r x n
    Matrix archetypes;      // r x k
    Matrix beta;            // n x k
    Matrix alpha;           // k x n
    std::vector<StyleStats> archetype_stats;  // k entries of L layers
    FitTelemetry telemetry;

    [[nodiscard]] Eigen::Index k() const { return archetypes.cols(); }
    [[nodiscard]] Eigen::Index n() const { return reduced_corpus.cols(); }
    [[nodiscard]] SimplexVector beta_code(Eigen::Index j) const;
    [[nodiscard]] SimplexVector alpha_code(Eigen::Index i) const;
};

struct ModelFitOptions {
    Eigen::Index k = 0;  // 0: default_archetype_count(n)
    Eigen::Index reducer_rank = kDefaultReducerRank;
    ArchetypeFitOptions archetypes;
};

/// Full training pipeline: descriptors, reducer, archetypes, archetype statistics.
ArchetypeModel fit_model(const std::vector<StyleStats>& corpus_stats, std::vector<std::string> image_ids,
                         const StyleSchema& schema, const ModelFitOptions& options);

/// Cached statistics of archetype j.
const StyleStats& archetype_stats(const ArchetypeModel& model, Eigen::Index j);

struct StyleDecomposition {
    SimplexVector alpha;
    double residual = 0.0;           // ||reduce(x) - Z alpha||
    double relative_residual = 0.0;  // residual / ||reduce(x)||, 0 when the latter vanishes
};

/// alpha* = argmin over the simplex of ||reduce(x) - Z alpha||^2.
SimplexVector encode_style(const ArchetypeModel& model, const StyleDescriptor& descriptor);
StyleDecomposition decompose_style(const ArchetypeModel& model, const StyleDescriptor& descriptor);

/// Style obtained as a convex combination of archetypes.
struct MixedStyle {
    StyleStats layers;
    SimplexVector code;
};

inline constexpr double kMixTolerance = 1e-6;

/// hat-mu_l = sum_j alpha[j] mu_l^j, hat-Sigma_l = sum_j alpha[j] Sigma_l^j.
/// Throws InvalidArgument when alpha leaves the simplex by more than kMixTolerance.
MixedStyle mix_style(const ArchetypeModel& model, const Vector& alpha);
MixedStyle mix_style(const ArchetypeModel& model, const SimplexVector& alpha);

/// (1 - strength) * alpha + strength * e_target.
SimplexVector enhance_code(const SimplexVector& alpha, Eigen::Index target, double strength);

}  // namespace atelier
