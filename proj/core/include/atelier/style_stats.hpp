#pragma once

#include "atelier/numerics.hpp"

#include <cstdint>
#include <string>
#include <vector>

namespace atelier {

/// Activations of one codec layer: channels x positions, plus the geometry
/// needed to decode it back to an image.
struct FeatureMap {
    int layer = 0;  // 0-based
    Matrix activations;
    int grid_rows = 0;
    int grid_cols = 0;
    int image_rows = 0;  // unpadded size of the encoded image
    int image_cols = 0;

    [[nodiscard]] Eigen::Index channels() const { return activations.rows(); }
    [[nodiscard]] Eigen::Index positions() const { return activations.cols(); }
};

/// Per-layer channel counts p_1..p_L.
using LayerSchema = std::vector<Eigen::Index>;

/// Everything that must agree between a store, a model and a codec for their
/// statistics to be comparable.
struct StyleSchema {
    LayerSchema channels;
    std::string codec_kind;     // "toy" | "pretrained"
    std::string codec_id;       // codec instance, e.g. "toy:seed=0:patches=1,2,4,6,8"
    std::string resize_policy;  // e.g. "short:512" or "none"

    /// Hex CRC-32 over (L, p_1..p_L, codec kind, resize policy).
    [[nodiscard]] std::string hash() const;

    friend bool operator==(const StyleSchema&, const StyleSchema&) = default;
};

struct LayerStats {
    Vector mean;
    Matrix covariance;

    [[nodiscard]] Eigen::Index channels() const { return mean.size(); }
};

using StyleStats = std::vector<LayerStats>;

/// Population mean and covariance (1/m normalization) of the columns of a feature map.
LayerStats compute_layer_stats(const FeatureMap& map);
LayerStats compute_layer_stats(const Matrix& activations);

[[nodiscard]] LayerSchema schema_of(const StyleStats& stats);

/// Length of the flattened descriptor for a schema: sum of p + p(p+1)/2.
[[nodiscard]] Eigen::Index descriptor_dimension(const LayerSchema& schema);

/// Normalized style descriptor of one image.
///
/// Per layer the flattened vector holds the mean followed by the row-major
/// upper triangle of the covariance, every entry divided by p(p+1). Off-diagonal
/// covariance entries are scaled by sqrt(2) so that squared Euclidean norms of
/// descriptors equal the (normalized) sum of squared vector and Frobenius norms.
struct StyleDescriptor {
    StyleStats layers;
    Vector flat;

    [[nodiscard]] LayerSchema schema() const { return schema_of(layers); }
};

/// Throws SchemaMismatch when `expected` is non-empty and differs from the stats.
StyleDescriptor assemble_descriptor(const StyleStats& stats, const LayerSchema& expected = {});

/// Flattened vector only (no copy of the stats).
Vector flatten_stats(const StyleStats& stats);

/// Inverse of the flattening for a known schema.
StyleStats unflatten_descriptor(const Eigen::Ref<const Vector>& flat, const LayerSchema& schema);

/// Linear reducer fit on centered corpus descriptors (truncated SVD).
struct Reducer {
    Eigen::Index rank = 0;
    Vector mean;              // D
    Matrix basis;             // D x rank, orthonormal columns
    Vector singular_values;   // rank
    double explained_variance_ratio = 0.0;

    [[nodiscard]] Eigen::Index input_dimension() const { return mean.size(); }

    /// basis^T (x - mean)
    [[nodiscard]] Vector reduce(const Eigen::Ref<const Vector>& x) const;
    [[nodiscard]] Vector reduce(const StyleDescriptor& d) const { return reduce(d.flat); }
    /// basis v + mean
    [[nodiscard]] Vector expand(const Eigen::Ref<const Vector>& v) const;
};

inline constexpr Eigen::Index kDefaultReducerRank = 4096;

/// Fits a reducer on `corpus` (one descriptor per row).
///
/// The requested rank is clamped to min(n - 1, D) with a logged warning.
Reducer fit_reducer(const Matrix& corpus, Eigen::Index rank = kDefaultReducerRank, std::uint64_t seed = 0);

}  // namespace atelier
