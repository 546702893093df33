#include "atelier/style_stats.hpp"

#include "atelier/error.hpp"

#include <spdlog/spdlog.h>
#include <zlib.h>

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <numbers>
#include <string>

namespace atelier {

std::string StyleSchema::hash() const {
    std::string canonical = "L=" + std::to_string(channels.size()) + ";p=";
    for (std::size_t l = 0; l < channels.size(); ++l) {
        if (l > 0) canonical += ',';
        canonical += std::to_string(channels[l]);
    }
    canonical += ";codec=" + codec_kind + ";resize=" + resize_policy;
    const uLong crc = crc32(0L, reinterpret_cast<const Bytef*>(canonical.data()), static_cast<uInt>(canonical.size()));
    char buffer[9];
    std::snprintf(buffer, sizeof buffer, "%08lx", static_cast<unsigned long>(crc));
    return buffer;
}

LayerStats compute_layer_stats(const Matrix& activations) {
    const Eigen::Index m = activations.cols();
    if (m < 1) {
        throw InvalidArgument("compute_layer_stats: feature map has no positions");
    }
    require_finite(activations, "compute_layer_stats");
    LayerStats stats;
    stats.mean = activations.rowwise().mean();
    const Matrix centered = activations.colwise() - stats.mean;
    stats.covariance.noalias() = centered * centered.transpose();
    stats.covariance /= static_cast<double>(m);
    // The product is symmetric only up to rounding; make it exact.
    stats.covariance.triangularView<Eigen::StrictlyLower>() = stats.covariance.transpose();
    return stats;
}

LayerStats compute_layer_stats(const FeatureMap& map) { return compute_layer_stats(map.activations); }

LayerSchema schema_of(const StyleStats& stats) {
    LayerSchema schema;
    schema.reserve(stats.size());
    for (const auto& layer : stats) schema.push_back(layer.channels());
    return schema;
}

Eigen::Index descriptor_dimension(const LayerSchema& schema) {
    Eigen::Index total = 0;
    for (const Eigen::Index p : schema) total += p + p * (p + 1) / 2;
    return total;
}

namespace {

void check_layer(const LayerStats& layer, std::size_t index) {
    const Eigen::Index p = layer.channels();
    if (p < 1 || layer.covariance.rows() != p || layer.covariance.cols() != p) {
        throw SchemaMismatch("layer " + std::to_string(index) + ": mean has " + std::to_string(p) +
                             " channels but covariance is " + std::to_string(layer.covariance.rows()) + "x" +
                             std::to_string(layer.covariance.cols()));
    }
}

}  // namespace

Vector flatten_stats(const StyleStats& stats) {
    const LayerSchema schema = schema_of(stats);
    Vector flat(descriptor_dimension(schema));
    Eigen::Index offset = 0;
    for (std::size_t l = 0; l < stats.size(); ++l) {
        const LayerStats& layer = stats[l];
        check_layer(layer, l);
        const Eigen::Index p = layer.channels();
        const double norm = static_cast<double>(p * (p + 1));
        flat.segment(offset, p) = layer.mean / norm;
        offset += p;
        for (Eigen::Index i = 0; i < p; ++i) {
            flat[offset++] = layer.covariance(i, i) / norm;
            for (Eigen::Index j = i + 1; j < p; ++j) {
                flat[offset++] = std::numbers::sqrt2 * layer.covariance(i, j) / norm;
            }
        }
    }
    return flat;
}

StyleDescriptor assemble_descriptor(const StyleStats& stats, const LayerSchema& expected) {
    if (stats.empty()) {
        throw SchemaMismatch("assemble_descriptor: no layers");
    }
    if (!expected.empty() && schema_of(stats) != expected) {
        throw SchemaMismatch("assemble_descriptor: layer channel counts do not match the schema");
    }
    StyleDescriptor out;
    out.layers = stats;
    out.flat = flatten_stats(stats);
    return out;
}

StyleStats unflatten_descriptor(const Eigen::Ref<const Vector>& flat, const LayerSchema& schema) {
    if (flat.size() != descriptor_dimension(schema)) {
        throw SchemaMismatch("unflatten_descriptor: vector has " + std::to_string(flat.size()) +
                             " entries, schema needs " + std::to_string(descriptor_dimension(schema)));
    }
    StyleStats stats;
    stats.reserve(schema.size());
    Eigen::Index offset = 0;
    for (const Eigen::Index p : schema) {
        const double norm = static_cast<double>(p * (p + 1));
        LayerStats layer;
        layer.mean = flat.segment(offset, p) * norm;
        offset += p;
        layer.covariance.resize(p, p);
        for (Eigen::Index i = 0; i < p; ++i) {
            layer.covariance(i, i) = flat[offset++] * norm;
            for (Eigen::Index j = i + 1; j < p; ++j) {
                const double value = flat[offset++] * norm / std::numbers::sqrt2;
                layer.covariance(i, j) = value;
                layer.covariance(j, i) = value;
            }
        }
        stats.push_back(std::move(layer));
    }
    return stats;
}

Vector Reducer::reduce(const Eigen::Ref<const Vector>& x) const {
    if (x.size() != mean.size()) {
        throw SchemaMismatch("reduce: descriptor has " + std::to_string(x.size()) + " entries, reducer expects " +
                             std::to_string(mean.size()));
    }
    return basis.transpose() * (x - mean);
}

Vector Reducer::expand(const Eigen::Ref<const Vector>& v) const {
    if (v.size() != rank) {
        throw SchemaMismatch("expand: latent vector has " + std::to_string(v.size()) + " entries, reducer rank is " +
                             std::to_string(rank));
    }
    return basis * v + mean;
}

Reducer fit_reducer(const Matrix& corpus, Eigen::Index rank, std::uint64_t seed) {
    const Eigen::Index n = corpus.rows();
    const Eigen::Index dim = corpus.cols();
    if (n < 2) {
        throw InvalidArgument("fit_reducer: need at least two descriptors");
    }
    if (rank <= 0) {
        throw InvalidArgument("fit_reducer: rank must be positive");
    }
    const Eigen::Index cap = std::min(n - 1, dim);
    if (rank > cap) {
        spdlog::warn("fit_reducer: requested rank {} exceeds min(n - 1, D) = {}; clamping", rank, cap);
        rank = cap;
    }
    Reducer reducer;
    reducer.rank = rank;
    reducer.mean = corpus.colwise().mean().transpose();
    const Matrix centered = corpus.rowwise() - reducer.mean.transpose();
    const TruncatedSvd svd = truncated_svd(centered, rank, seed);
    reducer.basis = svd.v;
    reducer.singular_values = svd.s;
    const double total = centered.squaredNorm();
    reducer.explained_variance_ratio =
        total > 0.0 ? std::clamp(svd.s.squaredNorm() / total, 0.0, 1.0) : 1.0;
    return reducer;
}

}  // namespace atelier
